use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use hdmr_embed::embedding::{fit_hdmr, fit_lpp, HdmrParams};
use hdmr_embed::error::{Error, Result};
use hdmr_embed::eval::{accuracy_kappa, fisher_score, kmeans, knn_predict, nmi, silhouette};
use hdmr_embed::model_io::{load_model, save_model};
use hdmr_embed::pipeline::{
    load_feature_csv, load_hsi_cube, load_labels, load_matrix_csv, parse_config, run_experiment,
    write_matrix_csv, LabeledDataset, Method,
};

#[derive(Parser)]
#[command(
    name = "hdmr-embed",
    about = "Supervised graph embeddings with an explicit out-of-sample map",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataInput {
    /// Labeled CSV dataset (features plus one label column), or the cube
    /// header file when --gt is given.
    input: PathBuf,
    /// Ground-truth raster path; switches the input to the cube format.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Zero-based label column of the CSV (default: last column).
    #[arg(long)]
    label_col: Option<usize>,
}

impl DataInput {
    fn load(&self) -> Result<LabeledDataset> {
        match &self.gt {
            Some(gt) => load_hsi_cube(&self.input, gt),
            None => load_matrix_csv(&self.input, self.label_col),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit an embedding model on a labeled dataset and serialize it.
    Fit {
        #[command(flatten)]
        data: DataInput,
        /// Embedding method: hdmr or lpp.
        #[arg(long, default_value = "hdmr")]
        method: String,
        /// Polynomial order of the feature expansion.
        #[arg(long, default_value_t = 4)]
        p: usize,
        /// Ridge regularizer weight.
        #[arg(long, default_value_t = 100.0)]
        beta: f64,
        /// Same-class neighborhood size.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Embedding dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Fractional padding of fitted feature ranges.
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Project samples through a serialized model into embedding CSV.
    Transform {
        /// Serialized model file.
        #[arg(long)]
        model: PathBuf,
        /// Feature CSV (no label column unless --label-col strips one).
        input: PathBuf,
        /// Treat this zero-based column as a label column and drop it.
        #[arg(long)]
        label_col: Option<usize>,
        /// Output embedding CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute quality metrics for an embedding with known labels.
    Evaluate {
        /// Embedding CSV (one row per sample).
        embedding: PathBuf,
        /// Label file, one positive integer per line.
        #[arg(long)]
        labels: PathBuf,
        /// Training embedding CSV for nearest-neighbor accuracy.
        #[arg(long)]
        train_embedding: Option<PathBuf>,
        /// Training labels, required with --train-embedding.
        #[arg(long)]
        train_labels: Option<PathBuf>,
        /// Seed for the clustering step.
        #[arg(long, default_value_t = 7)]
        kmeans_seed: u64,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment from a configuration file.
    Experiment {
        /// Flat key = value configuration file.
        config: PathBuf,
        /// Override the embedding method.
        #[arg(long)]
        method: Option<String>,
        /// Override the polynomial order grid (comma list).
        #[arg(long)]
        p: Option<String>,
        /// Override the regularizer grid (comma list).
        #[arg(long)]
        beta: Option<String>,
        /// Override the neighborhood grid (comma list).
        #[arg(long)]
        k: Option<String>,
        /// Override the maximum embedding dimension.
        #[arg(long)]
        d: Option<usize>,
        /// Override the training fraction.
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Override the seeds (comma list).
        #[arg(long)]
        seeds: Option<String>,
        /// Override the noise sweep levels in dB (comma list).
        #[arg(long)]
        snr: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} value {tok:?}")))
        })
        .collect()
}

fn cmd_fit(data: &DataInput, method: &str, params: HdmrParams, out: &Path) -> Result<()> {
    let ds = data.load()?;
    let method: Method = method.parse()?;
    let model = match method {
        Method::Hdmr => fit_hdmr(ds.x.view(), &ds.labels, &params)?,
        Method::Lpp => fit_lpp(ds.x.view(), &ds.labels, &params)?,
        Method::Direct => {
            return Err(Error::Config(
                "the direct method has no out-of-sample map; use `experiment`".into(),
            ))
        }
    };
    save_model(&model, out)?;
    println!(
        "fitted {} model: {} features, d = {}, eigenvalues {:?}",
        model.kind.as_str(),
        model.n_features(),
        model.d,
        model.eigenvalues
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn load_features_maybe_labeled(path: &Path, label_col: Option<usize>) -> Result<Array2<f64>> {
    match label_col {
        None => load_feature_csv(path),
        Some(col) => {
            let ds = load_matrix_csv(path, Some(col))?;
            Ok(ds.x)
        }
    }
}

fn cmd_transform(
    model_path: &Path,
    input: &Path,
    label_col: Option<usize>,
    out: &Path,
) -> Result<()> {
    let model = load_model(model_path)?;
    let x = load_features_maybe_labeled(input, label_col)?;
    let (y, out_of_range) = model.transform_tallied(x.view())?;
    write_matrix_csv(out, y.view(), None)?;
    println!(
        "transformed {} samples into {} dimensions ({} feature entries out of fitted range)",
        y.nrows(),
        y.ncols(),
        out_of_range
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_evaluate(
    embedding: &Path,
    labels_path: &Path,
    train_embedding: Option<&Path>,
    train_labels: Option<&Path>,
    kmeans_seed: u64,
    out: &Path,
) -> Result<()> {
    use std::fmt::Write as _;
    let y = load_feature_csv(embedding)?;
    let labels = load_labels(labels_path)?;
    if labels.len() != y.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            y.nrows()
        )));
    }

    let (oa, kappa, classwise) = match (train_embedding, train_labels) {
        (Some(emb), Some(labs)) => {
            let y_tr = load_feature_csv(emb)?;
            let l_tr = load_labels(labs)?;
            let pred = knn_predict(y_tr.view(), &l_tr, y.view(), 1)?;
            let (oa, kappa, cw) = accuracy_kappa(&pred, &labels)?;
            (oa, kappa, cw)
        }
        (None, None) => (f64::NAN, f64::NAN, Vec::new()),
        _ => {
            return Err(Error::Config(
                "--train-embedding and --train-labels must be given together".into(),
            ))
        }
    };

    let n_classes = {
        let mut c = labels.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    let assignments = kmeans(y.view(), n_classes, 10, kmeans_seed)?;
    let nmi_val = nmi(&assignments, &labels)?;
    let fisher = fisher_score(y.view(), &labels)?;
    let sil = silhouette(y.view(), &labels)?;

    let mut csv = String::from("d,oa,kappa,nmi,fisher,silhouette");
    let mut class_ids: Vec<usize> = classwise.iter().map(|(c, _)| *c).collect();
    class_ids.sort_unstable();
    for c in &class_ids {
        let _ = write!(csv, ",class_{c}");
    }
    csv.push('\n');
    let _ = write!(
        csv,
        "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
        y.ncols(),
        oa,
        kappa,
        nmi_val,
        fisher.value,
        sil.value
    );
    for c in &class_ids {
        let recall = classwise
            .iter()
            .find(|(lab, _)| lab == c)
            .map(|(_, r)| *r)
            .unwrap_or(f64::NAN);
        let _ = write!(csv, ",{recall:.6}");
    }
    csv.push('\n');
    std::fs::write(out, &csv)?;
    print!("{csv}");
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    config: &Path,
    method: Option<&str>,
    p: Option<&str>,
    beta: Option<&str>,
    k: Option<&str>,
    d: Option<usize>,
    train_fraction: Option<f64>,
    seeds: Option<&str>,
    snr: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = parse_config(config)?;
    if let Some(m) = method {
        cfg.method = m.parse()?;
    }
    if let Some(list) = p {
        cfg.grid.p = parse_list(list, "p")?;
    }
    if let Some(list) = beta {
        cfg.grid.beta = parse_list(list, "beta")?;
    }
    if let Some(list) = k {
        cfg.grid.k = parse_list(list, "k")?;
    }
    if let Some(v) = d {
        cfg.d_max = v;
    }
    if let Some(v) = train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(list) = seeds {
        cfg.seeds = parse_list(list, "seeds")?;
    }
    if let Some(list) = snr {
        cfg.snr_list = parse_list(list, "snr")?;
    }
    if let Some(dir) = out {
        cfg.out_dir = dir.to_path_buf();
    }
    let summary = run_experiment(&cfg)?;
    println!(
        "selected p = {}, beta = {}, k = {}",
        summary.chosen.0, summary.chosen.1, summary.chosen.2
    );
    println!(
        "best d = {} with mean overall accuracy {:.4} (curve auc {:.4})",
        summary.best_d, summary.mean_oa_at_best_d, summary.auc
    );
    if summary.failed_repeats > 0 {
        println!(
            "warning: {} repeat(s) failed; see manifest",
            summary.failed_repeats
        );
    }
    println!(
        "reports in {}",
        summary.manifest_path.parent().unwrap().display()
    );
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit {
            data,
            method,
            p,
            beta,
            k,
            d,
            margin,
            out,
        } => cmd_fit(
            data,
            method,
            HdmrParams {
                p: *p,
                beta: *beta,
                k: *k,
                d: *d,
                margin: *margin,
            },
            out,
        ),
        Command::Transform {
            model,
            input,
            label_col,
            out,
        } => cmd_transform(model, input, *label_col, out),
        Command::Evaluate {
            embedding,
            labels,
            train_embedding,
            train_labels,
            kmeans_seed,
            out,
        } => cmd_evaluate(
            embedding,
            labels,
            train_embedding.as_deref(),
            train_labels.as_deref(),
            *kmeans_seed,
            out,
        ),
        Command::Experiment {
            config,
            method,
            p,
            beta,
            k,
            d,
            train_fraction,
            seeds,
            snr,
            out,
        } => cmd_experiment(
            config,
            method.as_deref(),
            p.as_deref(),
            beta.as_deref(),
            k.as_deref(),
            *d,
            *train_fraction,
            seeds.as_deref(),
            snr.as_deref(),
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
