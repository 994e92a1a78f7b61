//! Experiment orchestration: configuration, repeated stratified runs,
//! learning curves, robustness sweeps, and report emission.
//!
//! All randomness is derived from the configured seeds, so a rerun with
//! an identical configuration reproduces every report file byte for byte.
//! Feature ranges, standardization statistics, and affinity graphs are
//! always computed on the training side of a split; test rows never touch
//! the fitted model.

pub mod data;
pub mod split;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

pub use data::{
    load_feature_csv, load_hsi_cube, load_labels, load_matrix_csv, write_matrix_csv, LabeledDataset,
};
pub use split::{
    cross_validate, split_plan, stratified_split, GridSearchResult, ParamGrid, Split, SplitPlan,
};

use crate::embedding::{
    direct_embed_at_most, fit_hdmr_at_most, fit_lpp_at_most, EmbeddingModel, HdmrParams,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_kappa, add_noise, auc, fisher_score, kmeans, knn_predict, nmi, silhouette,
    LearningCurve, MetricsReport,
};
use crate::graph::build_supervised_affinity;

/// Embedding method driven by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Hdmr,
    Lpp,
    /// Training-graph spectral embedding; has no out-of-sample map, so
    /// learning curves use leave-one-out accuracy on the training side.
    Direct,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hdmr => "hdmr",
            Method::Lpp => "lpp",
            Method::Direct => "direct",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hdmr" => Ok(Method::Hdmr),
            "lpp" => Ok(Method::Lpp),
            "direct" => Ok(Method::Direct),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected hdmr, lpp, or direct"
            ))),
        }
    }
}

/// Full description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Ground-truth raster path; switches the loader to the cube format.
    pub gt: Option<PathBuf>,
    pub label_column: Option<usize>,
    pub method: Method,
    pub grid: ParamGrid,
    pub d_max: usize,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub snr_list: Vec<f64>,
    pub margin: f64,
    pub cv_folds: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(dataset: PathBuf, out_dir: PathBuf) -> Self {
        Self {
            dataset,
            gt: None,
            label_column: None,
            method: Method::Hdmr,
            grid: ParamGrid::single(4, 100.0, 5),
            d_max: 50,
            train_fraction: 0.10,
            seeds: (1..=10).collect(),
            snr_list: Vec::new(),
            margin: 0.05,
            cv_folds: 5,
            out_dir,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if self.d_max < 1 {
            return Err(Error::Config("d_max must be at least 1".into()));
        }
        if self.grid.p.is_empty() || self.grid.beta.is_empty() || self.grid.k.is_empty() {
            return Err(Error::Config(
                "hyperparameter grid axes must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

/// Parse a flat `key = value` configuration file. Lists are
/// comma-separated; `#` starts a comment.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::new(PathBuf::new(), PathBuf::from("runs"));
    let mut n_repeats: Option<usize> = None;
    let mut seeds_given = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected key = value, got {raw:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            Error::Config(format!(
                "{}:{}: bad {what} value {value:?}",
                path.display(),
                lineno + 1
            ))
        };
        match key {
            "dataset" => cfg.dataset = PathBuf::from(value),
            "gt" => cfg.gt = Some(PathBuf::from(value)),
            "label_col" => cfg.label_column = Some(value.parse().map_err(|_| bad("label_col"))?),
            "method" => cfg.method = value.parse()?,
            "p" => cfg.grid.p = parse_list(value).map_err(|_| bad("p"))?,
            "beta" => cfg.grid.beta = parse_list(value).map_err(|_| bad("beta"))?,
            "k" => cfg.grid.k = parse_list(value).map_err(|_| bad("k"))?,
            "d_max" => cfg.d_max = value.parse().map_err(|_| bad("d_max"))?,
            "train_fraction" => {
                cfg.train_fraction = value.parse().map_err(|_| bad("train_fraction"))?
            }
            "n_repeats" => n_repeats = Some(value.parse().map_err(|_| bad("n_repeats"))?),
            "seeds" => {
                cfg.seeds = parse_list(value).map_err(|_| bad("seeds"))?;
                seeds_given = true;
            }
            "snr" => cfg.snr_list = parse_list(value).map_err(|_| bad("snr"))?,
            "margin" => cfg.margin = value.parse().map_err(|_| bad("margin"))?,
            "folds" => cfg.cv_folds = value.parse().map_err(|_| bad("folds"))?,
            "out" => cfg.out_dir = PathBuf::from(value),
            other => {
                return Err(Error::Config(format!(
                    "{}:{}: unknown key {other:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    if let Some(r) = n_repeats {
        if r == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        if !seeds_given {
            cfg.seeds = (1..=r as u64).collect();
        } else if cfg.seeds.len() != r {
            return Err(Error::Config(format!(
                "n_repeats = {r} but {} seeds were given",
                cfg.seeds.len()
            )));
        }
    }
    if cfg.dataset.as_os_str().is_empty() {
        return Err(Error::Config(format!(
            "{}: missing required key \"dataset\"",
            path.display()
        )));
    }
    Ok(cfg)
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, T::Err> {
    s.split(',').map(|tok| tok.trim().parse::<T>()).collect()
}

/// Paths and headline numbers of one completed experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub chosen: (usize, f64, usize),
    pub best_d: usize,
    pub mean_oa_at_best_d: f64,
    pub auc: f64,
    pub learning_curve_path: PathBuf,
    pub metrics_path: PathBuf,
    pub snr_path: Option<PathBuf>,
    pub manifest_path: PathBuf,
    pub failed_repeats: usize,
}

/// Everything one repeat produces.
struct RepeatOutcome {
    /// Overall accuracy for d = 1..=curve.len().
    curve: Vec<f64>,
    emb_train: Array2<f64>,
    emb_eval: Array2<f64>,
    labels_train: Vec<usize>,
    labels_eval: Vec<usize>,
    /// Evaluation ran leave-one-out on the training side (no transform).
    loo: bool,
    out_of_range: usize,
}

fn fit_model(
    method: Method,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
) -> Result<EmbeddingModel> {
    match method {
        Method::Hdmr => fit_hdmr_at_most(x, labels, params),
        Method::Lpp => fit_lpp_at_most(x, labels, params),
        Method::Direct => unreachable!("direct method does not fit a transform model"),
    }
}

/// Accuracy of 1-NN classification at every prefix dimension
/// `1..=d_avail`, sharing the distance accumulation across dimensions.
/// `exclude_self` switches to leave-one-out mode (train == eval).
fn prefix_curve(
    emb_train: ArrayView2<'_, f64>,
    labels_train: &[usize],
    emb_eval: ArrayView2<'_, f64>,
    labels_eval: &[usize],
    exclude_self: bool,
) -> Vec<f64> {
    let d_avail = emb_train.ncols();
    let m = emb_train.nrows();
    let t = emb_eval.nrows();
    let per_point: Vec<Vec<bool>> = (0..t)
        .into_par_iter()
        .map(|i| {
            let mut dist2 = vec![0.0f64; m];
            let mut hits = Vec::with_capacity(d_avail);
            let row = emb_eval.row(i);
            for d in 0..d_avail {
                let yv = row[d];
                let mut best = (f64::INFINITY, usize::MAX);
                for (j, dj) in dist2.iter_mut().enumerate() {
                    let diff = yv - emb_train[[j, d]];
                    *dj += diff * diff;
                    if exclude_self && i == j {
                        continue;
                    }
                    if *dj < best.0 {
                        best = (*dj, j);
                    }
                }
                hits.push(labels_train[best.1] == labels_eval[i]);
            }
            hits
        })
        .collect();
    (0..d_avail)
        .map(|d| per_point.iter().filter(|h| h[d]).count() as f64 / t as f64)
        .collect()
}

fn run_repeat(
    method: Method,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    split: &Split,
    params: &HdmrParams,
) -> Result<RepeatOutcome> {
    let x_train = split::select_rows(x, &split.train);
    let labels_train: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();

    if method == Method::Direct {
        let graph = build_supervised_affinity(x_train.view(), &labels_train, params.k)?;
        let emb = direct_embed_at_most(&graph, params.d)?;
        let curve = prefix_curve(emb.view(), &labels_train, emb.view(), &labels_train, true);
        return Ok(RepeatOutcome {
            curve,
            emb_train: emb.clone(),
            emb_eval: emb,
            labels_train: labels_train.clone(),
            labels_eval: labels_train,
            loo: true,
            out_of_range: 0,
        });
    }

    let x_test = split::select_rows(x, &split.test);
    let labels_test: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let model = fit_model(method, x_train.view(), &labels_train, params)?;
    let emb_train = model.transform(x_train.view())?;
    let (emb_test, out_of_range) = model.transform_tallied(x_test.view())?;
    let curve = prefix_curve(
        emb_train.view(),
        &labels_train,
        emb_test.view(),
        &labels_test,
        false,
    );
    Ok(RepeatOutcome {
        curve,
        emb_train,
        emb_eval: emb_test,
        labels_train,
        labels_eval: labels_test,
        loo: false,
        out_of_range,
    })
}

fn metrics_at(outcome: &RepeatOutcome, d: usize, kmeans_seed: u64) -> Result<MetricsReport> {
    let tr = outcome.emb_train.slice(ndarray::s![.., ..d]);
    let ev = outcome.emb_eval.slice(ndarray::s![.., ..d]);
    let pred = if outcome.loo {
        loo_predict(tr, &outcome.labels_train)
    } else {
        knn_predict(tr, &outcome.labels_train, ev, 1)?
    };
    let (oa, kappa, classwise) = accuracy_kappa(&pred, &outcome.labels_eval)?;
    let n_classes = {
        let mut c = outcome.labels_eval.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    let assignments = kmeans(ev, n_classes, 10, kmeans_seed)?;
    let nmi_val = nmi(&assignments, &outcome.labels_eval)?;
    let fisher = fisher_score(ev, &outcome.labels_eval)?;
    let sil = silhouette(ev, &outcome.labels_eval)?;
    Ok(MetricsReport {
        oa,
        kappa,
        classwise,
        nmi: nmi_val,
        fisher: fisher.value,
        silhouette: sil.value,
        d_used: d,
    })
}

fn loo_predict(y: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<usize> {
    let m = y.nrows();
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..m {
                if j == i {
                    continue;
                }
                let d2: f64 = y
                    .row(i)
                    .iter()
                    .zip(y.row(j).iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            labels[best.1]
        })
        .collect()
}

struct SweepResult {
    curve_mean: Vec<f64>,
    curve_std: Vec<f64>,
    best_d: usize,
    auc: f64,
    outcomes: Vec<std::result::Result<RepeatOutcome, String>>,
}

/// Run all repeats on one feature matrix and aggregate the curves.
fn sweep(
    method: Method,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    plan: &SplitPlan,
    params: &HdmrParams,
) -> Result<SweepResult> {
    let outcomes: Vec<std::result::Result<RepeatOutcome, String>> = plan
        .repeats
        .par_iter()
        .map(|split| run_repeat(method, x, labels, split, params).map_err(|e| e.to_string()))
        .collect();
    let ok: Vec<&RepeatOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    if ok.is_empty() {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err().cloned())
            .unwrap_or_else(|| "no repeats".into());
        return Err(Error::Data(format!(
            "all repeats failed; first error: {first}"
        )));
    }
    let d_common = ok.iter().map(|o| o.curve.len()).min().expect("nonempty");
    let mut curve_mean = Vec::with_capacity(d_common);
    let mut curve_std = Vec::with_capacity(d_common);
    for d in 0..d_common {
        let vals: Vec<f64> = ok.iter().map(|o| o.curve[d]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        curve_mean.push(mean);
        curve_std.push(var.sqrt());
    }
    // Highest mean accuracy, smallest dimension on ties.
    let best_d = 1 + curve_mean
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(j.cmp(i)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let auc_val = if d_common >= 2 {
        auc(&LearningCurve {
            dims: (1..=d_common).collect(),
            oa_per_dim: curve_mean.clone(),
        })?
    } else {
        curve_mean[0]
    };
    Ok(SweepResult {
        curve_mean,
        curve_std,
        best_d,
        auc: auc_val,
        outcomes,
    })
}

/// Run the full experiment described by `cfg` and write the report set
/// into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let ds = match &cfg.gt {
        Some(gt) => load_hsi_cube(&cfg.dataset, gt)?,
        None => load_matrix_csv(&cfg.dataset, cfg.label_column)?,
    };
    std::fs::create_dir_all(&cfg.out_dir)?;

    let plan = split_plan(&ds, cfg.train_fraction, &cfg.seeds)?;

    // Hyperparameter selection on the first repeat's training rows.
    let (chosen, cv_note) = if cfg.grid.is_single() {
        (
            (cfg.grid.p[0], cfg.grid.beta[0], cfg.grid.k[0]),
            "fixed".to_string(),
        )
    } else {
        let split0 = &plan.repeats[0];
        let x_tr = split::select_rows(ds.x.view(), &split0.train);
        let lab_tr: Vec<usize> = split0.train.iter().map(|&i| ds.labels[i]).collect();
        let res = cross_validate(
            x_tr.view(),
            &lab_tr,
            cfg.method,
            &cfg.grid,
            cfg.cv_folds,
            cfg.seeds[0],
        )?;
        let note = format!(
            "cross-validated over {} points ({} infeasible)",
            res.table.len(),
            res.flagged.len()
        );
        ((res.p, res.beta, res.k), note)
    };
    let params = HdmrParams {
        p: chosen.0,
        beta: chosen.1,
        k: chosen.2,
        d: cfg.d_max,
        margin: cfg.margin,
    };

    let base = sweep(cfg.method, ds.x.view(), &ds.labels, &plan, &params)?;

    // Per-repeat metrics at the best dimension.
    let mut metric_rows: Vec<(usize, std::result::Result<MetricsReport, String>)> = Vec::new();
    for (r, outcome) in base.outcomes.iter().enumerate() {
        match outcome {
            Ok(o) => {
                let seed = cfg.seeds[r] ^ 0xC0FFEE;
                metric_rows.push((
                    r,
                    metrics_at(o, base.best_d, seed).map_err(|e| e.to_string()),
                ));
            }
            Err(e) => metric_rows.push((r, Err(e.clone()))),
        }
    }

    // Noise-robustness sweeps reuse the same splits and parameters.
    let mut snr_rows: Vec<(f64, f64, f64, usize)> = Vec::new();
    let mut snr_errors: Vec<(f64, String)> = Vec::new();
    for (idx, &snr) in cfg.snr_list.iter().enumerate() {
        let noisy = add_noise(ds.x.view(), snr, 0x5EED_0000 + idx as u64);
        match sweep(cfg.method, noisy.view(), &ds.labels, &plan, &params) {
            Ok(s) => {
                let best_oa = s.curve_mean[s.best_d - 1];
                snr_rows.push((snr, s.auc, best_oa, s.best_d));
            }
            Err(e) => snr_errors.push((snr, e.to_string())),
        }
    }

    // Report emission.
    let learning_curve_path = cfg.out_dir.join("learning_curve.csv");
    let mut lc = String::from("d,mean_oa,std_oa\n");
    for (i, (mean, std)) in base.curve_mean.iter().zip(&base.curve_std).enumerate() {
        let _ = writeln!(lc, "{},{:.6},{:.6}", i + 1, mean, std);
    }
    std::fs::write(&learning_curve_path, lc)?;

    let classes = ds.classes();
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let mut mc = String::from("repeat,d,oa,kappa,nmi,fisher,silhouette");
    for c in &classes {
        let _ = write!(mc, ",class_{c}");
    }
    mc.push('\n');
    let mut mean_acc: Vec<MetricsReport> = Vec::new();
    for (r, row) in &metric_rows {
        match row {
            Ok(m) => {
                let _ = write!(
                    mc,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r, m.d_used, m.oa, m.kappa, m.nmi, m.fisher, m.silhouette
                );
                for c in &classes {
                    match m.classwise.iter().find(|(lab, _)| lab == c) {
                        Some((_, recall)) => {
                            let _ = write!(mc, ",{recall:.6}");
                        }
                        None => mc.push_str(",NaN"),
                    }
                }
                mc.push('\n');
                mean_acc.push(m.clone());
            }
            Err(e) => {
                let _ = writeln!(mc, "{r},failed,{},,,,", e.replace(',', ";"));
            }
        }
    }
    if !mean_acc.is_empty() {
        let n = mean_acc.len() as f64;
        let mean = |vals: Vec<f64>| vals.iter().sum::<f64>() / n;
        let _ = write!(
            mc,
            "mean,{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            base.best_d,
            mean(mean_acc.iter().map(|m| m.oa).collect()),
            mean(mean_acc.iter().map(|m| m.kappa).collect()),
            mean(mean_acc.iter().map(|m| m.nmi).collect()),
            mean(mean_acc.iter().map(|m| m.fisher).collect()),
            mean(mean_acc.iter().map(|m| m.silhouette).collect())
        );
        for c in &classes {
            let vals: Vec<f64> = mean_acc
                .iter()
                .filter_map(|m| {
                    m.classwise
                        .iter()
                        .find(|(lab, _)| lab == c)
                        .map(|(_, r)| *r)
                })
                .collect();
            if vals.is_empty() {
                mc.push_str(",NaN");
            } else {
                let _ = write!(mc, ",{:.6}", vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        mc.push('\n');
    }
    std::fs::write(&metrics_path, mc)?;

    let snr_path = if cfg.snr_list.is_empty() {
        None
    } else {
        let p = cfg.out_dir.join("snr_sweep.csv");
        let mut sc = String::from("snr_db,auc,best_oa,best_d\n");
        for (snr, auc_val, best_oa, best_d) in &snr_rows {
            let _ = writeln!(sc, "{snr},{auc_val:.6},{best_oa:.6},{best_d}");
        }
        std::fs::write(&p, sc)?;
        Some(p)
    };

    let failed_repeats = base.outcomes.iter().filter(|o| o.is_err()).count();
    let mean_oa = base.curve_mean[base.best_d - 1];

    let manifest_path = cfg.out_dir.join("run_manifest.txt");
    let mut man = String::new();
    let _ = writeln!(man, "tool = hdmr-embed {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(man, "dataset = {}", cfg.dataset.display());
    if let Some(gt) = &cfg.gt {
        let _ = writeln!(man, "gt = {}", gt.display());
    }
    let _ = writeln!(man, "samples = {}", ds.n_samples());
    let _ = writeln!(man, "features = {}", ds.n_features());
    let _ = writeln!(man, "classes = {}", classes.len());
    let _ = writeln!(man, "method = {}", cfg.method.as_str());
    let _ = writeln!(man, "selection = {cv_note}");
    let _ = writeln!(man, "p = {}", chosen.0);
    let _ = writeln!(man, "beta = {}", chosen.1);
    let _ = writeln!(man, "k = {}", chosen.2);
    let _ = writeln!(man, "margin = {}", cfg.margin);
    let _ = writeln!(man, "d_max = {}", cfg.d_max);
    let _ = writeln!(man, "train_fraction = {}", cfg.train_fraction);
    let _ = writeln!(
        man,
        "seeds = {}",
        cfg.seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    let _ = writeln!(man, "best_d = {}", base.best_d);
    let _ = writeln!(man, "mean_oa_at_best_d = {mean_oa:.6}");
    let _ = writeln!(man, "auc = {:.6}", base.auc);
    for (r, outcome) in base.outcomes.iter().enumerate() {
        match outcome {
            Ok(o) => {
                let _ = writeln!(
                    man,
                    "repeat_{r} = ok (curve_dims {}, out_of_range {})",
                    o.curve.len(),
                    o.out_of_range
                );
            }
            Err(e) => {
                let _ = writeln!(man, "repeat_{r} = failed ({e})");
            }
        }
    }
    for (snr, e) in &snr_errors {
        let _ = writeln!(man, "snr_{snr} = failed ({e})");
    }
    std::fs::write(&manifest_path, man)?;

    Ok(ExperimentSummary {
        chosen,
        best_d: base.best_d,
        mean_oa_at_best_d: mean_oa,
        auc: base.auc,
        learning_curve_path,
        metrics_path,
        snr_path,
        manifest_path,
        failed_repeats,
    })
}
