//! Versioned text serialization of fitted models.
//!
//! Format `hdmr-embed-model v1`, line oriented, fields in this exact
//! order:
//!
//! ```text
//! hdmr-embed-model v1
//! kind <hdmr|lpp>
//! features <n>
//! order <p>            (hdmr only)
//! margin <m>           (hdmr only)
//! dims <d>
//! range <a> <b>        (n lines, hdmr only)
//! mean <n values>      (lpp only)
//! std <n values>       (lpp only)
//! eigenvalues <d values>
//! alpha <rows> <cols>
//! <one line per column of alpha, rows values each>
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces the model bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::basis::BasisSpec;
use crate::embedding::{EmbeddingModel, ModelKind};
use crate::error::{Error, Result};
use crate::graph::Standardizer;

const MAGIC: &str = "hdmr-embed-model v1";

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    std::fs::write(path, render_model(model))?;
    Ok(())
}

pub fn render_model(model: &EmbeddingModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind {}", model.kind.as_str());
    let _ = writeln!(out, "features {}", model.n_features());
    match model.kind {
        ModelKind::Hdmr => {
            let basis = model.basis.as_ref().expect("hdmr model has basis");
            let _ = writeln!(out, "order {}", basis.p());
            let _ = writeln!(out, "margin {}", basis.margin());
            let _ = writeln!(out, "dims {}", model.d);
            for &(a, b) in basis.ranges() {
                let _ = writeln!(out, "range {a} {b}");
            }
        }
        ModelKind::Lpp => {
            let stand = model
                .standardizer
                .as_ref()
                .expect("lpp model has standardizer");
            let _ = writeln!(out, "dims {}", model.d);
            let _ = writeln!(out, "mean {}", join_floats(stand.mean.iter()));
            let _ = writeln!(out, "std {}", join_floats(stand.std.iter()));
        }
    }
    let _ = writeln!(out, "eigenvalues {}", join_floats(model.eigenvalues.iter()));
    let _ = writeln!(out, "alpha {} {}", model.alpha.nrows(), model.alpha.ncols());
    for c in 0..model.alpha.ncols() {
        let _ = writeln!(out, "{}", join_floats(model.alpha.column(c).iter()));
    }
    out
}

fn join_floats<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    vals.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text).map_err(|msg| Error::Format(format!("{}: {msg}", path.display())))
}

pub fn parse_model(text: &str) -> std::result::Result<EmbeddingModel, String> {
    let mut lines = text.lines();
    let magic = lines.next().ok_or("empty file")?;
    if magic.trim() != MAGIC {
        return Err(format!("unrecognized header {magic:?}"));
    }

    let mut next_field = |name: &str| -> std::result::Result<String, String> {
        let line = lines
            .next()
            .ok_or_else(|| format!("missing field {name}"))?;
        let rest = line
            .strip_prefix(name)
            .ok_or_else(|| format!("expected field {name}, got {line:?}"))?;
        Ok(rest.trim().to_string())
    };

    let kind = match next_field("kind")?.as_str() {
        "hdmr" => ModelKind::Hdmr,
        "lpp" => ModelKind::Lpp,
        other => return Err(format!("unknown model kind {other:?}")),
    };
    let n: usize = next_field("features")?
        .parse()
        .map_err(|e| format!("bad feature count: {e}"))?;

    let mut basis = None;
    let mut standardizer = None;
    let d: usize;
    match kind {
        ModelKind::Hdmr => {
            let p: usize = next_field("order")?
                .parse()
                .map_err(|e| format!("bad order: {e}"))?;
            let margin: f64 = next_field("margin")?
                .parse()
                .map_err(|e| format!("bad margin: {e}"))?;
            d = next_field("dims")?
                .parse()
                .map_err(|e| format!("bad dims: {e}"))?;
            let mut ranges = Vec::with_capacity(n);
            for _ in 0..n {
                let vals = parse_floats(&next_field("range")?)?;
                if vals.len() != 2 {
                    return Err("range line needs exactly two values".into());
                }
                ranges.push((vals[0], vals[1]));
            }
            basis =
                Some(BasisSpec::new(p, ranges, margin).map_err(|e| format!("invalid basis: {e}"))?);
        }
        ModelKind::Lpp => {
            d = next_field("dims")?
                .parse()
                .map_err(|e| format!("bad dims: {e}"))?;
            let mean = parse_floats(&next_field("mean")?)?;
            let std = parse_floats(&next_field("std")?)?;
            if mean.len() != n || std.len() != n {
                return Err("standardization vectors must match feature count".into());
            }
            standardizer = Some(Standardizer {
                mean: mean.into(),
                std: std.into(),
            });
        }
    }

    let eigenvalues = parse_floats(&next_field("eigenvalues")?)?;
    if eigenvalues.len() != d {
        return Err(format!(
            "expected {d} eigenvalues, found {}",
            eigenvalues.len()
        ));
    }

    let shape = parse_floats(&next_field("alpha")?)?;
    if shape.len() != 2 {
        return Err("alpha header needs rows and cols".into());
    }
    let (rows, cols) = (shape[0] as usize, shape[1] as usize);
    if cols != d {
        return Err(format!("alpha has {cols} columns for {d} dims"));
    }
    let expected_rows = match kind {
        ModelKind::Hdmr => n * basis.as_ref().expect("set above").p(),
        ModelKind::Lpp => n,
    };
    if rows != expected_rows {
        return Err(format!("alpha has {rows} rows, expected {expected_rows}"));
    }
    let mut alpha = Array2::zeros((rows, cols));
    for c in 0..cols {
        let line = lines.next().ok_or("missing alpha column")?;
        let vals = parse_floats(line)?;
        if vals.len() != rows {
            return Err(format!(
                "alpha column {c} has {} values, expected {rows}",
                vals.len()
            ));
        }
        for (r, v) in vals.into_iter().enumerate() {
            alpha[[r, c]] = v;
        }
    }

    Ok(EmbeddingModel {
        kind,
        alpha,
        eigenvalues,
        basis,
        standardizer,
        d,
    })
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| format!("bad float {tok:?}: {e}"))
        })
        .collect()
}
