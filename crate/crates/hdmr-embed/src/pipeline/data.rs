//! Dataset loading: labeled numeric CSV and a minimal binary cube format.
//!
//! The cube format is a single file: three ASCII header lines holding
//! `rows`, `cols`, and `bands`, followed immediately by
//! `rows * cols * bands` 32-bit little-endian floats in band-sequential
//! order (band-major, row-major within a band). Ground truth is a second
//! file with two ASCII header lines (`rows`, `cols`) followed by
//! `rows * cols` unsigned 16-bit little-endian labels, 0 meaning
//! unlabeled.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Sample matrix with integer class labels; `coords` carries the source
/// pixel of each row when the data came from a raster.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub coords: Option<Vec<(usize, usize)>>,
}

impl LabeledDataset {
    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Load a rectangular numeric CSV with one label column (default: the
/// last). Rejects ragged rows, non-numeric cells, and non-finite values,
/// naming the offending cell.
pub fn load_matrix_csv(path: &Path, label_column: Option<usize>) -> Result<LabeledDataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {display}: {e}")))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            row: r,
            col: 0,
            msg: e.to_string(),
        })?;
        let w = record.len();
        match width {
            None => {
                if w < 2 {
                    return Err(Error::Parse {
                        path: display,
                        row: r,
                        col: 0,
                        msg: "need at least one feature column and one label column".into(),
                    });
                }
                width = Some(w);
            }
            Some(expect) if expect != w => {
                return Err(Error::Parse {
                    path: display,
                    row: r,
                    col: w.min(expect),
                    msg: format!("ragged row: {w} cells, expected {expect}"),
                });
            }
            _ => {}
        }
        let label_col = label_column.unwrap_or(w - 1);
        if label_col >= w {
            return Err(Error::Parse {
                path: display,
                row: r,
                col: label_col,
                msg: format!("label column {label_col} out of bounds for {w} columns"),
            });
        }
        let mut feats = Vec::with_capacity(w - 1);
        for (c, cell) in record.iter().enumerate() {
            if c == label_col {
                let value: f64 = cell.trim().parse().map_err(|e| Error::Parse {
                    path: display.clone(),
                    row: r,
                    col: c,
                    msg: format!("bad label {cell:?}: {e}"),
                })?;
                if !value.is_finite() || value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Parse {
                        path: display,
                        row: r,
                        col: c,
                        msg: format!("label must be a positive integer, got {cell:?}"),
                    });
                }
                labels.push(value as usize);
            } else {
                let value: f64 = cell.trim().parse().map_err(|e| Error::Parse {
                    path: display.clone(),
                    row: r,
                    col: c,
                    msg: format!("bad number {cell:?}: {e}"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        path: display,
                        row: r,
                        col: c,
                        msg: format!("non-finite value {cell:?}"),
                    });
                }
                feats.push(value);
            }
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{display} holds no data rows")));
    }
    let n = rows[0].len();
    let mut x = Array2::zeros((rows.len(), n));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Ok(LabeledDataset {
        x,
        labels,
        coords: None,
    })
}

/// Load a feature-only CSV (no label column).
pub fn load_feature_csv(path: &Path) -> Result<Array2<f64>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {display}: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            row: r,
            col: 0,
            msg: e.to_string(),
        })?;
        let w = record.len();
        match width {
            None => width = Some(w),
            Some(expect) if expect != w => {
                return Err(Error::Parse {
                    path: display,
                    row: r,
                    col: w.min(expect),
                    msg: format!("ragged row: {w} cells, expected {expect}"),
                });
            }
            _ => {}
        }
        let mut feats = Vec::with_capacity(w);
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|e| Error::Parse {
                path: display.clone(),
                row: r,
                col: c,
                msg: format!("bad number {cell:?}: {e}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: display,
                    row: r,
                    col: c,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            feats.push(value);
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{display} holds no data rows")));
    }
    let n = rows[0].len();
    let mut x = Array2::zeros((rows.len(), n));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Ok(x)
}

/// One label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: usize = line.parse().map_err(|e| Error::Parse {
            path: display.clone(),
            row: r,
            col: 0,
            msg: format!("bad label {line:?}: {e}"),
        })?;
        if v == 0 {
            return Err(Error::Parse {
                path: display,
                row: r,
                col: 0,
                msg: "labels must be positive".into(),
            });
        }
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{display} holds no labels")));
    }
    Ok(labels)
}

/// Write a feature matrix (optionally with a trailing label column) as
/// CSV using shortest round-trip float formatting.
pub fn write_matrix_csv(
    path: &Path,
    x: ArrayView2<'_, f64>,
    labels: Option<&[usize]>,
) -> Result<()> {
    use std::fmt::Write as _;
    if let Some(labs) = labels {
        if labs.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labs.len(),
                x.nrows()
            )));
        }
    }
    let mut out = String::new();
    for i in 0..x.nrows() {
        let mut first = true;
        for v in x.row(i).iter() {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        if let Some(labs) = labels {
            let _ = write!(out, ",{}", labs[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_header_lines(bytes: &[u8], count: usize, path: &str) -> Result<(Vec<usize>, usize)> {
    let mut values = Vec::with_capacity(count);
    let mut offset = 0usize;
    for _ in 0..count {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format(format!("{path}: truncated header")))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| Error::Format(format!("{path}: non-ASCII header")))?
            .trim();
        let v: usize = line
            .parse()
            .map_err(|e| Error::Format(format!("{path}: bad header line {line:?}: {e}")))?;
        values.push(v);
        offset += end + 1;
    }
    Ok((values, offset))
}

/// Load a binary cube plus ground-truth raster, flattening labeled pixels
/// (label > 0) into dataset rows with per-pixel spectra as features.
pub fn load_hsi_cube(data_path: &Path, gt_path: &Path) -> Result<LabeledDataset> {
    let data_name = data_path.display().to_string();
    let gt_name = gt_path.display().to_string();

    let bytes = std::fs::read(data_path)?;
    let (dims, offset) = read_header_lines(&bytes, 3, &data_name)?;
    let (rows, cols, bands) = (dims[0], dims[1], dims[2]);
    let expected = rows * cols * bands * 4;
    if bytes.len() - offset != expected {
        return Err(Error::Format(format!(
            "{data_name}: payload is {} bytes, header {rows}x{cols}x{bands} implies {expected}",
            bytes.len() - offset
        )));
    }

    let gt_bytes = std::fs::read(gt_path)?;
    let (gt_dims, gt_offset) = read_header_lines(&gt_bytes, 2, &gt_name)?;
    if gt_dims[0] != rows || gt_dims[1] != cols {
        return Err(Error::Format(format!(
            "{gt_name}: ground truth is {}x{}, cube is {rows}x{cols}",
            gt_dims[0], gt_dims[1]
        )));
    }
    let gt_expected = rows * cols * 2;
    if gt_bytes.len() - gt_offset != gt_expected {
        return Err(Error::Format(format!(
            "{gt_name}: payload is {} bytes, header implies {gt_expected}",
            gt_bytes.len() - gt_offset
        )));
    }

    let n_pixels = rows * cols;
    let mut labels_raster = Vec::with_capacity(n_pixels);
    for p in 0..n_pixels {
        let at = gt_offset + 2 * p;
        labels_raster.push(u16::from_le_bytes([gt_bytes[at], gt_bytes[at + 1]]) as usize);
    }
    let labeled: Vec<usize> = (0..n_pixels).filter(|&p| labels_raster[p] > 0).collect();
    if labeled.is_empty() {
        return Err(Error::Data(format!("{gt_name}: no labeled pixels")));
    }

    let mut x = Array2::zeros((labeled.len(), bands));
    for (row_idx, &p) in labeled.iter().enumerate() {
        for b in 0..bands {
            let at = offset + 4 * (b * n_pixels + p);
            let v =
                f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as f64;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{data_name}: non-finite value at pixel {p}, band {b}"
                )));
            }
            x[[row_idx, b]] = v;
        }
    }
    let labels = labeled.iter().map(|&p| labels_raster[p]).collect();
    let coords = labeled.iter().map(|&p| (p / cols, p % cols)).collect();
    Ok(LabeledDataset {
        x,
        labels,
        coords: Some(coords),
    })
}
