//! Stratified splitting and cross-validated hyperparameter selection.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::{fit_hdmr, fit_lpp, HdmrParams};
use crate::error::{Error, Result};
use crate::eval::knn_predict;
use crate::pipeline::{LabeledDataset, Method};

/// One train/test partition with per-class bookkeeping.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// `(label, train_count, test_count)` per class.
    pub class_counts: Vec<(usize, usize, usize)>,
}

/// Splits for every repeat of an experiment.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub repeats: Vec<Split>,
}

/// Per-class random sampling without replacement. The train share of a
/// class with `m_c` members is `ceil(fraction * m_c)`, raised to 2 and
/// capped at `m_c - 1` so both sides stay populated. Deterministic under
/// the seed.
pub fn stratified_split(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = ds.classes();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut class_counts = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mut members: Vec<usize> = (0..ds.n_samples()).filter(|&i| ds.labels[i] == c).collect();
        if members.len() < 3 {
            return Err(Error::Data(format!(
                "class {c} has {} samples; need at least 3 to split",
                members.len()
            )));
        }
        let want = (fraction * members.len() as f64).ceil() as usize;
        let take = want.max(2).min(members.len() - 1);
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
        class_counts.push((c, take, members.len() - take));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        class_counts,
    })
}

/// Build one split per seed.
pub fn split_plan(ds: &LabeledDataset, fraction: f64, seeds: &[u64]) -> Result<SplitPlan> {
    let repeats = seeds
        .iter()
        .map(|&s| stratified_split(ds, fraction, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitPlan { repeats })
}

/// Hyperparameter grid; single-element axes pin the value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub p: Vec<usize>,
    pub beta: Vec<f64>,
    pub k: Vec<usize>,
}

impl ParamGrid {
    pub fn single(p: usize, beta: f64, k: usize) -> Self {
        Self {
            p: vec![p],
            beta: vec![beta],
            k: vec![k],
        }
    }

    pub fn is_single(&self) -> bool {
        self.p.len() == 1 && self.beta.len() == 1 && self.k.len() == 1
    }
}

/// Outcome of a grid search.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub p: usize,
    pub beta: f64,
    pub k: usize,
    /// Mean validation accuracy per grid point, in grid iteration order.
    pub table: Vec<(usize, f64, usize, f64)>,
    /// Grid points that could not be scored on at least one fold.
    pub flagged: Vec<(usize, f64, usize)>,
}

/// Stratified k-fold assignment: per class, shuffled members are dealt
/// round-robin across folds.
fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for &c in &classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < folds {
            return Err(Error::Parameter(format!(
                "class {c} has {} samples, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    Ok(fold_of)
}

/// Score every `(p, beta, k)` grid point by mean 1-NN overall accuracy
/// over stratified folds, embedding at `d = number of classes`. Grid
/// points that fail on some fold (for example `k` too large for a fold's
/// class) score 0 and are flagged. Ties prefer smaller `p`, then smaller
/// `beta`, then smaller `k`.
pub fn cross_validate(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    method: Method,
    grid: &ParamGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if folds < 2 {
        return Err(Error::Parameter("need at least 2 folds".into()));
    }
    let fold_of = stratified_folds(labels, folds, seed)?;
    let n_classes = {
        let mut c: Vec<usize> = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c.len()
    };

    // Sorted grid points give the deterministic tie-break order.
    let mut points: Vec<(usize, f64, usize)> = Vec::new();
    let mut ps = grid.p.clone();
    ps.sort_unstable();
    ps.dedup();
    let mut betas = grid.beta.clone();
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    betas.dedup();
    let mut ks = grid.k.clone();
    ks.sort_unstable();
    ks.dedup();
    for &p in &ps {
        for &beta in &betas {
            for &k in &ks {
                points.push((p, beta, k));
            }
        }
    }

    let scored: Vec<((usize, f64, usize), Option<f64>)> = points
        .par_iter()
        .map(|&(p, beta, k)| {
            let params = HdmrParams {
                p,
                beta,
                k,
                d: n_classes,
                margin: 0.05,
            };
            let mut total = 0.0;
            for fold in 0..folds {
                let tr: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != fold).collect();
                let va: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == fold).collect();
                let x_tr = select_rows(x, &tr);
                let y_tr: Vec<usize> = tr.iter().map(|&i| labels[i]).collect();
                let x_va = select_rows(x, &va);
                let y_va: Vec<usize> = va.iter().map(|&i| labels[i]).collect();
                let fit = match method {
                    Method::Lpp => fit_lpp(x_tr.view(), &y_tr, &params),
                    _ => fit_hdmr(x_tr.view(), &y_tr, &params),
                };
                let Ok(model) = fit else {
                    return ((p, beta, k), None);
                };
                let Ok(emb_tr) = model.transform(x_tr.view()) else {
                    return ((p, beta, k), None);
                };
                let Ok(emb_va) = model.transform(x_va.view()) else {
                    return ((p, beta, k), None);
                };
                let Ok(pred) = knn_predict(emb_tr.view(), &y_tr, emb_va.view(), 1) else {
                    return ((p, beta, k), None);
                };
                let hit = pred.iter().zip(&y_va).filter(|(a, b)| a == b).count();
                total += hit as f64 / y_va.len() as f64;
            }
            ((p, beta, k), Some(total / folds as f64))
        })
        .collect();

    let mut table = Vec::with_capacity(scored.len());
    let mut flagged = Vec::new();
    let mut best: Option<((usize, f64, usize), f64)> = None;
    for (point, score) in scored {
        let score = match score {
            Some(s) => s,
            None => {
                flagged.push(point);
                0.0
            }
        };
        table.push((point.0, point.1, point.2, score));
        // Strict improvement keeps the earliest (smallest) point on ties.
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((point, score));
        }
    }
    let ((p, beta, k), _) = best.expect("grid is nonempty");
    Ok(GridSearchResult {
        p,
        beta,
        k,
        table,
        flagged,
    })
}

pub(crate) fn select_rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset(per_class: usize, n_classes: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = per_class * n_classes;
        let mut x = Array2::zeros((m, 3));
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let c = i % n_classes;
            for j in 0..3 {
                x[[i, j]] = c as f64 * 5.0 + rng.gen_range(-0.5..0.5) + j as f64 * 0.1;
            }
            labels.push(c + 1);
        }
        LabeledDataset {
            x,
            labels,
            coords: None,
        }
    }

    #[test]
    fn split_minimum_of_two_per_class() {
        let ds = toy_dataset(10, 2, 1);
        let split = stratified_split(&ds, 0.1, 7).unwrap();
        for &(_, tr, te) in &split.class_counts {
            assert_eq!(tr, 2); // ceil(1.0) = 1, lifted to the minimum
            assert_eq!(te, 8);
        }
        assert_eq!(split.train.len() + split.test.len(), 20);
    }

    #[test]
    fn split_half_of_four() {
        let ds = toy_dataset(4, 1, 2);
        let split = stratified_split(&ds, 0.5, 7).unwrap();
        assert_eq!(split.class_counts[0], (1, 2, 2));
    }

    #[test]
    fn split_ceil_rule() {
        // 101 samples at 10% -> ceil(10.1) = 11 in train.
        let ds = toy_dataset(101, 1, 3);
        let split = stratified_split(&ds, 0.10, 7).unwrap();
        assert_eq!(split.class_counts[0].1, 11);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let mut ds = toy_dataset(5, 1, 4);
        ds.labels[0] = 9;
        ds.labels[1] = 9;
        let err = stratified_split(&ds, 0.5, 7).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("class 9"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_deterministic_and_disjoint() {
        let ds = toy_dataset(20, 3, 5);
        let a = stratified_split(&ds, 0.3, 11).unwrap();
        let b = stratified_split(&ds, 0.3, 11).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = stratified_split(&ds, 0.3, 12).unwrap();
        assert_ne!(a.train, c.train);
        for i in &a.train {
            assert!(!a.test.contains(i));
        }
    }

    #[test]
    fn cv_single_point_grid_returns_it() {
        let ds = toy_dataset(15, 2, 6);
        let grid = ParamGrid::single(2, 1.0, 3);
        let res = cross_validate(ds.x.view(), &ds.labels, Method::Hdmr, &grid, 5, 1).unwrap();
        assert_eq!((res.p, res.beta, res.k), (2, 1.0, 3));
        assert_eq!(res.table.len(), 1);
    }

    #[test]
    fn cv_prefers_separating_point() {
        // Well-separated classes: any sane point wins, but an infeasible k
        // scores 0 and is flagged, so the feasible point is chosen.
        let ds = toy_dataset(10, 2, 7);
        let grid = ParamGrid {
            p: vec![2],
            beta: vec![1.0],
            k: vec![3, 50],
        };
        let res = cross_validate(ds.x.view(), &ds.labels, Method::Hdmr, &grid, 5, 1).unwrap();
        assert_eq!(res.k, 3);
        assert_eq!(res.flagged, vec![(2, 1.0, 50)]);
    }

    #[test]
    fn cv_too_many_folds_is_parameter_error() {
        let ds = toy_dataset(4, 2, 8);
        let grid = ParamGrid::single(2, 1.0, 2);
        assert!(matches!(
            cross_validate(ds.x.view(), &ds.labels, Method::Hdmr, &grid, 5, 1),
            Err(Error::Parameter(_))
        ));
    }
}
