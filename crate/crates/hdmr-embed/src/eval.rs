//! Quantitative evaluation: nearest-neighbor classification, agreement
//! statistics, cluster quality, noise injection, and learning-curve area.
//!
//! Everything here is a pure function of its inputs; randomness flows
//! through explicit seeds (ChaCha8).

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Classification and cluster-quality summary for one embedding.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub oa: f64,
    /// Chance-corrected agreement; NaN when expected agreement is 1.
    pub kappa: f64,
    /// Per-class recall, keyed by label.
    pub classwise: Vec<(usize, f64)>,
    pub nmi: f64,
    pub fisher: f64,
    pub silhouette: f64,
    pub d_used: usize,
}

/// Overall accuracy over dimensions, plus its normalized area.
#[derive(Debug, Clone)]
pub struct LearningCurve {
    pub dims: Vec<usize>,
    pub oa_per_dim: Vec<f64>,
}

/// k-nearest-neighbor prediction (default k = 1). Distance ties break
/// toward the lower training index; vote ties toward the tied label whose
/// nearest representative is closer.
pub fn knn_predict(
    train_y: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test_y: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<usize>> {
    if train_y.nrows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if train_y.nrows() != train_labels.len() {
        return Err(Error::Shape(format!(
            "{} training rows for {} labels",
            train_y.nrows(),
            train_labels.len()
        )));
    }
    if train_y.ncols() != test_y.ncols() {
        return Err(Error::Shape(format!(
            "training dimension {} vs test dimension {}",
            train_y.ncols(),
            test_y.ncols()
        )));
    }
    if k < 1 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let k = k.min(train_y.nrows());

    let preds: Vec<usize> = (0..test_y.nrows())
        .into_par_iter()
        .map(|t| {
            let row = test_y.row(t);
            if k == 1 {
                let mut best = (f64::INFINITY, usize::MAX);
                for (i, tr) in train_y.outer_iter().enumerate() {
                    let d2: f64 = row
                        .iter()
                        .zip(tr.iter())
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum();
                    if d2 < best.0 {
                        best = (d2, i);
                    }
                }
                train_labels[best.1]
            } else {
                let mut dists: Vec<(f64, usize)> = train_y
                    .outer_iter()
                    .enumerate()
                    .map(|(i, tr)| {
                        let d2: f64 = row
                            .iter()
                            .zip(tr.iter())
                            .map(|(&a, &b)| (a - b) * (a - b))
                            .sum();
                        (d2, i)
                    })
                    .collect();
                dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                // Majority vote among the k nearest; (count, -nearest rank)
                // ordering resolves ties deterministically.
                let mut votes: Vec<(usize, usize, usize)> = Vec::new(); // (label, count, best_rank)
                for (rank, &(_, i)) in dists.iter().take(k).enumerate() {
                    let lab = train_labels[i];
                    match votes.iter_mut().find(|v| v.0 == lab) {
                        Some(v) => v.1 += 1,
                        None => votes.push((lab, 1, rank)),
                    }
                }
                votes
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
                    .expect("k >= 1")
                    .0
            }
        })
        .collect();
    Ok(preds)
}

/// `(overall accuracy, kappa, per-class recall keyed by label)`.
pub type AccuracySummary = (f64, f64, Vec<(usize, f64)>);

/// Overall accuracy, Cohen's kappa, and per-class recall.
pub fn accuracy_kappa(pred: &[usize], truth: &[usize]) -> Result<AccuracySummary> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("empty prediction vector".into()));
    }
    let n = pred.len() as f64;
    let correct = pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64;
    let oa = correct / n;

    // Marginal frequencies over the union of observed labels.
    let mut labels: Vec<usize> = truth.iter().chain(pred.iter()).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let mut p_e = 0.0;
    for &lab in &labels {
        let f_pred = pred.iter().filter(|&&v| v == lab).count() as f64 / n;
        let f_truth = truth.iter().filter(|&&v| v == lab).count() as f64 / n;
        p_e += f_pred * f_truth;
    }
    let kappa = if (1.0 - p_e).abs() < 1e-15 {
        f64::NAN
    } else {
        (oa - p_e) / (1.0 - p_e)
    };

    let mut truth_labels: Vec<usize> = truth.to_vec();
    truth_labels.sort_unstable();
    truth_labels.dedup();
    let classwise = truth_labels
        .into_iter()
        .map(|lab| {
            let total = truth.iter().filter(|&&v| v == lab).count();
            let hit = truth
                .iter()
                .zip(pred)
                .filter(|(&t, &p)| t == lab && p == lab)
                .count();
            (lab, hit as f64 / total as f64)
        })
        .collect();
    Ok((oa, kappa, classwise))
}

/// Class-separability score `trace(pinv(S_w) S_b)` from within- and
/// between-class scatter; the pseudo-inverse covers rank-deficient
/// within-class scatter (collapsed classes), which is flagged.
#[derive(Debug, Clone, Copy)]
pub struct FisherScore {
    pub value: f64,
    pub rank_deficient: bool,
}

pub fn fisher_score(y: ArrayView2<'_, f64>, labels: &[usize]) -> Result<FisherScore> {
    if y.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} labels",
            y.nrows(),
            labels.len()
        )));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Metric("need at least 2 classes".into()));
    }
    let (m, d) = y.dim();
    for &c in &classes {
        if labels.iter().filter(|&&l| l == c).count() < 2 {
            return Err(Error::Metric(format!("class {c} has fewer than 2 samples")));
        }
    }

    let global_mean = y.sum_axis(ndarray::Axis(0)) / m as f64;
    let mut s_w = Array2::<f64>::zeros((d, d));
    let mut s_b = Array2::<f64>::zeros((d, d));
    for &c in &classes {
        let idx: Vec<usize> = (0..m).filter(|&i| labels[i] == c).collect();
        let mc = idx.len() as f64;
        let mut mean_c = Array1::<f64>::zeros(d);
        for &i in &idx {
            mean_c += &y.row(i);
        }
        mean_c /= mc;
        for &i in &idx {
            let diff = &y.row(i) - &mean_c;
            for a in 0..d {
                for b in 0..d {
                    s_w[[a, b]] += diff[a] * diff[b];
                }
            }
        }
        let gap = &mean_c - &global_mean;
        for a in 0..d {
            for b in 0..d {
                s_b[[a, b]] += mc * gap[a] * gap[b];
            }
        }
    }

    // Pseudo-inverse through SVD with the usual rank cutoff.
    let sw = nalgebra::DMatrix::from_fn(d, d, |i, j| s_w[[i, j]]);
    let svd = sw.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = smax * d as f64 * f64::EPSILON;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count();
    let rank_deficient = rank < d;
    let pinv = svd
        .pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Metric(format!("pseudo-inverse failed: {e}")))?;
    let sb = nalgebra::DMatrix::from_fn(d, d, |i, j| s_b[[i, j]]);
    let value = (pinv * sb).trace();
    Ok(FisherScore {
        value,
        rank_deficient,
    })
}

/// k-means with k-means++ seeding, best inertia over restarts, at most
/// 300 iterations per restart, stopping when the relative inertia change
/// falls below 1e-6.
pub fn kmeans(
    y: ArrayView2<'_, f64>,
    n_clusters: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let m = y.nrows();
    if n_clusters == 0 || n_clusters > m {
        return Err(Error::Parameter(format!(
            "cluster count {n_clusters} out of range for {m} samples"
        )));
    }
    let results: Vec<(f64, Vec<usize>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (r as u64).wrapping_mul(0x9E3779B97F4A7C15));
            kmeans_once(y, n_clusters, &mut rng)
        })
        .collect();
    // Deterministic winner: smallest inertia, earliest restart on ties.
    let best = results
        .into_iter()
        .enumerate()
        .min_by(|(i, (ia, _)), (j, (ib, _))| ia.partial_cmp(ib).unwrap().then(i.cmp(j)))
        .expect("at least one restart");
    Ok(best.1 .1)
}

#[allow(clippy::needless_range_loop)] // index loops mirror the center/point pairing
fn kmeans_once(y: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let (m, d) = y.dim();

    // k-means++ seeding.
    let mut centers = Array2::<f64>::zeros((k, d));
    let first = rng.gen_range(0..m);
    centers.row_mut(0).assign(&y.row(first));
    let mut d2 = vec![0.0f64; m];
    for c in 1..k {
        let mut total = 0.0;
        for i in 0..m {
            let mut best = f64::INFINITY;
            for cc in 0..c {
                let dist: f64 = y
                    .row(i)
                    .iter()
                    .zip(centers.row(cc).iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                best = best.min(dist);
            }
            d2[i] = best;
            total += best;
        }
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..m)
        };
        centers.row_mut(c).assign(&y.row(pick));
    }

    let mut assign = vec![0usize; m];
    let mut inertia = f64::INFINITY;
    for _ in 0..300 {
        // Assignment step.
        let mut new_inertia = 0.0;
        for i in 0..m {
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..k {
                let dist: f64 = y
                    .row(i)
                    .iter()
                    .zip(centers.row(c).iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            assign[i] = best.1;
            new_inertia += best.0;
        }
        // Update step; an emptied cluster grabs the point farthest from
        // its current center.
        let mut counts = vec![0usize; k];
        let mut sums = Array2::<f64>::zeros((k, d));
        for i in 0..m {
            counts[assign[i]] += 1;
            let mut row = sums.row_mut(assign[i]);
            row += &y.row(i);
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..m)
                    .max_by(|&a, &b| {
                        let da: f64 = y
                            .row(a)
                            .iter()
                            .zip(centers.row(assign[a]).iter())
                            .map(|(&p, &q)| (p - q) * (p - q))
                            .sum();
                        let db: f64 = y
                            .row(b)
                            .iter()
                            .zip(centers.row(assign[b]).iter())
                            .map(|(&p, &q)| (p - q) * (p - q))
                            .sum();
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .expect("nonempty data");
                centers.row_mut(c).assign(&y.row(far));
            } else {
                let cnt = counts[c] as f64;
                let mut row = centers.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|v| v / cnt);
            }
        }
        let rel = (inertia - new_inertia).abs() / new_inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if rel < 1e-6 {
            break;
        }
    }
    (inertia, assign)
}

/// Normalized mutual information `I(U;V) / sqrt(H(U) H(V))` from the
/// contingency table, with `0 log 0 = 0`. If both partitions are single
/// blocks the score is 1; if exactly one is, it is 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "partition lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Data("empty partitions".into()));
    }
    let n = a.len() as f64;
    let mut ua: Vec<usize> = a.to_vec();
    ua.sort_unstable();
    ua.dedup();
    let mut ub: Vec<usize> = b.to_vec();
    ub.sort_unstable();
    ub.dedup();

    let mut table = vec![vec![0usize; ub.len()]; ua.len()];
    for (&x, &y) in a.iter().zip(b) {
        let i = ua.binary_search(&x).expect("present");
        let j = ub.binary_search(&y).expect("present");
        table[i][j] += 1;
    }
    let row_sums: Vec<f64> = table
        .iter()
        .map(|r| r.iter().sum::<usize>() as f64)
        .collect();
    let col_sums: Vec<f64> = (0..ub.len())
        .map(|j| table.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();

    let h = |sums: &[f64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| {
                let p = s / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_a = h(&row_sums);
    let h_b = h(&col_sums);
    if h_a == 0.0 && h_b == 0.0 {
        return Ok(1.0);
    }
    if h_a == 0.0 || h_b == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..ua.len() {
        for j in 0..ub.len() {
            let nij = table[i][j] as f64;
            if nij > 0.0 {
                mi += (nij / n) * ((n * nij) / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    Ok((mi / (h_a * h_b).sqrt()).clamp(0.0, 1.0))
}

/// Mean silhouette over samples: `(b - a) / max(a, b)` with `a` the mean
/// intra-class distance and `b` the smallest mean distance to another
/// class. Samples in singleton classes contribute 0 and are counted.
#[derive(Debug, Clone, Copy)]
pub struct Silhouette {
    pub value: f64,
    pub singletons: usize,
}

pub fn silhouette(y: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Silhouette> {
    let m = y.nrows();
    if m != labels.len() {
        return Err(Error::Shape(format!(
            "{m} rows for {} labels",
            labels.len()
        )));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Metric("need at least 2 classes".into()));
    }
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..m).filter(|&i| labels[i] == c).collect())
        .collect();

    let scores: Vec<(f64, bool)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ci = classes.binary_search(&labels[i]).expect("present");
            if members[ci].len() < 2 {
                return (0.0, true);
            }
            let dist = |j: usize| -> f64 {
                y.row(i)
                    .iter()
                    .zip(y.row(j).iter())
                    .map(|(&p, &q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt()
            };
            let a = members[ci]
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(j))
                .sum::<f64>()
                / (members[ci].len() - 1) as f64;
            let mut b = f64::INFINITY;
            for (cj, idx) in members.iter().enumerate() {
                if cj == ci || idx.is_empty() {
                    continue;
                }
                let mean = idx.iter().map(|&j| dist(j)).sum::<f64>() / idx.len() as f64;
                b = b.min(mean);
            }
            let denom = a.max(b);
            if denom == 0.0 {
                (0.0, false)
            } else {
                ((b - a) / denom, false)
            }
        })
        .collect();

    let singletons = scores.iter().filter(|(_, s)| *s).count();
    let value = scores.iter().map(|(v, _)| v).sum::<f64>() / m as f64;
    Ok(Silhouette { value, singletons })
}

/// Add i.i.d. Gaussian noise at the requested signal-to-noise ratio (dB),
/// with the signal power taken as the mean squared entry of the whole
/// matrix. The ratio is capped at 300 dB. Deterministic under the seed.
pub fn add_noise(x: ArrayView2<'_, f64>, snr_db: f64, seed: u64) -> Array2<f64> {
    let snr_db = snr_db.min(300.0);
    let p_signal = x.iter().map(|&v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let sigma = (p_signal / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.to_owned();
    for v in out.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += sigma * n;
    }
    out
}

/// Trapezoidal area of a learning curve over its dimension axis,
/// normalized by the dimension span so a constant curve at accuracy `a`
/// scores exactly `a`.
pub fn auc(curve: &LearningCurve) -> Result<f64> {
    let n = curve.dims.len();
    if n != curve.oa_per_dim.len() {
        return Err(Error::Shape(format!(
            "{} dimensions for {} accuracy values",
            n,
            curve.oa_per_dim.len()
        )));
    }
    if n < 2 {
        return Err(Error::Parameter(
            "learning curve needs at least 2 points".into(),
        ));
    }
    for w in curve.dims.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Shape(
                "dimensions must be strictly increasing".into(),
            ));
        }
    }
    // A constant curve integrates to the constant; take the algebraic
    // shortcut so the identity holds without summation round-off.
    if curve.oa_per_dim.iter().all(|&v| v == curve.oa_per_dim[0]) {
        return Ok(curve.oa_per_dim[0]);
    }
    let mut area = 0.0;
    for i in 1..n {
        let dx = (curve.dims[i] - curve.dims[i - 1]) as f64;
        area += dx * (curve.oa_per_dim[i] + curve.oa_per_dim[i - 1]) / 2.0;
    }
    Ok(area / (curve.dims[n - 1] - curve.dims[0]) as f64)
}
