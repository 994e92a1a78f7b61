//! Robust solver for the regularized symmetric-definite generalized
//! eigenproblem `(A + beta I) v = lambda B v`.
//!
//! `B` is often a degree-weighted Gram matrix and may be numerically
//! rank-deficient. The solver attempts a Cholesky factorization of `B`
//! and, on failure, adds an escalating diagonal jitter proportional to
//! `trace(B)/s` before giving up. The factor reduces the pencil to an
//! ordinary symmetric eigenproblem, whose eigenvectors are transformed
//! back and normalized against the (jittered) right-hand matrix.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on the input pencil.
const SYMMETRY_TOL: f64 = 1e-10;

/// Jitter escalation ladder, as multiples of `trace(B)/s`.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Residual bound every returned eigenpair must satisfy:
/// `|A v - lambda B v| <= RESIDUAL_TOL * (|A|_F + |lambda| |B|_F)`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Default relative threshold below which leading eigenvalues are treated
/// as trivial (zero) modes.
pub const DEFAULT_TOL_ZERO: f64 = 1e-9;

/// Eigenpairs of a symmetric-definite pencil, sorted ascending.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Column `c` is the eigenvector paired with `eigenvalues[c]`; shape
    /// `s x d`.
    pub eigenvectors: Array2<f64>,
    /// Whether columns satisfy `v' B v = 1` against the (jittered)
    /// right-hand matrix.
    pub b_norm: bool,
    /// Diagonal jitter that was added to `B` to make it factorizable;
    /// zero when the clean factorization succeeded.
    pub jitter: f64,
}

impl EigenSolution {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn check_symmetric(m: ArrayView2<'_, f64>, name: &str) -> Result<()> {
    let s = m.nrows();
    if m.ncols() != s {
        return Err(Error::Shape(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    for i in 0..s {
        for j in (i + 1)..s {
            if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Shape(format!(
                    "{name} is not symmetric at ({i}, {j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }
    Ok(())
}

/// Symmetrized copy of a square matrix as a nalgebra matrix.
fn to_symmetric_dmatrix(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let s = m.nrows();
    DMatrix::from_fn(s, s, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]))
}

/// Compute the `d` smallest eigenpairs of `(A + beta I) v = lambda B v`.
///
/// Eigenvectors are normalized so `v' B~ v = 1` (with `B~` the jittered
/// right-hand matrix) and sign-fixed so each vector's largest-magnitude
/// entry is positive.
pub fn solve_gep(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    d: usize,
    beta: f64,
) -> Result<EigenSolution> {
    check_symmetric(a, "A")?;
    check_symmetric(b, "B")?;
    let s = a.nrows();
    if b.nrows() != s {
        return Err(Error::Shape(format!(
            "pencil size mismatch: A is {s}x{s}, B is {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    if d > s {
        return Err(Error::Parameter(format!(
            "requested {d} eigenpairs from a {s}x{s} pencil"
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Parameter(format!(
            "regularizer beta must be finite and nonnegative, got {beta}"
        )));
    }

    let mut am = to_symmetric_dmatrix(a);
    for i in 0..s {
        am[(i, i)] += beta;
    }
    let bm = to_symmetric_dmatrix(b);

    // Cholesky with escalating jitter. A level counts as usable only when
    // the factorization succeeds AND the resulting eigenpairs meet the
    // residual bound; ill-conditioned near-singular factors can factor
    // cleanly yet lose too much accuracy in the reduction.
    let trace_scale = bm.trace() / s as f64;
    let mut attempted = Vec::new();
    let mut factored_any = false;
    let mut best: Option<(f64, EigenSolution)> = None;
    for &eps in std::iter::once(&0.0).chain(JITTER_LADDER.iter()) {
        let jitter = eps * trace_scale;
        let mut candidate = bm.clone();
        for i in 0..s {
            candidate[(i, i)] += jitter;
        }
        let Some(chol) = nalgebra::Cholesky::new(candidate) else {
            if eps > 0.0 {
                attempted.push(jitter);
            }
            continue;
        };
        factored_any = true;
        let sol = reduce_and_solve(&am, &bm, &chol, jitter, s, d);
        let worst = worst_relative_residual(&am, &bm, &sol);
        // Early exit well inside the bound; otherwise keep escalating and
        // remember the most accurate attempt.
        if worst <= RESIDUAL_TOL * 0.25 {
            return Ok(sol);
        }
        if best.as_ref().is_none_or(|(w, _)| worst < *w) {
            best = Some((worst, sol));
        }
        if eps > 0.0 {
            attempted.push(jitter);
        }
    }
    if !factored_any {
        return Err(Error::Conditioning(attempted));
    }
    // No level met the bound; return the most accurate attempt.
    Ok(best.expect("at least one factorization succeeded").1)
}

fn reduce_and_solve(
    am: &DMatrix<f64>,
    bm: &DMatrix<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    jitter: f64,
    s: usize,
    d: usize,
) -> EigenSolution {
    // Reduce to the standard symmetric problem C = L^{-1} A' L^{-T}.
    let l = chol.l();
    let x = l
        .solve_lower_triangular(am)
        .expect("positive-definite factor has nonzero diagonal");
    let c = l
        .solve_lower_triangular(&x.transpose())
        .expect("positive-definite factor has nonzero diagonal");
    let c = DMatrix::from_fn(s, s, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));

    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    // Jittered right-hand matrix, used for the normalization below.
    let mut b_tilde = bm.clone();
    for i in 0..s {
        b_tilde[(i, i)] += jitter;
    }

    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenvectors = Array2::zeros((s, d));
    for (col, &idx) in order.iter().take(d).enumerate() {
        eigenvalues.push(eig.eigenvalues[idx]);
        let u = eig.eigenvectors.column(idx).into_owned();
        let mut v = lt
            .solve_upper_triangular(&u)
            .expect("positive-definite factor has nonzero diagonal");

        // Renormalize against B~ to absorb round-off from the solves.
        let bnorm = (v.dot(&(&b_tilde * &v))).sqrt();
        if bnorm > 0.0 {
            v /= bnorm;
        }

        // Deterministic sign: largest-magnitude entry positive, first such
        // entry winning ties.
        let mut arg = 0;
        let mut best = -1.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi.abs() > best {
                best = vi.abs();
                arg = i;
            }
        }
        if v[arg] < 0.0 {
            v = -v;
        }
        for i in 0..s {
            eigenvectors[[i, col]] = v[i];
        }
    }

    EigenSolution {
        eigenvalues,
        eigenvectors,
        b_norm: true,
        jitter,
    }
}

/// Largest relative residual of the returned pairs against the solved
/// pencil `(A', B + jitter I)`.
fn worst_relative_residual(am: &DMatrix<f64>, bm: &DMatrix<f64>, sol: &EigenSolution) -> f64 {
    let s = am.nrows();
    let mut b_tilde = bm.clone();
    for i in 0..s {
        b_tilde[(i, i)] += sol.jitter;
    }
    let a_norm = am.norm();
    let b_norm = b_tilde.norm();
    let mut worst: f64 = 0.0;
    for (c, &lam) in sol.eigenvalues.iter().enumerate() {
        let v = nalgebra::DVector::from_iterator(s, sol.eigenvectors.column(c).iter().copied());
        let r = am * &v - lam * (&b_tilde * &v);
        worst = worst.max(r.norm() / (a_norm + lam.abs() * b_norm));
    }
    worst
}

/// Drop leading near-zero eigenpairs: everything below
/// `tol_zero * max(lambda_max, 1)` where `lambda_max` is the largest
/// returned eigenvalue. With a positive regularizer the spectrum is
/// bounded away from zero and nothing is usually removed.
pub fn drop_trivial(sol: EigenSolution, tol_zero: f64) -> EigenSolution {
    let lambda_max = sol.eigenvalues.last().copied().unwrap_or(0.0);
    let cutoff = tol_zero * lambda_max.max(1.0);
    let keep_from = sol
        .eigenvalues
        .iter()
        .position(|&l| l >= cutoff)
        .unwrap_or(sol.eigenvalues.len());
    if keep_from == 0 {
        return sol;
    }
    let eigenvalues = sol.eigenvalues[keep_from..].to_vec();
    let eigenvectors = sol
        .eigenvectors
        .slice(ndarray::s![.., keep_from..])
        .to_owned();
    EigenSolution {
        eigenvalues,
        eigenvectors,
        b_norm: sol.b_norm,
        jitter: sol.jitter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(s: usize, rank: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let g = Array2::from_shape_fn((s, rank), |_| rng.gen_range(-1.0..1.0));
        g.dot(&g.t())
    }

    fn residual_ok(
        a: &Array2<f64>,
        b: &Array2<f64>,
        beta: f64,
        sol: &EigenSolution,
        tol: f64,
    ) -> bool {
        let s = a.nrows();
        let mut a_eff = a.clone();
        let mut b_eff = b.clone();
        for i in 0..s {
            a_eff[[i, i]] += beta;
            b_eff[[i, i]] += sol.jitter;
        }
        let a_norm = a_eff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let b_norm = b_eff.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (c, &lam) in sol.eigenvalues.iter().enumerate() {
            let v = sol.eigenvectors.column(c).to_owned();
            let r = a_eff.dot(&v) - lam * &b_eff.dot(&v);
            let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if rn > tol * (a_norm + lam.abs() * b_norm) {
                return false;
            }
        }
        true
    }

    #[test]
    fn identity_b_diagonal_a() {
        let a = array![[1.0, 0.0], [0.0, 2.0]];
        let b = Array2::eye(2);
        let sol = solve_gep(a.view(), b.view(), 2, 0.0).unwrap();
        assert_abs_diff_eq!(sol.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.eigenvalues[1], 2.0, epsilon = 1e-12);
        // Axis eigenvectors with positive sign convention.
        assert_abs_diff_eq!(sol.eigenvectors[[0, 0]].abs(), 1.0, epsilon = 1e-12);
        assert!(sol.eigenvectors[[0, 0]] > 0.0);
        assert!(sol.eigenvectors[[1, 1]] > 0.0);
        assert_eq!(sol.jitter, 0.0);
    }

    #[test]
    fn two_node_laplacian_pencil() {
        let a = array![[1.0, -1.0], [-1.0, 1.0]];
        let b = Array2::eye(2);
        let sol = solve_gep(a.view(), b.view(), 2, 0.0).unwrap();
        assert_abs_diff_eq!(sol.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.eigenvalues[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn beta_shifts_identity_pencil_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_psd(6, 6, &mut rng);
        let b = Array2::eye(6);
        let plain = solve_gep(a.view(), b.view(), 6, 0.0).unwrap();
        let shifted = solve_gep(a.view(), b.view(), 6, 5.0).unwrap();
        for (l0, l5) in plain.eigenvalues.iter().zip(&shifted.eigenvalues) {
            assert_abs_diff_eq!(l5 - l0, 5.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn asymmetric_input_is_shape_error() {
        let a = array![[1.0, 0.5], [0.0, 1.0]];
        let b = Array2::eye(2);
        assert!(matches!(
            solve_gep(a.view(), b.view(), 1, 0.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn residuals_and_b_orthogonality_on_random_pencils() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &s in &[5usize, 20, 60] {
            let a = random_psd(s, s, &mut rng);
            let b = random_psd(s, s, &mut rng) + Array2::<f64>::eye(s) * 0.1;
            let d = s.min(8);
            let sol = solve_gep(a.view(), b.view(), d, 0.0).unwrap();
            assert!(residual_ok(&a, &b, 0.0, &sol, 1e-8));
            // Pairwise B-orthogonality against the jittered B.
            let mut b_eff = b.clone();
            for i in 0..s {
                b_eff[[i, i]] += sol.jitter;
            }
            for i in 0..d {
                for j in 0..d {
                    let vi = sol.eigenvectors.column(i).to_owned();
                    let vj = sol.eigenvectors.column(j).to_owned();
                    let dot = vi.dot(&b_eff.dot(&vj));
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(dot, want, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn rank_deficient_b_engages_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = 12;
        let a = random_psd(s, s, &mut rng);
        let b = random_psd(s, 5, &mut rng); // rank 5 < s
        let sol = solve_gep(a.view(), b.view(), 4, 0.0).unwrap();
        assert!(sol.jitter > 0.0);
        assert!(residual_ok(&a, &b, 0.0, &sol, 1e-8));
    }

    #[test]
    fn zero_b_reports_conditioning_error_with_ladder() {
        let a = Array2::eye(3);
        let b = Array2::zeros((3, 3));
        match solve_gep(a.view(), b.view(), 1, 0.0) {
            Err(Error::Conditioning(levels)) => assert_eq!(levels.len(), JITTER_LADDER.len()),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn eigenvalues_nondecreasing_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = 10;
        let a = random_psd(s, s, &mut rng);
        let b = random_psd(s, s, &mut rng) + Array2::<f64>::eye(s);
        let mut prev: Option<Vec<f64>> = None;
        for &beta in &[0.0, 0.5, 2.0, 10.0] {
            let sol = solve_gep(a.view(), b.view(), s, beta).unwrap();
            if let Some(p) = prev {
                for (lo, hi) in p.iter().zip(&sol.eigenvalues) {
                    assert!(hi >= &(lo - 1e-10));
                }
            }
            prev = Some(sol.eigenvalues);
        }
    }

    #[test]
    fn drop_trivial_examples() {
        let sol = EigenSolution {
            eigenvalues: vec![0.0, 2.0],
            eigenvectors: array![[1.0, 0.0], [0.0, 1.0]],
            b_norm: true,
            jitter: 0.0,
        };
        let kept = drop_trivial(sol, DEFAULT_TOL_ZERO);
        assert_eq!(kept.eigenvalues, vec![2.0]);
        assert_eq!(kept.eigenvectors.ncols(), 1);

        let sol = EigenSolution {
            eigenvalues: vec![0.5, 2.0],
            eigenvectors: array![[1.0, 0.0], [0.0, 1.0]],
            b_norm: true,
            jitter: 0.0,
        };
        let kept = drop_trivial(sol, DEFAULT_TOL_ZERO);
        assert_eq!(kept.eigenvalues, vec![0.5, 2.0]);
    }

    #[test]
    fn connected_graph_pencil_drops_exactly_one_mode() {
        // 2-node path graph, direct pencil (L, D): eigenvalues 0 and 2.
        let l = array![[1.0, -1.0], [-1.0, 1.0]];
        let d = array![[1.0, 0.0], [0.0, 1.0]];
        let sol = solve_gep(l.view(), d.view(), 2, 0.0).unwrap();
        let kept = drop_trivial(sol, DEFAULT_TOL_ZERO);
        assert_eq!(kept.eigenvalues.len(), 1);
        assert_abs_diff_eq!(kept.eigenvalues[0], 2.0, epsilon = 1e-10);
        // Antisymmetric eigenvector.
        let v = kept.eigenvectors.column(0);
        assert_abs_diff_eq!(v[0] + v[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn residual_bound_up_to_s200_with_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = 200;
        let a = random_psd(s, s, &mut rng);
        let b = random_psd(s, s - 30, &mut rng);
        let sol = solve_gep(a.view(), b.view(), 20, 0.0).unwrap();
        assert!(residual_ok(&a, &b, 0.0, &sol, 1e-8));
        let evs = Array1::from_vec(sol.eigenvalues.clone());
        for w in evs.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}
