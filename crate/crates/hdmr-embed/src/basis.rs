//! Orthonormal shifted/scaled Legendre feature maps.
//!
//! Each input feature `x_j` with a working interval `[a_j, b_j]` is mapped
//! through the rescaling `y(x) = 2 (x - b_j) / (b_j - a_j) + 1`, which sends
//! `[a_j, b_j]` onto `[-1, 1]`, and then through the Legendre polynomials
//! `P_1 .. P_p` with normalization weights `w_q = ((2q + 1) / (b_j - a_j))^{1/2}`.
//! The resulting family `phi_q(x) = w_q P_q(y(x))` is orthonormal in
//! `L^2([a_j, b_j])`. Degree 0 is deliberately absent: a constant basis
//! function only shifts embedding coordinates, which downstream consumers
//! (nearest-neighbor classification, clustering) ignore, and excluding it
//! keeps the degree-weighted Gram matrix better conditioned.
//!
//! Inputs outside the working interval are evaluated as-is (polynomial
//! extrapolation, no clamping); [`BasisSpec::expand`] tallies how many
//! entries fell out of range so callers can surface the count as a
//! diagnostic.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Highest supported polynomial degree for the three-term recurrence.
pub const MAX_DEGREE: usize = 32;

/// Evaluate the classical Legendre polynomial `P_degree(t)` by the Bonnet
/// three-term recurrence. Exact for degrees 0 and 1.
pub fn legendre_eval(degree: usize, t: f64) -> Result<f64> {
    if degree > MAX_DEGREE {
        return Err(Error::Config(format!(
            "polynomial degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    Ok(legendre_rec(degree, t))
}

#[inline]
fn legendre_rec(degree: usize, t: f64) -> f64 {
    match degree {
        0 => 1.0,
        1 => t,
        _ => {
            let mut prev = 1.0;
            let mut cur = t;
            for q in 1..degree {
                let next = ((2 * q + 1) as f64 * t * cur - q as f64 * prev) / (q + 1) as f64;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Per-feature working intervals plus the polynomial order of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    p: usize,
    ranges: Vec<(f64, f64)>,
    margin: f64,
}

/// Expanded feature matrix: column `i` holds the concatenation over
/// features `j` of `[phi_1(x_ij), .., phi_p(x_ij)]`, so the shape is
/// `(n * p) x m`.
#[derive(Debug, Clone)]
pub struct ExpandedFeatures {
    pub phi: Array2<f64>,
    /// Number of (sample, feature) entries outside their working interval.
    pub out_of_range: usize,
}

/// Compute per-feature working intervals from data, padded by
/// `margin * (max - min)` on each side. A constant feature gets the
/// degenerate interval `(min - 1, min + 1)`.
pub fn fit_ranges(x: ArrayView2<'_, f64>, margin: f64) -> Result<Vec<(f64, f64)>> {
    if x.nrows() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 samples to fit feature ranges, got {}",
            x.nrows()
        )));
    }
    if !(0.0..).contains(&margin) || !margin.is_finite() {
        return Err(Error::Parameter(format!(
            "range margin must be a nonnegative finite number, got {margin}"
        )));
    }
    let mut ranges = Vec::with_capacity(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in col.iter() {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value {v} in feature column {j}"
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        if span == 0.0 {
            ranges.push((lo - 1.0, lo + 1.0));
        } else {
            ranges.push((lo - margin * span, hi + margin * span));
        }
    }
    Ok(ranges)
}

impl BasisSpec {
    /// Build a spec from explicit intervals; validates `p` and every range.
    pub fn new(p: usize, ranges: Vec<(f64, f64)>, margin: f64) -> Result<Self> {
        if p < 1 {
            return Err(Error::Config("polynomial order must be at least 1".into()));
        }
        if p > MAX_DEGREE {
            return Err(Error::Config(format!(
                "polynomial order {p} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        if ranges.is_empty() {
            return Err(Error::Config(
                "basis needs at least one feature range".into(),
            ));
        }
        for (j, &(a, b)) in ranges.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!(
                    "invalid interval ({a}, {b}) for feature {j}: need finite a < b"
                )));
            }
        }
        Ok(Self { p, ranges, margin })
    }

    /// Fit working intervals from training data and build the spec.
    pub fn fit(x: ArrayView2<'_, f64>, p: usize, margin: f64) -> Result<Self> {
        Self::new(p, fit_ranges(x, margin)?, margin)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_features(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Dimension of the expanded feature vector, `n * p`.
    pub fn output_dim(&self) -> usize {
        self.ranges.len() * self.p
    }

    /// Map a single sample to its expanded feature vector.
    pub fn phi_point(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.output_dim());
        self.phi_into(x, out.as_slice_mut().expect("contiguous"))?;
        Ok(out)
    }

    /// Expand a sample matrix (rows are samples) into the `(n*p) x m`
    /// feature matrix, tallying out-of-range entries.
    pub fn expand(&self, x: ArrayView2<'_, f64>) -> Result<ExpandedFeatures> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let m = x.nrows();
        let mut phi = Array2::zeros((self.output_dim(), m));
        let counts: Vec<usize> = phi
            .axis_iter_mut(Axis(1))
            .into_par_iter()
            .enumerate()
            .map(|(i, mut col)| {
                let mut tally = 0usize;
                let row = x.row(i);
                for (j, &(a, b)) in self.ranges.iter().enumerate() {
                    let v = row[j];
                    tally += self.feature_block(j, v, a, b, |q, val| col[j * self.p + q] = val);
                }
                tally
            })
            .collect();
        Ok(ExpandedFeatures {
            phi,
            out_of_range: counts.into_iter().sum(),
        })
    }

    fn phi_into(&self, x: ArrayView1<'_, f64>, out: &mut [f64]) -> Result<usize> {
        if x.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        let mut tally = 0usize;
        for (j, &(a, b)) in self.ranges.iter().enumerate() {
            let v = x[j];
            tally += self.feature_block(j, v, a, b, |q, val| out[j * self.p + q] = val);
        }
        Ok(tally)
    }

    /// Evaluate the `p` basis values of one feature, writing through `sink`
    /// and returning 1 if the input fell outside its interval.
    #[inline]
    fn feature_block(
        &self,
        _j: usize,
        v: f64,
        a: f64,
        b: f64,
        mut sink: impl FnMut(usize, f64),
    ) -> usize {
        let span = b - a;
        let y = 2.0 * (v - b) / span + 1.0;
        // Running recurrence shared across degrees of this feature.
        let mut prev = 1.0;
        let mut cur = y;
        for q in 1..=self.p {
            let w = ((2 * q + 1) as f64 / span).sqrt();
            sink(q - 1, w * cur);
            let next = ((2 * q + 1) as f64 * y * cur - q as f64 * prev) / (q + 1) as f64;
            prev = cur;
            cur = next;
        }
        usize::from(v < a || v > b)
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on `P_n` from the usual Chebyshev-based
/// initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre_pair(n, t);
            let dp = n as f64 * (t * p.0 - p.1) / (t * t - 1.0);
            let step = p.0 / dp;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (pn, pn1) = legendre_pair(n, t);
        let dp = n as f64 * (t * pn - pn1) / (t * t - 1.0);
        nodes[n - 1 - i] = t;
        weights[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (nodes, weights)
}

/// Returns `(P_n(t), P_{n-1}(t))`.
fn legendre_pair(n: usize, t: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for q in 1..n {
        let next = ((2 * q + 1) as f64 * t * cur - q as f64 * prev) / (q + 1) as f64;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn legendre_low_degrees() {
        assert_abs_diff_eq!(legendre_eval(0, 0.73).unwrap(), 1.0);
        assert_abs_diff_eq!(legendre_eval(1, 0.30).unwrap(), 0.30);
        // Closed form (3t^2 - 1)/2 as an independent check.
        assert_abs_diff_eq!(legendre_eval(2, 0.50).unwrap(), -0.125, epsilon = 1e-15);
    }

    #[test]
    fn legendre_degree_above_max_is_config_error() {
        assert!(matches!(
            legendre_eval(MAX_DEGREE + 1, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn recurrence_matches_closed_forms_on_grid() {
        // P_2 and P_3 against their closed forms across [-1, 1].
        for i in 0..=200 {
            let t = -1.0 + 2.0 * i as f64 / 200.0;
            let p2 = (3.0 * t * t - 1.0) / 2.0;
            let p3 = (5.0 * t * t * t - 3.0 * t) / 2.0;
            assert_abs_diff_eq!(legendre_rec(2, t), p2, epsilon = 1e-14);
            assert_abs_diff_eq!(legendre_rec(3, t), p3, epsilon = 1e-14);
        }
    }

    #[test]
    fn fit_ranges_examples() {
        let x = array![[0.0], [1.0]];
        assert_eq!(fit_ranges(x.view(), 0.0).unwrap(), vec![(0.0, 1.0)]);
        let r = fit_ranges(x.view(), 0.05).unwrap();
        assert_abs_diff_eq!(r[0].0, -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0].1, 1.05, epsilon = 1e-15);
        let xc = array![[3.0], [3.0], [3.0]];
        assert_eq!(fit_ranges(xc.view(), 0.05).unwrap(), vec![(2.0, 4.0)]);
    }

    #[test]
    fn fit_ranges_rejects_non_finite() {
        let x = array![[0.0], [f64::NAN]];
        assert!(matches!(fit_ranges(x.view(), 0.0), Err(Error::Data(_))));
    }

    #[test]
    fn phi_point_examples() {
        let spec = BasisSpec::new(1, vec![(-1.0, 1.0)], 0.0).unwrap();
        let v = spec.phi_point(array![0.5].view()).unwrap();
        assert_abs_diff_eq!(v[0], (1.5f64).sqrt() * 0.5, epsilon = 1e-15);

        // Upper endpoint maps to y = 1 where every P_q equals 1, so the
        // entry reduces to the normalization weight.
        let spec = BasisSpec::new(3, vec![(-1.0, 1.0)], 0.0).unwrap();
        let v = spec.phi_point(array![1.0].view()).unwrap();
        for q in 1..=3usize {
            let w = ((2 * q + 1) as f64 / 2.0).sqrt();
            assert_abs_diff_eq!(v[q - 1], w, epsilon = 1e-14);
        }

        // Interval midpoint maps to y = 0 and P_1(0) = 0.
        let spec = BasisSpec::new(1, vec![(0.0, 2.0)], 0.0).unwrap();
        let v = spec.phi_point(array![1.0].view()).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn phi_point_shape_mismatch() {
        let spec = BasisSpec::new(1, vec![(-1.0, 1.0)], 0.0).unwrap();
        assert!(matches!(
            spec.phi_point(array![0.5, 0.2].view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn expand_matches_scalar_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-2.0..2.0));
        let spec = BasisSpec::fit(x.view(), 2, 0.05).unwrap();
        let expanded = spec.expand(x.view()).unwrap();
        assert_eq!(expanded.phi.dim(), (6, 5));
        assert_eq!(expanded.out_of_range, 0);
        // Naive per-entry recomputation.
        for i in 0..5 {
            for j in 0..3 {
                let (a, b) = spec.ranges()[j];
                let y = 2.0 * (x[[i, j]] - b) / (b - a) + 1.0;
                for q in 1..=2usize {
                    let w = ((2 * q + 1) as f64 / (b - a)).sqrt();
                    let want = w * legendre_rec(q, y);
                    assert_abs_diff_eq!(expanded.phi[[j * 2 + q - 1, i]], want, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn expand_single_row_equals_phi_point_and_duplicates_match() {
        let x = array![[0.3, -0.7], [0.3, -0.7]];
        let spec = BasisSpec::new(2, vec![(-1.0, 1.0), (-1.0, 1.0)], 0.0).unwrap();
        let expanded = spec.expand(x.view()).unwrap();
        let point = spec.phi_point(x.row(0)).unwrap();
        for r in 0..4 {
            assert_eq!(expanded.phi[[r, 0]], point[r]);
            assert_eq!(expanded.phi[[r, 0]], expanded.phi[[r, 1]]);
        }
    }

    #[test]
    fn out_of_range_entries_are_tallied_not_clamped() {
        let spec = BasisSpec::new(2, vec![(0.0, 1.0)], 0.0).unwrap();
        let expanded = spec.expand(array![[0.5], [1.5]].view()).unwrap();
        assert_eq!(expanded.out_of_range, 1);
        // y(1.5) = 2 on (0,1): P_1 entry must extrapolate to w * 2.
        let w = (3.0f64).sqrt();
        assert_abs_diff_eq!(expanded.phi[[0, 1]], w * 2.0, epsilon = 1e-14);
    }

    /// Quadrature estimate of `\int_a^b phi_q phi_r dx` for q, r in 1..=p.
    fn gram_matrix(a: f64, b: f64, p: usize) -> Array2<f64> {
        let (nodes, weights) = gauss_legendre(64);
        let spec = BasisSpec::new(p, vec![(a, b)], 0.0).unwrap();
        let mut gram = Array2::zeros((p, p));
        for (&t, &w) in nodes.iter().zip(&weights) {
            // Map the reference node onto [a, b].
            let x = a + (b - a) * (t + 1.0) / 2.0;
            let phi = spec.phi_point(array![x].view()).unwrap();
            for q in 0..p {
                for r in 0..p {
                    gram[[q, r]] += w * (b - a) / 2.0 * phi[q] * phi[r];
                }
            }
        }
        gram
    }

    #[test]
    fn orthonormal_on_random_intervals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = rng.gen_range(-5.0..4.0);
            let b = a + rng.gen_range(0.1..8.0);
            let p = rng.gen_range(1..=10usize);
            let gram = gram_matrix(a, b, p);
            for q in 0..p {
                for r in 0..p {
                    let want = if q == r { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(gram[[q, r]], want, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // A 5-point rule is exact through degree 9.
        let (nodes, weights) = gauss_legendre(5);
        let integral: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * (t.powi(8) + 3.0 * t.powi(2)))
            .sum();
        // exact: 2/9 + 3 * 2/3 = 2/9 + 2
        assert_abs_diff_eq!(integral, 2.0 / 9.0 + 2.0, epsilon = 1e-13);
    }

    proptest! {
        /// Affinely remapping a feature and refitting ranges rescales every
        /// basis value by ((b - a)/(b' - a'))^{1/2}.
        #[test]
        fn scale_covariance(shift in -10.0f64..10.0, scale in 0.1f64..10.0, t in 0.0f64..1.0) {
            let x = array![[0.0], [1.0], [0.4], [0.9]];
            let x2 = x.mapv(|v| v * scale + shift);
            let spec1 = BasisSpec::fit(x.view(), 4, 0.05).unwrap();
            let spec2 = BasisSpec::fit(x2.view(), 4, 0.05).unwrap();
            let probe = array![t];
            let probe2 = array![t * scale + shift];
            let v1 = spec1.phi_point(probe.view()).unwrap();
            let v2 = spec2.phi_point(probe2.view()).unwrap();
            let (a1, b1) = spec1.ranges()[0];
            let (a2, b2) = spec2.ranges()[0];
            let factor = ((b1 - a1) / (b2 - a2)).sqrt();
            for q in 0..4 {
                prop_assert!((v2[q] - v1[q] * factor).abs() < 1e-9 * (1.0 + v1[q].abs()));
            }
        }
    }
}
