//! Model fitting and the explicit out-of-sample transform.
//!
//! A fitted model is a coefficient matrix `alpha` over an expanded feature
//! map: per-feature orthonormal Legendre polynomials for the nonlinear
//! model, or standardized raw features for the linear baseline. Fitting
//! builds the supervised affinity graph on the training samples, forms the
//! pencil `A = Phi L Phi'`, `B = Phi_c D Phi_c'` (with `Phi_c` the
//! sample-mean-centered expansion), and keeps the eigenvectors of the
//! regularized pencil attached to the smallest nontrivial eigenvalues.
//!
//! `B` is computed from centered features. Centering changes nothing on
//! the `A` side (the Laplacian annihilates constant shifts) and pins the
//! normalization to the variance rather than the second moment, which
//! makes the degree-1 model agree with locality preserving projections up
//! to a diagonal reparameterization. Embedding coordinates are defined up
//! to a per-dimension constant offset either way; the transform applies
//! the uncentered map.

use ndarray::{Array2, ArrayView2, Axis};

use crate::basis::BasisSpec;
use crate::eigensolve::{drop_trivial, solve_gep, EigenSolution, DEFAULT_TOL_ZERO};
use crate::error::{Error, Result};
use crate::graph::{build_supervised_affinity, laplacian, AffinityGraph, Standardizer};

/// Which feature map a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Additive orthonormal Legendre expansion (nonlinear).
    Hdmr,
    /// Linear map on standardized features.
    Lpp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Hdmr => "hdmr",
            ModelKind::Lpp => "lpp",
        }
    }
}

/// Fit hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmrParams {
    /// Polynomial order of the per-feature expansion.
    pub p: usize,
    /// Ridge weight on the coefficient vector.
    pub beta: f64,
    /// Same-class neighborhood size for the affinity graph.
    pub k: usize,
    /// Target embedding dimension.
    pub d: usize,
    /// Fractional padding of fitted feature ranges.
    pub margin: f64,
}

impl Default for HdmrParams {
    fn default() -> Self {
        Self {
            p: 4,
            beta: 100.0,
            k: 5,
            d: 2,
            margin: 0.05,
        }
    }
}

impl HdmrParams {
    fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Parameter(
                "polynomial order must be at least 1".into(),
            ));
        }
        if self.d < 1 {
            return Err(Error::Parameter(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "beta must be finite and nonnegative, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// A fitted embedding: coefficients, spectrum, and the feature map needed
/// to project new samples.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    /// Coefficients; shape `(n*p) x d` for the nonlinear map, `n x d` for
    /// the linear one. Columns pair with ascending nontrivial eigenvalues.
    pub alpha: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// Feature map of the nonlinear model.
    pub basis: Option<BasisSpec>,
    /// Standardization frozen at fit time (linear model).
    pub standardizer: Option<Standardizer>,
    pub d: usize,
}

impl EmbeddingModel {
    /// Number of raw input features the model expects.
    pub fn n_features(&self) -> usize {
        match self.kind {
            ModelKind::Hdmr => self
                .basis
                .as_ref()
                .expect("hdmr model has basis")
                .n_features(),
            ModelKind::Lpp => self
                .standardizer
                .as_ref()
                .expect("lpp model has standardizer")
                .mean
                .len(),
        }
    }

    /// Project samples (rows) into the embedding space; returns `t x d`.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.transform_tallied(x)?.0)
    }

    /// As [`transform`](Self::transform), also returning how many feature
    /// entries fell outside the fitted ranges (always 0 for the linear
    /// model).
    pub fn transform_tallied(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, usize)> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        match self.kind {
            ModelKind::Hdmr => {
                let expanded = self
                    .basis
                    .as_ref()
                    .expect("hdmr model has basis")
                    .expand(x)?;
                Ok((expanded.phi.t().dot(&self.alpha), expanded.out_of_range))
            }
            ModelKind::Lpp => {
                let z = self
                    .standardizer
                    .as_ref()
                    .expect("lpp model has standardizer")
                    .apply(x)?;
                Ok((z.dot(&self.alpha), 0))
            }
        }
    }
}

/// Mean-center each row of an expanded feature matrix over its columns
/// (samples).
pub fn center_features(phi: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = phi.ncols() as f64;
    let means = phi.sum_axis(Axis(1)) / m;
    let mut out = phi.to_owned();
    for (mut row, &mu) in out.axis_iter_mut(Axis(0)).zip(means.iter()) {
        row.mapv_inplace(|v| v - mu);
    }
    out
}

/// `Phi L Phi'` without materializing the dense Laplacian: the degree part
/// scales columns, the adjacency part accumulates neighbor columns.
pub fn laplacian_quadratic(phi: ArrayView2<'_, f64>, graph: &AffinityGraph) -> Array2<f64> {
    let m = graph.len();
    assert_eq!(
        phi.ncols(),
        m,
        "expansion has {} columns for {m} vertices",
        phi.ncols()
    );
    let degrees = graph.degrees();

    let mut phi_deg = phi.to_owned();
    for (mut col, &deg) in phi_deg.axis_iter_mut(Axis(1)).zip(degrees.iter()) {
        col.mapv_inplace(|v| v * deg);
    }
    let a_deg = phi_deg.dot(&phi.t());

    let mut phi_w = Array2::zeros(phi.raw_dim());
    for j in 0..m {
        for &i in graph.neighbors(j) {
            let src = phi.column(i);
            let mut dst = phi_w.column_mut(j);
            dst += &src;
        }
    }
    let a_w = phi_w.dot(&phi.t());

    symmetrized(a_deg - a_w)
}

/// `Phi D Phi'` with the graph's degree diagonal.
pub fn degree_quadratic(phi: ArrayView2<'_, f64>, graph: &AffinityGraph) -> Array2<f64> {
    let m = graph.len();
    assert_eq!(
        phi.ncols(),
        m,
        "expansion has {} columns for {m} vertices",
        phi.ncols()
    );
    let degrees = graph.degrees();
    let mut phi_deg = phi.to_owned();
    for (mut col, &deg) in phi_deg.axis_iter_mut(Axis(1)).zip(degrees.iter()) {
        col.mapv_inplace(|v| v * deg);
    }
    symmetrized(phi_deg.dot(&phi.t()))
}

fn symmetrized(mut a: Array2<f64>) -> Array2<f64> {
    let s = a.nrows();
    for i in 0..s {
        for j in (i + 1)..s {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

fn count_classes(labels: &[usize]) -> usize {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

/// Solve the pencil for `d` target dimensions, oversolving by the number
/// of classes so that trivial modes removed afterwards do not starve the
/// request.
fn solve_embedding(
    a: &Array2<f64>,
    b: &Array2<f64>,
    d: usize,
    beta: f64,
    n_classes: usize,
    clamp: bool,
) -> Result<(EigenSolution, usize)> {
    let s = a.nrows();
    let d_solve = (d + n_classes).min(s);
    let sol = solve_gep(a.view(), b.view(), d_solve, beta)?;
    let sol = drop_trivial(sol, DEFAULT_TOL_ZERO);
    let available = sol.len();
    if available == 0 {
        return Err(Error::Parameter(
            "no nontrivial eigenmodes available".into(),
        ));
    }
    if available < d && !clamp {
        return Err(Error::Parameter(format!(
            "requested {d} embedding dimensions but only {available} nontrivial modes are available"
        )));
    }
    Ok((sol, available.min(d)))
}

fn finish_model(
    sol: EigenSolution,
    d_used: usize,
    kind: ModelKind,
    basis: Option<BasisSpec>,
    standardizer: Option<Standardizer>,
) -> EmbeddingModel {
    let alpha = sol.eigenvectors.slice(ndarray::s![.., ..d_used]).to_owned();
    let eigenvalues = sol.eigenvalues[..d_used].to_vec();
    EmbeddingModel {
        kind,
        alpha,
        eigenvalues,
        basis,
        standardizer,
        d: d_used,
    }
}

fn fit_hdmr_impl(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
    clamp: bool,
) -> Result<EmbeddingModel> {
    params.validate()?;
    let basis = BasisSpec::fit(x, params.p, params.margin)?;
    let expanded = basis.expand(x)?;
    let graph = build_supervised_affinity(x, labels, params.k)?;
    let a = laplacian_quadratic(expanded.phi.view(), &graph);
    let phi_c = center_features(expanded.phi.view());
    let b = degree_quadratic(phi_c.view(), &graph);
    let (sol, d_used) =
        solve_embedding(&a, &b, params.d, params.beta, count_classes(labels), clamp)?;
    Ok(finish_model(
        sol,
        d_used,
        ModelKind::Hdmr,
        Some(basis),
        None,
    ))
}

/// Fit the nonlinear embedding model.
pub fn fit_hdmr(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
) -> Result<EmbeddingModel> {
    fit_hdmr_impl(x, labels, params, false)
}

/// Like [`fit_hdmr`] but clamps the requested dimension to the number of
/// available nontrivial modes instead of erroring.
pub(crate) fn fit_hdmr_at_most(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
) -> Result<EmbeddingModel> {
    fit_hdmr_impl(x, labels, params, true)
}

fn fit_lpp_impl(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
    clamp: bool,
) -> Result<EmbeddingModel> {
    params.validate()?;
    let standardizer = Standardizer::fit(x);
    let z = standardizer.apply(x)?; // m x n
    let z_t = z.t().to_owned(); // feature-major, matching the expansion layout
    let graph = build_supervised_affinity(x, labels, params.k)?;
    let a = laplacian_quadratic(z_t.view(), &graph);
    let z_c = center_features(z_t.view());
    let b = degree_quadratic(z_c.view(), &graph);
    let (sol, d_used) =
        solve_embedding(&a, &b, params.d, params.beta, count_classes(labels), clamp)?;
    Ok(finish_model(
        sol,
        d_used,
        ModelKind::Lpp,
        None,
        Some(standardizer),
    ))
}

/// Fit the linear baseline (locality preserving projections) on
/// standardized features; the polynomial order in `params` is ignored.
pub fn fit_lpp(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
) -> Result<EmbeddingModel> {
    fit_lpp_impl(x, labels, params, false)
}

pub(crate) fn fit_lpp_at_most(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    params: &HdmrParams,
) -> Result<EmbeddingModel> {
    fit_lpp_impl(x, labels, params, true)
}

/// Direct spectral embedding of the training graph: eigenvectors of
/// `L y = lambda D y` for the `d` smallest nontrivial eigenvalues. Defined
/// on training vertices only; there is no out-of-sample map.
pub fn direct_embed(graph: &AffinityGraph, d: usize) -> Result<Array2<f64>> {
    if graph.is_empty() {
        return Err(Error::Data("cannot embed an empty graph".into()));
    }
    let m = graph.len();
    let pair = laplacian(graph);
    let mut d_mat = Array2::zeros((m, m));
    for i in 0..m {
        d_mat[[i, i]] = pair.d[i];
    }
    // One zero mode per connected component; oversolve by that count.
    let d_solve = (d + graph.n_components()).min(m);
    let sol = solve_gep(pair.l.view(), d_mat.view(), d_solve, 0.0)?;
    let sol = drop_trivial(sol, DEFAULT_TOL_ZERO);
    if sol.len() < d {
        return Err(Error::Parameter(format!(
            "requested {d} embedding dimensions but only {} nontrivial modes are available",
            sol.len()
        )));
    }
    Ok(sol.eigenvectors.slice(ndarray::s![.., ..d]).to_owned())
}

/// Clamping variant of [`direct_embed`]: returns however many nontrivial
/// modes exist, capped at `d`.
pub(crate) fn direct_embed_at_most(graph: &AffinityGraph, d: usize) -> Result<Array2<f64>> {
    if graph.is_empty() {
        return Err(Error::Data("cannot embed an empty graph".into()));
    }
    let m = graph.len();
    let pair = laplacian(graph);
    let mut d_mat = Array2::zeros((m, m));
    for i in 0..m {
        d_mat[[i, i]] = pair.d[i];
    }
    let d_solve = (d + graph.n_components()).min(m);
    let sol = solve_gep(pair.l.view(), d_mat.view(), d_solve, 0.0)?;
    let sol = drop_trivial(sol, DEFAULT_TOL_ZERO);
    if sol.is_empty() {
        return Err(Error::Parameter(
            "no nontrivial eigenmodes available".into(),
        ));
    }
    let keep = sol.len().min(d);
    Ok(sol.eigenvectors.slice(ndarray::s![.., ..keep]).to_owned())
}

/// Per-dimension graph objective `J_c = sum_ij W_ij (Y_ic - Y_jc)^2` over
/// ordered pairs (each undirected edge counts twice).
pub fn objective(y: ArrayView2<'_, f64>, graph: &AffinityGraph) -> Result<Vec<f64>> {
    if y.nrows() != graph.len() {
        return Err(Error::Shape(format!(
            "{} embedding rows for {} graph vertices",
            y.nrows(),
            graph.len()
        )));
    }
    let d = y.ncols();
    let mut out = vec![0.0; d];
    for i in 0..graph.len() {
        for &j in graph.neighbors(i) {
            if j > i {
                continue; // visit each undirected edge once, then double
            }
            for c in 0..d {
                let diff = y[[i, c]] - y[[j, c]];
                out[c] += 2.0 * diff * diff;
            }
        }
    }
    Ok(out)
}

/// Principal angles (radians, ascending) between the column spans of two
/// matrices with the same number of rows.
pub fn principal_angles(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "row mismatch: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let cross = qa.transpose() * qb;
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

fn orthonormal_basis(a: ArrayView2<'_, f64>) -> nalgebra::DMatrix<f64> {
    let m = nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]);
    let qr = m.qr();
    qr.q()
}
