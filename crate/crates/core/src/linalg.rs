//! Dense kernels: PCA, orthogonal Procrustes with scaling, ridge regression.
//!
//! Matrices are row-per-sample (`n x d`). All fits mean-center their inputs
//! and the corresponding `apply` functions restore the target mean.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("requested {requested} components but at most {max} are available")]
    TooManyComponents { requested: usize, max: usize },
    #[error("number of components must be positive")]
    NoComponents,
    #[error("source block has zero variance; scale is undefined")]
    ZeroVariance,
    #[error("regularization must be a finite nonnegative number, got {0}")]
    BadLambda(f64),
    #[error("normal equations are singular (lambda = 0 with rank-deficient inputs)")]
    Singular,
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// `x` with `mean` subtracted from every row.
pub fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}

fn add_row(x: &mut DMatrix<f64>, v: &DVector<f64>) {
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(v[j]);
    }
}

fn check_cols(x: &DMatrix<f64>, expected: usize) -> Result<(), LinalgError> {
    if x.ncols() != expected {
        return Err(LinalgError::DimensionMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

/// Top principal directions of mean-centered data.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// `d_out x d`, orthonormal rows, ordered by decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: DVector<f64>,
    /// Set when the data has fewer than `d_out` numerically nonzero directions.
    pub rank_deficient: bool,
}

impl PcaBasis {
    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    /// Maps reduced coordinates back into the input space.
    pub fn reconstruct(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
        check_cols(z, self.output_dim())?;
        let mut out = z * &self.components;
        add_row(&mut out, &self.mean);
        Ok(out)
    }
}

pub fn pca_fit(x: &DMatrix<f64>, d_out: usize) -> Result<PcaBasis, LinalgError> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(LinalgError::TooFewRows { needed: 2, found: n });
    }
    if d_out == 0 {
        return Err(LinalgError::NoComponents);
    }
    if d_out > n.min(d) {
        return Err(LinalgError::TooManyComponents {
            requested: d_out,
            max: n.min(d),
        });
    }
    let mean = column_means(x);
    let xc = center(x, &mean);
    // singular values come back sorted in decreasing order
    let svd = xc.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;

    let components = v_t.rows(0, d_out).into_owned();
    let explained_variance =
        DVector::from_iterator(d_out, sigma.iter().take(d_out).map(|s| s * s / (n - 1) as f64));

    let tol = sigma[0] * (n.max(d) as f64) * f64::EPSILON;
    let rank_deficient = sigma[d_out - 1] <= tol;
    if rank_deficient {
        log::warn!("PCA: data has fewer than {d_out} nonzero principal directions");
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance,
        rank_deficient,
    })
}

/// `(x - mean) * components^T`
pub fn pca_project(basis: &PcaBasis, x: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_cols(x, basis.input_dim())?;
    Ok(center(x, &basis.mean) * basis.components.transpose())
}

/// Scaled orthogonal map `x -> s * (x - source_mean) * A^T + target_mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcrustesMap {
    pub scale: f64,
    pub rotation: DMatrix<f64>,
    pub source_mean: DVector<f64>,
    pub target_mean: DVector<f64>,
}

impl ProcrustesMap {
    pub fn identity(d: usize) -> Self {
        ProcrustesMap {
            scale: 1.0,
            rotation: DMatrix::identity(d, d),
            source_mean: DVector::zeros(d),
            target_mean: DVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.rotation.nrows()
    }
}

/// Minimizes `||s * Xc * A^T - Yc||_F^2` over orthogonal `A` and `s > 0`.
///
/// With `Xc^T Yc = U S V^T`, the minimizer is `A = V U^T` and
/// `s = trace(S) / ||Xc||_F^2`. Reflections are allowed.
pub fn procrustes_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesMap, LinalgError> {
    let (n, d) = x.shape();
    check_cols(y, d)?;
    if y.nrows() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: y.nrows(),
        });
    }
    if n < 2 {
        return Err(LinalgError::TooFewRows { needed: 2, found: n });
    }
    if n < d {
        log::warn!("Procrustes: {n} rows for {d} dimensions; rotation is underdetermined");
    }
    let source_mean = column_means(x);
    let target_mean = column_means(y);
    let xc = center(x, &source_mean);
    let yc = center(y, &target_mean);

    let x_norm2 = xc.norm_squared();
    if x_norm2 == 0.0 {
        return Err(LinalgError::ZeroVariance);
    }
    let cross = xc.tr_mul(&yc);
    let svd = cross.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let rotation = v_t.transpose() * u.transpose();
    let scale = svd.singular_values.sum() / x_norm2;
    if scale.is_nan() || scale <= 0.0 {
        return Err(LinalgError::ZeroVariance);
    }
    Ok(ProcrustesMap {
        scale,
        rotation,
        source_mean,
        target_mean,
    })
}

pub fn procrustes_apply(map: &ProcrustesMap, x: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_cols(x, map.dim())?;
    let mut out = center(x, &map.source_mean) * map.rotation.transpose() * map.scale;
    add_row(&mut out, &map.target_mean);
    Ok(out)
}

/// Squared Frobenius residual of `map` on the pair.
pub fn procrustes_residual(
    map: &ProcrustesMap,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<f64, LinalgError> {
    let pred = procrustes_apply(map, x)?;
    check_cols(y, pred.ncols())?;
    Ok((pred - y).norm_squared())
}

/// Multi-output ridge regression: one weight row per target dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `d_ref x d_e`
    pub weights: DMatrix<f64>,
    pub intercepts: DVector<f64>,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Solves `(Xc^T Xc + lambda I) W^T = Xc^T Yc` with a single Cholesky
/// factorization shared by all target dimensions.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel, LinalgError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LinalgError::BadLambda(lambda));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(LinalgError::TooFewRows { needed: 1, found: 0 });
    }
    if y.nrows() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: y.nrows(),
        });
    }
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let xc = center(x, &x_mean);
    let yc = center(y, &y_mean);

    let mut gram = xc.tr_mul(&xc);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let max_diag = gram.diagonal().max();
    let chol = Cholesky::new(gram).ok_or(LinalgError::Singular)?;
    if lambda == 0.0 {
        let l = chol.l_dirty();
        let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if max_diag <= 0.0 || min_pivot <= max_diag * (l.nrows() as f64) * f64::EPSILON {
            return Err(LinalgError::Singular);
        }
    }
    let rhs = xc.tr_mul(&yc);
    let weights = chol.solve(&rhs).transpose();
    let intercepts = &y_mean - &weights * &x_mean;
    Ok(RidgeModel {
        weights,
        intercepts,
        lambda,
    })
}

/// `x * weights^T + intercepts`, broadcast per row.
pub fn ridge_apply(model: &RidgeModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_cols(x, model.input_dim())?;
    let mut out = x * model.weights.transpose();
    add_row(&mut out, &model.intercepts);
    Ok(out)
}

/// Penalized objective `||Xc W^T - Yc||^2 + lambda ||W||^2` on centered data.
pub fn ridge_objective(x: &DMatrix<f64>, y: &DMatrix<f64>, weights: &DMatrix<f64>, lambda: f64) -> f64 {
    let xc = center(x, &column_means(x));
    let yc = center(y, &column_means(y));
    (xc * weights.transpose() - yc).norm_squared() + lambda * weights.norm_squared()
}
