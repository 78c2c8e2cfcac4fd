//! Stochastic objectives shared by every worker.
//!
//! All workers hold the same [`ObjectiveSpec`] and draw samples from the same
//! distribution, so the local objectives are homogeneous by construction.

pub mod dataset;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::rng::{stream, stream_rng};

/// Relative tolerance and iteration cap for the power iteration behind `L`.
const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITER: usize = 10_000;

/// Stopping threshold for the full-batch solve that locates the logistic minimizer.
const MINIMIZER_GRAD_TOL: f64 = 1e-10;
const MINIMIZER_MAX_ITER: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: objective has d={expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered while evaluating {what}")]
    NonFinite { what: &'static str },
    #[error("invalid objective: {0}")]
    Invalid(String),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("full-batch descent stalled at gradient norm {grad_norm:e} after {iters} iterations")]
    MinimizerNotFound { grad_norm: f64, iters: usize },
}

/// A model parameter vector. Never holds NaN or infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ObjectiveError> {
        if values.is_empty() {
            return Err(ObjectiveError::Invalid("parameter vector must have d >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite { what: "parameter vector" });
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }

    pub fn norm_sq(&self) -> f64 {
        linalg::norm_sq(&self.0)
    }

    /// `self - step * direction`, rejecting non-finite results.
    pub fn descend(&self, step: f64, direction: &[f64]) -> Result<Self, ObjectiveError> {
        let mut next = self.0.clone();
        linalg::axpy(-step, direction, &mut next);
        Self::new(next)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `f(x) = ½ (x−b)ᵀ A (x−b)` with additive isotropic Gaussian gradient noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: DenseMatrix,
    b: Vec<f64>,
    noise_sigma: f64,
}

impl Quadratic {
    /// `a` must be symmetric (entrywise within 1e-12) and positive semidefinite;
    /// only symmetry is checked.
    pub fn new(a: DenseMatrix, b: Vec<f64>, noise_sigma: f64) -> Result<Self, ObjectiveError> {
        if a.rows() != a.cols() || a.rows() != b.len() || b.is_empty() {
            return Err(ObjectiveError::Invalid(format!(
                "quadratic needs a square d x d matrix and a length-d offset, got {}x{} and {}",
                a.rows(),
                a.cols(),
                b.len()
            )));
        }
        if !a.is_symmetric(1e-12) {
            return Err(ObjectiveError::Invalid("quadratic matrix is not symmetric".into()));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(ObjectiveError::Invalid(format!("noise_sigma must be >= 0, got {noise_sigma}")));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite { what: "quadratic offset" });
        }
        Ok(Self { a, b, noise_sigma })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn offset(&self) -> &[f64] {
        &self.b
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
}

/// Ridge-regularized mean cross-entropy over a fixed design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    features: DenseMatrix,
    labels: Vec<f64>,
    ridge: f64,
}

impl Logistic {
    pub fn new(features: DenseMatrix, labels: Vec<f64>, ridge: f64) -> Result<Self, ObjectiveError> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(ObjectiveError::Invalid("logistic needs m >= 1 rows and d >= 1 columns".into()));
        }
        if labels.len() != features.rows() {
            return Err(ObjectiveError::Invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(ObjectiveError::Invalid("labels must be 0 or 1".into()));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(ObjectiveError::Invalid(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(Self { features, labels, ridge })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    /// Cross-entropy of one row plus the ridge term.
    pub fn row_loss(&self, row: usize, x: &[f64]) -> f64 {
        let z = linalg::dot(self.features.row(row), x);
        softplus(z) - self.labels[row] * z + 0.5 * self.ridge * linalg::norm_sq(x)
    }

    /// Gradient of [`Logistic::row_loss`].
    pub fn row_gradient(&self, row: usize, x: &[f64]) -> Vec<f64> {
        let r = self.features.row(row);
        let residual = sigmoid(linalg::dot(r, x)) - self.labels[row];
        r.iter().zip(x).map(|(ri, xi)| residual * ri + self.ridge * xi).collect()
    }

    fn max_row_norm(&self) -> f64 {
        (0..self.rows())
            .map(|r| linalg::norm(self.features.row(r)))
            .fold(0.0, f64::max)
    }

    fn mean_row_norm_sq(&self) -> f64 {
        (0..self.rows()).map(|r| linalg::norm_sq(self.features.row(r))).sum::<f64>() / self.rows() as f64
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Quadratic(Quadratic),
    Logistic(Logistic),
}

/// Constants entering the stepsize rules and rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessConstants {
    /// Lipschitz constant of the gradient, floored at 1.
    pub l: f64,
    /// Bound on the standard deviation of a stochastic gradient.
    pub sigma: f64,
    /// Gradient-norm bound inside the caller's trust ball, if one was requested.
    pub q: Option<f64>,
}

impl ObjectiveSpec {
    pub fn dim(&self) -> usize {
        match self {
            ObjectiveSpec::Quadratic(q) => q.b.len(),
            ObjectiveSpec::Logistic(l) => l.features.cols(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ObjectiveSpec::Quadratic(_) => "quadratic",
            ObjectiveSpec::Logistic(_) => "logistic",
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ObjectiveError> {
        if x.len() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn loss(&self, x: &ParamVector) -> Result<f64, ObjectiveError> {
        let x = x.as_slice();
        self.check_dim(x)?;
        let value = match self {
            ObjectiveSpec::Quadratic(q) => {
                let diff = linalg::sub(x, &q.b);
                0.5 * linalg::dot(&diff, &q.a.mul_vec(&diff))
            }
            ObjectiveSpec::Logistic(l) => {
                let m = l.rows();
                let ce: f64 = (0..m)
                    .map(|r| {
                        let z = linalg::dot(l.features.row(r), x);
                        softplus(z) - l.labels[r] * z
                    })
                    .sum();
                ce / m as f64 + 0.5 * l.ridge * linalg::norm_sq(x)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ObjectiveError::NonFinite { what: "loss" })
        }
    }

    /// Exact full-batch gradient `∇f(x)`.
    pub fn full_gradient(&self, x: &ParamVector) -> Result<Vec<f64>, ObjectiveError> {
        let x = x.as_slice();
        self.check_dim(x)?;
        let g = match self {
            ObjectiveSpec::Quadratic(q) => q.a.mul_vec(&linalg::sub(x, &q.b)),
            ObjectiveSpec::Logistic(l) => {
                let m = l.rows() as f64;
                let mut g: Vec<f64> = x.iter().map(|xi| l.ridge * xi).collect();
                for r in 0..l.rows() {
                    let row = l.features.row(r);
                    let residual = sigmoid(linalg::dot(row, x)) - l.labels[r];
                    linalg::axpy(residual / m, row, &mut g);
                }
                g
            }
        };
        finite_or(g, "gradient")
    }

    /// One stochastic gradient `∇F(x, ξ)`, with `ξ` drawn deterministically from `seed`.
    ///
    /// Quadratic: `A(x−b) + z` with `z ~ N(0, (σ²/d) I)`, so `E‖z‖² = σ²`.
    /// Logistic: the gradient of one uniformly drawn row, plus the ridge term.
    pub fn stochastic_gradient(&self, x: &ParamVector, seed: u64) -> Result<Vec<f64>, ObjectiveError> {
        self.check_dim(x.as_slice())?;
        match self {
            ObjectiveSpec::Quadratic(q) => {
                let mut g = self.full_gradient(x)?;
                if q.noise_sigma > 0.0 {
                    let std = q.noise_sigma / (g.len() as f64).sqrt();
                    let mut rng = stream_rng(seed, &[]);
                    for gi in g.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *gi += std * z;
                    }
                }
                finite_or(g, "stochastic gradient")
            }
            ObjectiveSpec::Logistic(l) => {
                let row = self.sample_row(seed).expect("logistic has rows");
                finite_or(l.row_gradient(row, x.as_slice()), "stochastic gradient")
            }
        }
    }

    /// Row index a logistic stochastic gradient with this seed uses.
    pub fn sample_row(&self, seed: u64) -> Option<usize> {
        match self {
            ObjectiveSpec::Quadratic(_) => None,
            ObjectiveSpec::Logistic(l) => {
                let mut rng = stream_rng(seed, &[]);
                Some(rng.random_range(0..l.rows()))
            }
        }
    }

    /// Largest curvature of `f`, floored at 1.
    pub fn lipschitz_constant(&self) -> Result<f64, ObjectiveError> {
        Ok(self.raw_curvature()?.max(1.0))
    }

    /// Curvature bound before the floor at 1: `λ_max(A)` or `λ_max(XᵀX)/(4m) + λ`.
    pub fn raw_curvature(&self) -> Result<f64, ObjectiveError> {
        match self {
            ObjectiveSpec::Quadratic(q) => Ok(q.a.largest_eigenvalue(POWER_TOL, POWER_MAX_ITER)?),
            ObjectiveSpec::Logistic(l) => {
                let top = l.features.gram().largest_eigenvalue(POWER_TOL, POWER_MAX_ITER)?;
                Ok(top / (4.0 * l.rows() as f64) + l.ridge)
            }
        }
    }

    /// Bound on `E‖∇F(x, ξ) − ∇f(x)‖²`, returned as its square root σ.
    pub fn variance_bound(&self) -> f64 {
        match self {
            ObjectiveSpec::Quadratic(q) => q.noise_sigma,
            // |p − y| < 1, so the centred second moment is below the mean squared row norm.
            ObjectiveSpec::Logistic(l) => l.mean_row_norm_sq().sqrt(),
        }
    }

    /// Q such that `‖∇f(x)‖ ≤ Q` for every `x` within `radius` of the minimizer.
    pub fn gradient_norm_bound(&self, radius: f64) -> Result<f64, ObjectiveError> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(ObjectiveError::NonPositiveRadius(radius));
        }
        match self {
            ObjectiveSpec::Quadratic(q) => {
                Ok(q.a.largest_eigenvalue(POWER_TOL, POWER_MAX_ITER)? * radius)
            }
            ObjectiveSpec::Logistic(l) => {
                let x_star = self.minimizer()?;
                Ok(l.max_row_norm() + l.ridge * (x_star.norm() + radius))
            }
        }
    }

    pub fn constants(&self, radius: Option<f64>) -> Result<SmoothnessConstants, ObjectiveError> {
        Ok(SmoothnessConstants {
            l: self.lipschitz_constant()?,
            sigma: self.variance_bound(),
            q: radius.map(|r| self.gradient_norm_bound(r)).transpose()?,
        })
    }

    /// A minimizer of `f`: the offset for the quadratic, a full-batch descent
    /// solution (to `‖∇f‖ ≤ 1e-10`) for the logistic objective.
    pub fn minimizer(&self) -> Result<ParamVector, ObjectiveError> {
        match self {
            ObjectiveSpec::Quadratic(q) => ParamVector::new(q.b.clone()),
            ObjectiveSpec::Logistic(_) => {
                let step = 1.0 / self.raw_curvature()?.max(f64::MIN_POSITIVE);
                let mut x = ParamVector::zeros(self.dim());
                let mut grad_norm = f64::INFINITY;
                for _ in 0..MINIMIZER_MAX_ITER {
                    let g = self.full_gradient(&x)?;
                    grad_norm = linalg::norm(&g);
                    if grad_norm <= MINIMIZER_GRAD_TOL {
                        return Ok(x);
                    }
                    x = x.descend(step, &g)?;
                }
                Err(ObjectiveError::MinimizerNotFound { grad_norm, iters: MINIMIZER_MAX_ITER })
            }
        }
    }

    /// Quadratic with a randomly rotated spectrum spaced linearly over
    /// `[min_eig, max_eig]` and a Gaussian offset of expected norm about
    /// `offset_scale`. Fully determined by `seed`.
    pub fn synthetic_quadratic(
        dim: usize,
        min_eig: f64,
        max_eig: f64,
        offset_scale: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, ObjectiveError> {
        if dim == 0 || !(min_eig >= 0.0 && max_eig >= min_eig && max_eig.is_finite()) {
            return Err(ObjectiveError::Invalid(format!(
                "synthetic quadratic needs d >= 1 and 0 <= min_eig <= max_eig, got d={dim}, [{min_eig}, {max_eig}]"
            )));
        }
        let eigs: Vec<f64> = (0..dim)
            .map(|k| if dim == 1 { max_eig } else { min_eig + (max_eig - min_eig) * k as f64 / (dim - 1) as f64 })
            .collect();
        let mut rng = stream_rng(seed, &[stream::MATRIX]);
        let a = DenseMatrix::rotated_spectrum(&eigs, &mut rng);
        let scale = offset_scale / (dim as f64).sqrt();
        let b = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(ObjectiveSpec::Quadratic(Quadratic::new(a, b, noise_sigma)?))
    }

    /// Ridge-regularized logistic regression on two Gaussian blobs.
    pub fn synthetic_logistic(
        rows: usize,
        dim: usize,
        separation: f64,
        ridge: f64,
        seed: u64,
    ) -> Result<Self, ObjectiveError> {
        if rows == 0 || dim == 0 {
            return Err(ObjectiveError::Invalid("synthetic logistic needs rows >= 1 and d >= 1".into()));
        }
        let ds = dataset::synthetic_blobs(rows, dim, separation, seed);
        Ok(ObjectiveSpec::Logistic(Logistic::new(ds.features, ds.labels, ridge)?))
    }

    /// `f* = f(x*)`.
    pub fn optimal_value(&self) -> Result<f64, ObjectiveError> {
        match self {
            ObjectiveSpec::Quadratic(_) => Ok(0.0),
            ObjectiveSpec::Logistic(_) => self.loss(&self.minimizer()?),
        }
    }
}

fn finite_or(v: Vec<f64>, what: &'static str) -> Result<Vec<f64>, ObjectiveError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(ObjectiveError::NonFinite { what })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(diag: &[f64], b: Vec<f64>, sigma: f64) -> ObjectiveSpec {
        ObjectiveSpec::Quadratic(Quadratic::new(DenseMatrix::diagonal(diag), b, sigma).unwrap())
    }

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_loss_examples() {
        let f = quad(&[1.0, 1.0], vec![0.0, 0.0], 0.0);
        assert_eq!(f.loss(&pv(&[1.0, 1.0])).unwrap(), 1.0);
        let g = quad(&[2.0, 5.0], vec![0.3, -1.2], 0.0);
        assert_eq!(g.loss(&pv(&[0.3, -1.2])).unwrap(), 0.0);
    }

    #[test]
    fn logistic_loss_at_origin_is_ln2() {
        let data = dataset::synthetic_blobs(8, 2, 2.0, 11);
        let f = ObjectiveSpec::Logistic(Logistic::new(data.features, data.labels, 0.0).unwrap());
        let v = f.loss(&ParamVector::zeros(2)).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let f = quad(&[1.0, 1.0], vec![0.0, 0.0], 0.0);
        assert_eq!(
            f.loss(&pv(&[1.0])),
            Err(ObjectiveError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(f.stochastic_gradient(&pv(&[1.0, 2.0, 3.0]), 0).is_err());
    }

    #[test]
    fn non_finite_loss_is_error() {
        let f = quad(&[1.0], vec![0.0], 0.0);
        assert!(matches!(f.loss(&pv(&[1e200])), Err(ObjectiveError::NonFinite { .. })));
    }

    #[test]
    fn noiseless_quadratic_gradient_is_exact() {
        let f = quad(&[1.0, 1.0], vec![0.0, 0.0], 0.0);
        assert_eq!(f.stochastic_gradient(&pv(&[2.0, 0.0]), 42).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn lipschitz_examples() {
        assert!((quad(&[1.0, 3.0], vec![0.0; 2], 0.0).lipschitz_constant().unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(quad(&[0.25, 0.25], vec![0.0; 2], 0.0).lipschitz_constant().unwrap(), 1.0);
        let f = ObjectiveSpec::Logistic(
            Logistic::new(DenseMatrix::identity(2), vec![0.0, 1.0], 0.0).unwrap(),
        );
        assert_eq!(f.lipschitz_constant().unwrap(), 1.0);
        assert!((f.raw_curvature().unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn gradient_norm_bound_examples() {
        let f = quad(&[1.0, 1.0], vec![0.0; 2], 0.0);
        assert!((f.gradient_norm_bound(2.0).unwrap() - 2.0).abs() < 1e-9);
        let g = quad(&[1.0, 3.0], vec![0.0; 2], 0.0);
        assert!((g.gradient_norm_bound(1.0).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(f.gradient_norm_bound(0.0), Err(ObjectiveError::NonPositiveRadius(0.0)));
        assert!(f.gradient_norm_bound(-1.0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let asym = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(Quadratic::new(asym, vec![0.0; 2], 0.0).is_err());
        assert!(Quadratic::new(DenseMatrix::identity(2), vec![0.0; 3], 0.0).is_err());
        assert!(Quadratic::new(DenseMatrix::identity(2), vec![0.0; 2], -1.0).is_err());
        assert!(Logistic::new(DenseMatrix::identity(2), vec![0.0, 2.0], 0.0).is_err());
        assert!(Logistic::new(DenseMatrix::identity(2), vec![0.0], 0.0).is_err());
        assert!(ParamVector::new(vec![]).is_err());
        assert!(ParamVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn logistic_minimizer_has_tiny_gradient() {
        let data = dataset::synthetic_blobs(40, 3, 1.5, 5);
        let f = ObjectiveSpec::Logistic(Logistic::new(data.features, data.labels, 0.05).unwrap());
        let x = f.minimizer().unwrap();
        assert!(linalg::norm(&f.full_gradient(&x).unwrap()) <= 1e-10);
        assert!(f.optimal_value().unwrap() <= f.loss(&ParamVector::zeros(3)).unwrap());
    }
}
