//! Minimal dense linear algebra: row-major matrices, vector helpers and power
//! iteration for the largest eigenvalue of a symmetric PSD matrix.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("power iteration did not reach relative tolerance {tol:e} within {max_iter} iterations")]
    NoConvergence { tol: f64, max_iter: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn identity(d: usize) -> Self {
        Self::diagonal(&vec![1.0; d])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut data = vec![0.0; d * d];
        for (i, &v) in diag.iter().enumerate() {
            data[i * d + i] = v;
        }
        Self { rows: d, cols: d, data }
    }

    /// `Qᵀ diag(eigenvalues) Q` for a random orthogonal `Q` drawn from `rng`.
    pub fn rotated_spectrum<R: Rng>(eigenvalues: &[f64], rng: &mut R) -> Self {
        let d = eigenvalues.len();
        let basis = random_orthonormal_basis(d, rng);
        let mut data = vec![0.0; d * d];
        for (k, q) in basis.iter().enumerate() {
            let lam = eigenvalues[k];
            for i in 0..d {
                for j in 0..d {
                    data[i * d + j] += lam * q[i] * q[j];
                }
            }
        }
        // exact symmetry regardless of summation order
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (data[i * d + j] + data[j * d + i]);
                data[i * d + j] = avg;
                data[j * d + i] = avg;
            }
        }
        Self { rows: d, cols: d, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `Xᵀ X` for a tall design matrix.
    pub fn gram(&self) -> DenseMatrix {
        let d = self.cols;
        let mut data = vec![0.0; d * d];
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..d {
                for j in 0..d {
                    data[i * d + j] += row[i] * row[j];
                }
            }
        }
        DenseMatrix { rows: d, cols: d, data }
    }

    /// Largest eigenvalue of a symmetric positive-semidefinite matrix.
    pub fn largest_eigenvalue(&self, rel_tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let d = self.rows;
        if d == 0 {
            return Ok(0.0);
        }
        // Fixed, non-symmetric start so no eigenvector of a structured matrix is missed.
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let w = self.mul_vec(&v);
            let next = dot(&v, &w);
            let wn = norm(&w);
            if wn == 0.0 {
                return Ok(0.0);
            }
            if (next - lambda).abs() <= rel_tol * next.abs() {
                return Ok(next.max(lambda));
            }
            lambda = next;
            v = w.into_iter().map(|x| x / wn).collect();
        }
        Err(LinalgError::NoConvergence { tol: rel_tol, max_iter })
    }
}

fn random_orthonormal_basis<R: Rng>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        // two Gram-Schmidt passes for numerical orthogonality
        for _ in 0..2 {
            for q in &basis {
                let p = dot(&v, q);
                axpy(-p, q, &mut v);
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
