use nalgebra::DMatrix;

use super::covariance::CovarianceSurface;
use super::sample::GridSpec;
use crate::error::{FpcaError, Result};
use crate::linalg::jacobi_eigen;

/// Eigenvalues (operator scale) and L²-normalised eigenfunctions on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub grid: GridSpec,
    /// Descending.
    pub values: Vec<f64>,
    /// Column `k` holds `φ̂ₖ(g₁), …, φ̂ₖ(g_M)`.
    pub functions: DMatrix<f64>,
    /// Number of components retained for scores and reconstructions.
    pub n_components: usize,
}

impl EigenSystem {
    /// Sum of the non-negative eigenvalues.
    pub fn total_variance(&self) -> f64 {
        self.values.iter().map(|v| v.max(0.0)).sum()
    }

    pub fn function(&self, k: usize) -> Vec<f64> {
        self.functions.column(k).iter().copied().collect()
    }

    /// `φ̂ₖ(t)` by linear interpolation.
    pub fn eval(&self, k: usize, t: f64) -> f64 {
        let (i, f) = self.grid.locate(t);
        let a = self.functions[(i, k)];
        if f == 0.0 {
            a
        } else {
            a + f * (self.functions[(i + 1, k)] - a)
        }
    }

    /// Keeps the decomposition but changes how many components are used.
    pub fn with_components(mut self, k: usize) -> Self {
        self.n_components = k.min(self.values.len());
        self
    }
}

/// Quadrature inner product on the grid.
pub fn inner_product(grid: &GridSpec, f: &[f64], g: &[f64]) -> f64 {
    grid.quadrature_weights()
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

/// Eigen-analysis of the integral operator with kernel `γ̂` under trapezoidal
/// quadrature. Each eigenfunction is oriented so that its grid values have a
/// non-negative sum. `n_components` is left at 0; see
/// [`select_num_components`].
pub fn eigendecompose(surface: &CovarianceSurface) -> EigenSystem {
    let grid = surface.grid;
    let m = grid.m;
    let sqrt_w: Vec<f64> = grid.quadrature_weights().iter().map(|w| w.sqrt()).collect();
    let weighted = DMatrix::from_fn(m, m, |i, j| sqrt_w[i] * surface.matrix[(i, j)] * sqrt_w[j]);
    let eig = jacobi_eigen(&weighted);
    let mut functions = DMatrix::from_fn(m, m, |i, k| eig.vectors[(i, k)] / sqrt_w[i]);
    for k in 0..m {
        let mut col = functions.column_mut(k);
        let sum: f64 = col.iter().sum();
        let flip = if sum == 0.0 {
            col.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)
        } else {
            sum < 0.0
        };
        if flip {
            col.neg_mut();
        }
    }
    EigenSystem {
        grid,
        values: eig.values,
        functions,
        n_components: 0,
    }
}

/// Smallest `K` whose leading eigenvalues explain at least `tau` of the total
/// (non-negative) variance.
pub fn select_num_components(values: &[f64], tau: f64) -> Result<usize> {
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(FpcaError::NoPositiveSpectrum);
    }
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v.max(0.0);
        if acc / total >= tau {
            return Ok(k + 1);
        }
    }
    Ok(values.iter().filter(|v| **v > 0.0).count())
}
