use nalgebra::{DMatrix, DVector};

use super::covariance::CovarianceSurface;
use super::eigen::EigenSystem;
use super::mean::MeanFunctionEstimate;
use super::sample::SparseFunctionalSample;
use crate::error::{FpcaError, Result};
use crate::linalg::solve_symmetric;

/// Predicted scores, one row per curve and one column per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub ids: Vec<String>,
    pub scores: DMatrix<f64>,
    /// Ridge actually added to each per-curve covariance.
    pub ridge: f64,
}

impl ScoreMatrix {
    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }
}

/// Conditional-location score predictor
/// `ξ̂ᵢₖ = λ̂ₖ φ̂ᵢₖᵀ (Σ̂ᵢ + δI)⁻¹ (Xᵢ − μ̂ᵢ)` for the first `k` components.
pub fn predict_scores(
    sample: &SparseFunctionalSample,
    mean: &MeanFunctionEstimate,
    surface: &CovarianceSurface,
    eigen: &EigenSystem,
    ridge: f64,
    k: usize,
) -> Result<ScoreMatrix> {
    if k > eigen.values.len() {
        return Err(FpcaError::InvalidInput(format!(
            "{k} components requested but only {} are available",
            eigen.values.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(FpcaError::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let mut scores = DMatrix::zeros(sample.len(), k);
    for (i, curve) in sample.curves.iter().enumerate() {
        let n = curve.len();
        if n == 0 {
            return Err(FpcaError::InvalidInput(format!("curve `{}` is empty", curve.id)));
        }
        let sigma = DMatrix::from_fn(n, n, |a, b| {
            let v = surface.eval(curve.times[a], curve.times[b]);
            if a == b {
                v + ridge
            } else {
                v
            }
        });
        let centred = DVector::from_iterator(
            n,
            curve.times.iter().zip(&curve.values).map(|(t, x)| x - mean.eval(*t)),
        );
        if k == 0 {
            continue;
        }
        let solved = solve_symmetric(&sigma, &centred).ok_or_else(|| FpcaError::SingularSystem {
            curve: curve.id.clone(),
        })?;
        for c in 0..k {
            let phi_dot: f64 = curve
                .times
                .iter()
                .zip(solved.iter())
                .map(|(t, s)| eigen.eval(c, *t) * s)
                .sum();
            scores[(i, c)] = eigen.values[c] * phi_dot;
        }
    }
    Ok(ScoreMatrix {
        ids: sample.curves.iter().map(|c| c.id.clone()).collect(),
        scores,
        ridge,
    })
}

/// `X̂ᵢ(gₘ) = μ̂(gₘ) + Σ_{k≤K} ξ̂ᵢₖ φ̂ₖ(gₘ)` for every curve.
pub fn reconstruct(
    scores: &ScoreMatrix,
    eigen: &EigenSystem,
    mean: &MeanFunctionEstimate,
    k: usize,
) -> Vec<Vec<f64>> {
    let k = k.min(scores.n_components());
    (0..scores.scores.nrows())
        .map(|i| {
            (0..mean.grid.m)
                .map(|m| {
                    let mut v = mean.values[m];
                    for c in 0..k {
                        v += scores.scores[(i, c)] * eigen.functions[(m, c)];
                    }
                    v
                })
                .collect()
        })
        .collect()
}
