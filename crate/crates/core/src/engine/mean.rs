use rayon::prelude::*;

use super::sample::{GridSpec, Pooled, SparseFunctionalSample};
use crate::error::{FpcaError, Result};
use crate::robust::{weighted_mscale, MScaleSpec, RhoFamily};
use crate::smoothers::{
    kernel_weights, local_linear_m_mean, preliminary_scale, support_bandwidth, LocalFitDiagnostics,
};

/// Mean function estimated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFunctionEstimate {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    /// Bandwidth requested; individual points may have been widened.
    pub bandwidth: f64,
    pub diagnostics: Vec<LocalFitDiagnostics>,
}

impl MeanFunctionEstimate {
    /// Linear interpolation between grid points, clamped to the domain.
    pub fn eval(&self, t: f64) -> f64 {
        self.grid.interpolate(&self.values, t)
    }
}

fn no_support(t: f64) -> FpcaError {
    FpcaError::NoLocalData {
        location: format!("t = {t} (after widening)"),
    }
}

/// Local linear M-estimate of the mean at every grid point.
pub fn estimate_mean(
    sample: &SparseFunctionalSample,
    grid: &GridSpec,
    family: RhoFamily,
    h: f64,
) -> Result<MeanFunctionEstimate> {
    if !(h > 0.0) {
        return Err(FpcaError::InvalidConfig(format!("mean bandwidth must be positive, got {h}")));
    }
    let pooled = sample.pooled();
    if pooled.times.is_empty() {
        return Err(FpcaError::InvalidInput("no observations".into()));
    }
    let fits: Vec<Result<(f64, LocalFitDiagnostics)>> = grid
        .points()
        .into_par_iter()
        .map(|t0| {
            let bw = support_bandwidth(h, |bw| pooled.count(t0, bw)).ok_or_else(|| no_support(t0))?;
            let win = pooled.window(t0, bw);
            let times = &pooled.times[win.clone()];
            let values = &pooled.values[win];
            let sigma = if family.is_square() {
                1.0
            } else {
                preliminary_scale(times, values, t0, bw)?.unwrap_or(1.0)
            };
            let fit = local_linear_m_mean(times, values, t0, bw, family, sigma)?;
            Ok((fit.intercept, fit.diagnostics))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.m);
    let mut diagnostics = Vec::with_capacity(grid.m);
    for f in fits {
        let (v, d) = f?;
        values.push(v);
        diagnostics.push(d);
    }
    Ok(MeanFunctionEstimate {
        grid: *grid,
        values,
        bandwidth: h,
        diagnostics,
    })
}

/// Diagonal of the scatter function: squared local M-scale of the residuals
/// from the mean, one value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalEstimate {
    pub values: Vec<f64>,
    /// Grid points whose scale equation only had the zero root.
    pub degenerate: Vec<bool>,
    pub bandwidth: f64,
}

pub fn estimate_diagonal(
    sample: &SparseFunctionalSample,
    mean: &MeanFunctionEstimate,
    spec: &MScaleSpec,
    h: f64,
) -> Result<DiagonalEstimate> {
    if !(h > 0.0) {
        return Err(FpcaError::InvalidConfig(format!("diagonal bandwidth must be positive, got {h}")));
    }
    let residuals = residual_pool(sample, mean);
    let results: Vec<Result<(f64, bool)>> = mean
        .grid
        .points()
        .into_par_iter()
        .map(|t0| {
            let bw = support_bandwidth(h, |bw| residuals.count(t0, bw)).ok_or_else(|| no_support(t0))?;
            let win = residuals.window(t0, bw);
            let w = kernel_weights(&residuals.times[win.clone()], t0, bw)?;
            let s = weighted_mscale(&residuals.values[win], &w, spec)?;
            Ok((s.scale * s.scale, s.degenerate))
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut degenerate = Vec::with_capacity(results.len());
    for r in results {
        let (v, d) = r?;
        values.push(v);
        degenerate.push(d);
    }
    Ok(DiagonalEstimate {
        values,
        degenerate,
        bandwidth: h,
    })
}

/// Residuals `Xᵢⱼ − μ̂(tᵢⱼ)` pooled and sorted by time.
pub(crate) fn residual_pool(sample: &SparseFunctionalSample, mean: &MeanFunctionEstimate) -> Pooled {
    let mut pts: Vec<(f64, f64)> = sample
        .curves
        .iter()
        .flat_map(|c| c.times.iter().zip(&c.values).map(|(t, x)| (*t, x - mean.eval(*t))))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Pooled {
        times: pts.iter().map(|p| p.0).collect(),
        values: pts.iter().map(|p| p.1).collect(),
    }
}
