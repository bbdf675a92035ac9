//! The three-step estimation pipeline: local M-mean, M-scale diagonal and
//! local-slope off-diagonal, followed by eigen-analysis and score prediction.

pub mod config;
pub mod covariance;
pub mod eigen;
pub mod mean;
pub mod sample;
pub mod scores;

pub use config::{Bandwidth, CvSettings, FitConfig, Ridge, Variant};
pub use covariance::{assemble_covariance, psd_project, slope_pairs, CovarianceSurface};
pub use eigen::{eigendecompose, inner_product, select_num_components, EigenSystem};
pub use mean::{estimate_diagonal, estimate_mean, DiagonalEstimate, MeanFunctionEstimate};
pub use sample::{Curve, GridSpec, SparseFunctionalSample};
pub use scores::{predict_scores, reconstruct, ScoreMatrix};

use crate::error::Result;
use crate::selection::{cv_bandwidth_cov, cv_bandwidth_mean, CvOutcome, CvPlan};

/// Everything produced by [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FpcaFit {
    pub config: FitConfig,
    pub h_mean: f64,
    pub h_cov: f64,
    pub mean: MeanFunctionEstimate,
    pub diagonal: DiagonalEstimate,
    /// Symmetric surface before the PSD truncation.
    pub raw_surface: CovarianceSurface,
    pub surface: CovarianceSurface,
    pub eigen: EigenSystem,
    pub scores: ScoreMatrix,
    pub cv_mean: Option<CvOutcome>,
    pub cv_cov: Option<CvOutcome>,
}

impl FpcaFit {
    pub fn n_components(&self) -> usize {
        self.eigen.n_components
    }

    /// Fitted trajectories on the grid for the training curves.
    pub fn reconstructions(&self) -> Vec<Vec<f64>> {
        reconstruct(&self.scores, &self.eigen, &self.mean, self.eigen.n_components)
    }

    /// Scores for new curves from the stored estimates.
    pub fn predict(&self, sample: &SparseFunctionalSample) -> Result<ScoreMatrix> {
        predict_scores(
            sample,
            &self.mean,
            &self.surface,
            &self.eigen,
            self.scores.ridge,
            self.eigen.n_components,
        )
    }
}

/// Resolves the ridge for a fitted surface.
pub fn resolve_ridge(ridge: Ridge, surface: &CovarianceSurface) -> f64 {
    match ridge {
        Ridge::Absolute(d) => d,
        Ridge::Relative(f) => {
            let d = surface.diagonal();
            f * d.iter().sum::<f64>() / d.len() as f64
        }
    }
}

/// Runs the full pipeline. Deterministic for a given sample and configuration.
pub fn fit(sample: &SparseFunctionalSample, config: &FitConfig) -> Result<FpcaFit> {
    config.validate()?;
    let grid = GridSpec::new(sample.domain.0, sample.domain.1, config.grid_points)?;
    let needs_cv = matches!(config.h_mean, Bandwidth::Auto) || matches!(config.h_cov, Bandwidth::Auto);
    let plan = if needs_cv {
        Some(CvPlan::from_config(sample, config)?)
    } else {
        None
    };

    let (h_mean, cv_mean) = match config.h_mean {
        Bandwidth::Fixed(h) => (h, None),
        Bandwidth::Auto => {
            let out = cv_bandwidth_mean(sample, plan.as_ref().expect("plan exists"), config)?;
            (out.bandwidth, Some(out))
        }
    };
    let mean = estimate_mean(sample, &grid, config.mean_family(), h_mean)?;

    let (h_cov, cv_cov) = match config.h_cov {
        Bandwidth::Fixed(h) => (h, None),
        Bandwidth::Auto => {
            let out = cv_bandwidth_cov(sample, &mean, plan.as_ref().expect("plan exists"), config)?;
            (out.bandwidth, Some(out))
        }
    };
    let diagonal = estimate_diagonal(sample, &mean, &config.scale_spec(), h_cov)?;
    let raw_surface = assemble_covariance(
        sample,
        &mean,
        &diagonal,
        config.slope_family(),
        h_cov,
        config.surface_smoothing_steps,
    )?;
    let surface = psd_project(&raw_surface);
    let eigen = eigendecompose(&surface);
    let k = match config.n_components {
        Some(k) => k.min(grid.m),
        None => select_num_components(&eigen.values, config.tau)?,
    };
    let eigen = eigen.with_components(k);
    let ridge = resolve_ridge(config.ridge, &surface);
    let scores = predict_scores(sample, &mean, &surface, &eigen, ridge, k)?;

    Ok(FpcaFit {
        config: config.clone(),
        h_mean,
        h_cov,
        mean,
        diagonal,
        raw_surface,
        surface,
        eigen,
        scores,
        cv_mean,
        cv_cov,
    })
}
