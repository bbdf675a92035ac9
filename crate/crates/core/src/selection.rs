//! Curve-level K-fold cross-validation for the mean and covariance bandwidths.
//!
//! The robust criterion is a 50% breakdown bisquare M-scale of the held-out
//! residuals; the least-squares variant uses their mean square. Candidates are
//! scanned in increasing order and ties go to the smaller bandwidth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::covariance::{bilinear, slope_surface, sort_pairs};
use crate::engine::mean::{estimate_mean, MeanFunctionEstimate};
use crate::engine::{FitConfig, GridSpec, SparseFunctionalSample, Variant};
use crate::error::{FpcaError, Result};
use crate::robust::{weighted_mscale, MScaleSpec};
use crate::smoothers::{bivariate_smooth, SlopePair};

/// Relative tolerance under which two criterion values count as a tie.
const TIE_TOL: f64 = 1e-9;

/// Fold layout and candidate bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub folds: usize,
    /// Candidate bandwidths, sorted increasingly.
    pub candidates: Vec<f64>,
    /// `fold_of[i]` is the fold holding curve `i` out.
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl CvPlan {
    /// Random curve-level partition into `folds` groups of near-equal size.
    pub fn new(n_curves: usize, folds: usize, candidates: Vec<f64>, seed: u64) -> Result<Self> {
        if folds < 2 || folds > n_curves {
            return Err(FpcaError::InvalidConfig(format!(
                "cannot split {n_curves} curves into {folds} folds"
            )));
        }
        if candidates.is_empty() || candidates.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(FpcaError::InvalidConfig("bandwidth candidates must be positive".into()));
        }
        let mut candidates = candidates;
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let mut order: Vec<usize> = (0..n_curves).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold_of = vec![0; n_curves];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
        Ok(CvPlan {
            folds,
            candidates,
            fold_of,
            seed,
        })
    }

    /// Plan built from a fit configuration for the given sample.
    pub fn from_config(sample: &SparseFunctionalSample, config: &FitConfig) -> Result<Self> {
        let grid = GridSpec::new(sample.domain.0, sample.domain.1, config.grid_points)?;
        let candidates = config
            .cv
            .candidates
            .clone()
            .unwrap_or_else(|| default_candidates(&grid));
        CvPlan::new(sample.len(), config.cv.folds.min(sample.len()), candidates, config.seed)
    }

    /// `(training, held-out)` curve indices of `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.fold_of.len()).partition(|&i| self.fold_of[i] != fold)
    }
}

/// Eight log-spaced bandwidths from two grid steps to half the domain.
pub fn default_candidates(grid: &GridSpec) -> Vec<f64> {
    let lo = 2.0 * grid.step();
    let hi = 0.5 * (grid.b - grid.a);
    let n = 8;
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Criterion value for every candidate (`None` when the candidate failed) and
/// the selected bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub bandwidth: f64,
    pub criterion: Vec<(f64, Option<f64>)>,
}

fn criterion(residuals: &[f64], variant: Variant) -> Result<f64> {
    if residuals.is_empty() {
        return Err(FpcaError::InvalidInput("no held-out residuals".into()));
    }
    match variant {
        Variant::Robust => {
            let w = vec![1.0 / residuals.len() as f64; residuals.len()];
            Ok(weighted_mscale(residuals, &w, &MScaleSpec::bisquare_half())?.scale)
        }
        Variant::LeastSquares => Ok(residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64),
    }
}

fn select(criterion: Vec<(f64, Option<f64>)>, variant: Variant) -> Result<CvOutcome> {
    // Compare in scale units so the tie tolerance means the same for both variants.
    let to_scale = |v: f64| match variant {
        Variant::Robust => v,
        Variant::LeastSquares => v.sqrt(),
    };
    let mut best: Option<(f64, f64)> = None;
    for &(h, value) in &criterion {
        if let Some(v) = value {
            let v = to_scale(v);
            match best {
                None => best = Some((h, v)),
                Some((_, b)) if v < b - TIE_TOL * b.abs().max(f64::MIN_POSITIVE) => best = Some((h, v)),
                _ => {}
            }
        }
    }
    match best {
        Some((h, _)) => Ok(CvOutcome { bandwidth: h, criterion }),
        None => Err(FpcaError::AllCandidatesFailed),
    }
}

fn check_folds(sample: &SparseFunctionalSample, plan: &CvPlan) -> Result<()> {
    if plan.fold_of.len() != sample.len() {
        return Err(FpcaError::InvalidInput(format!(
            "plan covers {} curves but the sample has {}",
            plan.fold_of.len(),
            sample.len()
        )));
    }
    for fold in 0..plan.folds {
        let (train, _) = plan.split(fold);
        if train.is_empty() {
            return Err(FpcaError::InvalidInput(format!("fold {fold} leaves no training curves")));
        }
    }
    Ok(())
}

/// Held-out mean residuals for one candidate, pooled over folds in fold order.
fn mean_residuals(
    sample: &SparseFunctionalSample,
    plan: &CvPlan,
    config: &FitConfig,
    grid: &GridSpec,
    h: f64,
) -> Result<Vec<f64>> {
    let mut residuals = Vec::new();
    for fold in 0..plan.folds {
        let (train, test) = plan.split(fold);
        let fit = estimate_mean(&sample.subset(&train), grid, config.mean_family(), h)?;
        for &i in &test {
            let c = &sample.curves[i];
            residuals.extend(c.times.iter().zip(&c.values).map(|(t, x)| x - fit.eval(*t)));
        }
    }
    Ok(residuals)
}

/// Cross-validated bandwidth for the mean.
pub fn cv_bandwidth_mean(sample: &SparseFunctionalSample, plan: &CvPlan, config: &FitConfig) -> Result<CvOutcome> {
    check_folds(sample, plan)?;
    let grid = GridSpec::new(sample.domain.0, sample.domain.1, config.grid_points)?;
    let values: Vec<(f64, Option<f64>)> = plan
        .candidates
        .par_iter()
        .map(|&h| {
            let value = mean_residuals(sample, plan, config, &grid, h)
                .and_then(|r| criterion(&r, config.variant))
                .ok();
            (h, value)
        })
        .collect();
    select(values, config.variant)
}

fn centred_pairs(sample: &SparseFunctionalSample, idx: &[usize], mean: &MeanFunctionEstimate) -> Vec<SlopePair> {
    let mut pairs = Vec::new();
    for &i in idx {
        let c = &sample.curves[i];
        let centred: Vec<f64> = c.times.iter().zip(&c.values).map(|(t, x)| x - mean.eval(*t)).collect();
        for j in 0..c.len() {
            for l in 0..c.len() {
                if j != l {
                    pairs.push(SlopePair {
                        row: centred[j],
                        col: centred[l],
                        t_row: c.times[j],
                        t_col: c.times[l],
                    });
                }
            }
        }
    }
    sort_pairs(&mut pairs);
    pairs
}

fn slope_residuals(
    sample: &SparseFunctionalSample,
    mean: &MeanFunctionEstimate,
    plan: &CvPlan,
    config: &FitConfig,
    h: f64,
) -> Result<Vec<f64>> {
    let grid = mean.grid;
    let pts = grid.points();
    let mut residuals = Vec::new();
    for fold in 0..plan.folds {
        let (train, test) = plan.split(fold);
        let pairs = centred_pairs(sample, &train, mean);
        let beta = slope_surface(&pairs, &grid, config.slope_family(), h, true);
        let failed = beta.iter().filter(|v| v.is_nan()).count();
        if 2 * failed > beta.len() {
            return Err(FpcaError::InsufficientPairings {
                failed,
                total: beta.len(),
            });
        }
        let beta = if failed > 0 {
            bivariate_smooth(&pts, &beta, config.surface_smoothing_steps * grid.step())?
        } else {
            beta
        };
        for p in centred_pairs(sample, &test, mean) {
            residuals.push(p.row - bilinear(&grid, &beta, p.t_row, p.t_col) * p.col);
        }
    }
    Ok(residuals)
}

/// Cross-validated bandwidth for the slope (covariance) step, given the mean.
pub fn cv_bandwidth_cov(
    sample: &SparseFunctionalSample,
    mean: &MeanFunctionEstimate,
    plan: &CvPlan,
    config: &FitConfig,
) -> Result<CvOutcome> {
    check_folds(sample, plan)?;
    let values: Vec<(f64, Option<f64>)> = plan
        .candidates
        .par_iter()
        .map(|&h| {
            let value = slope_residuals(sample, mean, plan, config, h)
                .and_then(|r| criterion(&r, config.variant))
                .ok();
            (h, value)
        })
        .collect();
    select(values, config.variant)
}
