//! Rho/psi families and the scale estimators shared by every estimation step.
//!
//! All functions here are pure. The M-scale solver works with any bounded
//! family and with the squared loss (which turns it into a weighted root mean
//! square when `b = 1`).

use crate::error::{FpcaError, Result};

/// Φ⁻¹(3/4): makes the MAD consistent for the standard deviation at the normal.
pub const MAD_KAPPA: f64 = 0.674_489_750_196_082;

/// Huber constant giving 95% efficiency at the normal.
pub const HUBER_C: f64 = 1.345;

/// Bisquare constant for which `E ρ(Z) = 1/2` under `Z ~ N(0, 1)`.
pub const BISQUARE_SCALE_C: f64 = 1.54764;

/// Bisquare constant with 85% efficiency in regression.
pub const BISQUARE_SLOPE_C: f64 = 3.44369;

/// Default M-scale solver tolerance (relative change of the scale).
pub const MSCALE_TOL: f64 = 1e-9;

/// Default M-scale iteration cap.
pub const MSCALE_MAX_ITER: usize = 200;

/// Loss families used by the local M-estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoFamily {
    /// `x²/2` inside `[-c, c]`, linear outside. Unbounded.
    Huber { c: f64 },
    /// Tukey's biweight normalised so that `sup ρ = 1`.
    Bisquare { c: f64 },
    /// Plain squared loss `x²`; the least-squares special case.
    Square,
}

impl RhoFamily {
    pub fn huber() -> Self {
        RhoFamily::Huber { c: HUBER_C }
    }

    pub fn bisquare(c: f64) -> Self {
        RhoFamily::Bisquare { c }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RhoFamily::Huber { c } | RhoFamily::Bisquare { c } if !(c > 0.0 && c.is_finite()) => {
                Err(FpcaError::InvalidConfig(format!(
                    "tuning constant must be positive and finite, got {c}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Supremum of ρ; infinite for unbounded families.
    pub fn sup(&self) -> f64 {
        match self {
            RhoFamily::Bisquare { .. } => 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn is_square(&self) -> bool {
        matches!(self, RhoFamily::Square)
    }

    pub fn rho(&self, x: f64) -> f64 {
        match *self {
            RhoFamily::Huber { c } => {
                let a = x.abs();
                if a <= c {
                    0.5 * x * x
                } else {
                    c * a - 0.5 * c * c
                }
            }
            RhoFamily::Bisquare { c } => {
                let u = x / c;
                if u.abs() >= 1.0 {
                    1.0
                } else {
                    let v = 1.0 - u * u;
                    1.0 - v * v * v
                }
            }
            RhoFamily::Square => x * x,
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        match *self {
            RhoFamily::Huber { c } => x.clamp(-c, c),
            RhoFamily::Bisquare { c } => {
                let u = x / c;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let v = 1.0 - u * u;
                    6.0 * x * v * v / (c * c)
                }
            }
            RhoFamily::Square => 2.0 * x,
        }
    }

    /// IRLS weight `ψ(x)/x`, extended continuously to `ψ'(0)` at the origin.
    pub fn weight(&self, x: f64) -> f64 {
        match *self {
            RhoFamily::Huber { c } => {
                let a = x.abs();
                if a <= c {
                    1.0
                } else {
                    c / a
                }
            }
            RhoFamily::Bisquare { c } => {
                let u = x / c;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let v = 1.0 - u * u;
                    6.0 * v * v / (c * c)
                }
            }
            RhoFamily::Square => 2.0,
        }
    }
}

/// Parameters of the M-scale equation `Σ wᵢ ρ(rᵢ/s) = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MScaleSpec {
    pub family: RhoFamily,
    pub b: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl MScaleSpec {
    /// 50% breakdown bisquare scale, consistent at the normal.
    pub fn bisquare_half() -> Self {
        MScaleSpec {
            family: RhoFamily::Bisquare {
                c: BISQUARE_SCALE_C,
            },
            b: 0.5,
            tol: MSCALE_TOL,
            max_iter: MSCALE_MAX_ITER,
        }
    }

    /// Square loss with `b = 1`: the weighted root mean square.
    pub fn least_squares() -> Self {
        MScaleSpec {
            family: RhoFamily::Square,
            b: 1.0,
            tol: MSCALE_TOL,
            max_iter: MSCALE_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if let RhoFamily::Huber { .. } = self.family {
            return Err(FpcaError::InvalidConfig(
                "M-scale requires a bounded family or the square loss".into(),
            ));
        }
        if !(self.b > 0.0 && self.b < self.family.sup()) {
            return Err(FpcaError::InvalidConfig(format!(
                "M-scale target b = {} must lie in (0, sup rho)",
                self.b
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(FpcaError::InvalidConfig(
                "M-scale tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`weighted_mscale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MScale {
    pub scale: f64,
    pub iterations: usize,
    /// Set when too much weight sits on exactly-zero residuals; `scale` is 0.
    pub degenerate: bool,
}

/// Median with the midpoint convention for even lengths. Panics on empty input.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    median_in_place(&mut v)
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Normalised median absolute deviation `κ⁻¹ median|vᵢ − median(v)|`.
pub fn mad(values: &[f64], kappa: f64) -> f64 {
    assert!(!values.is_empty(), "MAD of an empty slice");
    let mut v = values.to_vec();
    let center = median_in_place(&mut v);
    for x in v.iter_mut() {
        *x = (*x - center).abs();
    }
    median_in_place(&mut v) / kappa
}

/// Weighted median: the smallest value whose cumulative weight reaches half
/// the total, averaged with the next value when the half is hit exactly.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(values.len(), weights.len());
    assert!(!values.is_empty(), "weighted median of an empty slice");
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let half = 0.5 * total;
    let mut acc = 0.0;
    for (pos, &i) in idx.iter().enumerate() {
        acc += weights[i];
        if acc >= half {
            if (acc - half).abs() <= 1e-14 * total {
                // Split exactly at this value: average with the next positive-weight one.
                if let Some(&j) = idx[pos + 1..].iter().find(|&&j| weights[j] > 0.0) {
                    return 0.5 * (values[i] + values[j]);
                }
            }
            return values[i];
        }
    }
    values[idx[idx.len() - 1]]
}

/// Weighted MAD around the weighted median, normalised by `κ`.
pub fn weighted_mad(values: &[f64], weights: &[f64], kappa: f64) -> f64 {
    let center = weighted_median(values, weights);
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    weighted_median(&dev, weights) / kappa
}

/// Solves `Σ wᵢ ρ(rᵢ/s) = b` for `s ≥ 0` by the fixed-point iteration
/// `s² ← s² · Σ wᵢ ρ(rᵢ/s) / b`, started at the weighted MAD.
pub fn weighted_mscale(residuals: &[f64], weights: &[f64], spec: &MScaleSpec) -> Result<MScale> {
    spec.validate()?;
    if residuals.is_empty() {
        return Err(FpcaError::InvalidInput("M-scale of no residuals".into()));
    }
    if residuals.len() != weights.len() {
        return Err(FpcaError::InvalidInput(format!(
            "{} residuals but {} weights",
            residuals.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(FpcaError::InvalidInput("negative or NaN weight".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-8 {
        return Err(FpcaError::InvalidInput(format!(
            "weights must sum to 1, got {wsum}"
        )));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(FpcaError::InvalidInput("non-finite residual".into()));
    }

    let zero_mass: f64 = residuals
        .iter()
        .zip(weights)
        .filter(|(r, _)| **r == 0.0)
        .map(|(_, w)| *w)
        .sum();
    let degenerate = if spec.family.is_square() {
        zero_mass >= wsum
    } else {
        zero_mass >= 1.0 - spec.b
    };
    if degenerate {
        return Ok(MScale {
            scale: 0.0,
            iterations: 0,
            degenerate: true,
        });
    }

    if spec.family.is_square() {
        // Closed form: s² = Σ w r² / b.
        let ss: f64 = residuals.iter().zip(weights).map(|(r, w)| w * r * r).sum();
        return Ok(MScale {
            scale: (ss / spec.b).sqrt(),
            iterations: 1,
            degenerate: false,
        });
    }

    let mut s = weighted_mad(residuals, weights, MAD_KAPPA);
    if !(s > 0.0) {
        // More than half the weight on a single value: start from the mean deviation.
        let center = weighted_median(residuals, weights);
        s = residuals
            .iter()
            .zip(weights)
            .map(|(r, w)| w * (r - center).abs())
            .sum::<f64>()
            / MAD_KAPPA;
    }
    if !(s > 0.0) {
        s = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    }

    for iter in 1..=spec.max_iter {
        let avg: f64 = residuals
            .iter()
            .zip(weights)
            .map(|(r, w)| w * spec.family.rho(r / s))
            .sum();
        let next = s * (avg / spec.b).sqrt();
        let change = ((next - s) / s).abs();
        s = next;
        if change < spec.tol {
            return Ok(MScale {
                scale: s,
                iterations: iter,
                degenerate: false,
            });
        }
    }
    Err(FpcaError::NoConvergence {
        iterations: spec.max_iter,
        context: "weighted M-scale".into(),
    })
}
