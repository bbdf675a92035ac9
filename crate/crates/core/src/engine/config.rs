use std::fmt;
use std::str::FromStr;

use crate::error::{FpcaError, Result};
use crate::robust::{MScaleSpec, RhoFamily, BISQUARE_SLOPE_C};

/// Robust fit or its least-squares counterpart (all losses squared).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Robust,
    LeastSquares,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Robust => "rob",
            Variant::LeastSquares => "ls",
        })
    }
}

impl FromStr for Variant {
    type Err = FpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rob" | "robust" => Ok(Variant::Robust),
            "ls" | "least-squares" => Ok(Variant::LeastSquares),
            other => Err(FpcaError::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

/// A bandwidth in time units, or a request to pick one by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Auto => f.write_str("auto"),
            Bandwidth::Fixed(h) => write!(f, "{h}"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = FpcaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            _ => Err(FpcaError::InvalidConfig(format!("bandwidth must be `auto` or a positive number, got `{s}`"))),
        }
    }
}

/// Ridge added to the per-curve covariance before solving for scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Fraction of the mean of the estimated diagonal over the grid.
    Relative(f64),
    Absolute(f64),
}

/// Default relative ridge.
pub const DEFAULT_RIDGE_FRACTION: f64 = 0.01;

/// Cross-validation settings used when a bandwidth is `Auto`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub folds: usize,
    /// Candidate bandwidths; `None` selects the default log-spaced grid.
    pub candidates: Option<Vec<f64>>,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: 5,
            candidates: None,
        }
    }
}

/// Everything that controls a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub variant: Variant,
    pub h_mean: Bandwidth,
    pub h_cov: Bandwidth,
    /// Loss of the local mean fit (robust variant).
    pub rho_mean: RhoFamily,
    /// M-scale used for the diagonal (robust variant).
    pub scale: MScaleSpec,
    /// Loss of the local slope fit (robust variant).
    pub rho_slope: RhoFamily,
    /// Number of grid points.
    pub grid_points: usize,
    /// Surface smoother bandwidth, in grid steps.
    pub surface_smoothing_steps: f64,
    pub ridge: Ridge,
    /// Fraction of total variance the retained components must explain.
    pub tau: f64,
    /// Forces the number of components instead of the `tau` rule.
    pub n_components: Option<usize>,
    pub cv: CvSettings,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            variant: Variant::Robust,
            h_mean: Bandwidth::Auto,
            h_cov: Bandwidth::Auto,
            rho_mean: RhoFamily::huber(),
            scale: MScaleSpec::bisquare_half(),
            rho_slope: RhoFamily::bisquare(BISQUARE_SLOPE_C),
            grid_points: 50,
            surface_smoothing_steps: 2.0,
            ridge: Ridge::Relative(DEFAULT_RIDGE_FRACTION),
            tau: 0.90,
            n_components: None,
            cv: CvSettings::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn for_variant(variant: Variant) -> Self {
        FitConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn with_bandwidths(mut self, h_mean: f64, h_cov: f64) -> Self {
        self.h_mean = Bandwidth::Fixed(h_mean);
        self.h_cov = Bandwidth::Fixed(h_cov);
        self
    }

    pub fn mean_family(&self) -> RhoFamily {
        match self.variant {
            Variant::Robust => self.rho_mean,
            Variant::LeastSquares => RhoFamily::Square,
        }
    }

    pub fn scale_spec(&self) -> MScaleSpec {
        match self.variant {
            Variant::Robust => self.scale,
            Variant::LeastSquares => MScaleSpec::least_squares(),
        }
    }

    pub fn slope_family(&self) -> RhoFamily {
        match self.variant {
            Variant::Robust => self.rho_slope,
            Variant::LeastSquares => RhoFamily::Square,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rho_mean.validate()?;
        self.rho_slope.validate()?;
        self.scale.validate()?;
        if self.grid_points < 2 {
            return Err(FpcaError::InvalidConfig("grid needs at least 2 points".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(FpcaError::InvalidConfig(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.surface_smoothing_steps > 0.0) {
            return Err(FpcaError::InvalidConfig("surface smoothing must be positive".into()));
        }
        match self.ridge {
            Ridge::Relative(d) | Ridge::Absolute(d) if !(d >= 0.0 && d.is_finite()) => {
                return Err(FpcaError::InvalidConfig(format!("ridge must be non-negative, got {d}")));
            }
            _ => {}
        }
        if self.cv.folds < 2 {
            return Err(FpcaError::InvalidConfig("cross-validation needs at least 2 folds".into()));
        }
        if let Some(c) = &self.cv.candidates {
            if c.is_empty() || c.iter().any(|h| !(*h > 0.0)) {
                return Err(FpcaError::InvalidConfig("bandwidth candidates must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_forces_square_losses() {
        let c = FitConfig::for_variant(Variant::LeastSquares);
        assert_eq!(c.mean_family(), RhoFamily::Square);
        assert_eq!(c.slope_family(), RhoFamily::Square);
        assert_eq!(c.scale_spec().family, RhoFamily::Square);
        let r = FitConfig::default();
        assert_eq!(r.mean_family(), RhoFamily::Huber { c: 1.345 });
        assert_eq!(r.scale_spec().b, 0.5);
        assert_eq!(r.slope_family(), RhoFamily::Bisquare { c: 3.44369 });
    }

    #[test]
    fn parsing() {
        assert_eq!("ROB".parse::<Variant>().unwrap(), Variant::Robust);
        assert_eq!("auto".parse::<Bandwidth>().unwrap(), Bandwidth::Auto);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
        assert!("x".parse::<Variant>().is_err());
    }

    #[test]
    fn validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            tau: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
