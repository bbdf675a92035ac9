use crate::error::{FpcaError, Result};

/// One sparsely observed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub id: String,
    /// Observation times, strictly increasing.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    /// Builds a curve, sorting the observations by time.
    pub fn new(id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if times.len() != values.len() {
            return Err(FpcaError::InvalidInput(format!(
                "curve `{id}` has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(FpcaError::InvalidInput(format!("curve `{id}` has no observations")));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(FpcaError::InvalidInput(format!("curve `{id}` has non-finite entries")));
        }
        let mut idx: Vec<usize> = (0..times.len()).collect();
        idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let times: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let values = idx.iter().map(|&i| values[i]).collect();
        if times.windows(2).any(|w| w[0] == w[1]) {
            return Err(FpcaError::InvalidInput(format!("curve `{id}` repeats an observation time")));
        }
        Ok(Curve { id, times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A collection of sparsely observed curves on a common domain `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFunctionalSample {
    pub curves: Vec<Curve>,
    pub domain: (f64, f64),
}

impl SparseFunctionalSample {
    pub fn new(curves: Vec<Curve>, domain: (f64, f64)) -> Result<Self> {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(FpcaError::InvalidInput(format!("invalid domain [{a}, {b}]")));
        }
        if curves.is_empty() {
            return Err(FpcaError::InvalidInput("sample has no curves".into()));
        }
        for c in &curves {
            if c.times.iter().any(|t| *t < a || *t > b) {
                return Err(FpcaError::InvalidInput(format!(
                    "curve `{}` has times outside [{a}, {b}]",
                    c.id
                )));
            }
        }
        Ok(SparseFunctionalSample { curves, domain })
    }

    /// Builds a sample whose domain is the observed time range.
    pub fn with_observed_domain(curves: Vec<Curve>) -> Result<Self> {
        let lo = curves.iter().flat_map(|c| c.times.iter().copied()).fold(f64::INFINITY, f64::min);
        let hi = curves.iter().flat_map(|c| c.times.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
        Self::new(curves, (lo, hi))
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn n_observations(&self) -> usize {
        self.curves.iter().map(Curve::len).sum()
    }

    /// Sub-sample made of the curves at `indices`, same domain.
    pub fn subset(&self, indices: &[usize]) -> SparseFunctionalSample {
        SparseFunctionalSample {
            curves: indices.iter().map(|&i| self.curves[i].clone()).collect(),
            domain: self.domain,
        }
    }

    /// All observations pooled and sorted by time.
    pub(crate) fn pooled(&self) -> Pooled {
        let mut pts: Vec<(f64, f64)> = self
            .curves
            .iter()
            .flat_map(|c| c.times.iter().copied().zip(c.values.iter().copied()))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Pooled {
            times: pts.iter().map(|p| p.0).collect(),
            values: pts.iter().map(|p| p.1).collect(),
        }
    }
}

/// Pooled observations sorted by time, for windowed lookups.
#[derive(Debug, Clone)]
pub(crate) struct Pooled {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Pooled {
    /// Index range of observations with `|t − t0| ≤ h`.
    pub fn window(&self, t0: f64, h: f64) -> std::ops::Range<usize> {
        let lo = self.times.partition_point(|t| *t < t0 - h);
        let hi = self.times.partition_point(|t| *t <= t0 + h);
        lo..hi
    }

    pub fn count(&self, t0: f64, h: f64) -> usize {
        self.window(t0, h).len()
    }
}

/// Equidistant evaluation grid `a = g₁ < … < g_M = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

impl GridSpec {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(FpcaError::InvalidConfig(format!("grid needs at least 2 points, got {m}")));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(FpcaError::InvalidConfig(format!("invalid grid domain [{a}, {b}]")));
        }
        Ok(GridSpec { a, b, m })
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.m - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.m)
            .map(|i| if i + 1 == self.m { self.b } else { self.a + step * i as f64 })
            .collect()
    }

    /// Trapezoidal quadrature weights; `Σ wₘ f(gₘ) ≈ ∫ f`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.m)
            .map(|i| if i == 0 || i + 1 == self.m { 0.5 * step } else { step })
            .collect()
    }

    /// Locates `t` (clamped to the domain) as `(lower index, fraction)`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(self.a, self.b);
        let pos = (t - self.a) / self.step();
        let i = (pos.floor() as usize).min(self.m - 2);
        (i, (pos - i as f64).clamp(0.0, 1.0))
    }

    /// Linear interpolation of grid values at `t`, clamped at the ends.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let (i, f) = self.locate(t);
        if f == 0.0 {
            values[i]
        } else {
            values[i] + f * (values[i + 1] - values[i])
        }
    }
}
