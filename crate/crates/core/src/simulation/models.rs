//! The two simulation models, their true covariance structure and the
//! score-shift contamination schemes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bessel::Matern;
use crate::engine::{Curve, GridSpec, SparseFunctionalSample};
use crate::error::{FpcaError, Result};

/// Points of the dense grid on which the Model 2 eigenfunctions are tabulated.
pub const REFERENCE_POINTS: usize = 501;
/// Points of the grid on which surfaces are compared.
pub const METRIC_GRID_POINTS: usize = 50;

const MODEL2_EIGENVALUES: [f64; 4] = [0.83, 0.08, 0.029, 0.015];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    One,
    Two,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::One => "1",
            Model::Two => "2",
        })
    }
}

impl FromStr for Model {
    type Err = FpcaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Model::One),
            "2" => Ok(Model::Two),
            other => Err(FpcaError::InvalidConfig(format!("unknown model `{other}`, expected 1 or 2"))),
        }
    }
}

/// Eigenfunctions tabulated on a dense equispaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBasis {
    pub grid: GridSpec,
    /// Row `k` holds `φₖ` on the grid.
    pub functions: Vec<Vec<f64>>,
    /// Leading eigenvalues of the discretised kernel operator.
    pub operator_eigenvalues: Vec<f64>,
}

/// Known mean, eigenvalues and eigenfunctions of a simulation model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTruth {
    pub model: Model,
    pub domain: (f64, f64),
    pub eigenvalues: Vec<f64>,
    /// Only for models without closed-form eigenfunctions.
    pub reference: Option<ReferenceBasis>,
}

impl ModelTruth {
    pub fn model1() -> Self {
        ModelTruth {
            model: Model::One,
            domain: (0.0, 10.0),
            eigenvalues: vec![4.0, 1.0],
            reference: None,
        }
    }

    pub fn for_model(model: Model) -> Arc<ModelTruth> {
        match model {
            Model::One => Arc::new(Self::model1()),
            Model::Two => model2_truth(),
        }
    }

    pub fn q(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self, t: f64) -> f64 {
        match self.model {
            Model::One => t + t.sin(),
            Model::Two => 10.0 * (2.0 * PI * t).sin() * (-3.0 * t).exp(),
        }
    }

    pub fn eigenfunction(&self, k: usize, t: f64) -> f64 {
        match (self.model, &self.reference) {
            (Model::One, _) => match k {
                0 => -(t * PI / 10.0).cos() / 5f64.sqrt(),
                1 => (t * PI / 10.0).sin() / 5f64.sqrt(),
                _ => panic!("Model 1 has two components"),
            },
            (Model::Two, Some(r)) => r.grid.interpolate(&r.functions[k], t),
            (Model::Two, None) => unreachable!("Model 2 truth always carries its reference basis"),
        }
    }

    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        (0..self.q())
            .map(|k| self.eigenvalues[k] * self.eigenfunction(k, s) * self.eigenfunction(k, t))
            .sum()
    }

    /// The equispaced grid on which surfaces are compared.
    pub fn metric_grid(&self) -> GridSpec {
        GridSpec::new(self.domain.0, self.domain.1, METRIC_GRID_POINTS).expect("valid domain")
    }

    pub fn covariance_on(&self, grid: &GridSpec) -> DMatrix<f64> {
        let pts = grid.points();
        let phi: Vec<Vec<f64>> = (0..self.q())
            .map(|k| pts.iter().map(|t| self.eigenfunction(k, *t)).collect())
            .collect();
        DMatrix::from_fn(grid.m, grid.m, |i, j| {
            (0..self.q()).map(|k| self.eigenvalues[k] * phi[k][i] * phi[k][j]).sum()
        })
    }

    pub fn eigenfunction_on(&self, k: usize, grid: &GridSpec) -> Vec<f64> {
        grid.points().iter().map(|t| self.eigenfunction(k, *t)).collect()
    }

    /// Curve value for standardized scores `z`.
    pub fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.mean(t)
            + z.iter()
                .enumerate()
                .map(|(k, zk)| self.eigenvalues[k].sqrt() * zk * self.eigenfunction(k, t))
                .sum::<f64>()
    }
}

/// Truth for Model 2, computed once per process.
pub fn model2_truth() -> Arc<ModelTruth> {
    static CELL: OnceLock<Arc<ModelTruth>> = OnceLock::new();
    CELL.get_or_init(|| Arc::new(build_model2_truth())).clone()
}

fn build_model2_truth() -> ModelTruth {
    let kernel = Matern::model_two();
    let grid = GridSpec::new(0.0, 1.0, REFERENCE_POINTS).expect("valid grid");
    let m = grid.m;
    let step = grid.step();
    // Stationary kernel on an equispaced grid: one evaluation per lag.
    let by_lag: Vec<f64> = (0..m).map(|l| kernel.cov(0.0, l as f64 * step)).collect();
    let sqrt_w: Vec<f64> = grid.quadrature_weights().iter().map(|w| w.sqrt()).collect();
    let weighted = DMatrix::from_fn(m, m, |i, j| sqrt_w[i] * by_lag[i.abs_diff(j)] * sqrt_w[j]);
    let eig = SymmetricEigen::new(weighted);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let q = MODEL2_EIGENVALUES.len();
    let mut functions = Vec::with_capacity(q);
    for &col in order.iter().take(q) {
        let mut f: Vec<f64> = (0..m).map(|i| eig.eigenvectors[(i, col)] / sqrt_w[i]).collect();
        if f.iter().sum::<f64>() < 0.0 {
            f.iter_mut().for_each(|v| *v = -*v);
        }
        functions.push(f);
    }
    let operator_eigenvalues = order.iter().take(8).map(|c| eig.eigenvalues[*c]).collect();
    ModelTruth {
        model: Model::Two,
        domain: (0.0, 1.0),
        eigenvalues: MODEL2_EIGENVALUES.to_vec(),
        reference: Some(ReferenceBasis {
            grid,
            functions,
            operator_eigenvalues,
        }),
    }
}

/// A generated sample together with what generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub sample: SparseFunctionalSample,
    pub truth: Arc<ModelTruth>,
    /// Standardized scores `Z`, one row per curve.
    pub z: DMatrix<f64>,
    /// Contamination indicators `Bᵢ`.
    pub flags: Vec<bool>,
}

impl SimulatedSample {
    /// True scores `ξᵢₖ = √λₖ Zᵢₖ`.
    pub fn scores(&self) -> DMatrix<f64> {
        let mut xi = self.z.clone();
        for (k, mut col) in xi.column_iter_mut().enumerate() {
            col *= self.truth.eigenvalues[k].sqrt();
        }
        xi
    }

    pub fn n_contaminated(&self) -> usize {
        self.flags.iter().filter(|b| **b).count()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn build(truth: Arc<ModelTruth>, times: Vec<Vec<f64>>, rng: &mut ChaCha8Rng) -> SimulatedSample {
    let n = times.len();
    let q = truth.q();
    let z = DMatrix::from_fn(n, q, |_, _| 0.0);
    let mut z = z;
    let mut curves = Vec::with_capacity(n);
    for (i, t) in times.into_iter().enumerate() {
        for k in 0..q {
            z[(i, k)] = gaussian(rng);
        }
        let zi: Vec<f64> = z.row(i).iter().copied().collect();
        let values = t.iter().map(|s| truth.value(*s, &zi)).collect();
        curves.push(Curve::new((i + 1).to_string(), t, values).expect("generated curve is valid"));
    }
    let sample = SparseFunctionalSample::new(curves, truth.domain).expect("generated sample is valid");
    SimulatedSample {
        sample,
        truth,
        z,
        flags: vec![false; n],
    }
}

/// Model 1: `n` curves on `[0, 10]` with 2 to 4 observations at jittered grid sites.
pub fn generate_model1(n: usize, seed: u64) -> SimulatedSample {
    assert!(n >= 1, "need at least one curve");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter_sd = 0.1f64.sqrt();
    // Interior sites s_2..s_50 of the 51-point grid, jittered once per sample.
    let sites: Vec<f64> = (1..50)
        .map(|l| (l as f64 * 0.2 + jitter_sd * gaussian(&mut rng)).clamp(0.0, 10.0))
        .collect();
    let times: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let ni = rng.gen_range(2..=4);
            let mut t: Vec<f64> = index::sample(&mut rng, sites.len(), ni).iter().map(|j| sites[j]).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        })
        .collect();
    build(ModelTruth::for_model(Model::One), times, &mut rng)
}

/// Model 2: `n` curves on `[0, 1]` with 3 to 5 uniform observation times.
pub fn generate_model2(n: usize, seed: u64) -> SimulatedSample {
    assert!(n >= 1, "need at least one curve");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let ni = rng.gen_range(3..=5);
            let mut t: Vec<f64> = (0..ni).map(|_| rng.gen::<f64>()).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        })
        .collect();
    build(model2_truth(), times, &mut rng)
}

pub fn generate(model: Model, n: usize, seed: u64) -> SimulatedSample {
    match model {
        Model::One => generate_model1(n, seed),
        Model::Two => generate_model2(n, seed),
    }
}

/// Fraction of curves whose scores are replaced by outlying ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationSpec {
    pub eps: f64,
    pub model: Model,
}

impl ContaminationSpec {
    pub fn new(model: Model, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(FpcaError::InvalidConfig(format!(
                "contamination fraction must lie in [0, 1), got {eps}"
            )));
        }
        Ok(ContaminationSpec { eps, model })
    }
}

/// Replaces, with probability `eps` per curve, the second standardized score
/// by an `N(12, 1)` draw (Model 1) or the second and third by
/// `N((20, 25), diag(1/16))` (Model 2), keeping the observation times.
///
/// `eps` is not restricted here so that the fully contaminated law can be
/// inspected.
pub fn contaminate(sim: &SimulatedSample, eps: f64, seed: u64) -> SimulatedSample {
    assert!((0.0..=1.0).contains(&eps), "eps must lie in [0, 1]");
    let mut out = sim.clone();
    if eps == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for i in 0..out.sample.len() {
        if !rng.gen_bool(eps) {
            continue;
        }
        out.flags[i] = true;
        match out.truth.model {
            Model::One => out.z[(i, 1)] = 12.0 + gaussian(&mut rng),
            Model::Two => {
                out.z[(i, 1)] = 20.0 + 0.25 * gaussian(&mut rng);
                out.z[(i, 2)] = 25.0 + 0.25 * gaussian(&mut rng);
            }
        }
        let zi: Vec<f64> = out.z.row(i).iter().copied().collect();
        let curve = &mut out.sample.curves[i];
        for (v, t) in curve.values.iter_mut().zip(&curve.times) {
            *v = out.truth.value(*t, &zi);
        }
    }
    out
}
