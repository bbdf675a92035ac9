use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use super::metrics::{
    alignment, frobenius_cell_mean, frobenius_discrepancy, log_ratio_loss, relative_loss, score_metrics,
};
use super::models::{contaminate, generate, Model, METRIC_GRID_POINTS};
use crate::engine::{fit, select_num_components, Bandwidth, FitConfig, FpcaFit, Variant};
use crate::error::{FpcaError, Result};

/// Names of the per-replication metrics, in report order. The first three
/// are scalar; the rest are reported per component.
pub const METRICS: [&str; 9] = [
    "frob_sq",
    "frob_sq_sum",
    "selected_k",
    "log_ratio_loss",
    "relative_loss",
    "alignment",
    "mse",
    "m2",
    "sign_flip",
];

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSpec {
    pub model: Model,
    pub eps: f64,
    pub variant: Variant,
    pub replications: usize,
    pub n_curves: usize,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Re-run cross-validation in every replication instead of reusing the
    /// bandwidths chosen on the first one.
    pub reselect: bool,
    /// Fixed `(h_mean, h_cov)`; skips cross-validation entirely.
    pub bandwidths: Option<(f64, f64)>,
    /// Components compared against the truth.
    pub components: usize,
    pub tau: f64,
}

impl MonteCarloSpec {
    pub fn new(model: Model, eps: f64, variant: Variant, replications: usize, seed: u64) -> Self {
        MonteCarloSpec {
            model,
            eps,
            variant,
            replications,
            n_curves: 100,
            seed,
            jobs: None,
            reselect: false,
            bandwidths: None,
            components: 2,
            tau: 0.9,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(FpcaError::InvalidConfig("need at least one replication".into()));
        }
        if self.n_curves < 2 {
            return Err(FpcaError::InvalidConfig("need at least two curves per sample".into()));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(FpcaError::InvalidConfig(format!(
                "contamination fraction must lie in [0, 1), got {}",
                self.eps
            )));
        }
        if self.jobs == Some(0) {
            return Err(FpcaError::InvalidConfig("jobs must be positive".into()));
        }
        Ok(())
    }

    fn fit_config(&self, seed: u64, bandwidths: Option<(f64, f64)>) -> FitConfig {
        let mut config = FitConfig::for_variant(self.variant);
        config.grid_points = METRIC_GRID_POINTS;
        config.n_components = Some(self.components);
        config.tau = self.tau;
        config.seed = seed;
        if let Some((hm, hc)) = bandwidths {
            config.h_mean = Bandwidth::Fixed(hm);
            config.h_cov = Bandwidth::Fixed(hc);
        }
        config
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `r`, independent of scheduling.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    mix(mix(master) ^ (r as u64).wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Everything measured on one replication. Per-component vectors have one
/// entry per compared component.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationMetrics {
    /// Squared Frobenius discrepancy averaged over the grid cells.
    pub frob_sq: f64,
    /// The same discrepancy summed over the cells.
    pub frob_sq_sum: f64,
    pub selected_k: usize,
    pub log_ratio_loss: Vec<f64>,
    pub relative_loss: Vec<f64>,
    pub alignment: Vec<f64>,
    pub mse: Vec<f64>,
    pub m2: Vec<f64>,
    pub sign_flip: Vec<bool>,
    pub h_mean: f64,
    pub h_cov: f64,
    pub n_contaminated: usize,
}

impl ReplicationMetrics {
    /// Values of `metric` with their 1-based component index (0 for scalars).
    pub fn values(&self, metric: &str) -> Vec<(usize, f64)> {
        let per_k = |v: &[f64]| v.iter().enumerate().map(|(k, x)| (k + 1, *x)).collect();
        match metric {
            "frob_sq" => vec![(0, self.frob_sq)],
            "frob_sq_sum" => vec![(0, self.frob_sq_sum)],
            "selected_k" => vec![(0, self.selected_k as f64)],
            "log_ratio_loss" => per_k(&self.log_ratio_loss),
            "relative_loss" => per_k(&self.relative_loss),
            "alignment" => per_k(&self.alignment),
            "mse" => per_k(&self.mse),
            "m2" => per_k(&self.m2),
            "sign_flip" => per_k(&self.sign_flip.iter().map(|b| f64::from(u8::from(*b))).collect::<Vec<_>>()),
            other => panic!("unknown metric `{other}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub outcome: std::result::Result<ReplicationMetrics, String>,
}

/// Per-replication results of one design cell, in replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub spec: MonteCarloSpec,
    /// Bandwidths shared by the replications, when not re-selected.
    pub bandwidths: Option<(f64, f64)>,
    pub records: Vec<ReplicationRecord>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl SimulationReport {
    pub fn successes(&self) -> impl Iterator<Item = &ReplicationMetrics> {
        self.records.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn n_failures(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Successful values of `metric` for component `k` (0 for scalars), in
    /// replication order.
    pub fn series(&self, metric: &str, k: usize) -> Vec<f64> {
        self.successes()
            .filter_map(|m| m.values(metric).into_iter().find(|(j, _)| *j == k).map(|(_, v)| v))
            .collect()
    }

    pub fn mean(&self, metric: &str, k: usize) -> f64 {
        let s = self.series(metric, k);
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn median(&self, metric: &str, k: usize) -> f64 {
        median(self.series(metric, k))
    }

    /// Label of the design cell, e.g. `model1_eps0.10_rob`.
    pub fn label(&self) -> String {
        format!("model{}_eps{:.2}_{}", self.spec.model, self.spec.eps, self.spec.variant)
    }

    /// One row per replication, metric and component.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "eps", "variant", "replication", "seed", "metric", "k", "value"])?;
        let head = [self.spec.model.to_string(), self.spec.eps.to_string(), self.spec.variant.to_string()];
        for r in &self.records {
            let Ok(m) = &r.outcome else { continue };
            for metric in METRICS {
                for (k, v) in m.values(metric) {
                    let k = if k == 0 { String::new() } else { k.to_string() };
                    w.write_record(
                        head.iter()
                            .cloned()
                            .chain([r.replication.to_string(), r.seed.to_string(), metric.to_string(), k, format!("{v:.16e}")]),
                    )?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Failed replications with their error messages.
    pub fn write_failures<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "eps", "variant", "replication", "seed", "error"])?;
        for r in &self.records {
            if let Err(e) = &r.outcome {
                w.write_record([
                    self.spec.model.to_string(),
                    self.spec.eps.to_string(),
                    self.spec.variant.to_string(),
                    r.replication.to_string(),
                    r.seed.to_string(),
                    e.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mean and median of every metric, for printing.
    pub fn aggregate_table(&self) -> String {
        let mut s = String::new();
        let ok = self.records.len() - self.n_failures();
        let _ = writeln!(
            s,
            "model {}  eps {:.2}  variant {}  replications {} ({} failed)",
            self.spec.model,
            self.spec.eps,
            self.spec.variant,
            self.records.len(),
            self.n_failures()
        );
        if let Some((hm, hc)) = self.bandwidths {
            let _ = writeln!(s, "bandwidths  h_mean {hm:.4}  h_cov {hc:.4}");
        }
        if ok == 0 {
            return s;
        }
        let _ = writeln!(s, "{:<16} {:>3} {:>14} {:>14}", "metric", "k", "mean", "median");
        let first = self.successes().next().expect("at least one success");
        for metric in METRICS {
            for (k, _) in first.values(metric) {
                let kk = if k == 0 { "-".to_string() } else { k.to_string() };
                let _ = writeln!(
                    s,
                    "{:<16} {:>3} {:>14.6} {:>14.6}",
                    metric,
                    kk,
                    self.mean(metric, k),
                    self.median(metric, k)
                );
            }
        }
        s
    }
}

/// Runs one replication; returns its metrics and the fitted bandwidths.
pub fn run_replication(spec: &MonteCarloSpec, r: usize, bandwidths: Option<(f64, f64)>) -> Result<ReplicationMetrics> {
    let seed = replication_seed(spec.seed, r);
    let clean = generate(spec.model, spec.n_curves, seed);
    let sim = contaminate(&clean, spec.eps, seed);
    let config = spec.fit_config(seed, bandwidths);
    let fitted = fit(&sim.sample, &config)?;
    evaluate(spec, &sim, &fitted)
}

fn evaluate(spec: &MonteCarloSpec, sim: &super::models::SimulatedSample, fitted: &FpcaFit) -> Result<ReplicationMetrics> {
    let truth = &sim.truth;
    let grid = fitted.surface.grid;
    let gamma = truth.covariance_on(&grid);
    let k = spec.components.min(truth.q()).min(fitted.eigen.values.len());
    let mut out = ReplicationMetrics {
        frob_sq: frobenius_cell_mean(&fitted.surface.matrix, &gamma),
        frob_sq_sum: frobenius_discrepancy(&fitted.surface.matrix, &gamma),
        selected_k: select_num_components(&fitted.eigen.values, spec.tau).unwrap_or(0),
        log_ratio_loss: Vec::with_capacity(k),
        relative_loss: Vec::with_capacity(k),
        alignment: Vec::with_capacity(k),
        mse: Vec::new(),
        m2: Vec::new(),
        sign_flip: Vec::new(),
        h_mean: fitted.h_mean,
        h_cov: fitted.h_cov,
        n_contaminated: sim.n_contaminated(),
    };
    for j in 0..k {
        let (est, lam) = (fitted.eigen.values[j], truth.eigenvalues[j]);
        out.log_ratio_loss.push(log_ratio_loss(est, lam));
        out.relative_loss.push(relative_loss(est, lam));
        out.alignment
            .push(alignment(&fitted.eigen.function(j), &truth.eigenfunction_on(j, &grid), &grid));
    }
    let kk = k.min(fitted.scores.n_components());
    let est = fitted.scores.scores.columns(0, kk).into_owned();
    let xi = sim.scores().columns(0, kk).into_owned();
    let sm = score_metrics(&est, &xi, &sim.flags)?;
    out.mse = sm.mse;
    out.m2 = sm.m2;
    out.sign_flip = sm.flipped;
    Ok(out)
}

/// Runs a design cell. Failures of single replications are recorded, not
/// propagated.
pub fn run_monte_carlo(spec: &MonteCarloSpec) -> Result<SimulationReport> {
    spec.validate()?;
    let run = || -> SimulationReport {
        let mut records: Vec<Option<ReplicationRecord>> = vec![None; spec.replications];
        // Bandwidths come from the first replication whose selection succeeds.
        let mut shared = spec.bandwidths;
        let mut start = 0;
        if shared.is_none() && !spec.reselect {
            while start < spec.replications && shared.is_none() {
                let seed = replication_seed(spec.seed, start);
                let clean = generate(spec.model, spec.n_curves, seed);
                let sim = contaminate(&clean, spec.eps, seed);
                let outcome = fit(&sim.sample, &spec.fit_config(seed, None)).and_then(|f| {
                    shared = Some((f.h_mean, f.h_cov));
                    evaluate(spec, &sim, &f)
                });
                records[start] = Some(ReplicationRecord {
                    replication: start,
                    seed,
                    outcome: outcome.map_err(|e| e.to_string()),
                });
                start += 1;
            }
        }
        let rest: Vec<ReplicationRecord> = (start..spec.replications)
            .into_par_iter()
            .map(|r| ReplicationRecord {
                replication: r,
                seed: replication_seed(spec.seed, r),
                outcome: run_replication(spec, r, shared).map_err(|e| e.to_string()),
            })
            .collect();
        for rec in rest {
            let r = rec.replication;
            records[r] = Some(rec);
        }
        SimulationReport {
            spec: spec.clone(),
            bandwidths: if spec.reselect { None } else { shared },
            records: records.into_iter().map(|r| r.expect("every replication ran")).collect(),
        }
    };
    match spec.jobs {
        None => Ok(run()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| FpcaError::InvalidConfig(e.to_string()))?;
            Ok(pool.install(run))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_and_repeat() {
        let a: Vec<u64> = (0..100).map(|r| replication_seed(42, r)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(replication_seed(42, 7), a[7]);
        assert_ne!(replication_seed(43, 7), a[7]);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = MonteCarloSpec::new(Model::One, 0.0, Variant::Robust, 0, 1);
        assert!(run_monte_carlo(&s).is_err());
        s.replications = 1;
        s.eps = 1.0;
        assert!(run_monte_carlo(&s).is_err());
    }

    #[test]
    fn single_replication_report() {
        let mut s = MonteCarloSpec::new(Model::One, 0.1, Variant::Robust, 1, 3);
        s.bandwidths = Some((1.5, 2.0));
        let rep = run_monte_carlo(&s).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.n_failures(), 0);
        let m = rep.successes().next().unwrap();
        assert_eq!(m.alignment.len(), 2);
        assert!(m.alignment.iter().all(|a| (0.0..=1.0).contains(a)));
        assert!((m.frob_sq * 2500.0 - m.frob_sq_sum).abs() < 1e-9 * m.frob_sq_sum.max(1.0));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains(",frob_sq,")).count(), 1);
    }
}
