//! Simulation models, contamination, evaluation metrics and the Monte Carlo
//! driver used to benchmark the robust and least-squares fits.

pub mod bessel;
pub mod metrics;
pub mod models;
pub mod monte_carlo;

pub use bessel::{bessel_k, matern_cov, Matern};
pub use metrics::{
    alignment, frobenius_cell_mean, frobenius_discrepancy, log_ratio_loss, relative_loss, score_metrics,
    spearman_rho, ScoreMetrics,
};
pub use models::{
    contaminate, generate, generate_model1, generate_model2, model2_truth, ContaminationSpec, Model, ModelTruth,
    SimulatedSample,
};
pub use monte_carlo::{
    replication_seed, run_monte_carlo, run_replication, MonteCarloSpec, ReplicationMetrics, ReplicationRecord,
    SimulationReport, METRICS,
};
