//! Command-line front end: `fit`, `predict`, `simulate` and `eigen`.
//!
//! Settings come from an optional flat `key = value` file and from flags;
//! a flag wins over the same key in the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::engine::{
    eigendecompose, fit, predict_scores, psd_project, reconstruct, select_num_components, Bandwidth,
    FitConfig, Ridge, SparseFunctionalSample, Variant,
};
use crate::error::{FpcaError, Result};
use crate::io;
use crate::simulation::{run_monte_carlo, Model, MonteCarloSpec, SimulationReport, METRICS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "robust-fpca", version, about = "Robust functional PCA for sparsely observed curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate mean, covariance, eigenfunctions and scores from a curve table.
    Fit(Flags),
    /// Scores and reconstructions for new curves from a stored fit.
    Predict(Flags),
    /// Monte Carlo study on the simulation models.
    Simulate(Flags),
    /// Eigen-analysis of a stored covariance surface.
    Eigen(Flags),
}

/// Flags shared by every command. Each one maps to the config key of the
/// same name (with `-` read as `_`).
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Input table (`curve_id,t,x`), or a covariance file for `eigen`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Flat `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory written by `fit` (for `predict`).
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// rob or ls (`simulate` also accepts both).
    #[arg(long)]
    pub variant: Option<String>,
    /// Mean bandwidth, or `auto` for cross-validation.
    #[arg(long = "h-mean")]
    pub h_mean: Option<String>,
    /// Covariance bandwidth, or `auto` for cross-validation.
    #[arg(long = "h-cov")]
    pub h_cov: Option<String>,
    /// Number of grid points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Absolute ridge added before solving for scores.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Variance fraction for the number of components.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fixed number of components.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Comma-separated candidate bandwidths.
    #[arg(long)]
    pub candidates: Option<String>,
    /// Surface smoother bandwidth in grid steps.
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Domain endpoints; defaults to the observed range.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub domain: Option<Vec<f64>>,
    /// Worker threads for `simulate`.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Simulation model, 1 or 2.
    #[arg(long)]
    pub model: Option<String>,
    /// Contamination fraction(s), comma-separated.
    #[arg(long)]
    pub eps: Option<String>,
    /// Replications per design cell.
    #[arg(long = "R")]
    pub replications: Option<usize>,
    /// Curves per simulated sample.
    #[arg(long = "n")]
    pub n_curves: Option<usize>,
    /// Re-select bandwidths in every replication.
    #[arg(long)]
    pub reselect: bool,
}

/// Known keys with their defaults.
pub const KEYS: [(&str, &str); 22] = [
    ("data", "-"),
    ("out", "out"),
    ("fit", "-"),
    ("variant", "rob"),
    ("h_mean", "auto"),
    ("h_cov", "auto"),
    ("grid", "50"),
    ("delta", "auto"),
    ("tau", "0.9"),
    ("components", "auto"),
    ("seed", "0"),
    ("folds", "5"),
    ("candidates", "auto"),
    ("smoothing", "2"),
    ("domain", "auto"),
    ("jobs", "auto"),
    ("model", "1"),
    ("eps", "0"),
    ("R", "100"),
    ("n", "100"),
    ("reselect", "false"),
    ("config", "-"),
];

impl Flags {
    fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("data", path(&self.data));
        put("out", path(&self.out));
        put("fit", path(&self.fit));
        put("variant", self.variant.clone());
        put("h_mean", self.h_mean.clone());
        put("h_cov", self.h_cov.clone());
        put("grid", self.grid.map(|v| v.to_string()));
        put("delta", self.delta.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("components", self.components.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("folds", self.folds.map(|v| v.to_string()));
        put("candidates", self.candidates.clone());
        put("smoothing", self.smoothing.map(|v| v.to_string()));
        put("domain", self.domain.as_ref().map(|d| format!("{} {}", d[0], d[1])));
        put("jobs", self.jobs.map(|v| v.to_string()));
        put("model", self.model.clone());
        put("eps", self.eps.clone());
        put("R", self.replications.map(|v| v.to_string()));
        put("n", self.n_curves.map(|v| v.to_string()));
        put("reselect", self.reselect.then(|| "true".to_string()));
        m
    }
}

/// Settings after merging the file and the flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub fit_dir: Option<PathBuf>,
    /// More than one only for `simulate` with `variant = both`.
    pub variants: Vec<Variant>,
    pub fit: FitConfig,
    pub delta: Option<f64>,
    pub domain: Option<(f64, f64)>,
    pub jobs: Option<usize>,
    pub model: Model,
    pub eps: Vec<f64>,
    pub replications: usize,
    pub n_curves: usize,
    pub reselect: bool,
    /// Effective value of every key, for manifests.
    pub echo: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str, what: &str) -> FpcaError {
    FpcaError::InvalidConfig(format!("`{key} = {value}`: {what}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "not a valid number"))
}

fn auto(v: &str) -> bool {
    v.eq_ignore_ascii_case("auto")
}

impl RunConfig {
    /// Merges settings; keys in `flags` override those in `file`.
    pub fn from_maps(file: &BTreeMap<String, String>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in file.iter().chain(flags) {
            if !map.contains_key(k) {
                return Err(FpcaError::InvalidConfig(format!("unknown key `{k}`")));
            }
            map.insert(k.clone(), v.clone());
        }
        let get = |k: &str| map[k].as_str();
        let path = |k: &str| (get(k) != "-").then(|| PathBuf::from(get(k)));

        let variants = match get("variant").to_ascii_lowercase().as_str() {
            "both" => vec![Variant::Robust, Variant::LeastSquares],
            v => vec![v.parse()?],
        };
        let mut fit = FitConfig::for_variant(variants[0]);
        fit.h_mean = get("h_mean").parse()?;
        fit.h_cov = get("h_cov").parse()?;
        fit.grid_points = num("grid", get("grid"))?;
        fit.tau = num("tau", get("tau"))?;
        fit.seed = num("seed", get("seed"))?;
        fit.cv.folds = num("folds", get("folds"))?;
        fit.surface_smoothing_steps = num("smoothing", get("smoothing"))?;
        if !auto(get("components")) {
            fit.n_components = Some(num("components", get("components"))?);
        }
        if !auto(get("candidates")) {
            let c = get("candidates")
                .split(',')
                .map(|s| num::<f64>("candidates", s.trim()))
                .collect::<Result<Vec<_>>>()?;
            fit.cv.candidates = Some(c);
        }
        let delta = if auto(get("delta")) {
            None
        } else {
            let d: f64 = num("delta", get("delta"))?;
            if !(d >= 0.0 && d.is_finite()) {
                return Err(bad("delta", get("delta"), "must be a non-negative number"));
            }
            fit.ridge = Ridge::Absolute(d);
            Some(d)
        };
        let domain = if auto(get("domain")) {
            None
        } else {
            let parts: Vec<&str> = get("domain").split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if parts.len() != 2 {
                return Err(bad("domain", get("domain"), "expected two numbers"));
            }
            Some((num("domain", parts[0])?, num("domain", parts[1])?))
        };
        fit.validate()?;
        let jobs = if auto(get("jobs")) {
            None
        } else {
            Some(num("jobs", get("jobs"))?)
        };
        let eps = get("eps")
            .split(',')
            .map(|s| num::<f64>("eps", s.trim()))
            .collect::<Result<Vec<_>>>()?;
        let reselect = match get("reselect") {
            "true" => true,
            "false" => false,
            v => return Err(bad("reselect", v, "expected true or false")),
        };
        Ok(RunConfig {
            data: path("data"),
            out: PathBuf::from(get("out")),
            fit_dir: path("fit"),
            variants,
            fit,
            delta,
            domain,
            jobs,
            model: get("model").parse()?,
            eps,
            replications: num("R", get("R"))?,
            n_curves: num("n", get("n"))?,
            reselect,
            echo: map,
        })
    }

    pub fn from_flags(flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| FpcaError::Io(format!("{}: {e}", p.display())))?;
                io::parse_key_values(&text)?
            }
            None => BTreeMap::new(),
        };
        Self::from_maps(&file, &flags.to_map())
    }

    fn single_variant(&self) -> Result<Variant> {
        match self.variants.as_slice() {
            [v] => Ok(*v),
            _ => Err(FpcaError::InvalidConfig("`variant = both` is only valid for simulate".into())),
        }
    }

    fn require_data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| FpcaError::InvalidConfig("missing `data` (use --data)".into()))
    }

    fn echo_keys(&self, keys: &[&str]) -> String {
        let mut s = String::from("[config]\n");
        for k in keys {
            let _ = writeln!(s, "{k} = {}", self.echo[*k]);
        }
        s
    }
}

const FIT_KEYS: [&str; 13] = [
    "data", "variant", "h_mean", "h_cov", "grid", "delta", "tau", "components", "seed", "folds", "candidates",
    "smoothing", "domain",
];

fn make_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FpcaError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FpcaError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| FpcaError::Io(format!("{}: {e}", path.display())))
}

/// `fit`: writes mean, covariance, eigen, scores, fitted curves and a
/// manifest into the output directory. Returns the summary line.
pub fn cmd_fit(cfg: &RunConfig) -> Result<String> {
    let start = Instant::now();
    let mut config = cfg.fit.clone();
    config.variant = cfg.single_variant()?;
    let sample = io::ingest(cfg.require_data()?, cfg.domain)?;
    let fitted = fit(&sample, &config)?;
    make_out(&cfg.out)?;
    io::write_fit_artifacts(&fitted, &cfg.out)?;

    let mut manifest = format!("# robust-fpca {VERSION}\n");
    manifest += &cfg.echo_keys(&FIT_KEYS);
    manifest += "[result]\n";
    let _ = writeln!(manifest, "version = {VERSION}");
    let _ = writeln!(manifest, "curves = {}", sample.len());
    let _ = writeln!(manifest, "observations = {}", sample.n_observations());
    let _ = writeln!(manifest, "domain_a = {}", io::fmt_num(sample.domain.0));
    let _ = writeln!(manifest, "domain_b = {}", io::fmt_num(sample.domain.1));
    let _ = writeln!(manifest, "bandwidth_mean = {}", io::fmt_num(fitted.h_mean));
    let _ = writeln!(manifest, "bandwidth_cov = {}", io::fmt_num(fitted.h_cov));
    let _ = writeln!(manifest, "ridge = {}", io::fmt_num(fitted.scores.ridge));
    let _ = writeln!(manifest, "n_components = {}", fitted.n_components());
    let _ = writeln!(manifest, "wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    write_text(&cfg.out.join(io::MANIFEST_FILE), &manifest)?;

    let lead: Vec<String> = fitted.eigen.values.iter().take(fitted.n_components()).map(|v| format!("{v:.6}")).collect();
    Ok(format!(
        "fitted {} curves: h_mean {:.4}, h_cov {:.4}, K = {} (eigenvalues {})",
        sample.len(),
        fitted.h_mean,
        fitted.h_cov,
        fitted.n_components(),
        lead.join(", ")
    ))
}

/// `predict`: scores and grid reconstructions for the curves in `data`
/// using the estimates stored by `fit`.
pub fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let dir = cfg
        .fit_dir
        .as_deref()
        .ok_or_else(|| FpcaError::InvalidConfig("missing `fit` directory (use --fit)".into()))?;
    let stored = io::read_fit_artifacts(dir)?;
    let data = cfg.require_data()?;
    let curves = io::read_curve_list(fs::File::open(data).map_err(|e| FpcaError::Io(format!("{}: {e}", data.display())))?, &data.display().to_string())?;
    let grid = stored.mean.grid;
    let (mut a, mut b) = (grid.a, grid.b);
    for c in &curves {
        for t in &c.times {
            if *t < grid.a || *t > grid.b {
                eprintln!(
                    "warning: curve `{}` has time {t} outside the fitted domain [{}, {}]; estimates are clamped",
                    c.id, grid.a, grid.b
                );
            }
            a = a.min(*t);
            b = b.max(*t);
        }
    }
    let sample = SparseFunctionalSample::new(curves, (a, b))?;
    let k = stored.n_components;
    let scores = predict_scores(&sample, &stored.mean, &stored.surface, &stored.eigen, stored.ridge, k)?;
    let fitted = reconstruct(&scores, &stored.eigen, &stored.mean, k);
    make_out(&cfg.out)?;
    io::write_predictions(&scores, &grid, &fitted, &cfg.out)?;
    Ok(format!("predicted {} curves with K = {k}", sample.len()))
}

/// `eigen`: decomposes the surface in `data` and writes `eigen.csv`.
pub fn cmd_eigen(cfg: &RunConfig) -> Result<String> {
    let data = cfg.require_data()?;
    let surface = io::read_surface(fs::File::open(data).map_err(|e| FpcaError::Io(format!("{}: {e}", data.display())))?)?;
    let eigen = eigendecompose(&psd_project(&surface));
    let k = match cfg.fit.n_components {
        Some(k) => k.min(eigen.values.len()),
        None => select_num_components(&eigen.values, cfg.fit.tau)?,
    };
    let eigen = eigen.with_components(k);
    make_out(&cfg.out)?;
    io::write_eigen(&eigen, std::io::BufWriter::new(create(&cfg.out.join(io::EIGEN_FILE))?))?;
    let total = eigen.total_variance();
    let mut s = format!("K = {k} at tau = {}\n", cfg.fit.tau);
    let mut acc = 0.0;
    for (j, v) in eigen.values.iter().take(k.max(5).min(eigen.values.len())).enumerate() {
        acc += v.max(0.0);
        let _ = writeln!(s, "{:>3} {:>14.6e} {:>8.4}", j + 1, v, acc / total);
    }
    Ok(s.trim_end().to_string())
}

/// Runs every `(eps, variant)` cell of the design.
pub fn simulation_reports(cfg: &RunConfig) -> Result<Vec<SimulationReport>> {
    let mut reports = Vec::new();
    for &eps in &cfg.eps {
        for &variant in &cfg.variants {
            let mut spec = MonteCarloSpec::new(cfg.model, eps, variant, cfg.replications, cfg.fit.seed);
            spec.n_curves = cfg.n_curves;
            spec.jobs = cfg.jobs;
            spec.reselect = cfg.reselect;
            spec.tau = cfg.fit.tau;
            if let Some(k) = cfg.fit.n_components {
                spec.components = k;
            }
            if let (Bandwidth::Fixed(hm), Bandwidth::Fixed(hc)) = (cfg.fit.h_mean, cfg.fit.h_cov) {
                spec.bandwidths = Some((hm, hc));
            }
            reports.push(run_monte_carlo(&spec)?);
        }
    }
    Ok(reports)
}

/// `simulate`: per-replication report, failures, aggregate table and one
/// plot-data file per metric.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let start = Instant::now();
    let reports = simulation_reports(cfg)?;
    make_out(&cfg.out)?;

    let mut rows: Vec<u8> = Vec::new();
    let mut failures: Vec<u8> = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        let mut fbuf = Vec::new();
        r.write_failures(&mut fbuf)?;
        // Keep one header for the concatenated files.
        let skip = |b: &[u8]| b.iter().position(|c| *c == b'\n').map_or(b.len(), |p| p + 1);
        if i == 0 {
            rows.extend_from_slice(&buf);
            failures.extend_from_slice(&fbuf);
        } else {
            rows.extend_from_slice(&buf[skip(&buf)..]);
            failures.extend_from_slice(&fbuf[skip(&fbuf)..]);
        }
    }
    fs::write(cfg.out.join("report.csv"), rows)?;
    fs::write(cfg.out.join("failures.csv"), failures)?;

    for metric in METRICS {
        let mut w = csv::Writer::from_writer(create(&cfg.out.join(format!("plot_{metric}.csv")))?);
        w.write_record(["model", "eps", "variant", "k", "replication", "value"])?;
        for r in &reports {
            for rec in &r.records {
                let Ok(m) = &rec.outcome else { continue };
                for (k, v) in m.values(metric) {
                    w.write_record([
                        r.spec.model.to_string(),
                        r.spec.eps.to_string(),
                        r.spec.variant.to_string(),
                        k.to_string(),
                        rec.replication.to_string(),
                        io::fmt_num(v),
                    ])?;
                }
            }
        }
        w.flush()?;
    }

    let table: String = reports.iter().map(|r| r.aggregate_table() + "\n").collect();
    write_text(&cfg.out.join("aggregate.txt"), &table)?;
    let mut manifest = format!("# robust-fpca {VERSION}\n");
    manifest += &cfg.echo_keys(&[
        "model", "eps", "variant", "R", "n", "seed", "h_mean", "h_cov", "tau", "components", "reselect",
    ]);
    manifest += "[result]\n";
    let _ = writeln!(manifest, "version = {VERSION}");
    let _ = writeln!(manifest, "failures = {}", reports.iter().map(|r| r.n_failures()).sum::<usize>());
    let _ = writeln!(manifest, "wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    write_text(&cfg.out.join(io::MANIFEST_FILE), &manifest)?;
    Ok(table.trim_end().to_string())
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (flags, cmd): (&Flags, fn(&RunConfig) -> Result<String>) = match &cli.command {
        Command::Fit(f) => (f, cmd_fit),
        Command::Predict(f) => (f, cmd_predict),
        Command::Simulate(f) => (f, cmd_simulate),
        Command::Eigen(f) => (f, cmd_eigen),
    };
    match RunConfig::from_flags(flags).and_then(|cfg| cmd(&cfg)) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
