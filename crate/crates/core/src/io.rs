//! Curve tables and fit artifacts on disk.
//!
//! Every number is written with 17 significant digits so that a reload is
//! exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::engine::{
    Curve, EigenSystem, FpcaFit, GridSpec, MeanFunctionEstimate, ScoreMatrix, SparseFunctionalSample,
};
use crate::engine::CovarianceSurface;
use crate::error::{FpcaError, Result};

pub const CURVE_HEADER: [&str; 3] = ["curve_id", "t", "x"];

/// Round-trip decimal representation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_num(field: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| FpcaError::Parse {
        line,
        message: format!("{what} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(FpcaError::Parse {
            line,
            message: format!("{what} `{field}` is not finite"),
        });
    }
    Ok(v)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| FpcaError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| FpcaError::Io(format!("{}: {e}", path.display())))?,
    ))
}

/// Reads a `curve_id,t,x` table. Curves keep the order in which their ids
/// first appear. The domain is the observed time range unless given.
pub fn read_curves<R: Read>(reader: R, name: &str, domain: Option<(f64, f64)>) -> Result<SparseFunctionalSample> {
    let curves = read_curve_list(reader, name)?;
    match domain {
        Some(d) => SparseFunctionalSample::new(curves, d),
        None => SparseFunctionalSample::with_observed_domain(curves),
    }
}

/// The curves of a `curve_id,t,x` table, without a domain.
pub fn read_curve_list<R: Read>(reader: R, name: &str) -> Result<Vec<Curve>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(FpcaError::EmptyFile(name.to_string())),
        Some(h) => h?,
    };
    if header.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(FpcaError::Parse {
            line: 1,
            message: format!("expected header `curve_id,t,x`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(FpcaError::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(FpcaError::Parse {
                line,
                message: "empty curve_id".into(),
            });
        }
        let t = parse_num(&rec[1], "t", line)?;
        let x = parse_num(&rec[2], "x", line)?;
        // Normalise -0.0 so that it collides with 0.0.
        let key = (id.clone(), (t + 0.0).to_bits());
        if !seen.insert(key) {
            return Err(FpcaError::DuplicateTime { curve: id, time: t, line });
        }
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((t, x));
    }
    if order.is_empty() {
        return Err(FpcaError::EmptyFile(name.to_string()));
    }
    order
        .into_iter()
        .map(|id| {
            let pts = rows.remove(&id).expect("grouped");
            let (t, x) = pts.into_iter().unzip();
            Curve::new(id, t, x)
        })
        .collect()
}

pub fn ingest(path: &Path, domain: Option<(f64, f64)>) -> Result<SparseFunctionalSample> {
    read_curves(open(path)?, &path.display().to_string(), domain)
}

/// Writes a sample as a `curve_id,t,x` table.
pub fn write_curves<W: Write>(sample: &SparseFunctionalSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for c in &sample.curves {
        for (t, x) in c.times.iter().zip(&c.values) {
            w.write_record([c.id.as_str(), &fmt_num(*t), &fmt_num(*x)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit(sample: &SparseFunctionalSample, path: &Path) -> Result<()> {
    write_curves(sample, create(path)?)
}

/// Flat `key = value` text; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FpcaError::Parse {
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(FpcaError::Parse {
                line: i + 1,
                message: format!("key `{k}` given twice"),
            });
        }
    }
    Ok(map)
}

// Artifact files.

pub const MEAN_FILE: &str = "mean.csv";
pub const COV_FILE: &str = "cov.csv";
pub const EIGEN_FILE: &str = "eigen.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const FITTED_FILE: &str = "fitted.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn table<R: Read>(reader: R, name: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got.len() < header.len() || got.iter().zip(header).any(|(a, b)| a != b) {
        return Err(FpcaError::Parse {
            line: 1,
            message: format!("{name}: expected header starting `{}`", header.join(",")),
        });
    }
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(FpcaError::EmptyFile(name.to_string()));
    }
    Ok(rows)
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Rebuilds the equispaced grid from its tabulated points.
fn grid_from_points(points: &[f64], name: &str) -> Result<GridSpec> {
    let m = points.len();
    if m < 2 {
        return Err(FpcaError::Parse {
            line: 2,
            message: format!("{name}: need at least two grid points"),
        });
    }
    let grid = GridSpec::new(points[0], points[m - 1], m)?;
    let tol = 1e-9 * (grid.b - grid.a).abs().max(1.0);
    if grid.points().iter().zip(points).any(|(a, b)| (a - b).abs() > tol) {
        return Err(FpcaError::Parse {
            line: 2,
            message: format!("{name}: grid is not equispaced"),
        });
    }
    Ok(grid)
}

pub fn write_mean<W: Write>(mean: &MeanFunctionEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mu"])?;
    for (t, v) in mean.grid.points().iter().zip(&mean.values) {
        w.write_record([fmt_num(*t), fmt_num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mean<R: Read>(reader: R, bandwidth: f64) -> Result<MeanFunctionEstimate> {
    let rows = table(reader, MEAN_FILE, &["t", "mu"])?;
    let mut t = Vec::with_capacity(rows.len());
    let mut mu = Vec::with_capacity(rows.len());
    for r in &rows {
        t.push(parse_num(r.get(0).unwrap_or(""), "t", line_of(r))?);
        mu.push(parse_num(r.get(1).unwrap_or(""), "mu", line_of(r))?);
    }
    Ok(MeanFunctionEstimate {
        grid: grid_from_points(&t, MEAN_FILE)?,
        values: mu,
        bandwidth,
        diagnostics: Vec::new(),
    })
}

/// Header `t,g1,…,gM`; row `m` starts with the grid point `gₘ`.
pub fn write_surface<W: Write>(surface: &CovarianceSurface, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = surface.grid.m;
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("g{j}")));
    w.write_record(&header)?;
    for (i, t) in surface.grid.points().iter().enumerate() {
        let mut row = vec![fmt_num(*t)];
        row.extend((0..m).map(|j| fmt_num(surface.matrix[(i, j)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_surface<R: Read>(reader: R) -> Result<CovarianceSurface> {
    let rows = table(reader, COV_FILE, &["t"])?;
    let m = rows.len();
    let mut t = Vec::with_capacity(m);
    let mut matrix = DMatrix::zeros(m, m);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m + 1 {
            return Err(FpcaError::Parse {
                line: line_of(r),
                message: format!("{COV_FILE}: expected {} fields, found {}", m + 1, r.len()),
            });
        }
        t.push(parse_num(&r[0], "t", line_of(r))?);
        for j in 0..m {
            matrix[(i, j)] = parse_num(&r[j + 1], "covariance", line_of(r))?;
        }
    }
    Ok(CovarianceSurface {
        grid: grid_from_points(&t, COV_FILE)?,
        matrix,
        psd_projected: false,
    })
}

/// Long format `k,lambda,t,phi`, every eigenpair.
pub fn write_eigen<W: Write>(eigen: &EigenSystem, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "lambda", "t", "phi"])?;
    let pts = eigen.grid.points();
    for (k, lam) in eigen.values.iter().enumerate() {
        let lam = fmt_num(*lam);
        for (m, t) in pts.iter().enumerate() {
            w.write_record([(k + 1).to_string(), lam.clone(), fmt_num(*t), fmt_num(eigen.functions[(m, k)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_eigen<R: Read>(reader: R, n_components: usize) -> Result<EigenSystem> {
    let rows = table(reader, EIGEN_FILE, &["k", "lambda", "t", "phi"])?;
    let mut values: Vec<f64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut t_first: Vec<f64> = Vec::new();
    for r in &rows {
        let line = line_of(r);
        let k: usize = r.get(0).unwrap_or("").parse().map_err(|_| FpcaError::Parse {
            line,
            message: "component index is not a positive integer".into(),
        })?;
        if k == 0 || k > columns.len() + 1 {
            return Err(FpcaError::Parse {
                line,
                message: format!("component {k} out of order"),
            });
        }
        let lam = parse_num(r.get(1).unwrap_or(""), "lambda", line)?;
        let t = parse_num(r.get(2).unwrap_or(""), "t", line)?;
        let phi = parse_num(r.get(3).unwrap_or(""), "phi", line)?;
        if k == columns.len() + 1 {
            columns.push(Vec::new());
            values.push(lam);
        }
        if k == 1 {
            t_first.push(t);
        }
        columns[k - 1].push(phi);
    }
    let grid = grid_from_points(&t_first, EIGEN_FILE)?;
    if columns.iter().any(|c| c.len() != grid.m) {
        return Err(FpcaError::Parse {
            line: 0,
            message: format!("{EIGEN_FILE}: every component needs {} grid values", grid.m),
        });
    }
    let functions = DMatrix::from_fn(grid.m, columns.len(), |i, k| columns[k][i]);
    Ok(EigenSystem {
        grid,
        values,
        functions,
        n_components: n_components.min(columns.len()),
    })
}

pub fn write_scores<W: Write>(scores: &ScoreMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve_id", "k", "score"])?;
    for (i, id) in scores.ids.iter().enumerate() {
        for k in 0..scores.n_components() {
            w.write_record([id.clone(), (k + 1).to_string(), fmt_num(scores.scores[(i, k)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reconstructed trajectories on the grid, `curve_id,t,x_hat`.
pub fn write_fitted<W: Write>(ids: &[String], grid: &GridSpec, fitted: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve_id", "t", "x_hat"])?;
    let pts = grid.points();
    for (id, row) in ids.iter().zip(fitted) {
        for (t, v) in pts.iter().zip(row) {
            w.write_record([id.clone(), fmt_num(*t), fmt_num(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the estimate files of a fit into `dir`.
pub fn write_fit_artifacts(fit: &FpcaFit, dir: &Path) -> Result<()> {
    write_mean(&fit.mean, create(&dir.join(MEAN_FILE))?)?;
    write_surface(&fit.surface, create(&dir.join(COV_FILE))?)?;
    write_eigen(&fit.eigen, create(&dir.join(EIGEN_FILE))?)?;
    write_predictions(&fit.scores, &fit.eigen.grid, &fit.reconstructions(), dir)
}

pub fn write_predictions(scores: &ScoreMatrix, grid: &GridSpec, fitted: &[Vec<f64>], dir: &Path) -> Result<()> {
    write_scores(scores, create(&dir.join(SCORES_FILE))?)?;
    write_fitted(&scores.ids, grid, fitted, create(&dir.join(FITTED_FILE))?)
}

/// What `predict` needs from a fit directory.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredFit {
    pub mean: MeanFunctionEstimate,
    pub surface: CovarianceSurface,
    pub eigen: EigenSystem,
    pub ridge: f64,
    pub n_components: usize,
    pub manifest: BTreeMap<String, String>,
}

fn artifact(dir: &Path, name: &str) -> Result<File> {
    let p = dir.join(name);
    if !p.is_file() {
        return Err(FpcaError::MissingArtifact(p.display().to_string()));
    }
    open(&p)
}

fn manifest_num(manifest: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let v = manifest
        .get(key)
        .ok_or_else(|| FpcaError::MissingArtifact(format!("{MANIFEST_FILE} entry `{key}`")))?;
    v.parse().map_err(|_| FpcaError::Parse {
        line: 0,
        message: format!("{MANIFEST_FILE}: `{key}` is not a number"),
    })
}

pub fn read_fit_artifacts(dir: &Path) -> Result<StoredFit> {
    let mut text = String::new();
    artifact(dir, MANIFEST_FILE)?.read_to_string(&mut text)?;
    let manifest = parse_key_values(&text)?;
    let ridge = manifest_num(&manifest, "ridge")?;
    let n_components = manifest_num(&manifest, "n_components")? as usize;
    let h_mean = manifest_num(&manifest, "bandwidth_mean")?;
    let mean = read_mean(artifact(dir, MEAN_FILE)?, h_mean)?;
    let mut surface = read_surface(artifact(dir, COV_FILE)?)?;
    surface.psd_projected = true;
    let eigen = read_eigen(artifact(dir, EIGEN_FILE)?, n_components)?;
    if mean.grid != surface.grid || mean.grid != eigen.grid {
        return Err(FpcaError::InvalidInput("mean, covariance and eigen files use different grids".into()));
    }
    Ok(StoredFit {
        mean,
        surface,
        eigen,
        ridge,
        n_components,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SparseFunctionalSample> {
        read_curves(text.as_bytes(), "test", None)
    }

    #[test]
    fn reads_one_curve() {
        let s = parse("curve_id,t,x\na,0.5,1\na,0.1,2\na,0.3,3\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.curves[0].times, vec![0.1, 0.3, 0.5]);
        assert_eq!(s.curves[0].values, vec![2.0, 3.0, 1.0]);
        assert_eq!(s.domain, (0.1, 0.5));
    }

    #[test]
    fn reports_bad_rows() {
        match parse("curve_id,t,x\na,0.5,1\nb,zero,3\n") {
            Err(FpcaError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("zero"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse(""), Err(FpcaError::EmptyFile(_))));
        assert!(matches!(parse("curve_id,t,x\n"), Err(FpcaError::EmptyFile(_))));
        assert!(matches!(parse("id,t,x\na,1,1\n"), Err(FpcaError::Parse { line: 1, .. })));
        assert!(matches!(parse("curve_id,t,x\na,1,inf\n"), Err(FpcaError::Parse { line: 2, .. })));
        assert_eq!(
            parse("curve_id,t,x\na,1,1\nb,1,1\na,1.0,2\n"),
            Err(FpcaError::DuplicateTime {
                curve: "a".into(),
                time: 1.0,
                line: 4
            })
        );
    }

    #[test]
    fn domain_override() {
        let s = read_curves("curve_id,t,x\na,0.5,1\n".as_bytes(), "t", Some((0.0, 1.0))).unwrap();
        assert_eq!(s.domain, (0.0, 1.0));
        assert!(read_curves("curve_id,t,x\na,1.5,1\n".as_bytes(), "t", Some((0.0, 1.0))).is_err());
    }

    #[test]
    fn round_trip() {
        let s = parse("curve_id,t,x\nb,0.1,0.30000000000000004\na,0.7,-1e-300\nb,0.2,3.141592653589793\n").unwrap();
        let mut buf = Vec::new();
        write_curves(&s, &mut buf).unwrap();
        let back = read_curves(buf.as_slice(), "buf", None).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.curves[0].id, "b");
    }

    #[test]
    fn key_values() {
        let m = parse_key_values("# c\nvariant = ls\n[section]\n h_mean=0.5 # trailing\n").unwrap();
        assert_eq!(m["variant"], "ls");
        assert_eq!(m["h_mean"], "0.5");
        assert!(parse_key_values("a = 1\na = 2").is_err());
        assert!(matches!(parse_key_values("x\n"), Err(FpcaError::Parse { line: 1, .. })));
    }

    #[test]
    fn surface_round_trip() {
        let grid = GridSpec::new(0.0, 2.0, 5).unwrap();
        let s = CovarianceSurface {
            grid,
            matrix: DMatrix::from_fn(5, 5, |i, j| 1.0 / (1.0 + i as f64 + j as f64)),
            psd_projected: false,
        };
        let mut buf = Vec::new();
        write_surface(&s, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("t,g1,g2,g3,g4,g5\n"));
        assert_eq!(read_surface(buf.as_slice()).unwrap(), s);
    }
}
