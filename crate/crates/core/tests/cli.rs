use std::path::Path;
use std::process::{Command, Output};

use robust_fpca::io::{emit, read_fit_artifacts, read_surface};
use robust_fpca::simulation::generate_model1;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-fpca")).args(args).output().unwrap()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn data(dir: &Path) -> String {
    let path = dir.join("curves.csv");
    emit(&generate_model1(100, 11).sample, &path).unwrap();
    s(&path)
}

fn fit_into(data: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--data", data, "--out", out.to_str().unwrap(), "--h-mean", "1.0", "--h-cov", "1.7"];
    args.extend_from_slice(extra);
    bin(&args)
}

fn section(manifest: &str, name: &str) -> Vec<String> {
    let header = format!("[{name}]");
    manifest
        .lines()
        .skip_while(|l| l.trim() != header)
        .skip(1)
        .take_while(|l| !l.starts_with('['))
        .map(str::to_string)
        .collect()
}

#[test]
fn fit_writes_artifacts_that_reload() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let out = dir.path().join("fit");
    let o = fit_into(&d, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["mean.csv", "cov.csv", "eigen.csv", "scores.csv", "fitted.csv", "manifest.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let cov = read_surface(std::fs::File::open(out.join("cov.csv")).unwrap()).unwrap();
    assert_eq!(cov.matrix, cov.matrix.transpose());
    let stored = read_fit_artifacts(&out).unwrap();
    assert_eq!(stored.n_components, 2);
    assert_eq!(stored.mean.grid.m, 50);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(fit_into(&d, &a, &["--seed", "5"]).status.success());
    assert!(fit_into(&d, &b, &["--seed", "5"]).status.success());
    for name in ["mean.csv", "cov.csv", "eigen.csv", "scores.csv", "fitted.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn manifest_config_differs_only_in_variant() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let (rob, ls) = (dir.path().join("rob"), dir.path().join("ls"));
    assert!(fit_into(&d, &rob, &["--variant", "rob"]).status.success());
    assert!(fit_into(&d, &ls, &["--variant", "ls"]).status.success());
    let r = section(&std::fs::read_to_string(rob.join("manifest.txt")).unwrap(), "config");
    let l = section(&std::fs::read_to_string(ls.join("manifest.txt")).unwrap(), "config");
    assert_eq!(r.len(), l.len());
    let diff: Vec<_> = r.iter().zip(&l).filter(|(x, y)| x != y).collect();
    assert_eq!(diff.len(), 1, "{diff:?}");
    assert!(diff[0].0.starts_with("variant"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# fixed bandwidths\ndata = {d}\nh_mean = 1.0\nh_cov = 1.7\nvariant = ls\n")).unwrap();
    let out = dir.path().join("fit");
    let o = bin(&["fit", "--config", &s(&cfg), "--variant", "rob", "--out", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(section(&manifest, "config").iter().any(|l| l.replace(' ', "") == "variant=rob"));

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let o = bin(&["fit", "--config", &s(&cfg), "--data", &d, "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn predict_on_training_data_matches_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let fit = dir.path().join("fit");
    assert!(fit_into(&d, &fit, &[]).status.success());
    let pred = dir.path().join("pred");
    let o = bin(&["predict", "--fit", &s(&fit), "--data", &d, "--out", &s(&pred)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(fit.join("scores.csv")).unwrap(),
        std::fs::read(pred.join("scores.csv")).unwrap()
    );
}

#[test]
fn predict_warns_outside_domain() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let fit = dir.path().join("fit");
    assert!(fit_into(&d, &fit, &[]).status.success());
    let new = dir.path().join("new.csv");
    std::fs::write(&new, "curve_id,t,x\nz,1.0,0.5\nz,11.0,0.2\n").unwrap();
    let o = bin(&["predict", "--fit", &s(&fit), "--data", &s(&new), "--out", &s(&dir.path().join("p"))]);
    assert!(o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn eigen_command_reads_a_surface() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let fit = dir.path().join("fit");
    assert!(fit_into(&d, &fit, &[]).status.success());
    let out = dir.path().join("eig");
    let o = bin(&["eigen", "--data", &s(&fit.join("cov.csv")), "--out", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // cov.csv is a rounded copy of the surface, so compare the leading pairs numerically.
    let leading = |p: &Path| -> Vec<f64> {
        let mut rdr = csv::Reader::from_path(p).unwrap();
        rdr.records()
            .map(|r| r.unwrap())
            .filter(|r| r[0].parse::<usize>().unwrap() <= 2)
            .flat_map(|r| [r[1].parse::<f64>().unwrap(), r[3].parse::<f64>().unwrap()])
            .collect()
    };
    let (a, b) = (leading(&fit.join("eigen.csv")), leading(&out.join("eigen.csv")));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
}

#[test]
fn simulate_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = bin(&[
        "simulate", "--model", "1", "--eps", "0,0.1", "--variant", "rob", "--R", "2", "--n", "60", "--seed", "3",
        "--out", &s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("model,eps,variant,replication,seed,metric,k,value"));
    assert!(report.lines().any(|l| l.contains(",frob_sq,")));
    for name in ["failures.csv", "aggregate.txt", "manifest.txt", "plot_frob_sq.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("missing.csv"));
    assert_eq!(bin(&["fit", "--data", &missing, "--out", &s(dir.path())]).status.code(), Some(1));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "curve_id,t,x\na,0.1,oops\n").unwrap();
    let o = bin(&["fit", "--data", &s(&bad), "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains('2'));
    assert_eq!(bin(&["fit", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
}
