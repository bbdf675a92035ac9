use std::ffi::{CStr, CString};
use std::ptr;

use robust_fpca::simulation::generate_model1;
use robust_fpca_ffi::*;

struct Arrays {
    curve: Vec<u64>,
    t: Vec<f64>,
    x: Vec<f64>,
}

fn arrays(n: usize, seed: u64) -> Arrays {
    let sim = generate_model1(n, seed);
    let mut a = Arrays {
        curve: Vec::new(),
        t: Vec::new(),
        x: Vec::new(),
    };
    for c in &sim.sample.curves {
        let id: u64 = c.id.parse().unwrap();
        for (t, x) in c.times.iter().zip(&c.values) {
            a.curve.push(id);
            a.t.push(*t);
            a.x.push(*x);
        }
    }
    a
}

unsafe fn sample(a: &Arrays) -> *mut RfpcaSample {
    let mut s = ptr::null_mut();
    let st = rfpca_sample_from_arrays(a.curve.as_ptr(), a.t.as_ptr(), a.x.as_ptr(), a.t.len(), 0.0, 10.0, &mut s);
    assert_eq!(st, RfpcaStatus::Ok);
    s
}

fn fixed_options() -> RfpcaOptions {
    let mut o = rfpca_options_default();
    o.h_mean = 1.0;
    o.h_cov = 1.7;
    o.n_components = 2;
    o
}

fn last_error() -> String {
    let p = rfpca_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn defaults_and_version() {
    let o = rfpca_options_default();
    assert_eq!(o.variant, RfpcaVariant::Robust);
    assert!(o.h_mean <= 0.0 && o.h_cov <= 0.0);
    assert_eq!(o.n_components, 0);
    assert!(o.delta < 0.0);
    assert_eq!(o.grid_points, 50);
    assert!((o.tau - 0.9).abs() < 1e-15);
    let v = unsafe { CStr::from_ptr(rfpca_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn fit_and_read_back() {
    unsafe {
        let a = arrays(100, 3);
        let s = sample(&a);
        assert_eq!(rfpca_sample_len(s), 100);

        let mut f = ptr::null_mut();
        assert_eq!(rfpca_fit(s, &fixed_options(), &mut f), RfpcaStatus::Ok);
        let m = rfpca_fit_grid_len(f);
        assert_eq!(m, 50);
        assert_eq!(rfpca_fit_n_components(f), 2);
        assert_eq!(rfpca_fit_n_curves(f), 100);

        let (mut hm, mut hc) = (0.0, 0.0);
        assert_eq!(rfpca_fit_bandwidths(f, &mut hm, &mut hc), RfpcaStatus::Ok);
        assert_eq!((hm, hc), (1.0, 1.7));

        let mut grid = vec![0.0; m];
        assert_eq!(rfpca_fit_grid(f, grid.as_mut_ptr(), m), RfpcaStatus::Ok);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[m - 1], 10.0);

        let mut cov = vec![0.0; m * m];
        assert_eq!(rfpca_fit_covariance(f, cov.as_mut_ptr(), m * m), RfpcaStatus::Ok);
        for i in 0..m {
            for j in 0..m {
                assert_eq!(cov[i * m + j], cov[j * m + i]);
            }
        }

        let mut lam = vec![0.0; m];
        assert_eq!(rfpca_fit_eigenvalues(f, lam.as_mut_ptr(), m), RfpcaStatus::Ok);
        assert!(lam.windows(2).all(|w| w[0] >= w[1]));
        let mut phi = vec![0.0; m];
        assert_eq!(rfpca_fit_eigenfunction(f, 0, phi.as_mut_ptr(), m), RfpcaStatus::Ok);
        assert!(phi.iter().sum::<f64>() >= 0.0);

        let mut scores = vec![0.0; 200];
        assert_eq!(rfpca_fit_scores(f, scores.as_mut_ptr(), 200), RfpcaStatus::Ok);
        let mut again = vec![0.0; 200];
        assert_eq!(rfpca_fit_predict(f, s, again.as_mut_ptr(), 200), RfpcaStatus::Ok);
        for (x, y) in scores.iter().zip(&again) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }

        rfpca_fit_free(f);
        rfpca_sample_free(s);
    }
}

#[test]
fn short_buffer_is_reported() {
    unsafe {
        let a = arrays(60, 4);
        let s = sample(&a);
        let mut f = ptr::null_mut();
        assert_eq!(rfpca_fit(s, &fixed_options(), &mut f), RfpcaStatus::Ok);
        let mut buf = vec![0.0; 10];
        assert_eq!(rfpca_fit_mean(f, buf.as_mut_ptr(), 10), RfpcaStatus::BufferTooSmall);
        assert!(last_error().contains("50"));
        assert_eq!(rfpca_fit_eigenfunction(f, 99, buf.as_mut_ptr(), 10), RfpcaStatus::InvalidInput);
        rfpca_fit_free(f);
        rfpca_sample_free(s);
    }
}

#[test]
fn null_arguments() {
    unsafe {
        let mut s = ptr::null_mut();
        let st = rfpca_sample_from_arrays(ptr::null(), ptr::null(), ptr::null(), 3, 0.0, 1.0, &mut s);
        assert_eq!(st, RfpcaStatus::NullPointer);
        assert!(s.is_null());
        let mut f = ptr::null_mut();
        assert_eq!(rfpca_fit(ptr::null(), ptr::null(), &mut f), RfpcaStatus::NullPointer);
        assert_eq!(rfpca_fit_mean(ptr::null(), ptr::null_mut(), 0), RfpcaStatus::NullPointer);
        assert_eq!(rfpca_sample_len(ptr::null()), 0);
        assert_eq!(rfpca_fit_grid_len(ptr::null()), 0);
        rfpca_sample_free(ptr::null_mut());
        rfpca_fit_free(ptr::null_mut());
    }
}

#[test]
fn invalid_input_and_config() {
    unsafe {
        let curve = [1u64, 1];
        let t = [0.5, 0.5];
        let x = [1.0, 2.0];
        let mut s = ptr::null_mut();
        let st = rfpca_sample_from_arrays(curve.as_ptr(), t.as_ptr(), x.as_ptr(), 2, 0.0, 1.0, &mut s);
        assert_eq!(st, RfpcaStatus::InvalidInput);
        assert!(!last_error().is_empty());

        let a = arrays(40, 5);
        let s = sample(&a);
        let mut o = fixed_options();
        o.tau = 1.5;
        let mut f = ptr::null_mut();
        assert_eq!(rfpca_fit(s, &o, &mut f), RfpcaStatus::InvalidConfig);
        assert!(f.is_null());
        rfpca_sample_free(s);
    }
}

#[test]
fn csv_and_write() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("curves.csv");
    std::fs::write(&data, "curve_id,t,x\na,0.1,1.0\na,0.6,1.5\nb,0.2,0.3\nb,0.9,0.1\n").unwrap();
    let path = CString::new(data.to_str().unwrap()).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(rfpca_sample_from_csv(path.as_ptr(), &mut s), RfpcaStatus::Ok);
        assert_eq!(rfpca_sample_len(s), 2);
        rfpca_sample_free(s);

        let missing = CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(rfpca_sample_from_csv(missing.as_ptr(), &mut s), RfpcaStatus::Io);

        let a = arrays(60, 6);
        let s = sample(&a);
        let mut f = ptr::null_mut();
        assert_eq!(rfpca_fit(s, &fixed_options(), &mut f), RfpcaStatus::Ok);
        let out = CString::new(dir.path().join("fit").to_str().unwrap()).unwrap();
        assert_eq!(rfpca_fit_write(f, out.as_ptr()), RfpcaStatus::Ok);
        for name in ["mean.csv", "cov.csv", "eigen.csv", "scores.csv", "fitted.csv"] {
            assert!(dir.path().join("fit").join(name).exists(), "{name}");
        }
        rfpca_fit_free(f);
        rfpca_sample_free(s);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/robust_fpca.h");
    for name in [
        "rfpca_last_error",
        "rfpca_version",
        "rfpca_options_default",
        "rfpca_sample_from_arrays",
        "rfpca_sample_from_csv",
        "rfpca_sample_free",
        "rfpca_fit(",
        "rfpca_fit_free",
        "rfpca_fit_covariance",
        "rfpca_fit_predict",
        "rfpca_fit_write",
        "RFPCA_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
