use proptest::prelude::*;

use robust_fpca::engine::{eigendecompose, inner_product, psd_project, CovarianceSurface, GridSpec};
use robust_fpca::robust::{weighted_mscale, MScaleSpec, RhoFamily};
use robust_fpca::smoothers::{kernel_weights, local_linear_m_mean_with_trace};
use robust_fpca::simulation::generate_model1;
use robust_fpca::{fit, FitConfig, Variant};

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mscale_scale_equivariant(
        r in prop::collection::vec(-10.0f64..10.0, 8..60),
        a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
    ) {
        let w = normalized(&vec![1.0; r.len()]);
        let spec = MScaleSpec::bisquare_half();
        let s = weighted_mscale(&r, &w, &spec).unwrap().scale;
        let ra: Vec<f64> = r.iter().map(|v| a * v).collect();
        let sa = weighted_mscale(&ra, &w, &spec).unwrap().scale;
        prop_assert!((sa - a.abs() * s).abs() <= 1e-8 * (1.0 + sa));
    }

    #[test]
    fn kernel_weights_normalized(
        t in prop::collection::vec(0.0f64..1.0, 3..80),
        t0 in 0.0f64..1.0,
        h in 0.05f64..1.0,
    ) {
        if let Ok(w) = kernel_weights(&t, t0, h) {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn irls_objective_never_increases(
        noise in prop::collection::vec(-1.0f64..1.0, 40),
        spikes in prop::collection::vec(0usize..40, 0..6),
        t0 in 0.2f64..0.8,
    ) {
        let t: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let mut x: Vec<f64> = t.iter().zip(&noise).map(|(t, e)| 2.0 * t + 0.3 * e).collect();
        for s in spikes {
            x[s] += 25.0;
        }
        let (_, trace) = local_linear_m_mean_with_trace(&t, &x, t0, 0.4, RhoFamily::huber(), 0.3).unwrap();
        for p in trace.windows(2) {
            prop_assert!(p[1] <= p[0] + 1e-12 * p[0].abs());
        }
    }

    #[test]
    fn psd_projection_is_idempotent(entries in prop::collection::vec(-1.0f64..1.0, 36)) {
        let grid = GridSpec::new(0.0, 1.0, 6).unwrap();
        let a = nalgebra::DMatrix::from_vec(6, 6, entries);
        let s = CovarianceSurface { grid, matrix: (&a + a.transpose()) * 0.5, psd_projected: false };
        let once = psd_project(&s);
        let twice = psd_project(&once);
        prop_assert!((&once.matrix - &twice.matrix).abs().max() < 1e-10);
        prop_assert_eq!(&once.matrix, &once.matrix.transpose());
    }
}

#[test]
fn eigenfunctions_orthonormal_under_quadrature() {
    let sim = generate_model1(80, 9);
    let f = fit(&sim.sample, &FitConfig::for_variant(Variant::LeastSquares).with_bandwidths(1.0, 1.7)).unwrap();
    let e = eigendecompose(&f.surface);
    for j in 0..8 {
        for k in 0..8 {
            let ip = inner_product(&e.grid, &e.function(j), &e.function(k));
            let want = if j == k { 1.0 } else { 0.0 };
            assert!((ip - want).abs() <= 1e-8, "({j},{k}) {ip}");
        }
    }
}

#[test]
fn fits_are_deterministic_and_symmetric() {
    let sim = generate_model1(100, 2);
    for variant in [Variant::Robust, Variant::LeastSquares] {
        let cfg = FitConfig::for_variant(variant);
        let a = fit(&sim.sample, &cfg).unwrap();
        let b = fit(&sim.sample, &cfg).unwrap();
        assert!(a == b);
        assert_eq!(a.surface.matrix, a.surface.matrix.transpose());
    }
}
