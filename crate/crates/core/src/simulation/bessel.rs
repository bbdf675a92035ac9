//! Modified Bessel function of the second kind and the Matérn covariance.
//!
//! `K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(νt) dt` is evaluated with the trapezoidal
//! rule, which converges geometrically for this analytic, doubly-exponentially
//! decaying integrand.

use std::f64::consts::PI;

/// Lanczos approximation (g = 7, 9 terms) of the Gamma function.
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `e^x K_ν(x)` for `x > 0`.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "K_nu needs x > 0, got {x}");
    let nu = nu.abs();
    let step = 0.05_f64.min(0.1 / x.sqrt());
    // Integrand e^{-x(cosh t - 1)} cosh(νt), even in t; half-weight at the origin.
    let mut sum = 0.5;
    let mut k = 1usize;
    loop {
        let t = step * k as f64;
        let expo = -x * (t.cosh() - 1.0);
        let term = (expo + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += term;
        if expo + nu * t < -45.0 && x * t.sinh() > nu {
            break;
        }
        k += 1;
    }
    sum * step
}

/// Modified Bessel function of the second kind `K_ν(x)`, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_scaled(nu, x) * (-x).exp()
}

/// Matérn parameters `(ν, ρ, σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matern {
    pub nu: f64,
    pub range: f64,
    pub sigma: f64,
}

impl Matern {
    /// Smoothness 1/3, range 3, unit variance.
    pub fn model_two() -> Self {
        Matern {
            nu: 1.0 / 3.0,
            range: 3.0,
            sigma: 1.0,
        }
    }

    /// `C(u) = σ² 2^{1−ν}/Γ(ν) u^ν K_ν(u)`, with `C(0) = σ²`.
    pub fn at_scaled_distance(&self, u: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        if u == 0.0 {
            return s2;
        }
        let log_pre = (1.0 - self.nu) * 2f64.ln() - gamma(self.nu).ln() + self.nu * u.ln();
        s2 * (log_pre - u).exp() * bessel_k_scaled(self.nu, u)
    }

    pub fn cov(&self, s: f64, t: f64) -> f64 {
        let u = (2.0 * self.nu).sqrt() * (s - t).abs() / self.range;
        self.at_scaled_distance(u)
    }
}

/// Matérn covariance between `s` and `t`.
pub fn matern_cov(s: f64, t: f64, nu: f64, range: f64, sigma: f64) -> f64 {
    Matern { nu, range, sigma }.cov(s, t)
}
