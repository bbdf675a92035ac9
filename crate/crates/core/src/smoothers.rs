//! Kernel weights and the local estimators: local linear M-location, local MAD,
//! the no-intercept local M-slope, and the surface smoother.
//!
//! Every estimator takes its bandwidth as given. The widening rule for sparse
//! windows lives in [`support_bandwidth`] and is applied by the callers.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{FpcaError, Result};
use crate::robust::{mad, weighted_median, RhoFamily, MAD_KAPPA};

/// Minimum number of observations (or pairs) a local fit needs.
pub const MIN_SUPPORT: usize = 5;
/// Bandwidth growth factor applied when a window is too sparse.
pub const WIDEN_FACTOR: f64 = 1.5;
/// Number of widening attempts before giving up.
pub const MAX_WIDENINGS: usize = 4;

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;
/// Denominators below this are left out of the preliminary ratio median.
const RATIO_EPS: f64 = 1e-12;

/// Epanechnikov kernel `0.75 (1 − u²)` on `[-1, 1]`.
#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

#[inline]
fn in_window(t: f64, t0: f64, h: f64) -> bool {
    (t - t0).abs() <= h
}

/// Returns the first bandwidth in `h, 1.5h, 1.5²h, …` (at most
/// [`MAX_WIDENINGS`] widenings) whose window holds `MIN_SUPPORT` points.
pub fn support_bandwidth(h: f64, mut count: impl FnMut(f64) -> usize) -> Option<f64> {
    let mut bw = h;
    for _ in 0..=MAX_WIDENINGS {
        if count(bw) >= MIN_SUPPORT {
            return Some(bw);
        }
        bw *= WIDEN_FACTOR;
    }
    None
}

/// Normalised kernel weights `K((tᵢ − t₀)/h) / Σⱼ K((tⱼ − t₀)/h)`.
pub fn kernel_weights(times: &[f64], t0: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(FpcaError::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    let raw: Vec<f64> = times.iter().map(|t| epanechnikov((t - t0) / h)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(FpcaError::NoLocalData {
            location: format!("t = {t0}"),
        });
    }
    Ok(raw.into_iter().map(|k| k / total).collect())
}

/// Local MAD of the values observed within `h` of `t0`.
pub fn local_mad_scale(times: &[f64], values: &[f64], t0: f64, h: f64) -> Result<f64> {
    let local: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| in_window(**t, t0, h))
        .map(|(_, v)| *v)
        .collect();
    if local.is_empty() {
        return Err(FpcaError::NoLocalData {
            location: format!("t = {t0}"),
        });
    }
    let s = mad(&local, MAD_KAPPA);
    if s > 0.0 {
        Ok(s)
    } else {
        Err(FpcaError::DegenerateScale {
            location: format!("t = {t0}"),
        })
    }
}

/// Preliminary scale for the local mean with a fallback for quantised data:
/// local MAD, else `κ⁻¹` times the mean absolute deviation from the median.
/// `None` means every in-window value is identical.
pub fn preliminary_scale(times: &[f64], values: &[f64], t0: f64, h: f64) -> Result<Option<f64>> {
    match local_mad_scale(times, values, t0, h) {
        Ok(s) => Ok(Some(s)),
        Err(FpcaError::DegenerateScale { .. }) => {
            let local: Vec<f64> = times
                .iter()
                .zip(values)
                .filter(|(t, _)| in_window(**t, t0, h))
                .map(|(_, v)| *v)
                .collect();
            let center = crate::robust::median(&local);
            let s = local.iter().map(|v| (v - center).abs()).sum::<f64>()
                / local.len() as f64
                / MAD_KAPPA;
            Ok((s > 0.0).then_some(s))
        }
        Err(e) => Err(e),
    }
}

/// Diagnostics of a single local fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFitDiagnostics {
    /// Observations (or pairs) inside the window.
    pub support: usize,
    /// Preliminary scale that standardised the residuals.
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The local design was singular and an intercept-only fit was used.
    pub intercept_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLinearFit {
    /// Local level, the estimate of the mean at `t0`.
    pub intercept: f64,
    /// Coefficient of `(t0 − t)`.
    pub slope: f64,
    pub diagnostics: LocalFitDiagnostics,
}

/// Local linear M-estimator of location at `t0`, minimising
/// `Σ K((tᵢ−t₀)/h) ρ((xᵢ − β₀ − β₁(t₀ − tᵢ))/σ)` by IRLS.
pub fn local_linear_m_mean(
    times: &[f64],
    values: &[f64],
    t0: f64,
    h: f64,
    rho: RhoFamily,
    sigma: f64,
) -> Result<LocalLinearFit> {
    local_linear_m_mean_traced(times, values, t0, h, rho, sigma, None)
}

/// Same fit, also returning the objective after the start and after each
/// IRLS step.
pub fn local_linear_m_mean_with_trace(
    times: &[f64],
    values: &[f64],
    t0: f64,
    h: f64,
    rho: RhoFamily,
    sigma: f64,
) -> Result<(LocalLinearFit, Vec<f64>)> {
    let mut trace = Vec::new();
    let fit = local_linear_m_mean_traced(times, values, t0, h, rho, sigma, Some(&mut trace))?;
    Ok((fit, trace))
}

pub(crate) fn local_linear_m_mean_traced(
    times: &[f64],
    values: &[f64],
    t0: f64,
    h: f64,
    rho: RhoFamily,
    sigma: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<LocalLinearFit> {
    if !(sigma > 0.0) {
        return Err(FpcaError::InvalidInput(format!(
            "preliminary scale must be positive, got {sigma}"
        )));
    }
    let mut x = Vec::new();
    let mut d = Vec::new();
    let mut k = Vec::new();
    for (t, v) in times.iter().zip(values) {
        let w = epanechnikov((t - t0) / h);
        if w > 0.0 {
            x.push(*v);
            d.push(t0 - t);
            k.push(w);
        }
    }
    if x.is_empty() {
        return Err(FpcaError::NoLocalData {
            location: format!("t = {t0}"),
        });
    }

    let objective = |b0: f64, b1: f64| -> f64 {
        x.iter()
            .zip(&d)
            .zip(&k)
            .map(|((x, d), k)| k * rho.rho((x - b0 - b1 * d) / sigma))
            .sum()
    };

    let mut b0 = weighted_median(&x, &k);
    let mut b1 = 0.0;
    let mut intercept_only = false;
    let mut a = vec![0.0; x.len()];
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(objective(b0, b1));
    }

    for iter in 1..=IRLS_MAX_ITER {
        for i in 0..x.len() {
            a[i] = k[i] * rho.weight((x[i] - b0 - b1 * d[i]) / sigma);
        }
        let s0: f64 = a.iter().sum();
        if !(s0 > 0.0) {
            // Every point rejected by the redescending weights: keep the start.
            return Ok(LocalLinearFit {
                intercept: b0,
                slope: b1,
                diagnostics: LocalFitDiagnostics {
                    support: x.len(),
                    scale: sigma,
                    iterations: iter,
                    converged: true,
                    intercept_only,
                },
            });
        }
        let s1: f64 = a.iter().zip(&d).map(|(a, d)| a * d).sum();
        let s2: f64 = a.iter().zip(&d).map(|(a, d)| a * d * d).sum();
        let r0: f64 = a.iter().zip(&x).map(|(a, x)| a * x).sum();
        let r1: f64 = a.iter().zip(&d).zip(&x).map(|((a, d), x)| a * d * x).sum();
        let mean_d = s1 / s0;
        let var_d = s2 / s0 - mean_d * mean_d;
        let (n0, n1) = if intercept_only || var_d <= 1e-12 * h * h {
            intercept_only = true;
            (r0 / s0, 0.0)
        } else {
            let det = s0 * s2 - s1 * s1;
            ((s2 * r0 - s1 * r1) / det, (s0 * r1 - s1 * r0) / det)
        };
        let change = (n0 - b0).abs().max(h * (n1 - b1).abs());
        b0 = n0;
        b1 = n1;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(objective(b0, b1));
        }
        if change <= IRLS_TOL * sigma {
            return Ok(LocalLinearFit {
                intercept: b0,
                slope: b1,
                diagnostics: LocalFitDiagnostics {
                    support: x.len(),
                    scale: sigma,
                    iterations: iter,
                    converged: true,
                    intercept_only,
                },
            });
        }
    }
    Err(FpcaError::NoConvergence {
        iterations: IRLS_MAX_ITER,
        context: format!("local linear M-fit at t = {t0}"),
    })
}

/// One within-curve pair of centred observations `(X̃ᵢⱼ, X̃ᵢℓ)`, `j ≠ ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopePair {
    /// Response `X̃ᵢⱼ`, observed at `t_row`.
    pub row: f64,
    /// Regressor `X̃ᵢℓ`, observed at `t_col`.
    pub col: f64,
    pub t_row: f64,
    pub t_col: f64,
}

impl SlopePair {
    #[inline]
    pub fn in_window(&self, t0: f64, s0: f64, h: f64) -> bool {
        in_window(self.t_row, t0, h) && in_window(self.t_col, s0, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSlopeFit {
    pub slope: f64,
    pub diagnostics: LocalFitDiagnostics,
}

/// Local M-regression through the origin of `X̃(t₀)` on `X̃(s₀)`.
///
/// Starts from the median of in-window ratios, standardises by the local MAD
/// of the corresponding residuals and refines by IRLS with product-kernel
/// weights.
pub fn local_m_slope(pairs: &[SlopePair], t0: f64, s0: f64, h: f64, rho: RhoFamily) -> Result<LocalSlopeFit> {
    let mut row = Vec::new();
    let mut col = Vec::new();
    let mut k = Vec::new();
    for p in pairs {
        let w = epanechnikov((p.t_row - t0) / h) * epanechnikov((p.t_col - s0) / h);
        if w > 0.0 {
            row.push(p.row);
            col.push(p.col);
            k.push(w);
        }
    }
    let no_data = || FpcaError::NoLocalData {
        location: format!("(t, s) = ({t0}, {s0})"),
    };
    if row.is_empty() {
        return Err(no_data());
    }
    let support = row.len();

    if rho.is_square() {
        let num: f64 = k.iter().zip(&row).zip(&col).map(|((k, r), c)| k * r * c).sum();
        let den: f64 = k.iter().zip(&col).map(|(k, c)| k * c * c).sum();
        if !(den > 0.0) {
            return Err(no_data());
        }
        return Ok(LocalSlopeFit {
            slope: num / den,
            diagnostics: LocalFitDiagnostics {
                support,
                scale: 1.0,
                iterations: 1,
                converged: true,
                intercept_only: false,
            },
        });
    }

    let ratios: Vec<f64> = row
        .iter()
        .zip(&col)
        .filter(|(_, c)| c.abs() >= RATIO_EPS)
        .map(|(r, c)| r / c)
        .collect();
    if ratios.is_empty() {
        return Err(no_data());
    }
    let start = crate::robust::median(&ratios);
    let resid: Vec<f64> = row.iter().zip(&col).map(|(r, c)| r - start * c).collect();
    if resid.iter().all(|r| *r == 0.0) {
        return Ok(LocalSlopeFit {
            slope: start,
            diagnostics: LocalFitDiagnostics {
                support,
                scale: 0.0,
                iterations: 0,
                converged: true,
                intercept_only: false,
            },
        });
    }
    let mut scale = mad(&resid, MAD_KAPPA);
    if !(scale > 0.0) {
        scale = resid.iter().map(|r| r.abs()).sum::<f64>() / resid.len() as f64 / MAD_KAPPA;
    }

    let mut beta = start;
    for iter in 1..=IRLS_MAX_ITER {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..row.len() {
            let a = k[i] * rho.weight((row[i] - beta * col[i]) / scale);
            num += a * col[i] * row[i];
            den += a * col[i] * col[i];
        }
        if !(den > 0.0) {
            return Ok(LocalSlopeFit {
                slope: beta,
                diagnostics: LocalFitDiagnostics {
                    support,
                    scale,
                    iterations: iter,
                    converged: true,
                    intercept_only: false,
                },
            });
        }
        let next = num / den;
        let change = (next - beta).abs();
        beta = next;
        if change <= IRLS_TOL * beta.abs().max(1.0) {
            return Ok(LocalSlopeFit {
                slope: beta,
                diagnostics: LocalFitDiagnostics {
                    support,
                    scale,
                    iterations: iter,
                    converged: true,
                    intercept_only: false,
                },
            });
        }
    }
    Err(FpcaError::NoConvergence {
        iterations: IRLS_MAX_ITER,
        context: format!("local M-slope at ({t0}, {s0})"),
    })
}

/// Local linear smoother on a square grid with a product Epanechnikov kernel.
///
/// `raw` may contain `NaN` cells (missing); they are filled by the fit. When a
/// window is too sparse for a plane, the bandwidth grows, and as a last resort
/// the local constant fit is used.
pub fn bivariate_smooth(grid: &[f64], raw: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let m = grid.len();
    if raw.nrows() != m || raw.ncols() != m {
        return Err(FpcaError::InvalidInput(format!(
            "surface is {}x{} but the grid has {m} points",
            raw.nrows(),
            raw.ncols()
        )));
    }
    if !(h > 0.0) {
        return Err(FpcaError::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    if raw.iter().all(|v| v.is_nan()) {
        return Err(FpcaError::AllMissing);
    }
    let span = grid[m - 1] - grid[0];
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = smooth_cell(grid, raw, i, j, h, span);
        }
    }
    Ok(out)
}

fn smooth_cell(grid: &[f64], raw: &DMatrix<f64>, i: usize, j: usize, h: f64, span: f64) -> f64 {
    let (s, t) = (grid[i], grid[j]);
    let mut bw = h;
    loop {
        let mut xtx = Matrix3::<f64>::zeros();
        let mut xty = Vector3::<f64>::zeros();
        let mut wsum = 0.0;
        let mut wy = 0.0;
        for (p, gp) in grid.iter().enumerate() {
            let kp = epanechnikov((gp - s) / bw);
            if kp == 0.0 {
                continue;
            }
            for (q, gq) in grid.iter().enumerate() {
                let y = raw[(p, q)];
                if y.is_nan() {
                    continue;
                }
                let w = kp * epanechnikov((gq - t) / bw);
                if w == 0.0 {
                    continue;
                }
                let z = Vector3::new(1.0, (gp - s) / bw, (gq - t) / bw);
                xtx += w * z * z.transpose();
                xty += w * y * z;
                wsum += w;
                wy += w * y;
            }
        }
        if wsum > 0.0 {
            if let Some(inv) = plane_solve(&xtx, &xty) {
                return inv;
            }
        }
        if bw > 2.0 * span {
            if wsum > 0.0 {
                return wy / wsum;
            }
            // Kernel support covers the whole grid at this point; unreachable
            // unless everything is missing, which is rejected upstream.
            return f64::NAN;
        }
        bw *= WIDEN_FACTOR;
    }
}

fn plane_solve(xtx: &Matrix3<f64>, xty: &Vector3<f64>) -> Option<f64> {
    let lu = xtx.lu();
    let u = lu.u();
    let min_pivot = (0..3).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-10 * xtx.amax() {
        return None;
    }
    lu.solve(xty).map(|b| b[0])
}

/// One-dimensional local linear smooth of grid values (missing = `NaN`).
pub fn linear_smooth_1d(grid: &[f64], values: &[f64], h: f64) -> Vec<f64> {
    let span = grid[grid.len() - 1] - grid[0];
    grid.iter()
        .map(|&t0| {
            let mut bw = h;
            loop {
                let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (t, y) in grid.iter().zip(values) {
                    if y.is_nan() {
                        continue;
                    }
                    let w = epanechnikov((t - t0) / bw);
                    let d = (t - t0) / bw;
                    s0 += w;
                    s1 += w * d;
                    s2 += w * d * d;
                    r0 += w * y;
                    r1 += w * d * y;
                }
                let det = s0 * s2 - s1 * s1;
                if s0 > 0.0 && det > 1e-10 * s0 * s0 {
                    return (s2 * r0 - s1 * r1) / det;
                }
                if bw > 2.0 * span {
                    return if s0 > 0.0 { r0 / s0 } else { f64::NAN };
                }
                bw *= WIDEN_FACTOR;
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::{BISQUARE_SLOPE_C, HUBER_C};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kernel_weight_examples() {
        assert_eq!(kernel_weights(&[0.3], 0.5, 1.0).unwrap(), vec![1.0]);
        let w = kernel_weights(&[0.2, 0.8], 0.5, 1.0).unwrap();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-15);
        assert!(matches!(
            kernel_weights(&[3.0, -3.0], 0.0, 1.0),
            Err(FpcaError::NoLocalData { .. })
        ));
        assert!(kernel_weights(&[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn kernel_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let times: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(0.0..10.0)).collect();
            let t0 = rng.gen_range(0.0..10.0);
            if let Ok(w) = kernel_weights(&times, t0, rng.gen_range(0.1..3.0)) {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w.iter().all(|w| *w >= 0.0));
            }
        }
    }

    #[test]
    fn local_mad_examples() {
        let t = [0.0, 0.1, 0.2];
        assert!(matches!(
            local_mad_scale(&t, &[4.0; 3], 0.1, 0.5),
            Err(FpcaError::DegenerateScale { .. })
        ));
        let s = local_mad_scale(&t, &[-1.0, 0.0, 1.0], 0.1, 0.5).unwrap();
        assert_relative_eq!(s, 1.0 / MAD_KAPPA, epsilon = 1e-12);
        assert!(matches!(
            local_mad_scale(&t, &[1.0, 2.0, 3.0], 5.0, 0.5),
            Err(FpcaError::NoLocalData { .. })
        ));
    }

    #[test]
    fn local_mad_recovers_process_sd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = 2.5;
        let n = 20_000;
        let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        // Stationary noise around a flat mean: the window sees N(0, σ²) values.
        let values: Vec<f64> = (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let s = local_mad_scale(&times, &values, 0.5, 0.1).unwrap();
        assert!((s / sigma - 1.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn local_linear_is_exact_on_a_line() {
        let times = [0.0, 0.3, 0.5, 0.9, 1.4, 1.5];
        let values: Vec<f64> = times.iter().map(|t| 2.0 - 3.0 * t).collect();
        for rho in [RhoFamily::huber(), RhoFamily::bisquare(BISQUARE_SLOPE_C), RhoFamily::Square] {
            let fit = local_linear_m_mean(&times, &values, 0.7, 1.0, rho, 0.4).unwrap();
            assert_relative_eq!(fit.intercept, 2.0 - 3.0 * 0.7, epsilon = 1e-12);
            assert_relative_eq!(fit.slope, 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn local_linear_constant_and_singular() {
        let times = [0.1, 0.2, 0.3];
        let fit = local_linear_m_mean(&times, &[5.0; 3], 0.2, 1.0, RhoFamily::huber(), 1.0).unwrap();
        assert_eq!(fit.intercept, 5.0);
        let fit = local_linear_m_mean(&[0.5; 4], &[1.0, 2.0, 3.0, 100.0], 0.4, 1.0, RhoFamily::huber(), 1.0)
            .unwrap();
        assert!(fit.diagnostics.intercept_only);
        assert!(fit.intercept > 1.0 && fit.intercept < 5.0);
        assert!(local_linear_m_mean(&times, &[1.0; 3], 9.0, 1.0, RhoFamily::huber(), 1.0).is_err());
    }

    #[test]
    fn local_linear_least_squares_matches_weighted_ls() {
        let times = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let values = [1.0, 0.4, 2.2, 1.7, 3.1, 2.0];
        let t0 = 0.45;
        let h = 0.7;
        let fit = local_linear_m_mean(&times, &values, t0, h, RhoFamily::Square, 1.0).unwrap();
        // Closed-form weighted least squares.
        let w: Vec<f64> = times.iter().map(|t| epanechnikov((t - t0) / h)).collect();
        let d: Vec<f64> = times.iter().map(|t| t0 - t).collect();
        let (mut a, mut b, mut c, mut p, mut q) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..6 {
            a += w[i];
            b += w[i] * d[i];
            c += w[i] * d[i] * d[i];
            p += w[i] * values[i];
            q += w[i] * d[i] * values[i];
        }
        let b0 = (c * p - b * q) / (a * c - b * b);
        assert_relative_eq!(fit.intercept, b0, epsilon = 1e-12);
    }

    #[test]
    fn bisquare_irls_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let times: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
            let values: Vec<f64> = times
                .iter()
                .map(|t| {
                    let e: f64 = rng.sample(StandardNormal);
                    let out = if rng.gen_bool(0.2) { 15.0 } else { 0.0 };
                    t.sin() + 0.3 * e + out
                })
                .collect();
            let mut trace = Vec::new();
            local_linear_m_mean_traced(&times, &values, 0.5, 0.4, RhoFamily::bisquare(4.685), 0.3, Some(&mut trace))
                .unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{trace:?}");
            }
        }
    }

    fn line_pairs(b: f64) -> Vec<SlopePair> {
        (0..12)
            .map(|i| {
                let x = (i as f64 - 5.5) * 0.7;
                SlopePair {
                    row: b * x,
                    col: x,
                    t_row: 0.1 * i as f64,
                    t_col: 0.05 * i as f64,
                }
            })
            .collect()
    }

    #[test]
    fn slope_exact_on_a_ray() {
        let pairs = line_pairs(-1.7);
        for rho in [RhoFamily::bisquare(BISQUARE_SLOPE_C), RhoFamily::Square, RhoFamily::huber()] {
            let fit = local_m_slope(&pairs, 0.5, 0.3, 1.0, rho).unwrap();
            assert_relative_eq!(fit.slope, -1.7, epsilon = 1e-12);
        }
        assert!(matches!(
            local_m_slope(&pairs, 5.0, 5.0, 0.5, RhoFamily::Square),
            Err(FpcaError::NoLocalData { .. })
        ));
    }

    #[test]
    fn slope_ignores_outlying_pairs() {
        let mut pairs = line_pairs(0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in pairs.iter_mut() {
            p.row += 0.01 * rng.sample::<f64, _>(StandardNormal);
        }
        pairs[3].row = 50.0;
        pairs[7].row = -40.0;
        let rob = local_m_slope(&pairs, 0.5, 0.3, 1.0, RhoFamily::bisquare(BISQUARE_SLOPE_C)).unwrap();
        assert!((rob.slope - 0.8).abs() < 0.02, "{}", rob.slope);
        let ls = local_m_slope(&pairs, 0.5, 0.3, 1.0, RhoFamily::Square).unwrap();
        assert!((ls.slope - 0.8).abs() > 0.1);
    }

    #[test]
    fn slope_is_invariant_to_joint_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<SlopePair> = (0..40)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                SlopePair {
                    row: 0.6 * x + 0.4 * e,
                    col: x,
                    t_row: rng.gen_range(0.0..1.0),
                    t_col: rng.gen_range(0.0..1.0),
                }
            })
            .collect();
        let base = local_m_slope(&pairs, 0.5, 0.5, 0.6, RhoFamily::bisquare(BISQUARE_SLOPE_C)).unwrap();
        for a in [-3.0, 0.01, 250.0] {
            let scaled: Vec<SlopePair> = pairs
                .iter()
                .map(|p| SlopePair {
                    row: a * p.row,
                    col: a * p.col,
                    ..*p
                })
                .collect();
            let fit = local_m_slope(&scaled, 0.5, 0.5, 0.6, RhoFamily::bisquare(BISQUARE_SLOPE_C)).unwrap();
            assert_relative_eq!(fit.slope, base.slope, max_relative = 1e-7);
        }
    }

    #[test]
    fn huber_slope_is_available() {
        let pairs = line_pairs(2.0);
        let fit = local_m_slope(&pairs, 0.5, 0.3, 1.0, RhoFamily::Huber { c: HUBER_C }).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
    }

    fn grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    #[test]
    fn bivariate_reproduces_constant_and_affine() {
        let g = grid(15);
        let h = 2.0 / 14.0;
        let c = DMatrix::from_element(15, 15, 3.25);
        let out = bivariate_smooth(&g, &c, h).unwrap();
        assert!((out - c).amax() < 1e-12);
        let mut aff = DMatrix::from_fn(15, 15, |i, j| 1.0 + 2.0 * g[i] - 0.5 * g[j]);
        let truth = aff.clone();
        aff[(3, 4)] = f64::NAN;
        aff[(0, 0)] = f64::NAN;
        for i in 0..15 {
            aff[(i, i)] = f64::NAN;
        }
        let out = bivariate_smooth(&g, &aff, h).unwrap();
        assert!((out - truth).amax() < 1e-8);
    }

    #[test]
    fn bivariate_reduces_noise() {
        let g = grid(30);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let truth = DMatrix::from_fn(30, 30, |i, j| 2.0 * g[i] * g[i] - g[i] * g[j] + 0.5 * g[j] * g[j]);
        let noisy = DMatrix::from_fn(30, 30, |i, j| truth[(i, j)] + rng.sample::<f64, _>(StandardNormal));
        let out = bivariate_smooth(&g, &noisy, 2.0 / 29.0).unwrap();
        let mse = (out - &truth).map(|v| v * v).mean();
        assert!(mse < 1.0, "mse {mse}");
        assert!(matches!(
            bivariate_smooth(&g, &DMatrix::from_element(30, 30, f64::NAN), 0.1),
            Err(FpcaError::AllMissing)
        ));
    }

    #[test]
    fn widening_rule() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let count = |h: f64| times.iter().filter(|t| (*t - 0.0f64).abs() <= h).count();
        assert_eq!(support_bandwidth(4.0, count), Some(4.0));
        assert_eq!(support_bandwidth(2.0, count), Some(4.5));
        assert_eq!(support_bandwidth(0.1, count), None);
    }

    #[test]
    fn one_dimensional_smoother_reproduces_lines() {
        let g = grid(11);
        let mut v: Vec<f64> = g.iter().map(|t| 4.0 - t).collect();
        v[5] = f64::NAN;
        let s = linear_smooth_1d(&g, &v, 0.2);
        for (t, y) in g.iter().zip(s) {
            assert_relative_eq!(y, 4.0 - t, epsilon = 1e-12);
        }
    }
}
