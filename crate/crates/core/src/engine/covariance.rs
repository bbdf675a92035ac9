use nalgebra::DMatrix;
use rayon::prelude::*;

use super::mean::{DiagonalEstimate, MeanFunctionEstimate};
use super::sample::{GridSpec, SparseFunctionalSample};
use crate::error::{FpcaError, Result};
use crate::linalg::jacobi_eigen;
use crate::robust::RhoFamily;
use crate::smoothers::{bivariate_smooth, linear_smooth_1d, local_m_slope, support_bandwidth, SlopePair};

/// Symmetric scatter surface tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSurface {
    pub grid: GridSpec,
    pub matrix: DMatrix<f64>,
    pub psd_projected: bool,
}

impl CovarianceSurface {
    /// Bilinear interpolation; arguments are clamped to the domain.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        bilinear(&self.grid, &self.matrix, s, t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.m).map(|i| self.matrix[(i, i)]).collect()
    }
}

pub(crate) fn bilinear(grid: &GridSpec, m: &DMatrix<f64>, s: f64, t: f64) -> f64 {
    let (i, fs) = grid.locate(s);
    let (j, ft) = grid.locate(t);
    let v00 = m[(i, j)];
    let v10 = m[(i + 1, j)];
    let v01 = m[(i, j + 1)];
    let v11 = m[(i + 1, j + 1)];
    (1.0 - fs) * ((1.0 - ft) * v00 + ft * v01) + fs * ((1.0 - ft) * v10 + ft * v11)
}

/// Centred within-curve pairs `(X̃ᵢⱼ, X̃ᵢℓ)` for all ordered `j ≠ ℓ`, sorted by
/// the response time.
pub fn slope_pairs(sample: &SparseFunctionalSample, mean: &MeanFunctionEstimate) -> Vec<SlopePair> {
    let mut pairs = Vec::new();
    for c in &sample.curves {
        let centred: Vec<f64> = c.times.iter().zip(&c.values).map(|(t, x)| x - mean.eval(*t)).collect();
        for j in 0..c.len() {
            for l in 0..c.len() {
                if j != l {
                    pairs.push(SlopePair {
                        row: centred[j],
                        col: centred[l],
                        t_row: c.times[j],
                        t_col: c.times[l],
                    });
                }
            }
        }
    }
    sort_pairs(&mut pairs);
    pairs
}

pub(crate) fn sort_pairs(pairs: &mut [SlopePair]) {
    pairs.sort_by(|a, b| {
        a.t_row
            .total_cmp(&b.t_row)
            .then(a.t_col.total_cmp(&b.t_col))
            .then(a.row.total_cmp(&b.row))
            .then(a.col.total_cmp(&b.col))
    });
}

fn row_window(pairs: &[SlopePair], t0: f64, h: f64) -> &[SlopePair] {
    let lo = pairs.partition_point(|p| p.t_row < t0 - h);
    let hi = pairs.partition_point(|p| p.t_row <= t0 + h);
    &pairs[lo..hi]
}

/// Local slope at one grid cell, widening the window when it is too sparse.
pub(crate) fn slope_at(pairs: &[SlopePair], t0: f64, s0: f64, h: f64, family: RhoFamily) -> Option<f64> {
    let bw = support_bandwidth(h, |bw| {
        row_window(pairs, t0, bw).iter().filter(|p| p.in_window(t0, s0, bw)).count()
    })?;
    local_m_slope(row_window(pairs, t0, bw), t0, s0, bw, family)
        .ok()
        .map(|f| f.slope)
}

/// Slope surface `β̂(gₘ, gₗ)`; failed cells are `NaN`. The diagonal is
/// computed only when `with_diagonal` is set.
pub(crate) fn slope_surface(
    pairs: &[SlopePair],
    grid: &GridSpec,
    family: RhoFamily,
    h: f64,
    with_diagonal: bool,
) -> DMatrix<f64> {
    let pts = grid.points();
    let m = grid.m;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j && !with_diagonal {
                        f64::NAN
                    } else {
                        slope_at(pairs, pts[i], pts[j], h, family).unwrap_or(f64::NAN)
                    }
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// Off-diagonal estimate `γ̃(gₘ, gₗ) = β̂(gₘ, gₗ) γ̂(gₗ, gₗ)`, surface smoothing
/// of both orientations, symmetrisation, and the smoothed diagonal on top.
pub fn assemble_covariance(
    sample: &SparseFunctionalSample,
    mean: &MeanFunctionEstimate,
    diagonal: &DiagonalEstimate,
    family: RhoFamily,
    h: f64,
    smoothing_steps: f64,
) -> Result<CovarianceSurface> {
    if !(h > 0.0) {
        return Err(FpcaError::InvalidConfig(format!("covariance bandwidth must be positive, got {h}")));
    }
    let grid = mean.grid;
    let m = grid.m;
    let pairs = slope_pairs(sample, mean);
    let beta = slope_surface(&pairs, &grid, family, h, false);

    let failed = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && beta[(i, j)].is_nan())
        .count();
    let total = m * (m - 1);
    if 2 * failed > total {
        return Err(FpcaError::InsufficientPairings { failed, total });
    }

    let raw = DMatrix::from_fn(m, m, |i, j| beta[(i, j)] * diagonal.values[j]);
    let pts = grid.points();
    let bw = smoothing_steps * grid.step();
    let smoothed = bivariate_smooth(&pts, &raw, bw)?;
    let smoothed_t = bivariate_smooth(&pts, &raw.transpose(), bw)?;
    let mut matrix = DMatrix::from_fn(m, m, |i, j| 0.5 * (smoothed[(i, j)] + smoothed_t[(j, i)]));
    symmetrize(&mut matrix);

    let diag = linear_smooth_1d(&pts, &diagonal.values, bw);
    for (i, d) in diag.into_iter().enumerate() {
        matrix[(i, i)] = d.max(0.0);
    }
    Ok(CovarianceSurface {
        grid,
        matrix,
        psd_projected: false,
    })
}

/// Replaces `A` by `(A + Aᵀ)/2`, exactly symmetric in floating point.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Drops the negative part of the spectrum of a symmetric surface.
pub fn psd_project(surface: &CovarianceSurface) -> CovarianceSurface {
    let eig = jacobi_eigen(&surface.matrix);
    let n = surface.grid.m;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda > 0.0 {
            let v = eig.vectors.column(k);
            out += lambda * v * v.transpose();
        }
    }
    symmetrize(&mut out);
    CovarianceSurface {
        grid: surface.grid,
        matrix: out,
        psd_projected: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn surface(m: DMatrix<f64>) -> CovarianceSurface {
        let n = m.nrows();
        CovarianceSurface {
            grid: GridSpec::new(0.0, 1.0, n).unwrap(),
            matrix: m,
            psd_projected: false,
        }
    }

    #[test]
    fn psd_projection_truncates() {
        let s = surface(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])));
        let p = psd_project(&s);
        assert!((p.matrix - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn psd_projection_keeps_psd_input() {
        let b = DMatrix::from_fn(6, 3, |i, j| ((i + 2 * j) as f64).cos());
        let a = &b * b.transpose();
        let p = psd_project(&surface(a.clone()));
        assert!((p.matrix - a).amax() < 1e-10);
    }

    #[test]
    fn bilinear_reproduces_bilinear_functions() {
        let g = GridSpec::new(0.0, 2.0, 5).unwrap();
        let pts = g.points();
        let m = DMatrix::from_fn(5, 5, |i, j| 1.0 + pts[i] - 2.0 * pts[j] + 0.5 * pts[i] * pts[j]);
        for (s, t) in [(0.3, 1.7), (1.0, 1.0), (2.0, 0.0), (0.25, 0.75)] {
            let want = 1.0 + s - 2.0 * t + 0.5 * s * t;
            assert!((bilinear(&g, &m, s, t) - want).abs() < 1e-12);
        }
    }
}
