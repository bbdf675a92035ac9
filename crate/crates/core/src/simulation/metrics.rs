use nalgebra::DMatrix;

use crate::engine::{inner_product, GridSpec};
use crate::error::{FpcaError, Result};

/// `Σₘₗ (Â − B)²ₘₗ` over all cells.
pub fn frobenius_discrepancy(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "surfaces must share a grid");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// [`frobenius_discrepancy`] divided by the number of cells.
pub fn frobenius_cell_mean(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    frobenius_discrepancy(a, b) / (a.nrows() * a.ncols()) as f64
}

/// `|⟨φ̂, φ⟩|` under grid quadrature, clamped to `[0, 1]`.
pub fn alignment(est: &[f64], truth: &[f64], grid: &GridSpec) -> f64 {
    inner_product(grid, est, truth).abs().min(1.0)
}

/// `(log(λ̂/λ))²`; infinite when `λ̂ ≤ 0`.
pub fn log_ratio_loss(est: f64, truth: f64) -> f64 {
    if est <= 0.0 {
        f64::INFINITY
    } else {
        (est / truth).ln().powi(2)
    }
}

/// `(λ̂/λ − 1)²`.
pub fn relative_loss(est: f64, truth: f64) -> f64 {
    (est / truth - 1.0).powi(2)
}

fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(FpcaError::InvalidInput(format!(
            "spearman needs two equal-length vectors of length ≥ 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (rx, ry) = (mid_ranks(x), mid_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FpcaError::DegenerateRanks);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-component score accuracy after sign re-orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMetrics {
    pub mse: Vec<f64>,
    /// Over uncontaminated curves only.
    pub m2: Vec<f64>,
    pub flipped: Vec<bool>,
}

/// Flips each estimated score column whose Spearman correlation with the
/// truth is negative, then computes the mean squared error over all curves
/// and over the clean ones.
pub fn score_metrics(est: &DMatrix<f64>, truth: &DMatrix<f64>, flags: &[bool]) -> Result<ScoreMetrics> {
    if est.shape() != truth.shape() || flags.len() != est.nrows() {
        return Err(FpcaError::InvalidInput(format!(
            "score shapes differ: {:?} vs {:?} with {} flags",
            est.shape(),
            truth.shape(),
            flags.len()
        )));
    }
    let clean = flags.iter().filter(|b| !**b).count();
    if clean == 0 {
        return Err(FpcaError::NoCleanCurves);
    }
    let n = est.nrows();
    let mut out = ScoreMetrics {
        mse: Vec::new(),
        m2: Vec::new(),
        flipped: Vec::new(),
    };
    for k in 0..est.ncols() {
        let e: Vec<f64> = est.column(k).iter().copied().collect();
        let t: Vec<f64> = truth.column(k).iter().copied().collect();
        // A constant column carries no orientation.
        let flip = matches!(spearman_rho(&e, &t), Ok(r) if r < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        let mut all = 0.0;
        let mut clean_sum = 0.0;
        for i in 0..n {
            let d = (sign * e[i] - t[i]).powi(2);
            all += d;
            if !flags[i] {
                clean_sum += d;
            }
        }
        out.mse.push(all / n as f64);
        out.m2.push(clean_sum / clean as f64);
        out.flipped.push(flip);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_examples() {
        let a = DMatrix::from_fn(50, 50, |i, j| (i * j) as f64 / 100.0);
        assert_eq!(frobenius_discrepancy(&a, &a), 0.0);
        let b = a.add_scalar(0.3);
        assert!((frobenius_discrepancy(&b, &a) - 2500.0 * 0.09).abs() < 1e-9);
        assert_eq!(frobenius_discrepancy(&a, &b), frobenius_discrepancy(&b, &a));
        assert!((frobenius_cell_mean(&a, &b) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn alignment_examples() {
        let g = GridSpec::new(0.0, 1.0, 201).unwrap();
        let p = g.points();
        let f: Vec<f64> = p.iter().map(|t| 2f64.sqrt() * (std::f64::consts::PI * t).sin()).collect();
        let h: Vec<f64> = p.iter().map(|t| 2f64.sqrt() * (2.0 * std::f64::consts::PI * t).sin()).collect();
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        assert!((alignment(&f, &f, &g) - 1.0).abs() < 1e-12);
        assert!((alignment(&neg, &f, &g) - 1.0).abs() < 1e-12);
        assert!(alignment(&f, &h, &g) < 1e-12);
        let mix: Vec<f64> = f.iter().zip(&h).map(|(a, b)| 0.6 * a + 0.8 * b).collect();
        assert!((alignment(&f, &mix, &g) - alignment(&mix, &f, &g)).abs() < 1e-15);
        assert!((alignment(&f, &mix, &g) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 31.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(spearman_rho(&[1.0, 1.0], &[1.0, 2.0]), Err(FpcaError::DegenerateRanks));
        assert_eq!(mid_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn score_metric_examples() {
        let xi = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 0.5, 3.0, -1.0, 0.1, 2.0, 0.7]);
        let m = score_metrics(&xi, &xi, &[false; 4]).unwrap();
        assert_eq!(m.mse, vec![0.0, 0.0]);
        assert_eq!(m.flipped, vec![false, false]);
        let m = score_metrics(&(-xi.clone()), &xi, &[false; 4]).unwrap();
        assert_eq!(m.mse, vec![0.0, 0.0]);
        assert_eq!(m.flipped, vec![true, true]);

        let est = xi.add_scalar(1.0);
        let m = score_metrics(&est, &xi, &[false; 4]).unwrap();
        assert_eq!(m.mse, m.m2);
        let m = score_metrics(&est, &xi, &[true, false, false, false]).unwrap();
        assert!((m.m2[0] - 1.0).abs() < 1e-15);
        assert_eq!(score_metrics(&est, &xi, &[true; 4]), Err(FpcaError::NoCleanCurves));
    }

    #[test]
    fn losses() {
        assert_eq!(log_ratio_loss(4.0, 4.0), 0.0);
        assert!((log_ratio_loss(4.0 * std::f64::consts::E, 4.0) - 1.0).abs() < 1e-14);
        assert_eq!(log_ratio_loss(-1.0, 4.0), f64::INFINITY);
        assert!((relative_loss(2.0, 1.0) - 1.0).abs() < 1e-15);
    }
}
