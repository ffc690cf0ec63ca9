//! Ordinary least-squares fits used to summarise sweeps.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fit `y = slope * x + intercept`.
pub fn linear(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    LinearFit {
        slope,
        intercept,
        r_squared: r_squared(y, |i| slope * x[i] + intercept),
    }
}

/// Fit `y = sum_k c_k * basis_k(x)`; returns coefficients and R².
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let rows = y.len();
    let a = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .expect("svd solve with both factors");
    let pred = &a * &coef;
    let r2 = r_squared(y, |i| pred[i]);
    (coef.iter().copied().collect(), r2)
}

fn r_squared(y: &[f64], pred: impl Fn(usize) -> f64) -> f64 {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = (0..y.len()).map(|i| (y[i] - pred(i)).powi(2)).sum();
    if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Observed convergence order from errors at successive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn three_term_model() {
        let x: Vec<f64> = (1..10).map(|k| 50.0 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| -0.01 * t + 1.5 * t.ln() + 3.0).collect();
        let (c, r2) = least_squares(&[x.clone(), x.iter().map(|t| t.ln()).collect(), vec![1.0; x.len()]], &y);
        assert!((c[0] + 0.01).abs() < 1e-10 && (c[1] - 1.5).abs() < 1e-8 && (c[2] - 3.0).abs() < 1e-7);
        assert!(r2 > 0.999999);
    }

    #[test]
    fn orders() {
        let o = observed_orders(&[1.0, 0.25, 0.0625]);
        assert_eq!(o, vec![2.0, 2.0]);
    }
}
