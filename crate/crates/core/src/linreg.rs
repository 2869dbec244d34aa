//! Ordinary least squares with an intercept, used by the power and transfer
//! fits. Columns are centred and scaled before a QR solve so that regressors
//! spanning many orders of magnitude (cache misses vs. cycles vs. bytes)
//! stay well conditioned.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of an R diagonal below which a column is declared dependent
/// on the ones before it.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fit `y ≈ intercept + Σ coefficients[j] · columns[j]`.
///
/// `names` labels the columns for degenerate-fit errors. Constant columns are
/// collinear with the intercept and are reported as such.
pub fn fit_with_intercept(names: &[&str], columns: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    assert_eq!(names.len(), columns.len());
    let n = y.len();
    let p = columns.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Contract("regressor columns and response differ in length".into()));
    }
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {} unknowns",
            p + 1
        )));
    }

    let y_mean = mean(y);
    let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    let mut scales = Vec::with_capacity(p);
    let mut degenerate = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        let s = c.iter().map(|v| (v - means[j]).abs()).fold(0.0, f64::max);
        if s == 0.0 || !s.is_finite() {
            degenerate.push(names[j].to_string());
        }
        scales.push(s);
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateFit { columns: degenerate });
    }

    let x = DMatrix::from_fn(n, p, |i, j| (columns[j][i] - means[j]) / scales[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let col_norm = x.column(j).norm();
        if r[(j, j)].abs() <= RANK_TOLERANCE * col_norm {
            degenerate.push(names[j].to_string());
        }
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateFit { columns: degenerate });
    }
    let qty = qr.q().transpose() * &yc;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::DegenerateFit { columns: names.iter().map(|s| s.to_string()).collect() })?;

    let coefficients: Vec<f64> = (0..p).map(|j| beta[j] / scales[j]).collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();

    let mut sse = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        let pred = intercept + (0..p).map(|j| coefficients[j] * columns[j][i]).sum::<f64>();
        sse += (y[i] - pred).powi(2);
        sst += (y[i] - y_mean).powi(2);
    }
    Ok(LinearFit {
        coefficients,
        intercept,
        r_squared: r_squared(sse, sst),
    })
}

pub(crate) fn r_squared(sse: f64, sst: f64) -> f64 {
    if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else if sse <= f64::EPSILON {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
