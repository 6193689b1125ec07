//! Small deterministic fitting helpers: linear least squares, low-degree
//! polynomial fits, FWHM extraction by half-maximum crossings, and
//! trapezoidal quadrature.

use crate::{Error, Result};

/// Result of a straight-line least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::FitFailure(format!(
            "need at least 2 matched samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(Error::FitFailure("degenerate abscissa".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Decay rate from a log-linear fit of positive samples `y ~ exp(-rate t)`.
pub fn exponential_rate(t: &[f64], y: &[f64]) -> Result<LinearFit> {
    if y.iter().any(|&v| v <= 0.0) {
        return Err(Error::FitFailure(
            "nonpositive samples in exponential fit window".into(),
        ));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mut fit = linear_fit(t, &logs)?;
    fit.slope = -fit.slope; // report the decay rate as positive
    Ok(fit)
}

/// Least-squares polynomial fit of the given degree; returns coefficients
/// in ascending order. Solves the normal equations by Gaussian elimination,
/// which is adequate for the small degrees used here.
pub fn polynomial_fit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let m = degree + 1;
    if x.len() != y.len() || x.len() < m {
        return Err(Error::FitFailure(format!(
            "need at least {m} samples for degree {degree}, got {}",
            x.len()
        )));
    }
    // Normal equations A c = b with A_jk = sum x^(j+k), b_j = sum y x^j.
    let mut moments = vec![0.0; 2 * m - 1];
    let mut b = vec![0.0; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut p = 1.0;
        for (j, mom) in moments.iter_mut().enumerate() {
            *mom += p;
            if j < m {
                b[j] += yi * p;
            }
            p *= xi;
        }
    }
    let mut a = vec![vec![0.0; m]; m];
    for j in 0..m {
        for k in 0..m {
            a[j][k] = moments[j + k];
        }
    }
    // Partial-pivot elimination.
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::FitFailure("singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut c = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for k in row + 1..m {
            acc -= a[row][k] * c[k];
        }
        c[row] = acc / a[row][row];
    }
    Ok(c)
}

/// Full width at half maximum of a sampled peak, located by linear
/// interpolation between the half-maximum crossings on each flank.
pub fn fwhm(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::FitFailure("need at least 3 samples for FWHM".into()));
    }
    let (i_peak, &peak) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    if peak <= 0.0 {
        return Err(Error::FitFailure("peak must be positive".into()));
    }
    let half = peak / 2.0;
    let cross = |i: usize, j: usize| -> f64 {
        // Linear interpolation of the half-maximum between samples i and j.
        let f = (half - y[i]) / (y[j] - y[i]);
        x[i] + f * (x[j] - x[i])
    };
    let mut left = None;
    for i in (0..i_peak).rev() {
        if y[i] <= half {
            left = Some(cross(i, i + 1));
            break;
        }
    }
    let mut right = None;
    for i in i_peak..x.len() - 1 {
        if y[i + 1] <= half {
            right = Some(cross(i + 1, i));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::FitFailure(
            "half-maximum crossings not bracketed by the sample range".into(),
        )),
    }
}

/// Log-linear decay rate fitted over the samples with `t_lo <= t <= t_hi`.
pub fn rate_in_window(times: &[f64], y: &[f64], t_lo: f64, t_hi: f64) -> Result<LinearFit> {
    let mut tw = Vec::new();
    let mut yw = Vec::new();
    for (&t, &v) in times.iter().zip(y) {
        if t >= t_lo && t <= t_hi {
            tw.push(t);
            yw.push(v);
        }
    }
    exponential_rate(&tw, &yw)
}

/// Trapezoidal integral of samples `y` over abscissa `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}
