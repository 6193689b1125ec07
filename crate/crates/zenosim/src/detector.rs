//! The point-contact detector in isolation: counting-statistics rate
//! equation, its Poisson/Gaussian solutions, coherence reconstruction, and
//! Bayesian conditioning on an observed count.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::core::EPS_TRUNC;
use crate::integrator::{integrate, IntegrationControl, LinearGenerator};
use crate::{Error, Result};

/// Probabilities `P_n` of having counted `n` detector electrons by time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    /// Detector tunneling rate the distribution was evolved with.
    pub rate: f64,
    pub t: f64,
    pub probabilities: Vec<f64>,
}

impl CountDistribution {
    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn normalization(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - m).powi(2) * p)
            .sum()
    }

    pub fn argmax(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(n, _)| n)
            .unwrap_or(0)
    }

    /// CSV rendering: a header comment carrying D and t, then `n,P_n` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# D = {:.12e}, t = {:.12e}\nn,P_n\n",
            self.rate, self.t
        );
        for (n, p) in self.probabilities.iter().enumerate() {
            out.push_str(&format!("{n},{:.11e}\n", p));
        }
        out
    }
}

/// A detector readout: `n1` electrons observed at time `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub t1: f64,
    pub n1: usize,
}

impl ObservationRecord {
    pub fn new(t1: f64, n1: usize) -> Result<Self> {
        if !t1.is_finite() || t1 < 0.0 {
            return Err(Error::InvalidObservation(format!(
                "readout time must be nonnegative, got {t1}"
            )));
        }
        Ok(ObservationRecord { t1, n1 })
    }

    /// Count excess over the expected drift, `N1 - D t1`.
    pub fn delta_n(&self, d: f64) -> f64 {
        self.n1 as f64 - d * self.t1
    }
}

/// Generator of the counting rate equation
/// `dP_n/dt = -D P_n + D P_{n-1}` truncated at `n_max`.
pub struct CountingGenerator {
    pub d: f64,
    pub n_max: usize,
}

impl LinearGenerator for CountingGenerator {
    fn dim(&self) -> usize {
        self.n_max + 1
    }

    fn apply(&self, y: &[f64], dydt: &mut [f64]) {
        dydt[0] = -self.d * y[0];
        for n in 1..y.len() {
            dydt[n] = -self.d * y[n] + self.d * y[n - 1];
        }
    }
}

/// Truncation guideline `n_max >= D t + 10 sqrt(D t)`.
pub fn auto_n_max(d: f64, t: f64) -> usize {
    let dt = (d * t).max(0.0);
    (dt + 10.0 * dt.sqrt()).ceil() as usize + 5
}

fn check_leak(probabilities: &[f64]) -> Result<()> {
    let leak = (1.0 - probabilities.iter().sum::<f64>()).max(0.0);
    let tail = probabilities.last().copied().unwrap_or(0.0);
    let worst = leak.max(tail);
    if worst > EPS_TRUNC {
        return Err(Error::TruncationLeak {
            leak: worst,
            limit: EPS_TRUNC,
        });
    }
    Ok(())
}

/// Distributions at every requested time, from `P_n(0) = delta_{n0}`.
pub fn evolve_counts_series(
    d: f64,
    times: &[f64],
    n_max: usize,
) -> Result<Vec<CountDistribution>> {
    if d < 0.0 {
        return Err(Error::InvalidParams(format!(
            "detector rate must be nonnegative, got {d}"
        )));
    }
    let gen = CountingGenerator { d, n_max };
    let mut y0 = vec![0.0; n_max + 1];
    y0[0] = 1.0;
    let snaps = integrate(&gen, &y0, times, &IntegrationControl::adaptive(1e-12))?;
    let out: Vec<CountDistribution> = times
        .iter()
        .zip(snaps)
        .map(|(&t, probabilities)| CountDistribution {
            rate: d,
            t,
            probabilities,
        })
        .collect();
    check_leak(&out.last().unwrap().probabilities)?;
    Ok(out)
}

/// Count distribution at `t_end` from ODE integration of the rate equation.
pub fn evolve_counts(d: f64, t_end: f64, n_max: usize) -> Result<CountDistribution> {
    let times = if t_end > 0.0 { vec![0.0, t_end] } else { vec![0.0] };
    Ok(evolve_counts_series(d, &times, n_max)?.pop().unwrap())
}

/// Closed-form Poisson solution `P_n(t) = (Dt)^n e^{-Dt} / n!`, evaluated in
/// log space so large `n` does not overflow.
pub fn poisson_counts(d: f64, t: f64, n: usize) -> f64 {
    let dt = d * t;
    if dt == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * dt.ln() - dt - ln_gamma(n as f64 + 1.0)).exp()
}

/// Gaussian approximation to the Poisson solution for `Dt >> 1`.
pub fn gaussian_counts(d: f64, t: f64, n: f64) -> f64 {
    let dt = d * t;
    (1.0 / (2.0 * PI * dt).sqrt()) * (-(dt - n).powi(2) / (2.0 * dt)).exp()
}

/// Detector coherence between adjacent count sectors,
/// `sigma^{(n-1,n)} = i (D / Omega) sigma^{(n-1,n-1)}`.
///
/// Classicality of the detector comes from these terms decoupling from the
/// probabilities, not from their vanishing.
pub fn coherence_magnitude(d: f64, omega: f64, p_diag: f64) -> Result<Complex64> {
    if omega == 0.0 {
        return Err(Error::DivisionByZero("omega in coherence reconstruction"));
    }
    Ok(Complex64::new(0.0, d / omega * p_diag))
}

/// Validity indicator for the Gaussian forms: `D (t - t1) >> 1`.
pub fn gaussian_regime(d: f64, t: f64, t1: f64) -> bool {
    d * (t - t1) >= 10.0
}

/// Count distribution at `t` conditioned on the readout `obs`, from
/// re-solving the rate equation with the fresh initial condition
/// `P_n(t1) = delta_{n, N1}`. The exact answer is a Poisson distribution
/// shifted by `N1`, with mean `N1 + D (t - t1)` and variance `D (t - t1)`.
pub fn bayes_update(
    d: f64,
    obs: &ObservationRecord,
    t: f64,
    n_max: usize,
) -> Result<CountDistribution> {
    if t <= obs.t1 {
        return Err(Error::InvalidObservation(format!(
            "evaluation time {t} must exceed readout time {}",
            obs.t1
        )));
    }
    if n_max <= obs.n1 {
        return Err(Error::InvalidObservation(format!(
            "n_max = {n_max} must exceed the observed count {}",
            obs.n1
        )));
    }
    if d < 0.0 {
        return Err(Error::InvalidParams(format!(
            "detector rate must be nonnegative, got {d}"
        )));
    }
    let gen = CountingGenerator { d, n_max };
    let mut y0 = vec![0.0; n_max + 1];
    y0[obs.n1] = 1.0;
    let snaps = integrate(
        &gen,
        &y0,
        &[0.0, t - obs.t1],
        &IntegrationControl::adaptive(1e-12),
    )?;
    let probabilities = snaps.into_iter().last().unwrap();
    check_leak(&probabilities)?;
    Ok(CountDistribution {
        rate: d,
        t,
        probabilities,
    })
}

/// Gaussian approximation of the conditioned distribution,
/// `P_n(t) ~ exp[-(Dt - n + dN)^2 / (2 D (t - t1))] / sqrt(2 pi D (t - t1))`
/// with `dN = N1 - D t1`.
pub fn gaussian_conditioned(d: f64, obs: &ObservationRecord, t: f64, n: f64) -> f64 {
    let var = d * (t - obs.t1);
    let arg = d * t - n + obs.delta_n(d);
    (1.0 / (2.0 * PI * var).sqrt()) * (-arg * arg / (2.0 * var)).exp()
}
