//! Shared domain types: scenario parameters, discretized continuum grids,
//! density-matrix snapshots and trajectories.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default bound on trace drift of a normalized state.
pub const EPS_TRACE: f64 = 1e-6;
/// Default bound on probability leaked past the count truncation `n_max`.
pub const EPS_TRUNC: f64 = 1e-6;

/// All physical constants of a scenario in one validated record.
///
/// `omega_pc` is the point-contact hopping amplitude (gauge chosen real) and
/// `delta_omega` its reduction while the dot is occupied. `gamma0` is the
/// bare decay width of the dot level `e0` into a flat continuum; `e1`,
/// `gamma1` and `omega_alpha` describe the cavity scenarios (cavity level,
/// cavity width, dot-cavity coupling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_pc: f64,
    pub delta_omega: f64,
    pub rho_l: f64,
    pub rho_r: f64,
    pub bias: f64,
    pub e0: f64,
    pub e1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub omega_alpha: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            omega_pc: 1.0,
            delta_omega: 0.0,
            rho_l: 1.0,
            rho_r: 1.0,
            bias: 1.0,
            e0: 0.0,
            e1: 0.0,
            gamma0: 1.0,
            gamma1: 1.0,
            omega_alpha: 1.0,
        }
    }
}

/// Detector rates derived from the microscopic parameters:
/// `d = 2 pi Omega^2 rho_L rho_R V_d` with the dot empty, `dprime` the same
/// with the reduced coupling, and the detector-induced decoherence rate
/// `gamma_d = (sqrt(D) - sqrt(D'))^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub d: f64,
    pub dprime: f64,
    pub gamma_d: f64,
}

/// Returns `p` unchanged if every `ModelParams` invariant holds.
pub fn validate_params(p: &ModelParams) -> Result<ModelParams> {
    let nonneg = [
        ("omega_pc", p.omega_pc),
        ("delta_omega", p.delta_omega),
        ("rho_l", p.rho_l),
        ("rho_r", p.rho_r),
        ("gamma0", p.gamma0),
        ("gamma1", p.gamma1),
        ("omega_alpha", p.omega_alpha),
    ];
    for (name, v) in nonneg {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParams(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    for (name, v) in [("e0", p.e0), ("e1", p.e1)] {
        if !v.is_finite() {
            return Err(Error::InvalidParams(format!("{name} must be finite, got {v}")));
        }
    }
    if !p.bias.is_finite() || p.bias <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "bias must be positive, got {}",
            p.bias
        )));
    }
    if p.delta_omega > p.omega_pc {
        return Err(Error::InvalidParams(format!(
            "delta_omega = {} exceeds omega_pc = {}; the detector current must not increase when the dot is occupied",
            p.delta_omega, p.omega_pc
        )));
    }
    Ok(*p)
}

/// Detector rates `D`, `D'` and the decoherence rate `Gamma_d` for validated
/// parameters.
pub fn derived_rates(p: &ModelParams) -> Result<DerivedRates> {
    let p = validate_params(p)?;
    let prefactor = 2.0 * PI * p.rho_l * p.rho_r * p.bias;
    let d = prefactor * p.omega_pc * p.omega_pc;
    let reduced = p.omega_pc - p.delta_omega;
    let dprime = prefactor * reduced * reduced;
    let gamma_d = (d.sqrt() - dprime.sqrt()).powi(2);
    Ok(DerivedRates { d, dprime, gamma_d })
}

/// Discretized reservoir: levels `E_alpha` with per-level couplings
/// `Omega_alpha` and quadrature weights (the local level spacing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumGrid {
    pub energies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ContinuumGrid {
    pub fn new(energies: Vec<f64>, couplings: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if energies.len() != couplings.len() || energies.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "length mismatch: {} energies, {} couplings, {} weights",
                energies.len(),
                couplings.len(),
                weights.len()
            )));
        }
        if energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "energies must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidGrid("weights must be positive".into()));
        }
        Ok(ContinuumGrid {
            energies,
            couplings,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Width `Gamma(E_alpha) = 2 pi rho(E_alpha) Omega_alpha^2` reconstructed
    /// from the grid, with `rho = 1 / weight`.
    pub fn effective_width(&self, i: usize) -> f64 {
        2.0 * PI * self.couplings[i] * self.couplings[i] / self.weights[i]
    }
}

/// Density matrix of the measured electron after tracing out the detector.
///
/// Flat-continuum states carry `sigma_00`, the level occupations and the
/// dot-continuum coherences `sigma_alpha_0`. Cavity states additionally carry
/// `sigma_11`, `sigma_01` and the `sigma_0alpha` / `sigma_1alpha` families.
/// Only one triangle of each coherence pair is stored;
/// `sigma_{0 alpha} = conj(sigma_{alpha 0})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedState {
    pub sigma_00: f64,
    pub sigma_11: Option<f64>,
    pub sigma_alpha_alpha: Vec<f64>,
    pub sigma_alpha_0: Vec<Complex64>,
    pub sigma_01: Option<Complex64>,
    pub sigma_0alpha: Vec<Complex64>,
    pub sigma_1alpha: Vec<Complex64>,
}

impl TracedState {
    /// Initial flat-scenario state: dot occupied, continuum empty.
    pub fn flat_initial(n_levels: usize) -> Self {
        TracedState {
            sigma_00: 1.0,
            sigma_11: None,
            sigma_alpha_alpha: vec![0.0; n_levels],
            sigma_alpha_0: vec![Complex64::ZERO; n_levels],
            sigma_01: None,
            sigma_0alpha: Vec::new(),
            sigma_1alpha: Vec::new(),
        }
    }

    /// Initial cavity-scenario state: dot occupied, cavity and reservoir empty.
    pub fn cavity_initial(n_levels: usize) -> Self {
        TracedState {
            sigma_00: 1.0,
            sigma_11: Some(0.0),
            sigma_alpha_alpha: vec![0.0; n_levels],
            sigma_alpha_0: Vec::new(),
            sigma_01: Some(Complex64::ZERO),
            sigma_0alpha: vec![Complex64::ZERO; n_levels],
            sigma_1alpha: vec![Complex64::ZERO; n_levels],
        }
    }

    /// Sum of all diagonal elements.
    pub fn trace(&self) -> f64 {
        self.sigma_00
            + self.sigma_11.unwrap_or(0.0)
            + self.sigma_alpha_alpha.iter().sum::<f64>()
    }

    /// Checks `trace` within `eps` of unity and all diagonals in `[0, 1]`
    /// (up to `eps` slack for integrator round-off).
    pub fn check_normalized(&self, eps: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > eps {
            return Err(Error::InvalidParams(format!(
                "trace {tr} deviates from 1 by more than {eps}"
            )));
        }
        let diags = std::iter::once(self.sigma_00)
            .chain(self.sigma_11)
            .chain(self.sigma_alpha_alpha.iter().copied());
        for d in diags {
            if d < -eps || d > 1.0 + eps {
                return Err(Error::InvalidParams(format!(
                    "diagonal element {d} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Detector-count-indexed density matrix: one `TracedState`-shaped block per
/// count `n` in `[0, n_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountResolvedState {
    pub n_max: usize,
    pub blocks: Vec<TracedState>,
}

impl CountResolvedState {
    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(TracedState::trace).sum()
    }

    /// Probability of each count: `P_n = trace(block n)`.
    pub fn count_marginal(&self) -> Vec<f64> {
        self.blocks.iter().map(TracedState::trace).collect()
    }

    /// Electron state with the detector traced out: elementwise sum over `n`.
    pub fn traced(&self) -> TracedState {
        let mut acc = self.blocks[0].clone();
        for block in &self.blocks[1..] {
            acc.sigma_00 += block.sigma_00;
            if let (Some(a), Some(b)) = (acc.sigma_11.as_mut(), block.sigma_11) {
                *a += b;
            }
            for (a, b) in acc.sigma_alpha_alpha.iter_mut().zip(&block.sigma_alpha_alpha) {
                *a += b;
            }
            for (a, b) in acc.sigma_alpha_0.iter_mut().zip(&block.sigma_alpha_0) {
                *a += b;
            }
            if let (Some(a), Some(b)) = (acc.sigma_01.as_mut(), block.sigma_01) {
                *a += b;
            }
            for (a, b) in acc.sigma_0alpha.iter_mut().zip(&block.sigma_0alpha) {
                *a += b;
            }
            for (a, b) in acc.sigma_1alpha.iter_mut().zip(&block.sigma_1alpha) {
                *a += b;
            }
        }
        acc
    }
}

/// Time series of state snapshots plus named derived observables.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub observables: BTreeMap<String, Vec<f64>>,
}

impl<S> Trajectory<S> {
    pub fn new(times: Vec<f64>, states: Vec<S>) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::InvalidParams(
                "trajectory times must start at 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        if times.len() != states.len() {
            return Err(Error::InvalidParams(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        Ok(Trajectory {
            times,
            states,
            observables: BTreeMap::new(),
        })
    }

    pub fn with_observable(mut self, name: &str, series: Vec<f64>) -> Result<Self> {
        if series.len() != self.times.len() {
            return Err(Error::InvalidParams(format!(
                "observable {name} has {} samples for {} times",
                series.len(),
                self.times.len()
            )));
        }
        self.observables.insert(name.to_string(), series);
        Ok(self)
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(Vec::as_slice)
    }
}

/// Uniform output time grid `0 ..= t_end` with `n_outputs` intervals.
pub fn time_grid(t_end: f64, n_outputs: usize) -> Vec<f64> {
    let n = n_outputs.max(1);
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_rates_reference_point() {
        // Omega = 1, dOmega = 0.5, rho_L = rho_R = 1, V = 1.
        let p = ModelParams {
            delta_omega: 0.5,
            ..Default::default()
        };
        let r = derived_rates(&p).unwrap();
        assert_relative_eq!(r.d, 2.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(r.dprime, PI / 2.0, max_relative = 1e-12);
        let expect = ((2.0 * PI).sqrt() - (PI / 2.0).sqrt()).powi(2);
        assert_relative_eq!(r.gamma_d, expect, max_relative = 1e-12);
        assert_relative_eq!(r.gamma_d, 1.5708, max_relative = 1e-4);
    }

    #[test]
    fn unmodulated_coupling_gives_no_backaction() {
        let p = ModelParams::default();
        let r = derived_rates(&p).unwrap();
        assert_eq!(r.d, r.dprime);
        assert_eq!(r.gamma_d, 0.0);
    }

    #[test]
    fn fully_blocked_channel() {
        let p = ModelParams {
            delta_omega: 1.0,
            ..Default::default()
        };
        let r = derived_rates(&p).unwrap();
        assert_eq!(r.dprime, 0.0);
        assert_relative_eq!(r.gamma_d, 2.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn delta_omega_above_omega_rejected() {
        let p = ModelParams {
            delta_omega: 1.5,
            ..Default::default()
        };
        assert!(matches!(validate_params(&p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn nonpositive_bias_rejected() {
        let p = ModelParams {
            bias: 0.0,
            ..Default::default()
        };
        assert!(validate_params(&p).is_err());
    }

    #[test]
    fn grid_rejects_unsorted_energies() {
        let g = ContinuumGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]);
        assert!(matches!(g, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn traced_state_trace() {
        let mut s = TracedState::flat_initial(3);
        s.sigma_00 = 0.5;
        s.sigma_alpha_alpha = vec![0.2, 0.2, 0.1];
        assert_relative_eq!(s.trace(), 1.0, max_relative = 1e-15);
        s.check_normalized(1e-12).unwrap();
    }

    #[test]
    fn trajectory_rejects_bad_time_grids() {
        assert!(Trajectory::new(vec![0.5, 1.0], vec![(), ()]).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0, 1.0], vec![(), (), ()]).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![()]).is_err());
    }

    proptest::proptest! {
        // D >= D' >= 0 and Gamma_d <= D for any valid parameter record;
        // Gamma_d = 0 iff delta_omega = 0.
        #[test]
        fn rate_ordering(omega in 0.0f64..10.0, frac in 0.0f64..1.0,
                         rho_l in 0.01f64..5.0, rho_r in 0.01f64..5.0,
                         bias in 0.01f64..10.0) {
            let p = ModelParams {
                omega_pc: omega,
                delta_omega: frac * omega,
                rho_l,
                rho_r,
                bias,
                ..Default::default()
            };
            let r = derived_rates(&p).unwrap();
            proptest::prop_assert!(r.d >= r.dprime);
            proptest::prop_assert!(r.dprime >= 0.0);
            proptest::prop_assert!(r.gamma_d <= r.d + 1e-12 * r.d.abs());
            if frac * omega == 0.0 {
                proptest::prop_assert!(r.gamma_d == 0.0);
            }
        }
    }
}
