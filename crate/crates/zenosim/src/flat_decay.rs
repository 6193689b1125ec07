//! Decay of the dot electron into a flat continuum: traced Bloch-type rate
//! equations (unmeasured and measured), the count-resolved joint system, an
//! independent Schroedinger-amplitude oracle, line shapes, detector current,
//! and the repeated-projection baseline.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::core::{
    derived_rates, ContinuumGrid, CountResolvedState, ModelParams, TracedState, Trajectory,
    EPS_TRUNC,
};
use crate::fit;
use crate::integrator::{integrate, IntegrationControl, LinearGenerator};
use crate::{Error, Result};

/// Asymptotic energy distribution of the escaped electron, normalized to
/// unit integral, with the peak and FWHM read off the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LineShape {
    pub energies: Vec<f64>,
    pub density: Vec<f64>,
    pub peak_position: f64,
    pub fwhm: f64,
}

impl LineShape {
    /// Builds a normalized line shape from raw sampled density values.
    pub fn from_samples(energies: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|&v| v < 0.0) {
            return Err(Error::FitFailure("line-shape density must be nonnegative".into()));
        }
        let norm = fit::trapezoid(&energies, &raw);
        if norm <= 0.0 {
            return Err(Error::FitFailure("line-shape density integrates to zero".into()));
        }
        let density: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let width = fit::fwhm(&energies, &density)?;
        let i_peak = density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        Ok(LineShape {
            peak_position: energies[i_peak],
            fwhm: width,
            energies,
            density,
        })
    }
}

// ---------------------------------------------------------------------------
// Traced system: sigma_00, sigma_alpha_alpha, sigma_alpha_0.
//
// Packing: [s00, saa[0..N], (Re sa0, Im sa0)[0..N]], diagonals first per the
// fixed layout convention.
// ---------------------------------------------------------------------------

struct FlatBlochGenerator<'a> {
    gamma0: f64,
    gamma_d: f64,
    e0: f64,
    grid: &'a ContinuumGrid,
}

impl LinearGenerator for FlatBlochGenerator<'_> {
    fn dim(&self) -> usize {
        1 + 3 * self.grid.len()
    }

    fn apply(&self, y: &[f64], dydt: &mut [f64]) {
        let n = self.grid.len();
        let s00 = y[0];
        dydt[0] = -self.gamma0 * s00;
        let damp = 0.5 * (self.gamma0 + self.gamma_d);
        for i in 0..n {
            let omega = self.grid.couplings[i];
            let eps = self.e0 - self.grid.energies[i];
            let re = y[1 + n + 2 * i];
            let im = y[1 + n + 2 * i + 1];
            dydt[1 + i] = -2.0 * omega * im;
            dydt[1 + n + 2 * i] = -eps * im - damp * re;
            dydt[1 + n + 2 * i + 1] = eps * re - omega * s00 - damp * im;
        }
    }
}

fn unpack_flat(y: &[f64], n: usize) -> TracedState {
    TracedState {
        sigma_00: y[0],
        sigma_11: None,
        sigma_alpha_alpha: y[1..1 + n].to_vec(),
        sigma_alpha_0: (0..n)
            .map(|i| Complex64::new(y[1 + n + 2 * i], y[1 + n + 2 * i + 1]))
            .collect(),
        sigma_01: None,
        sigma_0alpha: Vec::new(),
        sigma_1alpha: Vec::new(),
    }
}

/// Traced Bloch-type evolution of the dot-plus-continuum system with
/// detector decoherence rate `gamma_d` (0 for the unmeasured case), from
/// `sigma_00(0) = 1`.
pub fn evolve_bloch(
    params: &ModelParams,
    grid: &ContinuumGrid,
    gamma_d: f64,
    times: &[f64],
) -> Result<Trajectory<TracedState>> {
    evolve_bloch_with(params, grid, gamma_d, times, &IntegrationControl::default())
}

pub fn evolve_bloch_with(
    params: &ModelParams,
    grid: &ContinuumGrid,
    gamma_d: f64,
    times: &[f64],
    ctl: &IntegrationControl,
) -> Result<Trajectory<TracedState>> {
    if gamma_d < 0.0 {
        return Err(Error::InvalidParams(format!(
            "gamma_d must be nonnegative, got {gamma_d}"
        )));
    }
    let gen = FlatBlochGenerator {
        gamma0: params.gamma0,
        gamma_d,
        e0: params.e0,
        grid,
    };
    let mut y0 = vec![0.0; gen.dim()];
    y0[0] = 1.0;
    let snaps = integrate(&gen, &y0, times, ctl)?;
    let n = grid.len();
    let states: Vec<TracedState> = snaps.iter().map(|y| unpack_flat(y, n)).collect();
    let survival: Vec<f64> = states.iter().map(|s| s.sigma_00).collect();
    Trajectory::new(times.to_vec(), states)?.with_observable("survival", survival)
}

/// Closed-form survival `exp(-Gamma_0 t)`.
pub fn survival_analytic(gamma0: f64, t: f64) -> f64 {
    (-gamma0 * t).exp()
}

/// Closed-form level occupation for a flat continuum:
/// `Omega^2 / ((E - E0)^2 + (Gamma_0/2)^2) *
///  [1 - 2 cos((E - E0) t) e^{-Gamma_0 t / 2} + e^{-Gamma_0 t}]`.
pub fn occupation_alpha_closed(
    gamma0: f64,
    omega_alpha: f64,
    e0: f64,
    e_alpha: f64,
    t: f64,
) -> f64 {
    let de = e_alpha - e0;
    let pref = omega_alpha * omega_alpha / (de * de + gamma0 * gamma0 / 4.0);
    pref * (1.0 - 2.0 * (de * t).cos() * (-gamma0 * t / 2.0).exp() + (-gamma0 * t).exp())
}

/// Closed-form level occupation using the scenario's `omega_alpha`.
pub fn occupation_alpha_analytic(params: &ModelParams, e_alpha: f64, t: f64) -> f64 {
    occupation_alpha_closed(params.gamma0, params.omega_alpha, params.e0, e_alpha, t)
}

/// Normalized Lorentzian line of FWHM `gamma0 + gamma_d` centered at `e0`,
/// sampled on `energies`.
pub fn line_shape(gamma0: f64, gamma_d: f64, e0: f64, energies: &[f64]) -> Result<LineShape> {
    if gamma0 <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "gamma0 must be positive, got {gamma0}"
        )));
    }
    let width = gamma0 + gamma_d;
    let density: Vec<f64> = energies
        .iter()
        .map(|&e| (width / (2.0 * PI)) / ((e - e0).powi(2) + width * width / 4.0))
        .collect();
    // Already unit-normalized over the full axis; renormalizing on the finite
    // window keeps the integral invariant under window choice.
    LineShape::from_samples(energies.to_vec(), density)
}

/// Line shape extracted from the late-time numerical occupations
/// `sigma_alpha_alpha * rho` of a traced evolution snapshot.
pub fn line_shape_from_state(grid: &ContinuumGrid, state: &TracedState) -> Result<LineShape> {
    let raw: Vec<f64> = state
        .sigma_alpha_alpha
        .iter()
        .zip(&grid.weights)
        .map(|(&occ, &w)| (occ / w).max(0.0))
        .collect();
    LineShape::from_samples(grid.energies.clone(), raw)
}

/// Average detector current `I = D' sigma_00 + D (1 - sigma_00)` with e = 1.
pub fn detector_current(d: f64, dprime: f64, sigma00: f64) -> f64 {
    dprime * sigma00 + d * (1.0 - sigma00)
}

// ---------------------------------------------------------------------------
// Count-resolved joint system. Blocks in n order; each block packs
// [s00, saa[0..N], (Re sa0, Im sa0)[0..N]].
// ---------------------------------------------------------------------------

struct NResolvedGenerator<'a> {
    gamma0: f64,
    d: f64,
    dprime: f64,
    e0: f64,
    grid: &'a ContinuumGrid,
    n_max: usize,
}

impl NResolvedGenerator<'_> {
    fn block_len(&self) -> usize {
        1 + 3 * self.grid.len()
    }
}

impl LinearGenerator for NResolvedGenerator<'_> {
    fn dim(&self) -> usize {
        (self.n_max + 1) * self.block_len()
    }

    fn apply(&self, y: &[f64], dydt: &mut [f64]) {
        let nl = self.grid.len();
        let bl = self.block_len();
        let damp = 0.5 * (self.gamma0 + self.d + self.dprime);
        let feed = (self.d * self.dprime).sqrt();
        for blk in 0..=self.n_max {
            let o = blk * bl;
            let prev = blk.checked_sub(1).map(|b| b * bl);
            let s00 = y[o];
            let s00_prev = prev.map_or(0.0, |p| y[p]);
            dydt[o] = -(self.gamma0 + self.dprime) * s00 + self.dprime * s00_prev;
            for i in 0..nl {
                let omega = self.grid.couplings[i];
                let eps = self.e0 - self.grid.energies[i];
                let re = y[o + 1 + nl + 2 * i];
                let im = y[o + 1 + nl + 2 * i + 1];
                let occ = y[o + 1 + i];
                let occ_prev = prev.map_or(0.0, |p| y[p + 1 + i]);
                let (re_prev, im_prev) = prev.map_or((0.0, 0.0), |p| {
                    (y[p + 1 + nl + 2 * i], y[p + 1 + nl + 2 * i + 1])
                });
                dydt[o + 1 + i] = -self.d * occ + self.d * occ_prev - 2.0 * omega * im;
                dydt[o + 1 + nl + 2 * i] = -eps * im - damp * re + feed * re_prev;
                dydt[o + 1 + nl + 2 * i + 1] = eps * re - omega * s00 - damp * im + feed * im_prev;
            }
        }
    }
}

/// Joint detector-electron evolution, count-resolved up to `n_max`.
///
/// Tracing the result over `n` reproduces `evolve_bloch` with
/// `gamma_d = (sqrt(D) - sqrt(D'))^2`. Observables: `survival` (summed
/// `sigma_00`), `mean_count`, and the average `current`.
pub fn evolve_n_resolved(
    params: &ModelParams,
    grid: &ContinuumGrid,
    times: &[f64],
    n_max: usize,
) -> Result<Trajectory<CountResolvedState>> {
    evolve_n_resolved_with(params, grid, times, n_max, &IntegrationControl::default())
}

pub fn evolve_n_resolved_with(
    params: &ModelParams,
    grid: &ContinuumGrid,
    times: &[f64],
    n_max: usize,
    ctl: &IntegrationControl,
) -> Result<Trajectory<CountResolvedState>> {
    let rates = derived_rates(params)?;
    let gen = NResolvedGenerator {
        gamma0: params.gamma0,
        d: rates.d,
        dprime: rates.dprime,
        e0: params.e0,
        grid,
        n_max,
    };
    let mut y0 = vec![0.0; gen.dim()];
    y0[0] = 1.0; // n = 0, dot occupied
    let snaps = integrate(&gen, &y0, times, ctl)?;
    let nl = grid.len();
    let bl = 1 + 3 * nl;
    let states: Vec<CountResolvedState> = snaps
        .iter()
        .map(|y| CountResolvedState {
            n_max,
            blocks: (0..=n_max)
                .map(|blk| unpack_flat(&y[blk * bl..(blk + 1) * bl], nl))
                .collect(),
        })
        .collect();

    let last = states.last().unwrap();
    let tail = last.blocks[n_max].trace();
    if tail > EPS_TRUNC {
        return Err(Error::TruncationLeak {
            leak: tail,
            limit: EPS_TRUNC,
        });
    }

    let survival: Vec<f64> = states
        .iter()
        .map(|s| s.blocks.iter().map(|b| b.sigma_00).sum())
        .collect();
    let mean_count: Vec<f64> = states
        .iter()
        .map(|s| {
            s.count_marginal()
                .iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p)
                .sum()
        })
        .collect();
    let current: Vec<f64> = survival
        .iter()
        .map(|&s00| detector_current(rates.d, rates.dprime, s00))
        .collect();
    Trajectory::new(times.to_vec(), states)?
        .with_observable("survival", survival)?
        .with_observable("mean_count", mean_count)?
        .with_observable("current", current)
}

// ---------------------------------------------------------------------------
// Schroedinger-amplitude oracle: unmeasured scenario only.
// Packing: [(Re b0, Im b0), (Re ba, Im ba)[0..N]].
// ---------------------------------------------------------------------------

struct AmplitudeGenerator<'a> {
    e0: f64,
    grid: &'a ContinuumGrid,
}

impl LinearGenerator for AmplitudeGenerator<'_> {
    fn dim(&self) -> usize {
        2 + 2 * self.grid.len()
    }

    fn apply(&self, y: &[f64], dydt: &mut [f64]) {
        let n = self.grid.len();
        let (re0, im0) = (y[0], y[1]);
        // b0' = -i E0 b0 - i sum Omega_a b_a
        let mut sum_re = 0.0;
        let mut sum_im = 0.0;
        for i in 0..n {
            sum_re += self.grid.couplings[i] * y[2 + 2 * i];
            sum_im += self.grid.couplings[i] * y[2 + 2 * i + 1];
        }
        dydt[0] = self.e0 * im0 + sum_im;
        dydt[1] = -self.e0 * re0 - sum_re;
        for i in 0..n {
            let e = self.grid.energies[i];
            let omega = self.grid.couplings[i];
            let (re, im) = (y[2 + 2 * i], y[2 + 2 * i + 1]);
            dydt[2 + 2 * i] = e * im + omega * im0;
            dydt[2 + 2 * i + 1] = -e * re - omega * re0;
        }
    }
}

/// Time-domain Schroedinger evolution of the coupled amplitude system,
/// the independent oracle for the unmeasured traced dynamics
/// (`|b0(t)|^2` against `sigma_00(t)`).
pub fn evolve_amplitudes_qd(
    params: &ModelParams,
    grid: &ContinuumGrid,
    times: &[f64],
) -> Result<Trajectory<TracedState>> {
    evolve_amplitudes_qd_with(params, grid, times, &IntegrationControl::default())
}

pub fn evolve_amplitudes_qd_with(
    params: &ModelParams,
    grid: &ContinuumGrid,
    times: &[f64],
    ctl: &IntegrationControl,
) -> Result<Trajectory<TracedState>> {
    let gen = AmplitudeGenerator {
        e0: params.e0,
        grid,
    };
    let mut y0 = vec![0.0; gen.dim()];
    y0[0] = 1.0;
    let snaps = integrate(&gen, &y0, times, ctl)?;
    let n = grid.len();
    let states: Vec<TracedState> = snaps
        .iter()
        .map(|y| {
            let b0 = Complex64::new(y[0], y[1]);
            let b: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new(y[2 + 2 * i], y[2 + 2 * i + 1]))
                .collect();
            TracedState {
                sigma_00: b0.norm_sqr(),
                sigma_11: None,
                sigma_alpha_alpha: b.iter().map(|bi| bi.norm_sqr()).collect(),
                sigma_alpha_0: b.iter().map(|bi| bi * b0.conj()).collect(),
                sigma_01: None,
                sigma_0alpha: Vec::new(),
                sigma_1alpha: Vec::new(),
            }
        })
        .collect();
    let survival: Vec<f64> = states.iter().map(|s| s.sigma_00).collect();
    Trajectory::new(times.to_vec(), states)?.with_observable("survival", survival)
}

/// Survival after `n` projective measurements spaced `dt` apart,
/// `[1 - a dt^2]^n`.
pub fn repeated_projection_survival(a: f64, dt: f64, n: usize) -> Result<f64> {
    let step = a * dt * dt;
    if !(0.0..1.0).contains(&step) {
        return Err(Error::InvalidStep(step));
    }
    Ok((1.0 - step).powi(n as i32))
}

/// Survival at fixed total time `t = n dt`; approaches the continuum-limit
/// value `1` as `dt -> 0`.
pub fn repeated_projection_survival_at(a: f64, dt: f64, t: f64) -> Result<f64> {
    let n = (t / dt).round().max(1.0) as usize;
    repeated_projection_survival(a, dt, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::time_grid;
    use crate::integrator::discretize_flat_continuum;
    use approx::assert_relative_eq;

    fn flat_params() -> ModelParams {
        ModelParams {
            gamma0: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn survival_analytic_values() {
        assert_eq!(survival_analytic(1.0, 0.0), 1.0);
        assert_relative_eq!(survival_analytic(1.0, 1.0), 0.36788, max_relative = 1e-4);
        assert_relative_eq!(
            survival_analytic(2.0, 0.5 * 2.0f64.ln()),
            0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn bloch_survival_is_exponential_with_and_without_measurement() {
        let p = flat_params();
        let grid = discretize_flat_continuum(1.0, 0.0, 20.0, 401).unwrap();
        let times = time_grid(1.0, 10);
        for gamma_d in [0.0, 10.0] {
            let traj = evolve_bloch(&p, &grid, gamma_d, &times).unwrap();
            let s = traj.observable("survival").unwrap();
            assert_relative_eq!(s[10], (-1.0f64).exp(), max_relative = 1e-7);
        }
    }

    #[test]
    fn decoupled_dot_never_decays() {
        let p = ModelParams {
            gamma0: 0.0,
            ..Default::default()
        };
        let grid = discretize_flat_continuum(0.0, 0.0, 5.0, 21).unwrap();
        let traj = evolve_bloch(&p, &grid, 0.0, &time_grid(4.0, 8)).unwrap();
        for s in traj.observable("survival").unwrap() {
            assert_relative_eq!(*s, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn occupation_closed_form_values() {
        let p = flat_params();
        // Empty continuum at t = 0: bracket is 1 - 2 + 1.
        assert_eq!(occupation_alpha_analytic(&p, 0.3, 0.0), 0.0);
        // Resonant level saturates at Omega^2 / (Gamma_0 / 2)^2.
        let late = occupation_alpha_analytic(&p, 0.0, 80.0);
        assert_relative_eq!(late, 1.0 / 0.25, max_relative = 1e-10);
    }

    #[test]
    fn occupation_matches_bloch_numerics() {
        let p = flat_params();
        let grid = discretize_flat_continuum(1.0, 0.0, 20.0, 801).unwrap();
        let times = time_grid(3.0, 6);
        let traj = evolve_bloch(&p, &grid, 0.0, &times).unwrap();
        let last = traj.states.last().unwrap();
        for idx in [200, 400, 600] {
            let expect = occupation_alpha_closed(
                1.0,
                grid.couplings[idx],
                0.0,
                grid.energies[idx],
                3.0,
            );
            assert!((last.sigma_alpha_alpha[idx] - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn line_shape_examples() {
        let es: Vec<f64> = (0..2001).map(|k| -10.0 + 0.01 * k as f64).collect();
        let ls = line_shape(1.0, 0.0, 0.0, &es).unwrap();
        let peak = ls.density.iter().cloned().fold(f64::MIN, f64::max);
        // Normalization runs over the sampled window, so the peak sits above
        // the infinite-line value 2/pi by the tail fraction outside +-10.
        let window_norm = (2.0 / PI) * 20.0f64.atan();
        assert_relative_eq!(peak, (2.0 / PI) / window_norm, max_relative = 1e-3);
        assert_relative_eq!(ls.fwhm, 1.0, max_relative = 1e-3);
        assert_eq!(ls.peak_position, 0.0);
        // Gamma_d = 2 Gamma_0 broadens the width to 3 Gamma_0.
        let broad = line_shape(1.0, 2.0, 0.0, &es).unwrap();
        assert_relative_eq!(broad.fwhm, 3.0, max_relative = 1e-3);
        // Symmetric about E0.
        let n = ls.density.len();
        for k in 0..n / 2 {
            assert_relative_eq!(ls.density[k], ls.density[n - 1 - k], max_relative = 1e-9);
        }
    }

    #[test]
    fn line_shape_requires_positive_width() {
        assert!(line_shape(0.0, 0.0, 0.0, &[-1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn current_endpoints_and_rise() {
        assert_eq!(detector_current(2.0, 0.5, 1.0), 0.5);
        assert_eq!(detector_current(2.0, 0.5, 0.0), 2.0);
        let s = (-1.0f64).exp();
        assert_relative_eq!(
            detector_current(2.0, 0.5, s),
            0.5 * s + 2.0 * (1.0 - s),
            max_relative = 1e-12
        );
    }

    #[test]
    fn n_resolved_traced_matches_bloch() {
        // Small D so the truncated count space stays cheap.
        let p = ModelParams {
            omega_pc: (1.0 / (2.0 * PI)).sqrt(), // D = 1
            delta_omega: (1.0 / (2.0 * PI)).sqrt() * 0.5, // D' = 0.25
            gamma0: 1.0,
            ..Default::default()
        };
        let rates = derived_rates(&p).unwrap();
        assert_relative_eq!(rates.d, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rates.dprime, 0.25, max_relative = 1e-12);
        let grid = discretize_flat_continuum(1.0, 0.0, 20.0, 201).unwrap();
        let times = time_grid(2.0, 8);
        let joint = evolve_n_resolved(&p, &grid, &times, 25).unwrap();
        let traced = evolve_bloch(&p, &grid, rates.gamma_d, &times).unwrap();
        for (cs, ts) in joint.states.iter().zip(&traced.states) {
            let summed = cs.traced();
            assert!((summed.sigma_00 - ts.sigma_00).abs() < 1e-6);
            for (a, b) in summed
                .sigma_alpha_alpha
                .iter()
                .zip(&ts.sigma_alpha_alpha)
            {
                assert!((a - b).abs() < 1e-6);
            }
            for (a, b) in summed.sigma_alpha_0.iter().zip(&ts.sigma_alpha_0) {
                assert!((a - b).norm() < 1e-6);
            }
        }
        // Survival also matches the closed form.
        let s = joint.observable("survival").unwrap();
        assert_relative_eq!(s[8], (-2.0f64).exp(), max_relative = 1e-6);
    }

    #[test]
    fn frozen_dot_counts_at_reduced_rate() {
        // Omega_alpha = 0 and Gamma_0 = 0: the dot stays occupied and the
        // count marginal is Poisson with rate D'.
        let p = ModelParams {
            omega_pc: (1.0 / (2.0 * PI)).sqrt(),
            delta_omega: (1.0 / (2.0 * PI)).sqrt() * 0.5,
            gamma0: 0.0,
            ..Default::default()
        };
        let grid = discretize_flat_continuum(0.0, 0.0, 5.0, 11).unwrap();
        let times = time_grid(2.0, 4);
        let joint = evolve_n_resolved(&p, &grid, &times, 15).unwrap();
        let marginal = joint.states.last().unwrap().count_marginal();
        for (n, &pn) in marginal.iter().enumerate() {
            let expect = crate::detector::poisson_counts(0.25, 2.0, n);
            assert!((pn - expect).abs() < 1e-8, "n = {n}: {pn} vs {expect}");
        }
    }

    #[test]
    fn decoupled_detector_counts_at_full_rate() {
        // delta_omega = 0: detector independent of the electron, marginal is
        // Poisson with rate D whatever the dot does.
        let p = ModelParams {
            omega_pc: (0.5 / (2.0 * PI)).sqrt(), // D = D' = 0.5
            gamma0: 1.0,
            ..Default::default()
        };
        let grid = discretize_flat_continuum(1.0, 0.0, 20.0, 101).unwrap();
        let times = time_grid(2.0, 4);
        let joint = evolve_n_resolved(&p, &grid, &times, 12).unwrap();
        let marginal = joint.states.last().unwrap().count_marginal();
        // Finite bandwidth loses a little trace to the Lorentzian tails, so
        // compare against the Poisson law scaled by the retained trace.
        let kept: f64 = marginal.iter().sum();
        for (n, &pn) in marginal.iter().enumerate().take(10) {
            let expect = crate::detector::poisson_counts(0.5, 2.0, n) * kept;
            assert!((pn - expect).abs() < 2e-4, "n = {n}: {pn} vs {expect}");
        }
    }

    #[test]
    fn amplitude_oracle_is_unitary_and_exponential() {
        // The exact dynamics carries band-edge corrections of relative size
        // ~1/bandwidth (short-time quadratic onset plus a pole shift), so the
        // 1% exponential comparison needs a band much wider than Gamma_0.
        let p = flat_params();
        let grid = discretize_flat_continuum(1.0, 0.0, 150.0, 3001).unwrap();
        let times = time_grid(3.0, 12);
        let traj = evolve_amplitudes_qd(&p, &grid, &times).unwrap();
        for (state, &t) in traj.states.iter().zip(&times) {
            assert_relative_eq!(state.trace(), 1.0, max_relative = 1e-6);
            let expect = (-t as f64).exp();
            assert!(
                (state.sigma_00 - expect).abs() / expect < 0.01,
                "t = {t}: {} vs {expect}",
                state.sigma_00
            );
        }
    }

    #[test]
    fn single_level_rabi_oscillation() {
        // N = 1 at resonance: |b0|^2 = cos^2(Omega t), no decay.
        let p = ModelParams {
            gamma0: 0.0,
            ..Default::default()
        };
        let grid = ContinuumGrid::new(vec![0.0], vec![0.5], vec![1.0]).unwrap();
        let times = time_grid(6.0, 60);
        let traj = evolve_amplitudes_qd(&p, &grid, &times).unwrap();
        for (state, &t) in traj.states.iter().zip(&times) {
            let expect = (0.5 * t).cos().powi(2);
            assert!((state.sigma_00 - expect).abs() < 1e-7);
        }
    }

    #[test]
    fn repeated_projection_values() {
        assert_relative_eq!(
            repeated_projection_survival(1.0, 0.1, 1).unwrap(),
            1.0 - 0.01,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            repeated_projection_survival(1.0, 0.1, 100).unwrap(),
            0.99f64.powi(100),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            repeated_projection_survival(1.0, 0.1, 100).unwrap(),
            0.36603,
            max_relative = 1e-4
        );
        assert!(matches!(
            repeated_projection_survival(1.0, 1.0, 3),
            Err(Error::InvalidStep(_))
        ));
    }

    #[test]
    fn repeated_projection_freezes_in_continuum_limit() {
        let mut last = 0.0;
        for dt in [0.1, 0.01, 0.001] {
            let s = repeated_projection_survival_at(1.0, dt, 1.0).unwrap();
            assert!(s > last, "survival must rise as dt shrinks");
            assert!(s < 1.0);
            last = s;
        }
        assert!(last > 0.999);
    }
}
