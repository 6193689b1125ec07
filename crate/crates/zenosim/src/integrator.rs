//! Fixed and adaptive Runge-Kutta integration for the linear ODE systems
//! every scenario reduces to, plus continuum discretization builders.

use std::f64::consts::PI;

use crate::core::ContinuumGrid;
use crate::{Error, Result};

/// Action `y -> L y` of a linear generator on a flat state vector.
///
/// The packing convention is fixed: diagonal density-matrix elements first,
/// then coherences as (re, im) pairs in grid order. Every scenario module
/// documents its own layout against this rule.
pub trait LinearGenerator {
    fn dim(&self) -> usize;
    /// Writes `L y` into `dydt`; both slices have length `dim()`.
    fn apply(&self, y: &[f64], dydt: &mut [f64]);
}

/// Blanket impl so closures can serve as generators in tests and small
/// scenarios.
pub struct FnGenerator<F: Fn(&[f64], &mut [f64])> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearGenerator for FnGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, y: &[f64], dydt: &mut [f64]) {
        (self.f)(y, dydt)
    }
}

/// Stepping method and its control parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical 4th-order Runge-Kutta with a fixed step.
    FixedRk4 { dt: f64 },
    /// Dormand-Prince 5(4) embedded pair with per-step error control.
    AdaptiveRk45 { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationControl {
    pub method: Method,
    pub max_steps: usize,
}

impl Default for IntegrationControl {
    fn default() -> Self {
        IntegrationControl {
            method: Method::AdaptiveRk45 { tol: 1e-9 },
            max_steps: 50_000_000,
        }
    }
}

impl IntegrationControl {
    pub fn adaptive(tol: f64) -> Self {
        IntegrationControl {
            method: Method::AdaptiveRk45 { tol },
            ..Default::default()
        }
    }

    pub fn fixed(dt: f64) -> Self {
        IntegrationControl {
            method: Method::FixedRk4 { dt },
            ..Default::default()
        }
    }
}

fn rk4_step(gen: &dyn LinearGenerator, y: &[f64], h: f64, scratch: &mut [Vec<f64>]) -> Vec<f64> {
    let n = y.len();
    let (k1, rest) = scratch.split_at_mut(1);
    let (k2, rest) = rest.split_at_mut(1);
    let (k3, rest) = rest.split_at_mut(1);
    let (k4, rest) = rest.split_at_mut(1);
    let tmp = &mut rest[0];
    gen.apply(y, &mut k1[0]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[0][i];
    }
    gen.apply(tmp, &mut k2[0]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[0][i];
    }
    gen.apply(tmp, &mut k3[0]);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[0][i];
    }
    gen.apply(tmp, &mut k4[0]);
    (0..n)
        .map(|i| y[i] + h / 6.0 * (k1[0][i] + 2.0 * k2[0][i] + 2.0 * k3[0][i] + k4[0][i]))
        .collect()
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rk45Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
}

impl Rk45Workspace {
    fn new(n: usize) -> Self {
        Rk45Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y5: vec![0.0; n],
        }
    }
}

/// One embedded step. Returns the scaled error norm; `ws.y5` holds the
/// 5th-order solution.
fn rk45_step(gen: &dyn LinearGenerator, y: &[f64], h: f64, tol: f64, ws: &mut Rk45Workspace) -> f64 {
    // Stage times DP_C are not consulted: all generators are autonomous.
    let _ = DP_C;
    let n = y.len();
    for s in 0..7 {
        for i in 0..n {
            let mut acc = y[i];
            for (j, kj) in ws.k.iter().take(s).enumerate() {
                acc += h * DP_A[s][j] * kj[i];
            }
            ws.tmp[i] = acc;
        }
        let Rk45Workspace { k, tmp, .. } = ws;
        let stage_y: &[f64] = if s == 0 { y } else { tmp };
        gen.apply(stage_y, &mut k[s]);
    }
    let mut err_sq = 0.0;
    for i in 0..n {
        let mut y5 = y[i];
        let mut y4 = y[i];
        for s in 0..7 {
            y5 += h * DP_B5[s] * ws.k[s][i];
            y4 += h * DP_B4[s] * ws.k[s][i];
        }
        ws.y5[i] = y5;
        let scale = tol * (1.0 + y[i].abs().max(y5.abs()));
        let e = (y5 - y4) / scale;
        err_sq += e * e;
    }
    (err_sq / n as f64).sqrt()
}

/// Integrates `dy/dt = L y` from `y0` and returns snapshots at exactly the
/// requested `times` (which must start at 0 and increase strictly).
///
/// Adaptive mode keeps the per-step local error estimate at or below the
/// tolerance; fixed mode clips the final substep of each interval so output
/// times are hit exactly.
pub fn integrate(
    gen: &dyn LinearGenerator,
    y0: &[f64],
    times: &[f64],
    ctl: &IntegrationControl,
) -> Result<Vec<Vec<f64>>> {
    if y0.len() != gen.dim() {
        return Err(Error::InvalidParams(format!(
            "state dimension {} does not match generator dimension {}",
            y0.len(),
            gen.dim()
        )));
    }
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "times must be strictly increasing from 0".into(),
        ));
    }
    match ctl.method {
        Method::FixedRk4 { dt } if dt <= 0.0 => {
            return Err(Error::InvalidParams(format!("step must be positive, got {dt}")))
        }
        Method::AdaptiveRk45 { tol } if tol <= 0.0 => {
            return Err(Error::InvalidParams(format!(
                "tolerance must be positive, got {tol}"
            )))
        }
        _ => {}
    }

    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut steps = 0usize;

    match ctl.method {
        Method::FixedRk4 { dt } => {
            let mut scratch = vec![vec![0.0; n]; 5];
            for &t_next in &times[1..] {
                while t < t_next {
                    let h = dt.min(t_next - t);
                    y = rk4_step(gen, &y, h, &mut scratch);
                    t += h;
                    steps += 1;
                    if steps > ctl.max_steps {
                        return Err(Error::StepLimitExceeded { steps, t });
                    }
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteState { t });
                    }
                }
                t = t_next;
                out.push(y.clone());
            }
        }
        Method::AdaptiveRk45 { tol } => {
            let mut ws = Rk45Workspace::new(n);
            let mut h = (times[1] - times[0]) * 0.1;
            for &t_next in &times[1..] {
                while t < t_next {
                    let h_try = h.min(t_next - t);
                    let err = rk45_step(gen, &y, h_try, tol, &mut ws);
                    steps += 1;
                    if steps > ctl.max_steps {
                        return Err(Error::StepLimitExceeded { steps, t });
                    }
                    if !err.is_finite() {
                        return Err(Error::NonFiniteState { t });
                    }
                    if err <= 1.0 {
                        y.copy_from_slice(&ws.y5);
                        t += h_try;
                        if y.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFiniteState { t });
                        }
                    }
                    // Standard PI-free controller with safety factor 0.9.
                    let factor = if err > 0.0 {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    h = (h_try * factor).max(1e-14 * (1.0 + t.abs()));
                }
                t = t_next;
                out.push(y.clone());
            }
        }
    }
    Ok(out)
}

/// Uniform discretization of a flat continuum of width `gamma0` on
/// `[e_center - half_bandwidth, e_center + half_bandwidth]`.
///
/// Each coupling is `sqrt(gamma0 * dE / 2 pi)` so the reconstructed width
/// `2 pi rho Omega^2` equals `gamma0` exactly on the grid.
pub fn discretize_flat_continuum(
    gamma0: f64,
    e_center: f64,
    half_bandwidth: f64,
    n_levels: usize,
) -> Result<ContinuumGrid> {
    if n_levels < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 levels, got {n_levels}"
        )));
    }
    if half_bandwidth <= 0.0 {
        return Err(Error::InvalidGrid(format!(
            "half_bandwidth must be positive, got {half_bandwidth}"
        )));
    }
    if gamma0 < 0.0 {
        return Err(Error::InvalidGrid(format!(
            "gamma0 must be nonnegative, got {gamma0}"
        )));
    }
    let de = 2.0 * half_bandwidth / (n_levels - 1) as f64;
    let coupling = (gamma0 * de / (2.0 * PI)).sqrt();
    let energies = (0..n_levels)
        .map(|i| e_center - half_bandwidth + de * i as f64)
        .collect();
    ContinuumGrid::new(energies, vec![coupling; n_levels], vec![de; n_levels])
}

/// Lorentzian density of states of width `gamma1` centered at `e1`,
/// normalized to unit integral over the full energy axis.
pub fn lorentzian_dos(e: f64, e1: f64, gamma1: f64) -> f64 {
    (gamma1 / (2.0 * PI)) / ((e - e1).powi(2) + gamma1 * gamma1 / 4.0)
}

/// Uniform discretization of a Lorentzian continuum centered at `e1`.
///
/// Couplings follow `Omega_alpha^2 = Gamma(E_alpha) dE / 2 pi` with the
/// energy-dependent width scaled to peak at `gamma_total`:
/// `Gamma(E) = gamma_total * rho(E) / rho(e1)`. Used only for direct
/// validation of the cavity mapping.
pub fn discretize_lorentzian_continuum(
    gamma_total: f64,
    e1: f64,
    gamma1: f64,
    half_bandwidth: f64,
    n_levels: usize,
) -> Result<ContinuumGrid> {
    if gamma1 <= 0.0 {
        return Err(Error::InvalidGrid(format!(
            "gamma1 must be positive, got {gamma1}"
        )));
    }
    if n_levels < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 levels, got {n_levels}"
        )));
    }
    if half_bandwidth <= 0.0 || gamma_total < 0.0 {
        return Err(Error::InvalidGrid(
            "half_bandwidth must be positive and gamma_total nonnegative".into(),
        ));
    }
    let de = 2.0 * half_bandwidth / (n_levels - 1) as f64;
    let rho_peak = lorentzian_dos(e1, e1, gamma1);
    let energies: Vec<f64> = (0..n_levels)
        .map(|i| e1 - half_bandwidth + de * i as f64)
        .collect();
    let couplings = energies
        .iter()
        .map(|&e| {
            let width = gamma_total * lorentzian_dos(e, e1, gamma1) / rho_peak;
            (width * de / (2.0 * PI)).sqrt()
        })
        .collect();
    ContinuumGrid::new(energies, couplings, vec![de; n_levels])
}
