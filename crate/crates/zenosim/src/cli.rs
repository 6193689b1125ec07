//! Scenario configuration, run orchestration, sweep execution, and emission
//! of figure-ready data files; the human-facing surface of the crate.
//!
//! Configs use a flat, line-oriented `key = value` format with `[section]`
//! headers. Outputs are deterministic: the same config produces byte-identical
//! files, and every output embeds the fully resolved config for provenance.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::cavity::{cavity_survival_with, classify_regime, RegimeReport};
use crate::core::{derived_rates, time_grid, validate_params, ModelParams};
use crate::detector::{auto_n_max, bayes_update, evolve_counts, evolve_counts_series, ObservationRecord};
use crate::flat_decay::{detector_current, evolve_bloch_with, repeated_projection_survival_at};
use crate::integrator::{discretize_flat_continuum, IntegrationControl};
use crate::{Error, Result};

/// Default adaptive tolerance, overridable by `ZENOSIM_TOL` or the config.
const DEFAULT_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Detector,
    FlatDecay,
    Cavity,
    Bayes,
    Projection,
}

impl Scenario {
    pub const ALL: [(Scenario, &'static str, &'static str); 5] = [
        (Scenario::Detector, "detector", "counting statistics of the point-contact current"),
        (Scenario::FlatDecay, "flat-decay", "dot decay into a flat continuum under measurement"),
        (Scenario::Cavity, "cavity", "decay through a Lorentzian resonance; Zeno / anti-Zeno"),
        (Scenario::Bayes, "bayes", "count distribution conditioned on an observed readout"),
        (Scenario::Projection, "projection", "repeated-projection survival baseline"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(s, _, _)| *s == self).unwrap().1
    }

    fn parse(tag: &str) -> Option<Scenario> {
        Self::ALL.iter().find(|(_, name, _)| *name == tag).map(|(s, _, _)| *s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub n_levels: usize,
    /// Half-bandwidth of the discretized continuum, in energy units.
    pub bandwidth: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_levels: 2001, bandwidth: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodConfig {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub method: MethodConfig,
    /// Adaptive tolerance; `None` defers to `ZENOSIM_TOL` or the default.
    pub tolerance: Option<f64>,
    /// Step size for the fixed-step method.
    pub dt: f64,
    pub t_end: f64,
    pub n_outputs: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            method: MethodConfig::Adaptive,
            tolerance: None,
            dt: 1e-3,
            t_end: 5.0,
            n_outputs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// A `ModelParams` field name or `gamma_d`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub path: String,
}

/// Scenario-specific knobs from the `[scenario]` section.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScenarioExtras {
    /// Decoherence rate override; defaults to the value derived from the
    /// detector parameters.
    pub gamma_d: Option<f64>,
    /// Readout time (bayes).
    pub t1: Option<f64>,
    /// Observed count (bayes).
    pub n1: Option<usize>,
    /// Energy variance of the projected state (projection).
    pub a: Option<f64>,
    /// Projection interval (projection).
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub extras: ScenarioExtras,
    pub params: ModelParams,
    pub grid: GridConfig,
    pub integration: IntegrationConfig,
    pub sweep: Option<SweepConfig>,
    pub output: OutputConfig,
}

// ---------------------------------------------------------------------------
// Parsing and rendering
// ---------------------------------------------------------------------------

fn cfg_err(line: usize, msg: impl fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| cfg_err(line, format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| cfg_err(line, format!("{key}: expected a nonnegative integer, got '{v}'")))
}

/// Parses the flat `key = value` config format. Unknown sections and keys are
/// rejected so typos fail loudly.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut scenario: Option<Scenario> = None;
    let mut extras = ScenarioExtras::default();
    let mut params = ModelParams::default();
    let mut grid = GridConfig::default();
    let mut integration = IntegrationConfig::default();
    let mut sweep_param: Option<String> = None;
    let mut sweep_values: Option<Vec<f64>> = None;
    let mut format = OutputFormat::Csv;
    let mut path: Option<String> = None;

    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            match section.as_str() {
                "scenario" | "params" | "grid" | "integration" | "sweep" | "output" => {}
                other => return Err(cfg_err(lineno, format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(lineno, format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        match (section.as_str(), key) {
            ("scenario", "name") => {
                scenario = Some(Scenario::parse(value).ok_or_else(|| {
                    cfg_err(lineno, format!("unknown scenario '{value}'"))
                })?);
            }
            ("scenario", "gamma_d") => extras.gamma_d = Some(parse_f64(lineno, key, value)?),
            ("scenario", "t1") => extras.t1 = Some(parse_f64(lineno, key, value)?),
            ("scenario", "n1") => extras.n1 = Some(parse_usize(lineno, key, value)?),
            ("scenario", "a") => extras.a = Some(parse_f64(lineno, key, value)?),
            ("scenario", "dt") => extras.dt = Some(parse_f64(lineno, key, value)?),
            ("params", _) => set_param(&mut params, key, parse_f64(lineno, key, value)?)
                .map_err(|e| cfg_err(lineno, e))?,
            ("grid", "n_levels") => grid.n_levels = parse_usize(lineno, key, value)?,
            ("grid", "bandwidth") => grid.bandwidth = parse_f64(lineno, key, value)?,
            ("integration", "method") => {
                integration.method = match value {
                    "adaptive" => MethodConfig::Adaptive,
                    "fixed" => MethodConfig::Fixed,
                    other => {
                        return Err(cfg_err(lineno, format!("unknown method '{other}'")))
                    }
                };
            }
            ("integration", "tolerance") => {
                integration.tolerance = Some(parse_f64(lineno, key, value)?)
            }
            ("integration", "dt") => integration.dt = parse_f64(lineno, key, value)?,
            ("integration", "t_end") => integration.t_end = parse_f64(lineno, key, value)?,
            ("integration", "n_outputs") => integration.n_outputs = parse_usize(lineno, key, value)?,
            ("sweep", "parameter") => sweep_param = Some(value.to_string()),
            ("sweep", "values") => {
                let mut vs = Vec::new();
                for item in value.split(',') {
                    vs.push(parse_f64(lineno, key, item.trim())?);
                }
                sweep_values = Some(vs);
            }
            ("output", "format") => {
                format = match value {
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    other => {
                        return Err(cfg_err(lineno, format!("unknown format '{other}'")))
                    }
                };
            }
            ("output", "path") => path = Some(value.to_string()),
            ("", _) => return Err(cfg_err(lineno, "key before any [section] header")),
            (sec, k) => return Err(cfg_err(lineno, format!("unknown key '{k}' in [{sec}]"))),
        }
    }

    let scenario =
        scenario.ok_or_else(|| Error::Config("missing 'name' in [scenario]".into()))?;
    let sweep = match (sweep_param, sweep_values) {
        (Some(parameter), Some(values)) => {
            if values.is_empty() {
                return Err(Error::Config("[sweep] values must be nonempty".into()));
            }
            Some(SweepConfig { parameter, values })
        }
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "[sweep] needs both 'parameter' and 'values'".into(),
            ))
        }
    };
    let cfg = ScenarioConfig {
        scenario,
        extras,
        params,
        grid,
        integration,
        sweep,
        output: OutputConfig {
            format,
            path: path.unwrap_or_else(|| {
                let ext = match format {
                    OutputFormat::Csv => "csv",
                    OutputFormat::Json => "json",
                };
                format!("{}.{ext}", scenario.as_str())
            }),
        },
    };
    validate_config(&cfg)?;
    Ok(cfg)
}

fn set_param(p: &mut ModelParams, key: &str, v: f64) -> std::result::Result<(), String> {
    match key {
        "omega_pc" => p.omega_pc = v,
        "delta_omega" => p.delta_omega = v,
        "rho_l" => p.rho_l = v,
        "rho_r" => p.rho_r = v,
        "bias" => p.bias = v,
        "e0" => p.e0 = v,
        "e1" => p.e1 = v,
        "gamma0" => p.gamma0 = v,
        "gamma1" => p.gamma1 = v,
        "omega_alpha" => p.omega_alpha = v,
        other => return Err(format!("unknown parameter '{other}'")),
    }
    Ok(())
}

fn validate_config(cfg: &ScenarioConfig) -> Result<()> {
    validate_params(&cfg.params).map_err(|e| Error::Config(format!("[params]: {e}")))?;
    if cfg.integration.t_end <= 0.0 {
        return Err(Error::Config("t_end must be positive".into()));
    }
    if cfg.integration.n_outputs == 0 {
        return Err(Error::Config("n_outputs must be positive".into()));
    }
    if cfg.integration.dt <= 0.0 {
        return Err(Error::Config("dt must be positive".into()));
    }
    if let Some(tol) = cfg.integration.tolerance {
        if tol <= 0.0 {
            return Err(Error::Config("tolerance must be positive".into()));
        }
    }
    if cfg.grid.n_levels < 2 || cfg.grid.bandwidth <= 0.0 {
        return Err(Error::Config(
            "grid needs n_levels >= 2 and a positive bandwidth".into(),
        ));
    }
    if let Some(gd) = cfg.extras.gamma_d {
        if gd < 0.0 {
            return Err(Error::Config("gamma_d must be nonnegative".into()));
        }
    }
    if let Some(sweep) = &cfg.sweep {
        if sweep.parameter != "gamma_d" {
            let mut probe = cfg.params;
            set_param(&mut probe, &sweep.parameter, 0.0)
                .map_err(|e| Error::Config(format!("[sweep]: {e}")))?;
        }
    }
    if cfg.scenario == Scenario::Bayes && (cfg.extras.t1.is_none() || cfg.extras.n1.is_none()) {
        return Err(Error::Config(
            "scenario 'bayes' needs 't1' and 'n1' in [scenario]".into(),
        ));
    }
    Ok(())
}

/// Returns a copy with the integrator tolerance pinned, resolving the
/// `ZENOSIM_TOL` environment override and the built-in default. Outputs embed
/// the resolved config so reruns do not depend on the environment.
pub fn resolve(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    let mut out = cfg.clone();
    if out.integration.tolerance.is_none() {
        out.integration.tolerance = Some(match std::env::var("ZENOSIM_TOL") {
            Ok(v) => v.parse().map_err(|_| {
                Error::Config(format!("ZENOSIM_TOL: expected a number, got '{v}'"))
            })?,
            Err(_) => DEFAULT_TOL,
        });
    }
    Ok(out)
}

/// Canonical text form; parsing it back yields an equal `ScenarioConfig`.
pub fn render_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    s.push_str("[scenario]\n");
    s.push_str(&format!("name = {}\n", cfg.scenario));
    if let Some(v) = cfg.extras.gamma_d {
        s.push_str(&format!("gamma_d = {v}\n"));
    }
    if let Some(v) = cfg.extras.t1 {
        s.push_str(&format!("t1 = {v}\n"));
    }
    if let Some(v) = cfg.extras.n1 {
        s.push_str(&format!("n1 = {v}\n"));
    }
    if let Some(v) = cfg.extras.a {
        s.push_str(&format!("a = {v}\n"));
    }
    if let Some(v) = cfg.extras.dt {
        s.push_str(&format!("dt = {v}\n"));
    }
    let p = &cfg.params;
    s.push_str("[params]\n");
    s.push_str(&format!("omega_pc = {}\n", p.omega_pc));
    s.push_str(&format!("delta_omega = {}\n", p.delta_omega));
    s.push_str(&format!("rho_l = {}\n", p.rho_l));
    s.push_str(&format!("rho_r = {}\n", p.rho_r));
    s.push_str(&format!("bias = {}\n", p.bias));
    s.push_str(&format!("e0 = {}\n", p.e0));
    s.push_str(&format!("e1 = {}\n", p.e1));
    s.push_str(&format!("gamma0 = {}\n", p.gamma0));
    s.push_str(&format!("gamma1 = {}\n", p.gamma1));
    s.push_str(&format!("omega_alpha = {}\n", p.omega_alpha));
    s.push_str("[grid]\n");
    s.push_str(&format!("n_levels = {}\n", cfg.grid.n_levels));
    s.push_str(&format!("bandwidth = {}\n", cfg.grid.bandwidth));
    s.push_str("[integration]\n");
    s.push_str(&format!(
        "method = {}\n",
        match cfg.integration.method {
            MethodConfig::Adaptive => "adaptive",
            MethodConfig::Fixed => "fixed",
        }
    ));
    if let Some(tol) = cfg.integration.tolerance {
        s.push_str(&format!("tolerance = {tol}\n"));
    }
    s.push_str(&format!("dt = {}\n", cfg.integration.dt));
    s.push_str(&format!("t_end = {}\n", cfg.integration.t_end));
    s.push_str(&format!("n_outputs = {}\n", cfg.integration.n_outputs));
    if let Some(sweep) = &cfg.sweep {
        s.push_str("[sweep]\n");
        s.push_str(&format!("parameter = {}\n", sweep.parameter));
        let vals: Vec<String> = sweep.values.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("values = {}\n", vals.join(", ")));
    }
    s.push_str("[output]\n");
    s.push_str(&format!(
        "format = {}\n",
        match cfg.output.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    ));
    s.push_str(&format!("path = {}\n", cfg.output.path));
    s
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

/// 12 significant digits, scientific notation: byte-exact across runs.
fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn write_csv(
    path: &Path,
    config_text: &str,
    header: &[String],
    columns: &[Vec<f64>],
) -> Result<()> {
    let mut s = String::new();
    for line in config_text.lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(&header.join(","));
    s.push('\n');
    let rows = columns.first().map_or(0, Vec::len);
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| sig12(c[r])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_json(
    path: &Path,
    config_text: &str,
    header: &[String],
    columns: &[Vec<f64>],
    extra: Option<serde_json::Value>,
) -> Result<()> {
    let rows = columns.first().map_or(0, Vec::len);
    let row_values: Vec<Vec<f64>> = (0..rows)
        .map(|r| columns.iter().map(|c| c[r]).collect())
        .collect();
    let mut envelope = serde_json::json!({
        "config": config_text,
        "columns": header,
        "rows": row_values,
    });
    if let Some(extra) = extra {
        envelope["report"] = extra;
    }
    let mut s = serde_json::to_string_pretty(&envelope).expect("JSON serialization");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn write_table(
    path: &Path,
    format: OutputFormat,
    config_text: &str,
    header: &[String],
    columns: &[Vec<f64>],
    extra: Option<serde_json::Value>,
) -> Result<()> {
    match format {
        OutputFormat::Csv => write_csv(path, config_text, header, columns),
        OutputFormat::Json => write_json(path, config_text, header, columns, extra),
    }
}

/// Reconstructs the embedded provenance config from a CSV produced by `run`.
pub fn provenance_from_csv(text: &str) -> Result<ScenarioConfig> {
    let embedded: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .map(|l| format!("{l}\n"))
        .collect();
    parse_config(&embedded)
}

fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

// ---------------------------------------------------------------------------
// Scenario execution
// ---------------------------------------------------------------------------

fn control_for(cfg: &ScenarioConfig) -> IntegrationControl {
    match cfg.integration.method {
        MethodConfig::Adaptive => {
            IntegrationControl::adaptive(cfg.integration.tolerance.unwrap_or(DEFAULT_TOL))
        }
        MethodConfig::Fixed => IntegrationControl::fixed(cfg.integration.dt),
    }
}

fn gamma_d_for(cfg: &ScenarioConfig) -> Result<f64> {
    match cfg.extras.gamma_d {
        Some(gd) => Ok(gd),
        None => Ok(derived_rates(&cfg.params)?.gamma_d),
    }
}

/// Executes one scenario and writes its output files; returns their paths.
pub fn run_config(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = resolve(cfg)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(&cfg.output.path);
    let config_text = render_config(&cfg);
    let ctl = control_for(&cfg);
    let times = time_grid(cfg.integration.t_end, cfg.integration.n_outputs);

    match cfg.scenario {
        Scenario::Detector => {
            let d = derived_rates(&cfg.params)?.d;
            let n_max = auto_n_max(d, cfg.integration.t_end);
            let series = evolve_counts_series(d, &times, n_max)?;
            let mut header = vec!["t".to_string()];
            header.extend((0..=n_max).map(|n| format!("p_{n}")));
            let mut columns = vec![times.clone()];
            for n in 0..=n_max {
                columns.push(series.iter().map(|d| d.probabilities[n]).collect());
            }
            write_table(&path, cfg.output.format, &config_text, &header, &columns, None)?;
            Ok(vec![path])
        }
        Scenario::FlatDecay => {
            let rates = derived_rates(&cfg.params)?;
            let gamma_d = gamma_d_for(&cfg)?;
            let grid = discretize_flat_continuum(
                cfg.params.gamma0,
                cfg.params.e0,
                cfg.grid.bandwidth,
                cfg.grid.n_levels,
            )?;
            let traj = evolve_bloch_with(&cfg.params, &grid, gamma_d, &times, &ctl)?;
            let survival = traj.observable("survival").unwrap();
            // Fig.-5-style normalized average current <I>/D.
            let current: Vec<f64> = survival
                .iter()
                .map(|&s| {
                    if rates.d > 0.0 {
                        detector_current(rates.d, rates.dprime, s) / rates.d
                    } else {
                        0.0
                    }
                })
                .collect();
            let header = vec!["t".into(), "sigma_00".into(), "current_over_d".into()];
            let columns = vec![times.clone(), survival.to_vec(), current];
            write_table(&path, cfg.output.format, &config_text, &header, &columns, None)?;
            Ok(vec![path])
        }
        Scenario::Cavity => {
            let gamma_d = gamma_d_for(&cfg)?;
            let measured = cavity_survival_with(&cfg.params, gamma_d, &times, &ctl)?;
            let unmeasured = cavity_survival_with(&cfg.params, 0.0, &times, &ctl)?;
            let header = vec![
                "t".to_string(),
                "sigma_00_unmeasured".to_string(),
                "sigma_00_measured".to_string(),
            ];
            let columns = vec![times.clone(), unmeasured, measured];
            match cfg.output.format {
                OutputFormat::Csv => {
                    // Full range plus a short-time zoom resolving the Zeno
                    // window around t ~ 1/Omega_alpha.
                    write_csv(&path, &config_text, &header, &columns)?;
                    let t_zoom = (0.5 / cfg.params.omega_alpha.max(1e-300))
                        .min(cfg.integration.t_end);
                    let zoom_times = time_grid(t_zoom, cfg.integration.n_outputs);
                    let zoom_meas =
                        cavity_survival_with(&cfg.params, gamma_d, &zoom_times, &ctl)?;
                    let zoom_unmeas =
                        cavity_survival_with(&cfg.params, 0.0, &zoom_times, &ctl)?;
                    let zoom_path = sibling_path(&path, "_zoom");
                    write_csv(
                        &zoom_path,
                        &config_text,
                        &header,
                        &[zoom_times, zoom_unmeas, zoom_meas],
                    )?;
                    Ok(vec![path, zoom_path])
                }
                OutputFormat::Json => {
                    let report = classify_regime(&cfg.params, gamma_d)?;
                    let extra = serde_json::to_value(&report).expect("JSON serialization");
                    write_json(&path, &config_text, &header, &columns, Some(extra))?;
                    Ok(vec![path])
                }
            }
        }
        Scenario::Bayes => {
            let d = derived_rates(&cfg.params)?.d;
            let t1 = cfg.extras.t1.unwrap();
            let n1 = cfg.extras.n1.unwrap();
            let obs = ObservationRecord::new(t1, n1)?;
            let t_end = cfg.integration.t_end;
            let n_max = auto_n_max(d, t_end) + n1;
            let uncond = evolve_counts(d, t_end, n_max)?;
            let cond = bayes_update(d, &obs, t_end, n_max)?;
            let ns: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
            let header = vec![
                "n".to_string(),
                "p_unconditioned".to_string(),
                "p_conditioned".to_string(),
            ];
            let columns = vec![ns, uncond.probabilities, cond.probabilities];
            write_table(&path, cfg.output.format, &config_text, &header, &columns, None)?;
            Ok(vec![path])
        }
        Scenario::Projection => {
            let a = cfg.extras.a.unwrap_or(1.0);
            let dt = cfg.extras.dt.unwrap_or(0.01);
            let survival: Vec<f64> = times
                .iter()
                .map(|&t| repeated_projection_survival_at(a, dt, t))
                .collect::<Result<_>>()?;
            let header = vec!["t".to_string(), "survival".to_string()];
            let columns = vec![times.clone(), survival];
            write_table(&path, cfg.output.format, &config_text, &header, &columns, None)?;
            Ok(vec![path])
        }
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Applies a sweep value, returning the adjusted params and decoherence rate.
fn apply_sweep_value(cfg: &ScenarioConfig, name: &str, v: f64) -> Result<(ModelParams, f64)> {
    if name == "gamma_d" {
        return Ok((cfg.params, v));
    }
    let mut p = cfg.params;
    set_param(&mut p, name, v).map_err(Error::Config)?;
    let gamma_d = match cfg.extras.gamma_d {
        Some(gd) => gd,
        None => derived_rates(&p)?.gamma_d,
    };
    Ok((p, gamma_d))
}

/// One sweep point: either a regime report or the error that prevented it.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub report: std::result::Result<RegimeReport, String>,
}

/// Evaluates the regime report at every sweep value, in ascending order.
/// Individual point failures are recorded per-row without aborting. Points
/// execute on up to `jobs` threads; aggregation order is independent of
/// completion order.
pub fn sweep_rows(cfg: &ScenarioConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep requires a [sweep] block".into()))?;
    let mut values = sweep.values.clone();
    values.sort_by(f64::total_cmp);
    let jobs = jobs.max(1).min(values.len());

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; values.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= values.len() {
                    break;
                }
                let v = values[i];
                let report = apply_sweep_value(cfg, &sweep.parameter, v)
                    .and_then(|(p, gd)| classify_regime(&p, gd))
                    .map_err(|e| e.to_string());
                slots.lock().unwrap()[i] = Some(SweepRow { value: v, report });
            });
        }
    });
    Ok(slots.into_inner().unwrap().into_iter().map(Option::unwrap).collect())
}

/// Runs the sweep and writes the aggregated report file.
pub fn sweep_config(cfg: &ScenarioConfig, out_dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    let cfg = resolve(cfg)?;
    let rows = sweep_rows(&cfg, jobs)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(&cfg.output.path);
    let config_text = render_config(&cfg);
    match cfg.output.format {
        OutputFormat::Csv => {
            let mut s = String::new();
            for line in config_text.lines() {
                s.push_str("# ");
                s.push_str(line);
                s.push('\n');
            }
            s.push_str(
                "value,fitted_rate,predicted_rate,rate_ratio,t_star,classification,error\n",
            );
            for row in &rows {
                match &row.report {
                    Ok(r) => s.push_str(&format!(
                        "{},{},{},{},{},{:?},\n",
                        sig12(row.value),
                        sig12(r.fitted_rate),
                        sig12(r.predicted_rate),
                        sig12(r.rate_ratio),
                        sig12(r.t_star),
                        r.classification,
                    )),
                    Err(e) => s.push_str(&format!(
                        "{},,,,,,{}\n",
                        sig12(row.value),
                        e.replace(',', ";").replace('\n', " "),
                    )),
                }
            }
            fs::write(&path, s)?;
        }
        OutputFormat::Json => {
            let json_rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| match &row.report {
                    Ok(r) => serde_json::json!({
                        "value": row.value,
                        "report": r,
                    }),
                    Err(e) => serde_json::json!({
                        "value": row.value,
                        "error": e,
                    }),
                })
                .collect();
            let envelope = serde_json::json!({
                "config": config_text,
                "rows": json_rows,
            });
            let mut s = serde_json::to_string_pretty(&envelope).expect("JSON serialization");
            s.push('\n');
            fs::write(&path, s)?;
        }
    }
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// Command-line interface
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "zenosim",
    about = "Deterministic simulator for a continuously measured decaying quantum dot"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for data files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Maximum concurrent sweep points.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Assert that no randomness is consulted (always true; documentation flag).
    #[arg(long)]
    pub seedless: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one scenario and write its data files.
    Run(RunArgs),
    /// Execute the sweep block and write the aggregated report.
    Sweep(RunArgs),
    /// Parse and validate a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available scenario tags.
    ListScenarios,
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Dispatches a parsed command line; returns the files written.
pub fn dispatch(command: &Command) -> Result<Vec<PathBuf>> {
    match command {
        Command::Run(args) => run_config(&load_config(&args.config)?, &args.out),
        Command::Sweep(args) => {
            sweep_config(&load_config(&args.config)?, &args.out, args.jobs)
        }
        Command::Validate { config } => {
            load_config(config)?;
            println!("{}: OK", config.display());
            Ok(Vec::new())
        }
        Command::ListScenarios => {
            for (_, name, blurb) in Scenario::ALL {
                println!("{name:12} {blurb}");
            }
            Ok(Vec::new())
        }
    }
}

/// Process entry point: 0 on success, 2 on config errors, 3 on simulation
/// errors.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 3,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat_decay::survival_analytic;

    fn base_config(extra: &str) -> String {
        format!(
            "[scenario]\nname = flat-decay\n[params]\ngamma0 = 1\n\
             [grid]\nn_levels = 201\nbandwidth = 10\n\
             [integration]\ntolerance = 1e-8\nt_end = 2\nn_outputs = 40\n\
             [output]\nformat = csv\npath = out.csv\n{extra}"
        )
    }

    fn csv_columns(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header: Vec<String> =
            lines.next().unwrap().split(',').map(str::to_string).collect();
        let mut columns = vec![Vec::new(); header.len()];
        for line in lines {
            for (c, item) in line.split(',').enumerate() {
                columns[c].push(item.parse::<f64>().unwrap());
            }
        }
        (header, columns)
    }

    #[test]
    fn config_round_trip_through_render() {
        let cfg = parse_config(&base_config("")).unwrap();
        let again = parse_config(&render_config(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn config_rejects_unknown_key_with_line_number() {
        let err = parse_config(&base_config("[params]\nbogus = 1\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn config_requires_scenario_name() {
        let err = parse_config("[params]\ngamma0 = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bayes_scenario_requires_readout() {
        let text = "[scenario]\nname = bayes\n[integration]\nt_end = 5\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("t1"), "{err}");
    }

    #[test]
    fn flat_decay_run_matches_exponential_survival() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(&base_config("")).unwrap();
        let files = run_config(&cfg, dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        let (header, columns) = csv_columns(&text);
        assert_eq!(header[1], "sigma_00");
        for (&t, &s) in columns[0].iter().zip(&columns[1]) {
            assert!(
                (s - survival_analytic(1.0, t)).abs() <= 0.01 * survival_analytic(1.0, t),
                "t = {t}: {s}"
            );
        }
        // Embedded provenance re-parses to the resolved config.
        let embedded = provenance_from_csv(&text).unwrap();
        assert_eq!(embedded, resolve(&cfg).unwrap());
    }

    #[test]
    fn runs_are_byte_identical() {
        let cfg = parse_config(&base_config("")).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = run_config(&cfg, d1.path()).unwrap();
        let f2 = run_config(&cfg, d2.path()).unwrap();
        assert_eq!(fs::read(&f1[0]).unwrap(), fs::read(&f2[0]).unwrap());
    }

    #[test]
    fn silent_detector_keeps_all_weight_at_zero_counts() {
        // delta_omega = omega_pc makes D = 0 through the derived rates.
        let text = "[scenario]\nname = detector\n[params]\nomega_pc = 0\n\
                    [integration]\ntolerance = 1e-10\nt_end = 3\nn_outputs = 10\n\
                    [output]\nformat = csv\npath = counts.csv\n";
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = run_config(&cfg, dir.path()).unwrap();
        let (header, columns) = csv_columns(&fs::read_to_string(&files[0]).unwrap());
        assert_eq!(header[1], "p_0");
        assert!(columns[1].iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cavity_run_emits_two_files_with_one_crossing() {
        // Detuned measured evolution: short-time Zeno, long-time anti-Zeno,
        // so the survival curves cross exactly once.
        let text = "[scenario]\nname = cavity\ngamma_d = 10\n\
                    [params]\nomega_alpha = 1\ngamma1 = 1\ne0 = 0\ne1 = 10\n\
                    [integration]\ntolerance = 1e-10\nt_end = 60\nn_outputs = 300\n\
                    [output]\nformat = csv\npath = fig.csv\n";
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = run_config(&cfg, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let (_, columns) = csv_columns(&fs::read_to_string(&files[0]).unwrap());
        let crossings = columns[1]
            .windows(2)
            .zip(columns[2].windows(2))
            .filter(|(u, m)| (m[0] - u[0]).signum() != (m[1] - u[1]).signum())
            .count();
        assert_eq!(crossings, 1, "expected exactly one curve crossing");
    }

    #[test]
    fn bayes_run_narrows_the_distribution() {
        let text = "[scenario]\nname = bayes\nt1 = 5\nn1 = 12\n\
                    [integration]\ntolerance = 1e-10\nt_end = 10\nn_outputs = 10\n\
                    [output]\nformat = csv\npath = bayes.csv\n";
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = run_config(&cfg, dir.path()).unwrap();
        let (_, columns) = csv_columns(&fs::read_to_string(&files[0]).unwrap());
        let spread = |p: &[f64]| {
            let mean: f64 = p.iter().enumerate().map(|(n, &q)| n as f64 * q).sum();
            p.iter()
                .enumerate()
                .map(|(n, &q)| (n as f64 - mean).powi(2) * q)
                .sum::<f64>()
        };
        assert!(spread(&columns[2]) < spread(&columns[1]));
    }

    #[test]
    fn projection_run_reports_frozen_limit() {
        let text = "[scenario]\nname = projection\na = 1\ndt = 0.001\n\
                    [integration]\nt_end = 1\nn_outputs = 10\n\
                    [output]\nformat = csv\npath = proj.csv\n";
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = run_config(&cfg, dir.path()).unwrap();
        let (_, columns) = csv_columns(&fs::read_to_string(&files[0]).unwrap());
        assert!(columns[1].last().unwrap() > &0.999);
    }

    #[test]
    fn aligned_sweep_rates_strictly_decrease() {
        // Overdamped cavity so every point has a clean exponential window.
        let text = "[scenario]\nname = cavity\n\
                    [params]\nomega_alpha = 1\ngamma1 = 20\ne0 = 0\ne1 = 0\n\
                    [integration]\ntolerance = 1e-9\nt_end = 30\nn_outputs = 50\n\
                    [sweep]\nparameter = gamma_d\nvalues = 10, 0, 5, 1\n\
                    [output]\nformat = csv\npath = sweep.csv\n";
        let cfg = parse_config(text).unwrap();
        let rows = sweep_rows(&cfg, 4).unwrap();
        let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
        assert_eq!(values, vec![0.0, 1.0, 5.0, 10.0], "ascending sweep order");
        let rates: Vec<f64> = rows
            .iter()
            .map(|r| r.report.as_ref().unwrap().fitted_rate)
            .collect();
        assert!(
            rates.windows(2).all(|w| w[1] < w[0]),
            "rates not strictly decreasing: {rates:?}"
        );
    }

    #[test]
    fn sweep_output_is_order_stable_across_jobs() {
        let text = "[scenario]\nname = cavity\n\
                    [params]\nomega_alpha = 1\ngamma1 = 20\ne0 = 0\ne1 = 0\n\
                    [integration]\ntolerance = 1e-9\nt_end = 30\nn_outputs = 50\n\
                    [sweep]\nparameter = gamma_d\nvalues = 0, 5\n\
                    [output]\nformat = csv\npath = sweep.csv\n";
        let cfg = parse_config(text).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = sweep_config(&cfg, d1.path(), 1).unwrap();
        let f2 = sweep_config(&cfg, d2.path(), 8).unwrap();
        assert_eq!(fs::read(&f1[0]).unwrap(), fs::read(&f2[0]).unwrap());
    }

    #[test]
    fn sweep_records_point_failures_without_aborting() {
        // gamma1 = 0 at the second point makes the closed system undamped;
        // the rate fit fails there but the first row still succeeds.
        let text = "[scenario]\nname = cavity\ngamma_d = 0\n\
                    [params]\nomega_alpha = 1\ngamma1 = 20\ne0 = 0\ne1 = 0\n\
                    [integration]\ntolerance = 1e-9\nt_end = 30\nn_outputs = 50\n\
                    [sweep]\nparameter = gamma1\nvalues = 20, 0\n\
                    [output]\nformat = csv\npath = sweep.csv\n";
        let cfg = parse_config(text).unwrap();
        let rows = sweep_rows(&cfg, 1).unwrap();
        assert!(rows[0].report.is_err(), "gamma1 = 0 point should fail");
        assert!(rows[1].report.is_ok(), "{:?}", rows[1].report);
    }

    #[test]
    fn sweep_rejects_unknown_parameter() {
        let text = "[scenario]\nname = cavity\n[integration]\nt_end = 1\n\
                    [sweep]\nparameter = bogus\nvalues = 1\n\
                    [output]\nformat = csv\npath = s.csv\n";
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
