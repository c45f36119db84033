//! Experiment configuration: TOML sections plus `section.key=value` overrides.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use jc_core::phasespace::PdfArgument;
use jc_core::sse::Propagation;
use jc_core::SystemParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Steady,
    Evolve,
    Trajectory,
    Ensemble,
    Wigner,
    Qfunc,
    Duffing,
    Meanfield,
    Leaf,
    Spectrum,
    Lifetimes,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Evolve => "evolve",
            Command::Trajectory => "trajectory",
            Command::Ensemble => "ensemble",
            Command::Wigner => "wigner",
            Command::Qfunc => "qfunc",
            Command::Duffing => "duffing",
            Command::Meanfield => "meanfield",
            Command::Leaf => "leaf",
            Command::Spectrum => "spectrum",
            Command::Lifetimes => "lifetimes",
        }
    }

    /// Master-equation runs need qubit damping; trajectories and mean-field maps do not.
    fn allows_zero_gamma(self) -> bool {
        !matches!(self, Command::Steady | Command::Evolve | Command::Wigner | Command::Qfunc)
    }
}

/// Dimensionless rate ratios; each `a`/`b` alternative pair is exclusive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ratios {
    pub eps_d_over_gamma: Option<f64>,
    pub eps_d_over_kappa: Option<f64>,
    pub two_kappa_over_gamma: Option<f64>,
    pub gamma_over_two_kappa: Option<f64>,
    pub g_over_gamma: Option<f64>,
    pub g_over_two_kappa: Option<f64>,
    pub delta_over_g: Option<f64>,
    pub g_over_delta: Option<f64>,
    pub delta_c_over_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_max: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub sample_stride: usize,
    pub trajectories: u64,
    pub propagation: Propagation,
    /// Output times for `evolve`.
    pub time_points: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_max: 40,
            dt: 1e-3,
            t_final: 10.0,
            seed: 1,
            sample_stride: 10,
            trajectories: 4,
            propagation: Propagation::SplitJc,
            time_points: 101,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Half width of a square grid; sized from the state when absent.
    pub half_width: Option<f64>,
    pub center_re: f64,
    pub center_im: f64,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    pub n_dark: Option<f64>,
    pub n_mid: Option<f64>,
    pub n_bright: Option<f64>,
    /// In units of `1/κ`.
    pub min_duration: Option<f64>,
    /// Histogram bin width in units of `1/κ`.
    pub bin_width: Option<f64>,
}

/// Effective Duffing oscillator with the qubit frozen at `⟨σ_z⟩ = s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DuffingConfig {
    pub s: f64,
    pub pdf_argument: PdfArgument,
}

impl Default for DuffingConfig {
    fn default() -> Self {
        Self {
            s: -1.0,
            pdf_argument: PdfArgument::Printed,
        }
    }
}

/// Cavity-detuning sweep in units of `κ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub delta_c_over_kappa_min: f64,
    pub delta_c_over_kappa_max: f64,
    pub points: usize,
    pub log: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            delta_c_over_kappa_min: 0.01,
            delta_c_over_kappa_max: 130.0,
            points: 200,
            log: true,
        }
    }
}

/// Raw file layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub subcommand: Option<Command>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: Ratios,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub duffing: DuffingConfig,
}

/// Validated configuration with rates resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: Command,
    pub output_dir: PathBuf,
    pub ratios: Ratios,
    pub params: SystemParams,
    /// `ω_c − ω_q`, echoed with the resolved rates.
    pub delta: f64,
    /// `"gamma"` when `γ = 1`, `"kappa"` when `κ = 1`.
    pub units: &'static str,
    pub numerics: Numerics,
    pub grid: GridConfig,
    pub thresholds: ThresholdConfig,
    pub sweep: SweepConfig,
    pub duffing: DuffingConfig,
}

fn one_of(name: &str, a: (&str, Option<f64>), b: (&str, Option<f64>)) -> Result<Option<(usize, f64)>, CliError> {
    match (a.1, b.1) {
        (Some(_), Some(_)) => Err(CliError::Config(format!(
            "{name}: supply exactly one of {} and {}, not both",
            a.0, b.0
        ))),
        (Some(x), None) => Ok(Some((0, x))),
        (None, Some(x)) => Ok(Some((1, x))),
        (None, None) => Ok(None),
    }
}

fn require(name: &str, a: &str, b: &str, v: Option<(usize, f64)>) -> Result<(usize, f64), CliError> {
    v.ok_or_else(|| CliError::Config(format!("{name}: supply one of {a} or {b}")))
}

fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Config(format!("{name} must be finite")))
    }
}

impl Ratios {
    /// Absolute rates: `γ = 1` when `γ > 0`, otherwise `κ = 1`.
    pub fn resolve(&self, cmd: Command) -> Result<(SystemParams, &'static str), CliError> {
        let damping = require(
            "damping",
            "two_kappa_over_gamma",
            "gamma_over_two_kappa",
            one_of(
                "damping",
                ("two_kappa_over_gamma", self.two_kappa_over_gamma),
                ("gamma_over_two_kappa", self.gamma_over_two_kappa),
            )?,
        )?;
        let (gamma, kappa, units) = match damping {
            (0, r) if finite("two_kappa_over_gamma", r)? > 0.0 => (1.0, 0.5 * r, "gamma"),
            (1, r) if finite("gamma_over_two_kappa", r)? > 0.0 => (1.0, 0.5 / r, "gamma"),
            (1, r) if r == 0.0 => (0.0, 1.0, "kappa"),
            _ => return Err(CliError::Config("damping ratio must be positive (or gamma_over_two_kappa = 0)".into())),
        };
        if gamma == 0.0 {
            if !cmd.allows_zero_gamma() {
                return Err(CliError::Config(format!("gamma = 0 is not supported by `{}`", cmd.name())));
            }
            if self.eps_d_over_gamma.is_some() || self.g_over_gamma.is_some() {
                return Err(CliError::Config(
                    "gamma = 0: gamma-normalized ratios are undefined; use eps_d_over_kappa and g_over_two_kappa".into(),
                ));
            }
        }
        let eps = match require(
            "drive",
            "eps_d_over_gamma",
            "eps_d_over_kappa",
            one_of("drive", ("eps_d_over_gamma", self.eps_d_over_gamma), ("eps_d_over_kappa", self.eps_d_over_kappa))?,
        )? {
            (0, r) => r * gamma,
            (_, r) => r * kappa,
        };
        let g = match require(
            "coupling",
            "g_over_gamma",
            "g_over_two_kappa",
            one_of("coupling", ("g_over_gamma", self.g_over_gamma), ("g_over_two_kappa", self.g_over_two_kappa))?,
        )? {
            (0, r) => r * gamma,
            (_, r) => r * 2.0 * kappa,
        };
        let delta = match require(
            "qubit detuning",
            "delta_over_g",
            "g_over_delta",
            one_of("qubit detuning", ("delta_over_g", self.delta_over_g), ("g_over_delta", self.g_over_delta))?,
        )? {
            (0, r) => r * g,
            (_, r) if r != 0.0 => g / r,
            _ => return Err(CliError::Config("g_over_delta must be nonzero".into())),
        };
        let dc = self
            .delta_c_over_kappa
            .ok_or_else(|| CliError::Config("cavity detuning: supply delta_c_over_kappa".into()))?;
        for (name, v) in [("drive", eps), ("coupling", g), ("qubit detuning", delta), ("cavity detuning", dc)] {
            finite(name, v)?;
        }
        if g < 0.0 || delta <= 0.0 || eps < 0.0 {
            return Err(CliError::Config("drive and coupling must be >= 0 and the qubit detuning > 0".into()));
        }
        let p = SystemParams::with_qubit_below(dc * kappa, delta, g, eps, kappa, gamma);
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok((p, units))
    }
}

impl Numerics {
    fn validate(&self) -> Result<(), CliError> {
        let ok = self.n_max >= 2
            && self.dt > 0.0
            && self.t_final > 0.0
            && self.sample_stride > 0
            && self.trajectories > 0
            && self.time_points >= 2
            && self.dt.is_finite()
            && self.t_final.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(
                "numerics must be positive (n_max >= 2, dt, t_final, sample_stride, trajectories, time_points >= 2)".into(),
            ))
        }
    }
}

/// Flag overrides, applied after the file; flags win.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub subcommand: Option<Command>,
    pub output_dir: Option<PathBuf>,
    /// `section.key=value` assignments, values parsed as TOML.
    pub sets: Vec<String>,
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one element");
    let mut cur = table;
    for sect in parents {
        let entry = cur.entry(sect.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{sect}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parse an optional file plus overrides into a validated configuration.
pub fn parse_config(text: Option<&str>, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table = match text {
        Some(t) => toml::from_str(t).map_err(|e| CliError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    for s in &ov.sets {
        apply_set(&mut table, s)?;
    }
    let file: ConfigFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let subcommand = ov
        .subcommand
        .or(file.subcommand)
        .ok_or_else(|| CliError::Config("no subcommand given".into()))?;
    let (params, units) = file.params.resolve(subcommand)?;
    file.numerics.validate()?;
    if !(file.duffing.s.is_finite() && file.duffing.s != 0.0) {
        return Err(CliError::Config("duffing.s must be finite and nonzero".into()));
    }
    if let Some(h) = file.grid.half_width {
        if !(h > 0.0) {
            return Err(CliError::Config("grid.half_width must be positive".into()));
        }
    }
    if file.grid.points.is_some_and(|n| n < 4) {
        return Err(CliError::Config("grid.points must be at least 4".into()));
    }
    let sw = &file.sweep;
    if !(sw.points >= 2 && sw.delta_c_over_kappa_max > sw.delta_c_over_kappa_min && (!sw.log || sw.delta_c_over_kappa_min > 0.0)) {
        return Err(CliError::Config("sweep needs points >= 2 and an ascending (positive, for log) range".into()));
    }
    Ok(ExperimentConfig {
        subcommand,
        output_dir: ov.output_dir.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        ratios: file.params,
        delta: params.delta(),
        params,
        units,
        numerics: file.numerics,
        grid: file.grid,
        thresholds: file.thresholds,
        sweep: file.sweep,
        duffing: file.duffing,
    })
}

pub fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
