//! The `zeno` command-line front end.
//!
//! Every run reads a JSON model, writes one CSV table and a JSON sidecar
//! holding the resolved configuration (model included). Replaying the
//! sidecar reproduces the CSV byte for byte.
//!
//! Besides the continuum fields, a model file may carry:
//!
//! * `"two_level": {"rabi_omega": Ω, "absorption_v": [V, ...]}` for `survival`;
//! * `"rabi_probe": {"rabi_omega": Ω, "probe_k": [K, ...]}` for `survival`;
//! * `"laser": {"big_omega0": Ω₀, "multipoles": [{"j": 1, "kind": "electric"}]}`
//!   for `laser` (`omega_in` plays the role of `ω₀`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exact::{dense_evolve, AbsorptiveTwoLevel, RabiProbeThreeLevel};
use crate::laser::{pole_and_rate, small_b_law, LaserAtomModel, MultipoleKind};
use crate::model::{discretize, golden_rule_rate, zeno_time, Family, ModelFile, SpectralDensity};
use crate::quadrature::Integrator;
use crate::rates::{continuous_rate_integral_with, parameter_grid, pulsed_rate_integral_with, rabi_rate};
use crate::trace::TimeGrid;
use crate::volterra::{solve_memory_kernel, KernelSpec, MeasurementMode};
use crate::zeno::{
    analyze_transition, crossing_defect, default_t_max, random_exp_models, TransitionOptions, TransitionOutcome,
};

/// Upper bound on sweep length.
pub const MAX_SWEEP_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Survival,
    Rates,
    Transition,
    Laser,
    Oracle,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Pulsed,
    Continuous,
    Rabi,
    Laser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleCheck {
    /// Memory-kernel solver against exact evolution of a discretized bath.
    Dense,
    /// `Z < 1` implies a transition, over seeded random models.
    Theorem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    Coupling,
    Threshold,
    Cutoff,
    ExponentN,
    UvExponentBeta,
    OmegaIn,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Coupling => "coupling",
            SweepAxis::Threshold => "threshold",
            SweepAxis::Cutoff => "cutoff",
            SweepAxis::ExponentN => "exponent_n",
            SweepAxis::UvExponentBeta => "uv_exponent_beta",
            SweepAxis::OmegaIn => "omega_in",
        }
    }

    fn apply(self, m: &mut ModelFile, v: f64) {
        match self {
            SweepAxis::Coupling => m.coupling = v,
            SweepAxis::Threshold => m.threshold = Some(v),
            SweepAxis::Cutoff => m.cutoff = v,
            SweepAxis::ExponentN => m.exponent_n = v,
            SweepAxis::UvExponentBeta => m.uv_exponent_beta = Some(v),
            SweepAxis::OmegaIn => m.omega_in = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepScalar {
    NaturalRate,
    ZenoTime,
    ZFactor,
    TauStar,
}

impl SweepScalar {
    pub fn name(self) -> &'static str {
        match self {
            SweepScalar::NaturalRate => "natural_rate",
            SweepScalar::ZenoTime => "zeno_time",
            SweepScalar::ZFactor => "z_factor",
            SweepScalar::TauStar => "tau_star",
        }
    }
}

/// Fully resolved run description; serialized as the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model_path: PathBuf,
    pub output_path: PathBuf,
    pub t_max: Option<f64>,
    pub steps: Option<usize>,
    pub param_min: Option<f64>,
    pub param_max: Option<f64>,
    pub points: Option<usize>,
    pub log_scale: bool,
    pub quadrature_rtol: f64,
    pub fit_residual_max: f64,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub rate_mode: Option<RateMode>,
    pub check: Option<OracleCheck>,
    pub modes: Option<usize>,
    pub axis: Option<SweepAxis>,
    pub scalar: Option<SweepScalar>,
    /// Model contents; filled in from `model_path` on first run.
    #[serde(default)]
    pub model: Option<Value>,
}

impl RunConfig {
    pub fn new(command: CommandKind, model_path: impl Into<PathBuf>, output_path: impl Into<PathBuf>) -> Self {
        Self {
            command,
            model_path: model_path.into(),
            output_path: output_path.into(),
            t_max: None,
            steps: None,
            param_min: None,
            param_max: None,
            points: None,
            log_scale: false,
            quadrature_rtol: 1e-8,
            fit_residual_max: 1e-2,
            seed: 0,
            jobs: None,
            rate_mode: None,
            check: None,
            modes: None,
            axis: None,
            scalar: None,
            model: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(s) = self.steps {
            if s < 2 {
                return bad(format!("steps must be at least 2, got {s}"));
            }
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) || !t.is_finite() {
                return bad(format!("t_max must be positive, got {t}"));
            }
        }
        if let (Some(lo), Some(hi)) = (self.param_min, self.param_max) {
            if !(hi > lo) {
                return bad(format!("param range [{lo}, {hi}] is empty"));
            }
        }
        if self.param_min.is_some_and(|v| !v.is_finite()) || self.param_max.is_some_and(|v| !v.is_finite()) {
            return bad("param range must be finite".into());
        }
        if self.points == Some(0) {
            return bad("points must be positive".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive".into());
        }
        if !(self.quadrature_rtol > 0.0) || !(self.fit_residual_max > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.output_path.extension().is_some_and(|e| e == "json") {
            return bad("output must be a CSV path; .json is reserved for the sidecar".into());
        }
        Ok(())
    }

    pub fn sidecar_path(&self) -> PathBuf {
        self.output_path.with_extension("json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_path.with_extension("report.json")
    }

    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSpec {
    pub rabi_omega: f64,
    pub absorption_v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiProbeSpec {
    pub rabi_omega: f64,
    pub probe_k: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultipoleSpec {
    pub j: u32,
    pub kind: MultipoleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserSpec {
    #[serde(default)]
    pub big_omega0: Option<f64>,
    #[serde(default)]
    pub multipoles: Vec<MultipoleSpec>,
}

/// A parsed model file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelInput {
    pub continuum: Option<ModelFile>,
    pub two_level: Option<TwoLevelSpec>,
    pub rabi_probe: Option<RabiProbeSpec>,
    pub laser: Option<LaserSpec>,
}

#[derive(Deserialize)]
struct Extensions {
    #[serde(default)]
    two_level: Option<TwoLevelSpec>,
    #[serde(default)]
    rabi_probe: Option<RabiProbeSpec>,
    #[serde(default)]
    laser: Option<LaserSpec>,
}

impl ModelInput {
    pub fn parse(text: &str) -> Result<(Self, Value)> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("model: {e}")))?;
        Ok((Self::from_value(&value)?, value))
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("model: expected a JSON object".into()))?;
        let ext: Extensions =
            serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("model: {e}")))?;
        let continuum = if obj.contains_key("family") {
            let m: ModelFile =
                serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("model: {e}")))?;
            m.spectral_density()?;
            Some(m)
        } else {
            None
        };
        let input = Self {
            continuum,
            two_level: ext.two_level,
            rabi_probe: ext.rabi_probe,
            laser: ext.laser,
        };
        let multipoles_only = input.laser.as_ref().is_some_and(|l| !l.multipoles.is_empty());
        if input.continuum.is_none() && input.two_level.is_none() && input.rabi_probe.is_none() && !multipoles_only {
            return Err(Error::Config(
                "model: needs a continuum (\"family\"), a \"two_level\"/\"rabi_probe\" block or laser multipoles"
                    .into(),
            ));
        }
        Ok(input)
    }

    fn density(&self) -> Result<(SpectralDensity, f64)> {
        let m = self
            .continuum
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a continuum model (\"family\")".into()))?;
        Ok((m.spectral_density()?, m.omega_in))
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Numbers as `{:.16e}` (17 significant digits), LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Num(v) => write!(out, "{v:.16e}").expect("write to String"),
                    Cell::Text(s) => out.push_str(&escape(s)),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Numeric column by header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Num(v) => Some(*v),
                Cell::Text(_) => None,
            })
            .collect()
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: Table,
    /// Extra JSON document (transition summary), if any.
    pub report: Option<Value>,
    pub config: RunConfig,
}

/// Resolves the model, evaluates the command and returns the table without
/// touching the filesystem (beyond reading the model).
pub fn evaluate(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut config = config.clone();
    let value = match &config.model {
        Some(v) => v.clone(),
        None => {
            let text = std::fs::read_to_string(&config.model_path)
                .map_err(|e| Error::Config(format!("{}: {e}", config.model_path.display())))?;
            ModelInput::parse(&text)?.1
        }
    };
    let input = ModelInput::from_value(&value)?;
    config.model = Some(value);
    let body = || -> Result<(Table, Option<Value>)> {
        match config.command {
            CommandKind::Survival => survival(&input, &config).map(|t| (t, None)),
            CommandKind::Rates => rates(&input, &config).map(|t| (t, None)),
            CommandKind::Transition => transition(&input, &config),
            CommandKind::Laser => laser(&input, &config).map(|t| (t, None)),
            CommandKind::Oracle => oracle(&input, &config).map(|t| (t, None)),
            CommandKind::Sweep => sweep(&input, &config).map(|t| (t, None)),
        }
    };
    let (table, report) = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(body)?,
        None => body()?,
    };
    Ok(RunOutput { table, report, config })
}

/// Evaluates and writes the CSV, the sidecar and the report (if any).
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let out = evaluate(config)?;
    let cfg = &out.config;
    std::fs::write(&cfg.output_path, out.table.to_csv())?;
    let sidecar = serde_json::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(cfg.sidecar_path(), sidecar + "\n")?;
    if let Some(report) = &out.report {
        let text = serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(cfg.report_path(), text + "\n")?;
    }
    Ok(out)
}

fn time_grid(config: &RunConfig, t_max: f64, max_step: f64) -> Result<TimeGrid> {
    match config.steps {
        Some(n) => TimeGrid::new(t_max, n),
        None => TimeGrid::covering(t_max, max_step),
    }
}

/// `(scale, rate)` used for default time ranges: the cutoff (or `γ` for a
/// flat continuum) and the golden-rule rate (zero if there is no decay).
fn scales(sd: &SpectralDensity, omega_in: f64) -> (f64, f64) {
    let gamma = golden_rule_rate(sd, omega_in).unwrap_or(0.0);
    let scale = if sd.family() == Family::Flat {
        gamma
    } else {
        sd.cutoff()
    };
    (scale, gamma)
}

fn survival(input: &ModelInput, config: &RunConfig) -> Result<Table> {
    if let Some(tl) = &input.two_level {
        let models = tl
            .absorption_v
            .iter()
            .map(|&v| AbsorptiveTwoLevel::new(tl.rabi_omega, v))
            .collect::<Result<Vec<_>>>()?;
        let grid = TimeGrid::new(
            config.t_max.unwrap_or(10.0 / tl.rabi_omega),
            config.steps.unwrap_or(1000),
        )?;
        return Ok(closed_form_table(&grid, models.len(), |i, t| {
            models[i].amplitude(t).norm_sqr()
        }));
    }
    if let Some(rp) = &input.rabi_probe {
        let models = rp
            .probe_k
            .iter()
            .map(|&k| RabiProbeThreeLevel::new(rp.rabi_omega, k))
            .collect::<Result<Vec<_>>>()?;
        let grid = TimeGrid::new(
            config.t_max.unwrap_or(10.0 / rp.rabi_omega),
            config.steps.unwrap_or(1000),
        )?;
        return Ok(closed_form_table(&grid, models.len(), |i, t| {
            models[i].amplitude(t).norm_sqr()
        }));
    }
    let (sd, omega_in) = input.density()?;
    let spec = KernelSpec::continuum(sd.clone(), omega_in, MeasurementMode::Plain)?;
    let (scale, gamma) = scales(&sd, omega_in);
    if !(scale > 0.0) && config.t_max.is_none() {
        return Err(Error::Config("flat continuum without decay: give --t-max".into()));
    }
    let t_max = config.t_max.unwrap_or_else(|| {
        if gamma > 0.0 {
            default_t_max(scale, gamma)
        } else {
            20.0 / scale
        }
    });
    let max_step = if gamma > 0.0 {
        spec.max_step().min(0.01 / gamma)
    } else {
        spec.max_step()
    };
    let grid = time_grid(config, t_max, max_step.min(t_max / 2.0))?;
    let trace = solve_memory_kernel(&spec, &grid)?.trace;
    let mut table = Table::new(["t", "re_a", "im_a", "p"]);
    for ((t, a), p) in trace.times.iter().zip(&trace.amplitudes).zip(&trace.probabilities) {
        table.push(vec![(*t).into(), a.re.into(), a.im.into(), (*p).into()]);
    }
    Ok(table)
}

fn closed_form_table(grid: &TimeGrid, columns: usize, p: impl Fn(usize, f64) -> f64) -> Table {
    let mut table = Table::new(std::iter::once("t".to_string()).chain((0..columns).map(|i| format!("p_{i}"))));
    for t in grid.times() {
        let mut row = vec![Cell::Num(t)];
        row.extend((0..columns).map(|i| Cell::Num(p(i, t))));
        table.push(row);
    }
    table
}

fn param_grid(config: &RunConfig, lo: f64, hi: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    let log = log || config.log_scale;
    parameter_grid(
        config.param_min.unwrap_or(lo),
        config.param_max.unwrap_or(hi),
        config.points.unwrap_or(points),
        log,
    )
}

fn rates(input: &ModelInput, config: &RunConfig) -> Result<Table> {
    let (sd, omega_in) = input.density()?;
    let mode = config.rate_mode.unwrap_or(RateMode::Pulsed);
    let gamma = golden_rule_rate(&sd, omega_in)?;
    let (scale, _) = scales(&sd, omega_in);
    let integ = Integrator::with_rel_tol(config.quadrature_rtol);
    let (name, grid) = match mode {
        RateMode::Pulsed => ("tau", param_grid(config, 1e-3 / scale, 1e3 / scale, 200, true)?),
        RateMode::Continuous => ("gamma_meas", param_grid(config, 1e-2 * scale, 1e3 * scale, 200, true)?),
        RateMode::Rabi => ("rabi_k", param_grid(config, 0.0, 5.0 * scale, 201, false)?),
        RateMode::Laser => ("laser_b", param_grid(config, 0.0, 0.9 * omega_in, 91, false)?),
    };
    let big_omega0 = input.laser.as_ref().and_then(|l| l.big_omega0).unwrap_or(omega_in);
    let values = grid
        .par_iter()
        .map(|&p| match mode {
            RateMode::Pulsed => pulsed_rate_integral_with(&sd, omega_in, p, &integ),
            RateMode::Continuous => continuous_rate_integral_with(&sd, omega_in, p, &integ),
            RateMode::Rabi => Ok(rabi_rate(&sd, omega_in, p)),
            RateMode::Laser => {
                let m = LaserAtomModel::new(omega_in, big_omega0, sd.clone(), p)?;
                Ok(pole_and_rate(&m)?.gamma_eff)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut table = Table::new([name, "gamma_eff", "ratio"]);
    for (p, r) in grid.iter().zip(values) {
        table.push(vec![(*p).into(), r.into(), (r / gamma).into()]);
    }
    Ok(table)
}

fn transition(input: &ModelInput, config: &RunConfig) -> Result<(Table, Option<Value>)> {
    let (sd, omega_in) = input.density()?;
    let options = TransitionOptions {
        t_max: config.t_max,
        residual_max: config.fit_residual_max,
        scan_points: config.points.unwrap_or(400),
        ..TransitionOptions::default()
    };
    let mut table = Table::new(["tau", "gamma_eff", "ratio", "regime"]);
    let report = match analyze_transition(&sd, omega_in, &options)? {
        TransitionOutcome::Found { report, fit, trace } => {
            for (tau, regime) in &report.regime_samples {
                let g = trace.effective_rate(*tau)?;
                table.push(vec![
                    (*tau).into(),
                    g.into(),
                    (g / fit.gamma).into(),
                    regime.name().into(),
                ]);
            }
            let defect = match report.tau_star {
                Some(t) => Some(crossing_defect(&trace, fit.gamma, t)?),
                None => None,
            };
            serde_json::json!({
                "status": "found",
                "natural_rate": fit.gamma,
                "z_factor": fit.z_factor,
                "fit_window": [fit.fit_window.0, fit.fit_window.1],
                "fit_residual": fit.residual,
                "tau_star": report.tau_star,
                "all_crossings": report.all_crossings,
                "crossing_defect": defect,
            })
        }
        TransitionOutcome::NotApplicable { reason } => serde_json::json!({
            "status": "not_applicable",
            "reason": reason,
        }),
    };
    Ok((table, Some(report)))
}

fn laser(input: &ModelInput, config: &RunConfig) -> Result<Table> {
    let spec = input
        .laser
        .as_ref()
        .ok_or_else(|| Error::Config("laser needs a \"laser\" block in the model".into()))?;
    if !spec.multipoles.is_empty() {
        let grid = param_grid(config, 0.0, 0.9, 91, false)?;
        let curves = spec
            .multipoles
            .iter()
            .map(|m| small_b_law(m.j, m.kind, &grid))
            .collect::<Result<Vec<_>>>()?;
        let mut table = Table::new(
            std::iter::once("b_over_omega0".to_string()).chain((0..curves.len()).map(|i| format!("ratio_{i}"))),
        );
        for (i, b) in grid.iter().enumerate() {
            let mut row = vec![Cell::Num(*b)];
            row.extend(curves.iter().map(|c| Cell::Num(c.rates[i])));
            table.push(row);
        }
        return Ok(table);
    }
    let (sd, omega0) = input.density()?;
    let m = LaserAtomModel::new(omega0, spec.big_omega0.unwrap_or(omega0), sd, 0.0)?;
    let grid = param_grid(config, 0.0, 0.9 * omega0, 91, false)?;
    let poles = grid
        .par_iter()
        .map(|&b| pole_and_rate(&m.with_b(b)?))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(["b", "e_pole_re", "e_pole_im", "delta", "gamma_eff", "z_factor"]);
    for (b, p) in grid.iter().zip(poles) {
        table.push(vec![
            (*b).into(),
            p.e_pole.re.into(),
            p.e_pole.im.into(),
            p.delta.into(),
            p.gamma_eff.into(),
            p.z_factor.into(),
        ]);
    }
    Ok(table)
}

fn oracle(input: &ModelInput, config: &RunConfig) -> Result<Table> {
    match config.check.unwrap_or(OracleCheck::Dense) {
        OracleCheck::Dense => {
            let (sd, omega_in) = input.density()?;
            let (scale, gamma) = scales(&sd, omega_in);
            let omega_max = config.param_max.unwrap_or(sd.threshold() + 20.0 * scale);
            let ds = discretize(&sd, omega_in, config.modes.unwrap_or(200), omega_max)?;
            let h = ds.hamiltonian(omega_in);
            let spec = KernelSpec::discrete(ds, MeasurementMode::Plain)?;
            let t_max = config
                .t_max
                .unwrap_or(if gamma > 0.0 { 5.0 / gamma } else { 20.0 / scale });
            let grid = time_grid(config, t_max, spec.max_step())?;
            let v = solve_memory_kernel(&spec, &grid)?.trace;
            let d = dense_evolve(&h, 0, &grid)?;
            let mut table = Table::new(["t", "p_volterra", "p_dense", "amplitude_diff"]);
            for i in 0..v.len() {
                table.push(vec![
                    v.times[i].into(),
                    v.probabilities[i].into(),
                    d.probabilities[i].into(),
                    (v.amplitudes[i] - d.amplitudes[i]).norm().into(),
                ]);
            }
            Ok(table)
        }
        OracleCheck::Theorem => {
            let models = random_exp_models(config.seed, config.points.unwrap_or(50));
            let options = TransitionOptions {
                residual_max: config.fit_residual_max,
                ..TransitionOptions::default()
            };
            let rows = models
                .par_iter()
                .map(|(sd, omega_in)| theorem_row(sd, *omega_in, &options))
                .collect::<Vec<_>>();
            let mut table = Table::new([
                "index",
                "coupling",
                "exponent_n",
                "omega_in",
                "natural_rate",
                "z_factor",
                "tau_star",
                "crossing_defect",
                "status",
            ]);
            let mut violations = 0;
            for (i, ((sd, omega_in), row)) in models.iter().zip(rows).enumerate() {
                if row.3 == "violation" {
                    violations += 1;
                }
                table.push(vec![
                    (i as f64).into(),
                    sd.coupling().into(),
                    sd.exponent_n().into(),
                    (*omega_in).into(),
                    row.0.into(),
                    row.1.into(),
                    row.2 .0.into(),
                    row.2 .1.into(),
                    row.3.into(),
                ]);
            }
            if violations > 0 {
                return Err(Error::MissingCrossing { z_factor: f64::NAN });
            }
            Ok(table)
        }
    }
}

/// `(γ, Z, (τ*, defect), status)` for one random model.
fn theorem_row(sd: &SpectralDensity, omega_in: f64, options: &TransitionOptions) -> (f64, f64, (f64, f64), String) {
    let nan = f64::NAN;
    match analyze_transition(sd, omega_in, options) {
        Ok(TransitionOutcome::Found { report, fit, trace }) => {
            let (status, tau, defect) = match report.tau_star {
                Some(t) => ("crossing", t, crossing_defect(&trace, fit.gamma, t).unwrap_or(nan)),
                None => ("no_crossing", nan, nan),
            };
            (fit.gamma, fit.z_factor, (tau, defect), status.to_string())
        }
        Ok(TransitionOutcome::NotApplicable { .. }) => (nan, nan, (nan, nan), "not_applicable".into()),
        Err(Error::MissingCrossing { z_factor }) => (nan, z_factor, (nan, nan), "violation".into()),
        Err(e) => (nan, nan, (nan, nan), format!("error: {e}")),
    }
}

fn sweep(input: &ModelInput, config: &RunConfig) -> Result<Table> {
    let axis = config.axis.ok_or_else(|| Error::Config("sweep needs --axis".into()))?;
    let scalar = config
        .scalar
        .ok_or_else(|| Error::Config("sweep needs --scalar".into()))?;
    let base = input
        .continuum
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a continuum model (\"family\")".into()))?;
    let (lo, hi) = match (config.param_min, config.param_max, config.points) {
        (Some(lo), _, Some(1)) => (lo, lo),
        (Some(lo), Some(hi), _) => (lo, hi),
        _ => return Err(Error::Config("sweep needs --param-min and --param-max".into())),
    };
    let points = config.points.unwrap_or(50);
    if points > MAX_SWEEP_POINTS {
        return Err(Error::Config(format!(
            "sweep has {points} points, at most {MAX_SWEEP_POINTS} allowed"
        )));
    }
    let grid = parameter_grid(lo, hi, points, config.log_scale)?;
    let options = TransitionOptions {
        t_max: config.t_max,
        residual_max: config.fit_residual_max,
        ..TransitionOptions::default()
    };
    let values = grid
        .par_iter()
        .map(|&v| {
            let mut m = base.clone();
            axis.apply(&mut m, v);
            sweep_point(&m, scalar, &options)
        })
        .collect::<Vec<_>>();
    let mut table = Table::new([axis.name(), scalar.name(), "warning"]);
    for (v, r) in grid.iter().zip(values) {
        let (x, w) = match r {
            Ok(x) => (x, String::new()),
            Err(e) => (f64::NAN, format!("{}: {e}", e.module())),
        };
        table.push(vec![(*v).into(), x.into(), w.into()]);
    }
    Ok(table)
}

fn sweep_point(m: &ModelFile, scalar: SweepScalar, options: &TransitionOptions) -> Result<f64> {
    let sd = m.spectral_density()?;
    match scalar {
        SweepScalar::NaturalRate => golden_rule_rate(&sd, m.omega_in),
        SweepScalar::ZenoTime => zeno_time(&sd),
        SweepScalar::ZFactor => crate::zeno::z_factor(&sd, m.omega_in),
        SweepScalar::TauStar => match analyze_transition(&sd, m.omega_in, options)? {
            TransitionOutcome::Found { report, .. } => report
                .tau_star
                .ok_or_else(|| Error::Config("no crossing in the scan range".into())),
            TransitionOutcome::NotApplicable { reason } => Err(Error::Config(reason)),
        },
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zeno",
    version,
    about = "Survival, decay rates and Zeno/inverse-Zeno transitions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Survival probability P(t).
    Survival(CommonArgs),
    /// Effective decay rate against the measurement parameter.
    Rates {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "pulsed")]
        mode: RateMode,
    },
    /// Transition time τ* and the Z factor.
    Transition(CommonArgs),
    /// Laser-driven decay rate against the field strength.
    Laser(CommonArgs),
    /// Self-checks against exact evolution or over random models.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "dense")]
        check: OracleCheck,
        /// Bath modes for the dense check.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// One scalar over one model parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_enum)]
        scalar: SweepScalar,
    },
    /// Re-run a sidecar.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// Write here instead of the recorded output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub param_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub param_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub log: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub fit_residual_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CommonArgs {
    fn config(&self, command: CommandKind) -> RunConfig {
        RunConfig {
            t_max: self.t_max,
            steps: self.steps,
            param_min: self.param_min,
            param_max: self.param_max,
            points: self.points,
            log_scale: self.log,
            quadrature_rtol: self.rtol,
            fit_residual_max: self.fit_residual_max,
            seed: self.seed,
            jobs: self.jobs,
            ..RunConfig::new(command, &self.model, &self.out)
        }
    }
}

impl CliCommand {
    pub fn into_config(self) -> Result<RunConfig> {
        Ok(match self {
            CliCommand::Survival(c) => c.config(CommandKind::Survival),
            CliCommand::Rates { common, mode } => RunConfig {
                rate_mode: Some(mode),
                ..common.config(CommandKind::Rates)
            },
            CliCommand::Transition(c) => c.config(CommandKind::Transition),
            CliCommand::Laser(c) => c.config(CommandKind::Laser),
            CliCommand::Oracle { common, check, modes } => RunConfig {
                check: Some(check),
                modes,
                ..common.config(CommandKind::Oracle)
            },
            CliCommand::Sweep { common, axis, scalar } => RunConfig {
                axis: Some(axis),
                scalar: Some(scalar),
                ..common.config(CommandKind::Sweep)
            },
            CliCommand::Replay { config, out } => {
                let mut c = RunConfig::from_sidecar(&config)?;
                if let Some(out) = out {
                    c.output_path = out;
                }
                c
            }
        })
    }
}

/// Parses arguments, runs, reports errors on stderr and returns the exit
/// code: 0 on success, 1 for bad input, 2 for numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command.into_config().and_then(|c| run(&c)) {
        Ok(out) => {
            eprintln!(
                "wrote {} ({} rows)",
                out.config.output_path.display(),
                out.table.rows.len()
            );
            0
        }
        Err(e) => {
            eprintln!("zeno: error in {}: {e}", e.module());
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(["x", "note"]);
        t.push(vec![0.1.into(), "a,b".into()]);
        t.push(vec![f64::NAN.into(), "".into()]);
        assert_eq!(t.to_csv(), "x,note\n1.0000000000000001e-1,\"a,b\"\nNaN,\n");
        assert_eq!(t.column("x").unwrap().len(), 2);
    }

    #[test]
    fn empty_model_is_a_config_error() {
        assert!(matches!(ModelInput::parse(""), Err(Error::Config(_))));
        assert!(matches!(ModelInput::parse("{}"), Err(Error::Config(_))));
        assert!(matches!(ModelInput::parse("[1]"), Err(Error::Config(_))));
    }

    #[test]
    fn extensions_parse_next_to_a_continuum() {
        let text = r#"{"family":"multipole-exp","coupling":0.1,"threshold":0,"cutoff":1,
            "exponent_n":2,"uv_exponent_beta":null,"omega_in":0.5,
            "laser":{"big_omega0":3,"multipoles":[{"j":2,"kind":"electric"}]}}"#;
        let (m, _) = ModelInput::parse(text).unwrap();
        assert!(m.continuum.is_some());
        assert_eq!(m.laser.unwrap().multipoles[0].j, 2);
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(CommandKind::Survival, "m.json", "o.csv");
        assert!(c.validate().is_ok());
        c.steps = Some(1);
        assert!(c.validate().is_err());
        c.steps = None;
        c.t_max = Some(-1.0);
        assert!(c.validate().is_err());
        c.t_max = None;
        c.output_path = "o.json".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn sidecar_round_trips() {
        let mut c = RunConfig::new(CommandKind::Rates, "m.json", "o.csv");
        c.rate_mode = Some(RateMode::Rabi);
        c.model = Some(serde_json::json!({"a": 1}));
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
