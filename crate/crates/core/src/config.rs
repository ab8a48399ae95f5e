//! JSON experiment configuration and its validation.
//!
//! The published schema lives in `config.schema.json` at the crate root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extensions::BirthKernel;
use crate::grid::{Density, Grid};
use crate::model::{RateModel, RateTable, Threshold};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Constant,
    Step,
    TanhPhi,
    Tabulated,
}

/// Flat model description; which fields are required depends on `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<ThresholdSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_bar: Option<f64>,
    /// Asserts that the rate is non-increasing in the activity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inhibitory: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_point: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSpec {
    Constant(f64),
    Affine { offset: f64, slope: f64 },
    Table { activity: Vec<f64>, sigma: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    Csv { csv: PathBuf },
    Inline { ages: Vec<f64>, activities: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dx: f64,
    /// Omitted means automatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { dx: 0.01, x_max: None }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `n_bar` at `activity`, or at the fixed point when omitted.
    #[default]
    Stationary,
    StationaryAt { activity: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Autonomous,
    Linear,
    Delayed,
    Distr,
    System,
    Oracle,
    Map,
    Steady,
    Contract,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Autonomous => "autonomous",
            Mode::Linear => "linear",
            Mode::Delayed => "delayed",
            Mode::Distr => "distr",
            Mode::System => "system",
            Mode::Oracle => "oracle",
            Mode::Map => "map",
            Mode::Steady => "steady",
            Mode::Contract => "contract",
        }
    }
}

/// An activity given by value or by a named point of the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActivitySpec {
    Value(f64),
    Named(NamedActivity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedActivity {
    IBar,
    IMinus,
    IPlus,
}

/// `J(t) = base + amplitude e^{-rate t}`, base defaulting to the fixed point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Delta0,
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, rate: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_ini: Option<ActivitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    /// Second initial datum for `contract` and `system`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_b: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_points: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::config(field, reason)
}

fn prefixed(prefix: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { name, reason } => bad(&format!("{prefix}.{name}"), reason),
        other => other,
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

fn require<T: Copy>(field: &str, v: Option<T>, kind: &str) -> Result<T> {
    v.ok_or_else(|| bad(field, format!("required for {kind}")))
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| bad("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("<document>", format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(TableSpec::Csv { csv }) = &mut self.model.table {
            fix(csv);
        }
        for init in [Some(&mut self.initial), self.run.initial_b.as_mut()].into_iter().flatten() {
            if let InitialSpec::Csv { path } = init {
                fix(path);
            }
        }
        if let Some(KernelSpec::Csv { path }) = &mut self.run.kernel {
            fix(path);
        }
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Cross-field checks that do not need numerics.
    pub fn validate(&self) -> Result<()> {
        self.validate_model()?;
        positive("grid.dx", self.grid.dx)?;
        if let Some(x) = self.grid.x_max {
            positive("grid.x_max", x)?;
        }
        validate_initial("initial", &self.initial)?;
        let run = &self.run;
        if let Some(t) = run.t_end {
            positive("run.t_end", t)?;
        }
        if run.stride == 0 {
            return Err(bad("run.stride", "must be at least 1"));
        }
        if let Some(b) = &run.initial_b {
            validate_initial("run.initial_b", b)?;
        }
        if let Some(ActivitySpec::Value(v)) = run.i_ini {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad("run.i_ini", format!("must be non-negative, got {v}")));
            }
        }
        match run.mode {
            Mode::Delayed => {
                let d = require("run.delay", run.delay, "mode delayed")?;
                positive("run.delay", d)?;
                if run.intervals == Some(0) {
                    return Err(bad("run.intervals", "must be at least 1"));
                }
            }
            Mode::Linear => {
                let input = run.input.as_ref().ok_or_else(|| bad("run.input", "required for mode linear"))?;
                if let Some(b) = input.base {
                    if !(b >= 0.0 && b.is_finite()) {
                        return Err(bad("run.input.base", format!("must be non-negative, got {b}")));
                    }
                }
                if !input.amplitude.is_finite() {
                    return Err(bad("run.input.amplitude", "must be finite"));
                }
                if !(input.rate >= 0.0 && input.rate.is_finite()) {
                    return Err(bad("run.input.rate", "must be non-negative"));
                }
            }
            Mode::Oracle => {
                if run.particles == Some(0) {
                    return Err(bad("run.particles", "must be at least 1"));
                }
                if let Some(dt) = run.mc_dt {
                    positive("run.mc_dt", dt)?;
                }
                if let Some(b) = run.burn_in {
                    if !(b >= 0.0 && b.is_finite()) {
                        return Err(bad("run.burn_in", "must be non-negative"));
                    }
                }
            }
            Mode::Contract if run.initial_b.is_none() => {
                return Err(bad("run.initial_b", "required for mode contract"));
            }
            Mode::Map => {
                if matches!(run.map_points, Some(p) if p < 2) {
                    return Err(bad("run.map_points", "must be at least 2"));
                }
            }
            _ => {}
        }
        if let Some(k) = &run.kernel {
            match k {
                KernelSpec::Uniform { lo, hi } if !(*lo >= 0.0 && hi > lo && hi.is_finite()) => {
                    return Err(bad("run.kernel", "uniform needs 0 <= lo < hi"));
                }
                KernelSpec::Gamma { shape, rate } => {
                    positive("run.kernel.shape", *shape)?;
                    positive("run.kernel.rate", *rate)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<()> {
        let m = &self.model;
        let kind = match m.kind {
            ModelKind::Constant => "kind constant",
            ModelKind::Step => "kind step",
            ModelKind::TanhPhi => "kind tanh_phi",
            ModelKind::Tabulated => "kind tabulated",
        };
        let allowed: &[&str] = match m.kind {
            ModelKind::Constant => &["level"],
            ModelKind::Step => &["r0", "sigma"],
            ModelKind::TanhPhi => &["r0", "gamma"],
            ModelKind::Tabulated => &["table"],
        };
        let present = [
            ("level", m.level.is_some()),
            ("r0", m.r0.is_some()),
            ("sigma", m.sigma.is_some()),
            ("gamma", m.gamma.is_some()),
            ("table", m.table.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(bad(&format!("model.{name}"), format!("not used by {kind}")));
            }
            if !set && allowed.contains(&name) {
                return Err(bad(&format!("model.{name}"), format!("required for {kind}")));
            }
        }
        if self.run.mode != Mode::Linear && self.run.mode != Mode::Delayed && m.inhibitory == Some(false) {
            return Err(bad(
                "model.inhibitory",
                format!("mode {} requires an inhibitory model", self.run.mode.name()),
            ));
        }
        Ok(())
    }
}

fn validate_initial(field: &str, spec: &InitialSpec) -> Result<()> {
    match spec {
        InitialSpec::Exponential { rate } => positive(&format!("{field}.rate"), *rate),
        InitialSpec::Gamma { shape, rate } => {
            positive(&format!("{field}.shape"), *shape)?;
            positive(&format!("{field}.rate"), *rate)
        }
        InitialSpec::Uniform { lo, hi } if !(*lo >= 0.0 && hi > lo && hi.is_finite()) => {
            Err(bad(field, "uniform needs 0 <= lo < hi"))
        }
        InitialSpec::StationaryAt { activity } if !(*activity >= 0.0 && activity.is_finite()) => {
            Err(bad(&format!("{field}.activity"), "must be non-negative"))
        }
        _ => Ok(()),
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<RateModel> {
        let p = |e| prefixed("model", e);
        let model = match self.kind {
            ModelKind::Constant => RateModel::constant(require("model.level", self.level, "kind constant")?).map_err(p)?,
            ModelKind::Step => {
                let r0 = require("model.r0", self.r0, "kind step")?;
                let sigma = match self.sigma.clone().ok_or_else(|| bad("model.sigma", "required for kind step"))? {
                    ThresholdSpec::Constant(s) => Threshold::Constant(s),
                    ThresholdSpec::Affine { offset, slope } => Threshold::Affine { offset, slope },
                    ThresholdSpec::Table { activity, sigma } => Threshold::Table { activity, sigma },
                };
                RateModel::step(r0, sigma).map_err(p)?
            }
            ModelKind::TanhPhi => RateModel::tanh_phi(
                require("model.r0", self.r0, "kind tanh_phi")?,
                require("model.gamma", self.gamma, "kind tanh_phi")?,
            )
            .map_err(p)?,
            ModelKind::Tabulated => {
                let table = match self.table.as_ref().ok_or_else(|| bad("model.table", "required for kind tabulated"))? {
                    TableSpec::Csv { csv } => RateTable::from_csv(csv),
                    TableSpec::Inline { ages, activities, values } => {
                        RateTable::new(ages.clone(), activities.clone(), values.clone())
                    }
                };
                RateModel::tabulated(table.map_err(|e| prefixed("model.table", e))?).map_err(p)?
            }
        };
        let model = match self.gamma_bar {
            Some(g) => model.with_gamma_bar(g).map_err(p)?,
            None => model,
        };
        let model = match self.strict_point {
            Some(x) => {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(bad("model.strict_point", "must be non-negative"));
                }
                model.with_strict_point(x)
            }
            None => model,
        };
        if self.inhibitory == Some(true) && !model.is_inhibitory() {
            return Err(bad("model.inhibitory", "asserted, but the rate increases with the activity"));
        }
        Ok(model)
    }
}

impl GridSpec {
    pub fn build(&self, model: &RateModel) -> Result<Grid> {
        let g = match self.x_max {
            Some(x) => Grid::with_x_max(self.dx, x),
            None => Grid::auto(model, self.dx),
        };
        g.map_err(|e| prefixed("grid", e))
    }
}

fn gamma_pdf(shape: f64, rate: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        if x <= 0.0 {
            return if shape == 1.0 && x == 0.0 { rate } else { 0.0 };
        }
        ((shape - 1.0) * (rate * x).ln() - rate * x).exp()
    }
}

impl InitialSpec {
    /// `stationary` resolves through `stationary`, the density at the fixed point.
    pub fn build(&self, grid: Grid, stationary: impl FnOnce() -> Result<Density>) -> Result<Density> {
        let d = match self {
            InitialSpec::Stationary => return stationary(),
            InitialSpec::StationaryAt { .. } => return stationary(),
            InitialSpec::Exponential { rate } => {
                let r = *rate;
                Density::from_fn(grid, move |x| (-r * x).exp())
            }
            InitialSpec::Gamma { shape, rate } => Density::from_fn(grid, gamma_pdf(*shape, *rate)),
            InitialSpec::Uniform { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                Density::from_fn(grid, move |x| if x >= lo && x < hi { 1.0 } else { 0.0 })
            }
            InitialSpec::Csv { path } => crate::io::read_density(path, grid),
        };
        d.map_err(|e| prefixed("initial", e))
    }
}

impl KernelSpec {
    pub fn build(&self, grid: Grid) -> Result<BirthKernel> {
        let k = match self {
            KernelSpec::Delta0 => Ok(BirthKernel::delta0(grid)),
            KernelSpec::Uniform { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                BirthKernel::from_fn(grid, move |x| if x >= lo && x < hi { 1.0 } else { 0.0 })
            }
            KernelSpec::Gamma { shape, rate } => BirthKernel::from_fn(grid, gamma_pdf(*shape, *rate)),
            KernelSpec::Csv { path } => BirthKernel::from_csv(path, grid),
        };
        k.map_err(|e| prefixed("run.kernel", e))
    }
}
