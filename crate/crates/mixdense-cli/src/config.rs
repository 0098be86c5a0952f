//! Run and suite configuration, parsed from TOML files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mixdense::analysis::{GridBox, QuadratureGrid};
use mixdense::classes;
use mixdense::mixture::Density;

use crate::runner::CliError;

/// Pipeline selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Sup-norm approximation over the whole grid box.
    Uniform,
    /// Sup-norm approximation over a compact box.
    Compact,
    /// Greedy `L_p` fitting over a dilate dictionary.
    Lp,
    /// `L₁` approximation with a tail-certified kernel.
    L1,
    /// Counterexample arithmetic and class-membership evidence.
    Classes,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Uniform => "uniform",
            Mode::Compact => "compact",
            Mode::Lp => "lp",
            Mode::L1 => "l1",
            Mode::Classes => "classes",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<QuadratureGrid, CliError> {
        let bounds = GridBox::new(self.lower.clone(), self.upper.clone())
            .map_err(|e| CliError::Usage(format!("grid: {e}")))?;
        QuadratureGrid::new(bounds, self.points_per_axis)
            .map_err(|e| CliError::Usage(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSpec {
    pub fn build(&self) -> Result<GridBox, CliError> {
        GridBox::new(self.lower.clone(), self.upper.clone())
            .map_err(|e| CliError::Usage(format!("box: {e}")))
    }
}

/// Dictionary parameters for `lp` mode: one shared dilation level and an
/// inclusive candidate-location grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictSpecConfig {
    pub k: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub count: usize,
}

/// One experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default)]
    pub m_schedule: Vec<usize>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub k_box: Option<BoxSpec>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub dict: Option<DictSpecConfig>,
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        config.anchor_output(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    /// Resolves a relative output path against the config's directory.
    pub fn anchor_output(&mut self, dir: &Path) {
        if self.output.is_relative() {
            self.output = dir.join(&self.output);
        }
    }

    pub fn resolve_target(&self) -> Result<Density, CliError> {
        resolve_density(self.target.as_deref(), "target")
    }

    pub fn resolve_kernel(&self) -> Result<Density, CliError> {
        resolve_density(self.kernel.as_deref(), "kernel")
    }

    /// Checks mode-required fields; violations are usage errors (exit 2).
    pub fn validate(&self) -> Result<(), CliError> {
        let need_schedule = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{} mode requires {what}", self.mode.as_str())))
            }
        };
        match self.mode {
            Mode::Uniform => {
                self.resolve_target()?;
                self.resolve_kernel()?;
                need_schedule(!self.epsilon_schedule.is_empty(), "a non-empty epsilon_schedule")?;
            }
            Mode::Compact => {
                self.resolve_target()?;
                self.resolve_kernel()?;
                need_schedule(!self.epsilon_schedule.is_empty(), "a non-empty epsilon_schedule")?;
                if self.k_box.is_none() {
                    return Err(CliError::Usage("compact mode requires k_box".into()));
                }
            }
            Mode::Lp => {
                self.resolve_target()?;
                self.resolve_kernel()?;
                if self.p.is_none() {
                    return Err(CliError::Usage("lp mode requires p".into()));
                }
                let have_m = !self.m_schedule.is_empty();
                let have_eps = !self.epsilon_schedule.is_empty();
                need_schedule(
                    have_m != have_eps,
                    "exactly one of m_schedule and epsilon_schedule",
                )?;
                if have_m && self.dict.is_none() {
                    return Err(CliError::Usage(
                        "lp mode with m_schedule requires dict (fixed dilation and candidate grid)".into(),
                    ));
                }
                if self.dict.is_none() {
                    return Err(CliError::Usage("lp mode requires dict".into()));
                }
            }
            Mode::L1 => {
                let kernel = self.resolve_kernel()?;
                self.resolve_target()?;
                need_schedule(!self.epsilon_schedule.is_empty(), "a non-empty epsilon_schedule")?;
                if kernel.v_params().is_none() {
                    return Err(CliError::Usage(
                        "l1 mode requires a kernel with a tail certificate (v_params)".into(),
                    ));
                }
                if let Some(g) = self.gamma {
                    if !(g > 0.0 && g < 1.0) {
                        return Err(CliError::Usage(format!("gamma must lie in (0, 1), got {g}")));
                    }
                }
            }
            Mode::Classes => {}
        }
        if !matches!(self.mode, Mode::Classes) {
            self.grid.build()?;
        }
        Ok(())
    }

    /// Effective gamma for `l1` mode.
    pub fn gamma_or_default(&self) -> f64 {
        self.gamma.unwrap_or(0.5)
    }
}

fn resolve_density(name: Option<&str>, role: &str) -> Result<Density, CliError> {
    let name = name.ok_or_else(|| CliError::Usage(format!("missing {role} name")))?;
    classes::lookup(name)
        .ok_or_else(|| CliError::Usage(format!("unknown {role} {name:?}; see `mixdense catalog`")))
}

/// A named run inside a suite file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedRun {
    pub name: String,
    #[serde(flatten)]
    pub config: RunConfig,
}

/// A suite: a list of named runs executed in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    #[serde(default)]
    pub run: Vec<NamedRun>,
}

impl SuiteConfig {
    pub fn from_file(path: &Path) -> Result<SuiteConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut suite: SuiteConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if suite.run.is_empty() {
            return Err(CliError::Usage(format!("{}: suite lists no runs", path.display())));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        for named in &mut suite.run {
            named.config.anchor_output(dir);
            named.config.validate().map_err(|e| {
                let CliError::Usage(msg) = e;
                CliError::Usage(format!("run {:?}: {msg}", named.name))
            })?;
        }
        Ok(suite)
    }
}
