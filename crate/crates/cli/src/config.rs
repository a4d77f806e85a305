//! Experiment configuration documents (TOML).
//!
//! ```toml
//! [model]            # exactly one of grid / mdp_file / random
//! grid = { preset = "default" }
//!
//! [objective]
//! kind = "last-state"   # or "initial-state"
//!
//! [solver]
//! delta = 0.3
//! horizon = 10
//! mode = "sampled"
//!
//! [baseline]
//! taus = [0.01, 0.02]
//!
//! [output]
//! prefix = "runs/grid"
//! ```

use std::path::{Path, PathBuf};

use opacity_core::grid::{build_gridworld, Cell, GridSpec, Sensor};
use opacity_core::mdp::{Horizon, Mdp};
use opacity_core::objective::{Objective, SecretSpec};
use opacity_core::solver::{EntropyMode, OpacityProblem, SolverConfig, ValueMode};
use opacity_core::{baseline::BaselineConfig, hmm::ObservationModel, random::random_instance, rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::mdp_doc::MdpDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSection>,
}

/// A grid layout: a preset plus optional overrides of any field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `"default"` (single start corner) or `"four-corners"`.
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<Vec<SensorSection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_cells: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_cells: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<InitialCell>>,
}

fn default_preset() -> String {
    "default".into()
}

/// A sensor covering the rectangle `x[0]..=x[1]` by `y[0]..=y[1]`, plus
/// any extra `cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub symbol: String,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCell {
    pub cell: [usize; 2],
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_symbols: usize,
    pub seed: u64,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

fn default_discount() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    LastState,
    InitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: ObjectiveKind,
    /// Secret state names; grids default to their secret cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub eta: f64,
    pub kappa: f64,
    pub delta: f64,
    pub horizon: usize,
    pub samples: usize,
    pub eval_samples: usize,
    pub iterations: usize,
    pub seed: u64,
    pub mode: Mode,
    pub value_mode: Mode,
    pub lambda0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    pub grad_tol: f64,
    pub slack_tol: f64,
    pub window: usize,
    pub enumeration_cap: u64,
    pub infinite_value: bool,
    pub ascent_guard: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            eta: d.eta,
            kappa: d.kappa,
            delta: d.delta,
            horizon: d.horizon,
            samples: d.samples,
            eval_samples: d.eval_samples,
            iterations: d.iterations,
            seed: d.seed,
            mode: Mode::Exact,
            value_mode: Mode::Exact,
            lambda0: d.lambda0,
            theta0: None,
            grad_tol: d.grad_tol,
            slack_tol: d.slack_tol,
            window: d.window,
            enumeration_cap: d.enumeration_cap,
            infinite_value: d.infinite_value,
            ascent_guard: d.ascent_guard,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        let mode = |m| match m {
            Mode::Exact => EntropyMode::Exact,
            Mode::Sampled => EntropyMode::Sampled,
        };
        SolverConfig {
            eta: self.eta,
            kappa: self.kappa,
            delta: self.delta,
            horizon: self.horizon,
            samples: self.samples,
            eval_samples: self.eval_samples,
            iterations: self.iterations,
            seed: self.seed,
            entropy_mode: mode(self.mode),
            value_mode: match self.value_mode {
                Mode::Exact => ValueMode::Exact,
                Mode::Sampled => ValueMode::Sampled,
            },
            lambda0: self.lambda0,
            theta0: self.theta0.clone(),
            grad_tol: self.grad_tol,
            slack_tol: self.slack_tol,
            window: self.window,
            enumeration_cap: self.enumeration_cap,
            infinite_value: self.infinite_value,
            ascent_guard: self.ascent_guard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub taus: Vec<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_baseline_iterations")]
    pub iterations: usize,
    /// Horizon of the regularized objective; infinite when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

fn default_step() -> f64 {
    1.0
}

fn default_baseline_iterations() -> usize {
    BaselineConfig::default().iterations
}

impl BaselineSection {
    pub fn to_config(&self, seed: u64) -> BaselineConfig {
        BaselineConfig {
            tau: 0.0,
            step: self.step,
            iterations: self.iterations,
            seed,
            horizon: self.horizon.map_or(Horizon::Infinite, Horizon::Finite),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// A loaded configuration plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let config = Self::parse(&text, path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, path: path.to_path_buf(), base_dir })
    }

    pub fn validate(&self) -> CliResult<()> {
        let m = &self.model;
        let sources = [m.grid.is_some(), m.mdp_file.is_some(), m.random.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(CliError::Config("[model] needs exactly one of grid, mdp_file, random".into()));
        }
        if let Some(b) = &self.baseline {
            if b.taus.is_empty() {
                return Err(CliError::Config("[baseline] taus must not be empty".into()));
            }
            for &tau in &b.taus {
                BaselineConfig { tau, ..b.to_config(0) }.validate()?;
            }
        }
        self.solver.to_config().validate()?;
        Ok(())
    }

    /// Canonical TOML text: defaults filled in, fixed key order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A resolved model with display names.
#[derive(Debug, Clone)]
pub struct Model {
    pub mdp: Mdp,
    pub obs: ObservationModel,
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub default_secret: Option<Vec<usize>>,
}

impl Model {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|s| s == name)
    }
}

fn cell(c: [usize; 2]) -> Cell {
    Cell::new(c[0], c[1])
}

impl GridSection {
    pub fn to_spec(&self) -> CliResult<GridSpec> {
        let mut spec = match self.preset.as_str() {
            "default" => GridSpec::default_layout(),
            "four-corners" => GridSpec::default_four_corners(),
            other => return Err(CliError::Config(format!("unknown grid preset {other:?}"))),
        };
        if let Some(w) = self.width {
            spec.width = w;
        }
        if let Some(h) = self.height {
            spec.height = h;
        }
        if let Some(s) = self.slip {
            spec.slip = s;
        }
        if let Some(d) = self.discount {
            spec.discount = d;
        }
        if let Some(r) = self.goal_reward {
            spec.goal_reward = r;
        }
        if let Some(sensors) = &self.sensors {
            spec.sensors = sensors.iter().map(SensorSection::to_sensor).collect::<CliResult<_>>()?;
        }
        if let Some(c) = &self.secret_cells {
            spec.secret_cells = c.iter().copied().map(cell).collect();
        }
        if let Some(c) = &self.goal_cells {
            spec.goal_cells = c.iter().copied().map(cell).collect();
        }
        if let Some(init) = &self.initial {
            spec.initial = init.iter().map(|i| (cell(i.cell), i.p)).collect();
        }
        Ok(spec)
    }
}

impl SensorSection {
    fn to_sensor(&self) -> CliResult<Sensor> {
        let mut sensor = match (self.x, self.y) {
            (Some(x), Some(y)) => Sensor::rect(&self.symbol, self.p, x[0], x[1], y[0], y[1]),
            (None, None) => Sensor { cells: Vec::new(), symbol: self.symbol.clone(), hit_prob: self.p },
            _ => return Err(CliError::Config(format!("sensor {:?}: give both x and y ranges or neither", self.symbol))),
        };
        sensor.cells.extend(self.cells.iter().copied().map(cell));
        if sensor.cells.is_empty() {
            return Err(CliError::Config(format!("sensor {:?} covers no cells", self.symbol)));
        }
        Ok(sensor)
    }
}

impl LoadedConfig {
    pub fn model(&self) -> CliResult<Model> {
        let m = &self.config.model;
        if let Some(grid) = &m.grid {
            let world = build_gridworld(&grid.to_spec()?)?;
            let state_names = (0..world.mdp.n_states()).map(|s| world.state_name(s)).collect();
            let action_names = opacity_core::grid::Action::ALL.iter().map(|a| a.name().to_string()).collect();
            return Ok(Model {
                default_secret: Some(world.secret().states()),
                mdp: world.mdp,
                obs: world.obs,
                state_names,
                action_names,
            });
        }
        if let Some(file) = &m.mdp_file {
            let path = self.base_dir.join(file);
            return MdpDocument::load(&path)?.into_model();
        }
        let r = m.random.as_ref().expect("validated: one model source");
        let mut g = rng::stream(r.seed, "random-model", 0);
        let (mdp, obs) = random_instance(&mut g, r.n_states, r.n_actions, r.n_symbols, r.discount)?;
        Ok(Model {
            mdp,
            obs,
            state_names: (0..r.n_states).map(|s| format!("s{s}")).collect(),
            action_names: (0..r.n_actions).map(|a| format!("a{a}")).collect(),
            default_secret: None,
        })
    }

    pub fn objective(&self, model: &Model) -> CliResult<Objective> {
        let o = &self.config.objective;
        match o.kind {
            ObjectiveKind::InitialState => {
                if o.secret.is_some() {
                    return Err(CliError::Config("initial-state objective takes no secret set".into()));
                }
                Ok(Objective::InitialState)
            }
            ObjectiveKind::LastState => {
                let states = match &o.secret {
                    Some(names) => names
                        .iter()
                        .map(|n| model.state_index(n).ok_or_else(|| CliError::Config(format!("unknown secret state {n:?}"))))
                        .collect::<CliResult<Vec<_>>>()?,
                    None => model
                        .default_secret
                        .clone()
                        .ok_or_else(|| CliError::Config("last-state objective needs [objective] secret".into()))?,
                };
                Ok(Objective::LastState(SecretSpec::new(model.mdp.n_states(), &states)?))
            }
        }
    }

    pub fn problem(&self) -> CliResult<(Model, OpacityProblem)> {
        let model = self.model()?;
        let objective = self.objective(&model)?;
        let problem = OpacityProblem::new(model.mdp.clone(), model.obs.clone(), objective)?;
        Ok((model, problem))
    }

    /// `--out` wins, then `[output] prefix`, then the config file's stem.
    pub fn output_prefix(&self, cli_out: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_out {
            return p.to_path_buf();
        }
        if let Some(p) = &self.config.output.prefix {
            return self.base_dir.join(p);
        }
        let stem = self.path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from(stem)
    }
}
