//! External MDP documents: named states, actions and symbols with sparse
//! transition, reward and emission lists.
//!
//! ```toml
//! discount = 0.9
//! states = ["home", "away"]
//! actions = ["stay", "go"]
//! initial = [{ state = "home", p = 1.0 }]
//! transitions = [
//!   { from = "home", action = "stay", to = "home", p = 1.0 },
//!   { from = "home", action = "go", to = "away", p = 1.0 },
//!   # ... one or more entries for every (state, action) pair
//! ]
//! rewards = [{ state = "away", action = "stay", r = 1.0 }]
//!
//! [observations]
//! symbols = ["quiet", "ping"]
//! emissions = [{ state = "home", symbol = "quiet", p = 1.0 }, ...]
//! ```
//!
//! Missing rewards are zero. Probability rows must sum to one within `1e-9`
//! and are then renormalized exactly.

use std::path::Path;

use opacity_core::hmm::ObservationModel;
use opacity_core::mdp::Mdp;
use serde::{Deserialize, Serialize};

use crate::config::Model;
use crate::error::{CliError, CliResult};

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub discount: f64,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub initial: Vec<InitialEntry>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
    pub observations: ObservationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    pub state: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub state: String,
    pub action: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub symbols: Vec<String>,
    pub emissions: Vec<EmissionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionEntry {
    pub state: String,
    pub symbol: String,
    pub p: f64,
}

fn lookup(names: &[String], name: &str, what: &str) -> CliResult<usize> {
    names.iter().position(|n| n == name).ok_or_else(|| CliError::Config(format!("unknown {what} {name:?}")))
}

fn check_unique(names: &[String], what: &str) -> CliResult<()> {
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::Config(format!("duplicate {what} {n:?}")));
        }
    }
    Ok(())
}

fn normalize_row(row: &mut [f64], label: impl FnOnce() -> String) -> CliResult<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(CliError::Config(format!("{}: probabilities must be finite and >= 0", label())));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(CliError::Config(format!("{}: probabilities sum to {total}", label())));
    }
    row.iter_mut().for_each(|p| *p /= total);
    Ok(())
}

impl MdpDocument {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    pub fn into_model(self) -> CliResult<Model> {
        check_unique(&self.states, "state")?;
        check_unique(&self.actions, "action")?;
        check_unique(&self.observations.symbols, "symbol")?;
        let (n, k, m) = (self.states.len(), self.actions.len(), self.observations.symbols.len());
        if n == 0 || k == 0 || m == 0 {
            return Err(CliError::Config("MDP document needs at least one state, action and symbol".into()));
        }

        let mut initial = vec![0.0; n];
        for e in &self.initial {
            initial[lookup(&self.states, &e.state, "state")?] += e.p;
        }
        normalize_row(&mut initial, || "initial distribution".into())?;

        let mut transition = vec![0.0; n * k * n];
        for e in &self.transitions {
            let i = lookup(&self.states, &e.from, "state")?;
            let a = lookup(&self.actions, &e.action, "action")?;
            let j = lookup(&self.states, &e.to, "state")?;
            transition[(i * k + a) * n + j] += e.p;
        }
        for i in 0..n {
            for a in 0..k {
                normalize_row(&mut transition[(i * k + a) * n..(i * k + a + 1) * n], || {
                    format!("transitions from {:?} under {:?}", self.states[i], self.actions[a])
                })?;
            }
        }

        let mut reward = vec![0.0; n * k];
        for e in &self.rewards {
            let i = lookup(&self.states, &e.state, "state")?;
            let a = lookup(&self.actions, &e.action, "action")?;
            reward[i * k + a] += e.r;
        }

        let mut emission = vec![0.0; n * m];
        for e in &self.observations.emissions {
            let s = lookup(&self.states, &e.state, "state")?;
            let o = lookup(&self.observations.symbols, &e.symbol, "symbol")?;
            emission[s * m + o] += e.p;
        }
        for s in 0..n {
            normalize_row(&mut emission[s * m..(s + 1) * m], || format!("emissions of {:?}", self.states[s]))?;
        }

        let mdp = Mdp::new(n, k, transition, initial, reward, self.discount)?;
        let obs = ObservationModel::new(n, self.observations.symbols.clone(), emission)?;
        Ok(Model { mdp, obs, state_names: self.states, action_names: self.actions, default_secret: None })
    }

    /// Sparse document for a model; zero entries are omitted.
    pub fn from_model(model: &Model) -> Self {
        let (mdp, obs) = (&model.mdp, &model.obs);
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        let st = |s: usize| model.state_names[s].clone();
        let ac = |a: usize| model.action_names[a].clone();
        let initial = (0..n)
            .filter(|&s| mdp.initial()[s] > 0.0)
            .map(|s| InitialEntry { state: st(s), p: mdp.initial()[s] })
            .collect();
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for i in 0..n {
            for a in 0..k {
                for (j, &p) in mdp.transition_row(i, a).iter().enumerate() {
                    if p > 0.0 {
                        transitions.push(TransitionEntry { from: st(i), action: ac(a), to: st(j), p });
                    }
                }
                let r = mdp.reward(i, a);
                if r != 0.0 {
                    rewards.push(RewardEntry { state: st(i), action: ac(a), r });
                }
            }
        }
        let mut emissions = Vec::new();
        for s in 0..n {
            for (o, &p) in obs.emission_row(s).iter().enumerate() {
                if p > 0.0 {
                    emissions.push(EmissionEntry { state: st(s), symbol: obs.symbols()[o].clone(), p });
                }
            }
        }
        MdpDocument {
            discount: mdp.discount(),
            states: model.state_names.clone(),
            actions: model.action_names.clone(),
            initial,
            transitions,
            rewards,
            observations: ObservationSection { symbols: obs.symbols().to_vec(), emissions },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("document is always representable")
    }
}
