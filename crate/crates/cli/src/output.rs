//! CSV logs and JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use opacity_core::solver::{IterationRecord, Monitor, RunStatus, TrainLog};
use serde::Serialize;

use crate::config::Model;
use crate::error::{CliError, CliResult};

pub const SOLVE_HEADER: &str = "iteration,entropy,entropy_stderr,value,lambda,grad_norm,elapsed_ms";

/// `prefix` with `suffix` appended to the file name.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn create(path: &Path) -> CliResult<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Streams iteration records to CSV, flushing after every line so an
/// interrupted run leaves a valid prefix.
pub struct CsvLog {
    out: BufWriter<File>,
    path: PathBuf,
    start: Option<Instant>,
    error: Option<std::io::Error>,
}

impl CsvLog {
    /// With `timing` off the `elapsed_ms` column is always 0, keeping reruns
    /// byte-identical.
    pub fn create(path: &Path, timing: bool) -> CliResult<Self> {
        let mut out = BufWriter::new(create(path)?);
        writeln!(out, "{SOLVE_HEADER}")
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(Self { out, path: path.to_path_buf(), start: timing.then(Instant::now), error: None })
    }

    pub fn finish(mut self) -> CliResult<()> {
        if let Some(e) = self.error.take() {
            return Err(CliError::io(format!("writing {}", self.path.display()), e));
        }
        self.out.flush().map_err(|e| CliError::io(format!("writing {}", self.path.display()), e))
    }
}

impl Monitor for CsvLog {
    fn elapsed_ms(&self) -> f64 {
        self.start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
    }

    fn on_record(&mut self, r: &IterationRecord) {
        if self.error.is_some() {
            return;
        }
        let line = format!(
            "{},{},{},{},{},{},{}",
            r.iteration, r.entropy, r.entropy_std_err, r.value, r.lambda, r.grad_norm, r.elapsed_ms
        );
        if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
            self.error = Some(e);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub objective: String,
    pub mode: String,
    pub status: String,
    /// Set when the run aborted: the last iteration with finite numbers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_valid_iteration: Option<usize>,
    pub entropy: Option<f64>,
    pub entropy_std_err: Option<f64>,
    pub value: Option<f64>,
    pub delta: f64,
    pub lambda: f64,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl RunSummary {
    pub fn from_log(log: &TrainLog, objective: &str, config_hash: &str) -> Self {
        let (status, last_valid) = match &log.status {
            RunStatus::Converged => ("converged".to_string(), None),
            RunStatus::IterationLimit => ("iteration-limit".to_string(), None),
            RunStatus::Aborted { reason, last_valid, .. } => (format!("aborted: {reason}"), *last_valid),
        };
        let fin = log.final_eval.as_ref();
        RunSummary {
            objective: objective.to_string(),
            mode: match log.config.entropy_mode {
                opacity_core::solver::EntropyMode::Exact => "exact".into(),
                opacity_core::solver::EntropyMode::Sampled => "sampled".into(),
            },
            status,
            last_valid_iteration: last_valid,
            entropy: fin.map(|f| f.entropy),
            entropy_std_err: fin.map(|f| f.entropy_std_err),
            value: fin.map(|f| f.value),
            delta: log.config.delta,
            lambda: log.final_lambda,
            feasible: log.feasible(),
            converged: log.converged(),
            iterations: log.records.len(),
            seed: log.config.seed,
            config_hash: config_hash.to_string(),
        }
    }
}

/// Final policy parameters with names, plus the softmax policy they encode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaDocument {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// `theta[s][a]`
    pub theta: Vec<Vec<f64>>,
    /// `pi(a | s)`
    pub policy: Vec<Vec<f64>>,
}

impl ThetaDocument {
    pub fn new(model: &Model, theta: &opacity_core::PolicyParams) -> Self {
        let k = theta.n_actions();
        let policy = opacity_core::mdp::policy_table(theta);
        ThetaDocument {
            states: model.state_names.clone(),
            actions: model.action_names.clone(),
            theta: (0..theta.n_states()).map(|s| theta.row(s).to_vec()).collect(),
            policy: policy.chunks(k).map(<[f64]>::to_vec).collect(),
        }
    }
}
