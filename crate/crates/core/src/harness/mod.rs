//! Batched simulation loop, replication management and experiment presets.
//!
//! An [`ExperimentConfig`] names an environment, a roster of policies and the
//! run sizes. [`run_replications`] plays every policy against its own copy of
//! the environment in each replication and collects the regret curves.

mod config_file;
mod episode;
pub mod output;
mod run;

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::env::synthetic::{SyntheticEnvSpec, TwoOutcomeSpec};
use crate::env::traces::BinaryTraceParams;
use crate::error::{Error, Result};
use crate::policy::{PolicyKind, DEFAULT_N_MC};

pub use config_file::{load_config, ConfigFile, Overrides};
pub use episode::{run_episode, EpisodeOutput, PolicyRunner, PriorSet};
pub use run::{run_replications, PolicyRun, Prepared, RunResult, StreamSeed};

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 7] = [
    "genmodel",
    "genmodel-ratio",
    "replay-200",
    "priors",
    "nonstationary",
    "seqelim",
    "two-outcome",
];

/// Where trace data for replay environments comes from. Missing paths are
/// filled with stand-in data drawn from `params`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSource {
    pub params: BinaryTraceParams,
    /// Historical traces used only to fit the prior.
    pub train: Option<PathBuf>,
    /// Traces replayed as the arms of the experiment.
    pub eval: Option<PathBuf>,
}

impl Default for TraceSource {
    fn default() -> Self {
        Self {
            params: BinaryTraceParams::default(),
            train: None,
            eval: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    /// Equicorrelated Gaussian outcomes; the noise covariance scales with the batch size.
    Synthetic { alpha: f64, outcomes: usize, arms: usize },
    TwoOutcome(TwoOutcomeSpec),
    Replay(TraceSource),
    /// Replay with a rolling window of `active` arms.
    Nonstationary { source: TraceSource, active: usize },
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Synthetic { .. } => "synthetic",
            EnvSpec::TwoOutcome(_) => "two-outcome",
            EnvSpec::Replay(_) => "replay",
            EnvSpec::Nonstationary { .. } => "nonstationary",
        }
    }

    pub fn synthetic_spec(&self, batch_size: usize) -> Option<Result<SyntheticEnvSpec>> {
        match *self {
            EnvSpec::Synthetic { alpha, outcomes, arms } => {
                Some(SyntheticEnvSpec::new(alpha, outcomes, batch_size, arms))
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::Synthetic { alpha, outcomes, arms } => {
                SyntheticEnvSpec::new(*alpha, *outcomes, 1, *arms).map(|_| ())
            }
            EnvSpec::TwoOutcome(spec) => spec.validate(),
            EnvSpec::Replay(src) => src.params.validate(),
            EnvSpec::Nonstationary { source, active } => {
                source.params.validate()?;
                if *active == 0 {
                    return Err(Error::config("env.active", "must be at least 1"));
                }
                Ok(())
            }
        }
    }
}

/// One roster entry.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub n_mc: usize,
    /// Elimination threshold; `None` uses the kind's default.
    pub threshold: Option<f64>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            n_mc: DEFAULT_N_MC,
            threshold: None,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold.or(self.kind.elimination_threshold())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub env: EnvSpec,
    pub policies: Vec<PolicySpec>,
    pub horizon: usize,
    pub batch_size: usize,
    pub replications: usize,
    pub seed: u64,
    /// Worker threads for replications; 0 means one per core.
    pub jobs: usize,
    /// Share outcome draws across policies within a replication.
    pub common_random_numbers: bool,
    /// Check every consumed datum against the visibility rule.
    pub audit: bool,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "roster is empty"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].iter().any(|q| q.kind == p.kind) {
                return Err(Error::config("policies", format!("{} listed twice", p.name())));
            }
            if p.n_mc == 0 {
                return Err(Error::config(format!("policy.{}.n_mc", p.name()), "must be at least 1"));
            }
            if let Some(th) = p.threshold {
                if !(th > 0.0 && th < 1.0) {
                    return Err(Error::config(format!("policy.{}.threshold", p.name()), "must lie in (0, 1)"));
                }
            }
        }
        self.env.validate().map_err(|e| match e {
            Error::InvalidParameter { name, detail } => Error::config(format!("env.{name}"), detail),
            other => other,
        })
    }

    pub fn policy(&self, kind: PolicyKind) -> Option<&PolicySpec> {
        self.policies.iter().find(|p| p.kind == kind)
    }

    /// Sets `n_mc` on every policy.
    pub fn set_n_mc(&mut self, n_mc: usize) {
        for p in &mut self.policies {
            p.n_mc = n_mc;
        }
    }

    /// One-line `key=value` rendering of the resolved configuration.
    pub fn describe(&self) -> String {
        let mut s = format!("preset={};env={}", self.preset, self.env.kind());
        match &self.env {
            EnvSpec::Synthetic { alpha, outcomes, arms } => {
                let _ = write!(s, ";alpha={alpha};outcomes={outcomes};arms={arms}");
            }
            EnvSpec::TwoOutcome(t) => {
                let _ = write!(
                    s,
                    ";rho={};sigma_r_sq={};d_max={};arms={}",
                    t.rho, t.sigma_r_sq, t.d_max, t.num_arms
                );
            }
            EnvSpec::Replay(src) | EnvSpec::Nonstationary { source: src, .. } => {
                let p = &src.params;
                let _ = write!(
                    s,
                    ";arms={};traces_per_arm={};outcomes={};classes={}",
                    p.num_arms, p.traces_per_arm, p.j, p.num_classes
                );
                if let Some(path) = &src.train {
                    let _ = write!(s, ";train={}", path.display());
                }
                if let Some(path) = &src.eval {
                    let _ = write!(s, ";eval={}", path.display());
                }
                if let EnvSpec::Nonstationary { active, .. } = &self.env {
                    let _ = write!(s, ";active={active}");
                }
            }
        }
        let _ = write!(
            s,
            ";horizon={};batch_size={};replications={};seed={};crn={}",
            self.horizon, self.batch_size, self.replications, self.seed, self.common_random_numbers
        );
        for p in &self.policies {
            let _ = write!(s, ";policy.{}.n_mc={}", p.name(), p.n_mc);
            if let Some(th) = p.threshold() {
                let _ = write!(s, ";policy.{}.threshold={th}", p.name());
            }
        }
        s
    }
}

fn roster(kinds: &[PolicyKind]) -> Vec<PolicySpec> {
    kinds.iter().copied().map(PolicySpec::new).collect()
}

/// The fully specified configuration of a named experiment.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    use PolicyKind::*;
    let base = |env: EnvSpec, policies: &[PolicyKind], horizon, batch_size, replications| ExperimentConfig {
        preset: name.to_string(),
        env,
        policies: roster(policies),
        horizon,
        batch_size,
        replications,
        seed: 0,
        jobs: 0,
        common_random_numbers: true,
        audit: false,
        output_dir: None,
    };
    let synthetic = |alpha| EnvSpec::Synthetic {
        alpha,
        outcomes: 25,
        arms: 20,
    };
    let replay = || TraceSource::default();
    Ok(match name {
        "genmodel" | "genmodel-ratio" => base(synthetic(0.8), &[Progressive, Delayed], 50, 10, 500),
        "replay-200" => base(
            EnvSpec::Replay(replay()),
            &[Progressive, Delayed, DayTwo, Oracle],
            100,
            50,
            10,
        ),
        "priors" => base(
            EnvSpec::Replay(replay()),
            &[Progressive, ProgressiveIsotropic, Delayed],
            100,
            50,
            10,
        ),
        "nonstationary" => base(
            EnvSpec::Nonstationary {
                source: replay(),
                active: 60,
            },
            &[Progressive, Delayed, DayTwo],
            100,
            50,
            10,
        ),
        "seqelim" => base(synthetic(0.1), &[Progressive, SeqElim1Pct, SeqElim4Pct], 50, 10, 5000),
        "two-outcome" => base(
            EnvSpec::TwoOutcome(TwoOutcomeSpec {
                rho: 0.5,
                sigma_r_sq: 1.0,
                d_max: 10,
                num_arms: 10,
            }),
            &[Progressive, Delayed, Oracle],
            30,
            10,
            500,
        ),
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                valid: PRESETS.join(", "),
            })
        }
    })
}

#[cfg(test)]
mod tests;
