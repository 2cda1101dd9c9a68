use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::episode::{run_episode, EpisodeOutput, PolicyRunner, PriorSet};
use super::{EnvSpec, ExperimentConfig, TraceSource};
use crate::env::synthetic::{make_synthetic, make_two_outcome, SyntheticEnvSpec, TwoOutcomeSpec};
use crate::env::traces::{gen_binary_traces, ReplayEnv, TraceDataset};
use crate::env::{ArmId, DelaySchedule, Environment};
use crate::error::{Error, Result};
use crate::gaussian::{PriorParams, RewardSpec};
use crate::metrics::RegretRecord;
use crate::prior_fit::FittedPrior;
use crate::rng::{derive_seed, stream, Purpose};

/// Label of the outcome stream shared by all policies under common random numbers.
const SHARED_OUTCOMES: &str = "outcomes";

/// Per-experiment material shared by every replication: trace datasets and
/// fitted priors for replay environments.
#[derive(Clone, Debug)]
pub enum Prepared {
    Synthetic(SyntheticEnvSpec),
    TwoOutcome(TwoOutcomeSpec),
    Replay {
        eval: Arc<TraceDataset>,
        fitted: FittedPrior,
        priors: BTreeMap<String, PriorParams>,
        active: Option<usize>,
    },
}

fn load_or_generate(path: Option<&std::path::Path>, src: &TraceSource, seed: u64, label: &str) -> Result<TraceDataset> {
    match path {
        Some(p) => TraceDataset::read_csv(p),
        None => gen_binary_traces(&src.params, &mut stream(seed, 0, label, Purpose::Data)),
    }
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let replay = |src: &TraceSource, active| -> Result<Self> {
            let train = load_or_generate(src.train.as_deref(), src, config.seed, "train")?;
            let eval = load_or_generate(src.eval.as_deref(), src, config.seed, "eval")?;
            let fitted = FittedPrior::fit(&train)?;
            let priors = fitted
                .classes
                .iter()
                .map(|(z, c)| Ok((z.clone(), c.prior()?)))
                .collect::<Result<_>>()?;
            Ok(Prepared::Replay {
                eval: Arc::new(eval),
                fitted,
                priors,
                active,
            })
        };
        match &config.env {
            EnvSpec::Synthetic { .. } => Ok(Prepared::Synthetic(
                config.env.synthetic_spec(config.batch_size).expect("synthetic env")?,
            )),
            EnvSpec::TwoOutcome(spec) => {
                spec.validate()?;
                Ok(Prepared::TwoOutcome(spec.clone()))
            }
            EnvSpec::Replay(src) => replay(src, None),
            EnvSpec::Nonstationary { source, active } => replay(source, Some(*active)),
        }
    }

    /// A fresh environment for one replication together with the priors the
    /// policies start from. Same `(seed, replication)` gives the same environment.
    pub fn build(&self, seed: u64, replication: usize) -> Result<(Box<dyn Environment>, PriorSet)> {
        let mut rng = stream(seed, replication as u64, "environment", Purpose::Environment);
        match self {
            Prepared::Synthetic(spec) => {
                let setup = make_synthetic(spec, &mut rng)?;
                let prior = setup.prior.clone();
                Ok((Box::new(setup.into_env()?), PriorSet::Shared(prior)))
            }
            Prepared::TwoOutcome(spec) => {
                let setup = make_two_outcome(spec, &mut rng)?;
                let prior = setup.prior.clone();
                Ok((Box::new(setup.into_env()?), PriorSet::Shared(prior)))
            }
            Prepared::Replay {
                eval,
                priors,
                active,
                ..
            } => {
                let env = match active {
                    None => ReplayEnv::new(eval.clone())?,
                    Some(k) => {
                        let mut order: Vec<ArmId> = (0..eval.arms().len()).collect();
                        order.shuffle(&mut rng);
                        ReplayEnv::rolling(eval.clone(), order, *k)?
                    }
                };
                Ok((Box::new(env), PriorSet::PerClass(priors.clone())))
            }
        }
    }

    /// Prior, reward and delays for value-of-feedback curves: the true prior
    /// for Gaussian environments, the first fitted class for replay.
    pub fn vopf_model(&self) -> Result<(PriorParams, RewardSpec, DelaySchedule)> {
        let (env, priors) = self.build(0, 0)?;
        let class = env.active_arms().first().and_then(|&a| env.class_of(a)).map(str::to_string);
        let prior = match (&priors, class) {
            (PriorSet::PerClass(map), None) => map.values().next().cloned().ok_or_else(|| Error::config("z", "no classes"))?,
            (p, c) => p.get(c.as_deref())?.clone(),
        };
        Ok((prior, env.reward().clone(), env.delays().clone()))
    }
}

/// Seed of one random stream, for the record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamSeed {
    pub replication: usize,
    pub label: String,
    pub purpose: &'static str,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub name: String,
    /// One record per successful replication, ascending.
    pub records: Vec<RegretRecord>,
    /// Final `(arm, reward mean, reward sd)` of the lowest successful replication.
    pub final_moments: Vec<(ArmId, f64, f64)>,
}

#[derive(Debug)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub prepared: Prepared,
    pub policies: Vec<PolicyRun>,
    pub seeds: Vec<StreamSeed>,
    pub failures: Vec<(usize, Error)>,
    pub wall_clock_secs: f64,
}

impl RunResult {
    pub fn policy(&self, name: &str) -> Option<&PolicyRun> {
        self.policies.iter().find(|p| p.name == name)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn outcome_label<'a>(config: &ExperimentConfig, policy: &'a str) -> &'a str {
    if config.common_random_numbers {
        SHARED_OUTCOMES
    } else {
        policy
    }
}

fn run_one(config: &ExperimentConfig, prepared: &Prepared, rep: usize) -> Result<Vec<EpisodeOutput>> {
    let r = rep as u64;
    config
        .policies
        .iter()
        .map(|spec| {
            let (mut env, priors) = prepared.build(config.seed, rep)?;
            let mut runner = PolicyRunner::new(spec.clone(), env.as_ref(), priors)?;
            if config.audit {
                runner = runner.with_audit(env.delays().clone());
            }
            let mut policy_rng = stream(config.seed, r, spec.name(), Purpose::Policy);
            let mut outcome_rng = stream(config.seed, r, outcome_label(config, spec.name()), Purpose::Outcomes);
            run_episode(
                env.as_mut(),
                &mut runner,
                config.horizon,
                config.batch_size,
                rep,
                &mut policy_rng,
                &mut outcome_rng,
            )
        })
        .collect()
}

/// Runs every policy for every replication on a pool of `config.jobs` workers.
///
/// A failing replication does not stop the others; it is reported in
/// [`RunResult::failures`] and left out of the records.
pub fn run_replications(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let prepared = Prepared::new(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let outcomes: Vec<Result<Vec<EpisodeOutput>>> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| run_one(config, &prepared, rep))
            .collect()
    });

    let mut policies: Vec<PolicyRun> = config
        .policies
        .iter()
        .map(|p| PolicyRun {
            name: p.name().to_string(),
            records: Vec::new(),
            final_moments: Vec::new(),
        })
        .collect();
    let mut failures = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(episodes) => {
                for (run, ep) in policies.iter_mut().zip(episodes) {
                    if run.records.is_empty() {
                        run.final_moments = ep.final_moments;
                    }
                    run.records.push(ep.record);
                }
            }
            Err(e) => {
                log::error!("replication {rep} failed: {e}");
                failures.push((rep, e));
            }
        }
    }

    let mut seeds = Vec::new();
    for rep in 0..config.replications {
        let r = rep as u64;
        let mut push = |label: &str, purpose: Purpose, name: &'static str| {
            seeds.push(StreamSeed {
                replication: rep,
                label: label.to_string(),
                purpose: name,
                seed: derive_seed(config.seed, r, label, purpose),
            })
        };
        push("environment", Purpose::Environment, "environment");
        for p in &config.policies {
            push(p.name(), Purpose::Policy, "policy");
            push(outcome_label(config, p.name()), Purpose::Outcomes, "outcomes");
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    seeds.retain(|s| seen.insert((s.replication, s.label.clone(), s.purpose)));

    Ok(RunResult {
        config: config.clone(),
        prepared,
        policies,
        seeds,
        failures,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
