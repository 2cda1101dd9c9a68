use std::collections::BTreeMap;
use std::sync::Arc;

use super::PolicySpec;
use crate::env::{ArmId, DelaySchedule, Environment};
use crate::error::{Error, Result};
use crate::gaussian::PriorParams;
use crate::metrics::RegretRecord;
use crate::policy::{
    seq_elim_step, ts_assign, ts_rnd_assign, BatchRecord, ClassModel, FeedbackView, History, PolicyKind,
    PolicyState, Revealed, ViewMode,
};
use crate::rng::SimRng;

/// Priors a policy starts from, by feature class.
#[derive(Clone, Debug)]
pub enum PriorSet {
    Shared(PriorParams),
    PerClass(BTreeMap<String, PriorParams>),
}

impl PriorSet {
    pub fn get(&self, class: Option<&str>) -> Result<&PriorParams> {
        match (self, class) {
            (PriorSet::Shared(p), _) => Ok(p),
            (PriorSet::PerClass(map), Some(z)) => map
                .get(z)
                .ok_or_else(|| Error::config("z", format!("no fitted prior for class {z:?}"))),
            (PriorSet::PerClass(_), None) => Err(Error::config("z", "arm has no class but priors are per class")),
        }
    }
}

/// A policy together with its posterior state and the history it has been shown.
#[derive(Debug)]
pub struct PolicyRunner {
    spec: PolicySpec,
    state: PolicyState,
    history: History,
    models: BTreeMap<Option<String>, Arc<ClassModel>>,
    priors: PriorSet,
    /// Environment delays, kept for the visibility audit.
    env_delays: Option<DelaySchedule>,
}

impl PolicyRunner {
    pub fn new(spec: PolicySpec, env: &dyn Environment, priors: PriorSet) -> Result<Self> {
        let priors = if spec.kind.uses_isotropic_prior() {
            PriorSet::Shared(PriorParams::isotropic(env.num_outcomes()))
        } else {
            priors
        };
        let view = FeedbackView::new(spec.kind.view_mode(), env.delays(), env.reward())?;
        let mut out = Self {
            spec,
            state: PolicyState::new(view),
            history: History::default(),
            models: BTreeMap::new(),
            priors,
            env_delays: None,
        };
        for &a in env.active_arms() {
            out.add_arm(a, env.class_of(a))?;
        }
        Ok(out)
    }

    /// Turns on the no-lookahead check against the environment's own delays.
    pub fn with_audit(mut self, env_delays: DelaySchedule) -> Self {
        self.env_delays = Some(env_delays);
        self
    }

    pub fn kind(&self) -> PolicyKind {
        self.spec.kind
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn add_arm(&mut self, arm: ArmId, class: Option<&str>) -> Result<()> {
        let key = class.map(str::to_string);
        let model = match self.models.get(&key) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new(ClassModel::new(self.priors.get(class)?, &self.state.view.reward)?);
                self.models.insert(key, m.clone());
                m
            }
        };
        self.state.add_arm(arm, model);
        Ok(())
    }

    pub fn remove_arm(&mut self, arm: ArmId) {
        self.state.remove_arm(arm);
    }

    /// Arms for the `m` users of the next batch.
    pub fn assign(&mut self, m: usize, rng: &mut SimRng) -> Result<Vec<ArmId>> {
        match self.spec.kind {
            PolicyKind::ProgressiveRnd => ts_rnd_assign(&self.state, m, self.spec.n_mc, rng),
            PolicyKind::SeqElim1Pct | PolicyKind::SeqElim4Pct => {
                let th = self.spec.threshold().expect("elimination policies have a threshold");
                seq_elim_step(&mut self.state, th, self.spec.n_mc, m, rng)
            }
            _ => ts_assign(&self.state, m, rng),
        }
    }

    /// Stores batch `t` and absorbs whatever becomes usable for batch `t + 1`.
    pub fn end_batch(&mut self, record: BatchRecord, t: usize) -> Result<()> {
        self.history.push(record);
        let revealed = self.history.newly_usable(&self.state.view, t);
        if let Some(env_delays) = &self.env_delays {
            audit(&self.state.view, env_delays, &revealed, t)?;
        }
        self.state.apply_feedback(&revealed)
    }

    /// `(arm, reward mean, reward sd)` for every arm the policy still tracks.
    pub fn final_moments(&self) -> Vec<(ArmId, f64, f64)> {
        self.state
            .known_arms()
            .map(|a| {
                let (m, s) = self.state.posterior(a).expect("known arm").reward_moments();
                (a, m, s)
            })
            .collect()
    }
}

/// Every revealed prefix `1..=j` must be visible at the next decision time
/// `t + 1`, under the view and (unless the view is the oracle) under the
/// environment's own schedule.
fn audit(view: &FeedbackView, env_delays: &DelaySchedule, revealed: &[Revealed<'_>], t: usize) -> Result<()> {
    for r in revealed {
        for i in 0..=r.outcome {
            let ok_view = view.delays.visible(r.tau, t + 1, i);
            let ok_env = view.mode == ViewMode::Oracle || env_delays.visible(r.tau, t + 1, i);
            if !(ok_view && ok_env) {
                return Err(Error::Lookahead {
                    t: t + 1,
                    tau: r.tau,
                    outcome: r.outcome + 1,
                });
            }
        }
    }
    Ok(())
}

/// Regret curve plus the final posterior summary of one episode.
#[derive(Clone, Debug)]
pub struct EpisodeOutput {
    pub record: RegretRecord,
    pub final_moments: Vec<(ArmId, f64, f64)>,
}

/// Plays `horizon` batches of `m` users.
///
/// For every user the outcome stream gives the assigned arm's draw first and
/// then the optimal arm's draw, so under common random numbers two policies
/// that agree on a user see the same numbers.
pub fn run_episode(
    env: &mut dyn Environment,
    runner: &mut PolicyRunner,
    horizon: usize,
    m: usize,
    replication: usize,
    policy_rng: &mut SimRng,
    outcome_rng: &mut SimRng,
) -> Result<EpisodeOutput> {
    let j = env.num_outcomes();
    let mut y = vec![0.0; j];
    let mut y_star = vec![0.0; j];
    let mut deltas = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let users = runner.assign(m, policy_rng)?;
        let star = env.optimal_arm();
        let reward = env.reward();
        let mut record = BatchRecord::new(t);
        let mut gap = 0.0;
        for &a in &users {
            env.draw(a, outcome_rng, &mut y);
            env.draw(star, outcome_rng, &mut y_star);
            if a != star {
                gap += reward.value(&y_star) - reward.value(&y);
            }
            record.record(a, &y);
        }
        deltas.push(gap / m as f64);
        runner.end_batch(record, t)?;
        if t < horizon {
            if let Some((removed, added)) = env.rotate(t)? {
                runner.remove_arm(removed);
                runner.add_arm(added, env.class_of(added))?;
            }
        }
    }
    Ok(EpisodeOutput {
        record: RegretRecord::from_deltas(replication, deltas),
        final_moments: runner.final_moments(),
    })
}
