//! Data-generating environments and censoring.
//!
//! Batches are 1-based (`t = 1..=T`), outcome indices 0-based. Outcome `j` of a
//! user assigned at batch `tau` is visible at batch `t` iff `t > tau + d_j`.

pub mod synthetic;
pub mod traces;

use crate::error::{Error, Result};
use crate::gaussian::{RewardSpec, Vector};
use crate::rng::SimRng;

pub use synthetic::{
    make_synthetic, make_two_outcome, sample_outcomes, GaussianEnv, SyntheticEnvSpec, SyntheticSetup,
    TwoOutcomeSpec,
};
pub use traces::{
    gen_binary_traces, replay_sample, rotate_actions, ArmEngagement, BinaryTraceParams, ReplayEnv,
    TraceArm, TraceDataset,
};

pub type ArmId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelaySchedule {
    delays: Vec<usize>,
}

impl DelaySchedule {
    pub fn new(delays: Vec<usize>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::param("delays", "schedule needs at least one outcome"));
        }
        Ok(Self { delays })
    }

    /// `d_j = j - 1` in 1-based terms: one new outcome per batch.
    pub fn progressive(j: usize) -> Self {
        Self {
            delays: (0..j).collect(),
        }
    }

    pub fn uniform(j: usize, d: usize) -> Self {
        Self { delays: vec![d; j] }
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn d_max(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    pub fn visible(&self, tau: usize, t: usize, j: usize) -> bool {
        t > tau + self.delays[j]
    }

    /// Delay at which the whole prefix `1..=j` is visible. Whitened value `j`
    /// needs the entire prefix, so this is when it becomes usable.
    pub fn prefix_delays(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.delays.len());
        let mut run = 0;
        for &d in &self.delays {
            run = run.max(d);
            out.push(run);
        }
        out
    }

    /// Every outcome withheld until `d_max`.
    pub fn pure_delay(&self) -> Self {
        Self::uniform(self.len(), self.d_max())
    }
}

/// Latent mean outcomes of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmLatent {
    pub arm_id: ArmId,
    pub z: Option<String>,
    pub theta: Vector,
    pub r_bar: f64,
}

impl ArmLatent {
    pub fn new(arm_id: ArmId, z: Option<String>, theta: Vector, reward: &RewardSpec) -> Self {
        let r_bar = reward.value(theta.as_slice());
        Self {
            arm_id,
            z,
            theta,
            r_bar,
        }
    }
}

/// One user's potential outcomes for the arm they were shown.
#[derive(Clone, Debug, PartialEq)]
pub struct CensoredTrace {
    pub user_id: usize,
    pub arm_id: ArmId,
    pub tau: usize,
    pub outcomes: Vec<f64>,
}

impl CensoredTrace {
    pub fn observed_through(&self, t: usize, delays: &DelaySchedule) -> Vec<bool> {
        (0..self.outcomes.len()).map(|j| delays.visible(self.tau, t, j)).collect()
    }
}

/// Outcomes that are visible at `t` but were not at `t - 1`.
pub fn censor(trace: &CensoredTrace, t: usize, delays: &DelaySchedule) -> Result<Vec<(usize, f64)>> {
    if t < trace.tau {
        return Err(Error::param("t", format!("batch {t} precedes assignment batch {}", trace.tau)));
    }
    if trace.outcomes.len() != delays.len() {
        return Err(Error::dim("censor", delays.len(), trace.outcomes.len()));
    }
    Ok((0..delays.len())
        .filter(|&j| delays.visible(trace.tau, t, j) && !(t > 0 && delays.visible(trace.tau, t - 1, j)))
        .map(|j| (j, trace.outcomes[j]))
        .collect())
}

/// Common sampling interface used by the harness.
///
/// `draw` must consume a fixed amount of randomness regardless of the arm, so
/// that policies coupled through common random numbers stay aligned.
pub trait Environment: Send {
    fn num_outcomes(&self) -> usize;
    fn reward(&self) -> &RewardSpec;
    fn delays(&self) -> &DelaySchedule;
    /// Arms that can be recommended at the current batch, ascending.
    fn active_arms(&self) -> &[ArmId];
    fn mean_reward(&self, arm: ArmId) -> f64;
    /// Feature class used to pick the prior for an arm.
    fn class_of(&self, _arm: ArmId) -> Option<&str> {
        None
    }
    fn draw(&self, arm: ArmId, rng: &mut SimRng, out: &mut [f64]);
    /// Called after the decision at batch `t`. Returns `(removed, added)` when
    /// the arm set changes.
    fn rotate(&mut self, _t: usize) -> Result<Option<(ArmId, ArmId)>> {
        Ok(None)
    }

    /// `argmax` of mean reward over active arms, lowest id on ties.
    fn optimal_arm(&self) -> ArmId {
        let mut best = self.active_arms()[0];
        let mut best_r = self.mean_reward(best);
        for &a in &self.active_arms()[1..] {
            let r = self.mean_reward(a);
            if r > best_r {
                best = a;
                best_r = r;
            }
        }
        best
    }
}
