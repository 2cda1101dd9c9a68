//! Decision policies over per-arm Gaussian posteriors.
//!
//! A [`FeedbackView`] decides what a policy gets to see (progressive, delayed,
//! day-two proxy or oracle). [`PolicyState`] holds the posteriors and absorbs
//! feedback; the selection rules live in [`thompson`].

pub mod rounding;
pub mod thompson;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::env::{ArmId, DelaySchedule};
use crate::error::{Error, Result};
use crate::gaussian::{whitened_reward, Belief, CholeskyFactors, PriorParams, RewardSpec, Vector, WhitenedBelief};

pub use rounding::{round_probs, AllocationProbs};
pub use thompson::{seq_elim_step, ts_assign, ts_probs, ts_rnd_assign, DEFAULT_N_MC};

/// Names accepted in configs and written to CSVs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Progressive,
    ProgressiveRnd,
    Delayed,
    DayTwo,
    Oracle,
    SeqElim1Pct,
    SeqElim4Pct,
    ProgressiveIsotropic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::Progressive,
        PolicyKind::ProgressiveRnd,
        PolicyKind::Delayed,
        PolicyKind::DayTwo,
        PolicyKind::Oracle,
        PolicyKind::SeqElim1Pct,
        PolicyKind::SeqElim4Pct,
        PolicyKind::ProgressiveIsotropic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Progressive => "progressive",
            PolicyKind::ProgressiveRnd => "progressive_rnd",
            PolicyKind::Delayed => "delayed",
            PolicyKind::DayTwo => "day_two",
            PolicyKind::Oracle => "oracle",
            PolicyKind::SeqElim1Pct => "seq_elim_1pct",
            PolicyKind::SeqElim4Pct => "seq_elim_4pct",
            PolicyKind::ProgressiveIsotropic => "progressive_isotropic",
        }
    }

    pub fn view_mode(self) -> ViewMode {
        match self {
            PolicyKind::Delayed => ViewMode::Delayed,
            PolicyKind::DayTwo => ViewMode::DayTwoProxy,
            PolicyKind::Oracle => ViewMode::Oracle,
            _ => ViewMode::Progressive,
        }
    }

    pub fn elimination_threshold(self) -> Option<f64> {
        match self {
            PolicyKind::SeqElim1Pct => Some(0.01),
            PolicyKind::SeqElim4Pct => Some(0.04),
            _ => None,
        }
    }

    /// Whether this policy ignores the fitted prior in favour of the isotropic preset.
    pub fn uses_isotropic_prior(self) -> bool {
        self == PolicyKind::ProgressiveIsotropic
    }

    /// Whether assignments depend on `n_mc`.
    pub fn uses_monte_carlo(self) -> bool {
        matches!(
            self,
            PolicyKind::ProgressiveRnd | PolicyKind::SeqElim1Pct | PolicyKind::SeqElim4Pct
        )
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownPolicy {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewMode {
    Progressive,
    Delayed,
    DayTwoProxy,
    Oracle,
}

/// What a policy sees: effective delays, the reward it optimizes and how many
/// leading outcomes it may use.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackView {
    pub mode: ViewMode,
    pub delays: DelaySchedule,
    pub reward: RewardSpec,
    pub outcome_limit: usize,
}

impl FeedbackView {
    pub fn new(mode: ViewMode, env_delays: &DelaySchedule, env_reward: &RewardSpec) -> Result<Self> {
        let j = env_delays.len();
        if env_reward.dim() != j {
            return Err(Error::dim("reward weights", j, env_reward.dim()));
        }
        Ok(match mode {
            ViewMode::Progressive => Self {
                mode,
                delays: env_delays.clone(),
                reward: env_reward.clone(),
                outcome_limit: j,
            },
            ViewMode::Delayed => Self {
                mode,
                delays: env_delays.pure_delay(),
                reward: env_reward.clone(),
                outcome_limit: j,
            },
            ViewMode::Oracle => Self {
                mode,
                delays: DelaySchedule::uniform(j, 0),
                reward: env_reward.clone(),
                outcome_limit: j,
            },
            ViewMode::DayTwoProxy => {
                if j < 2 {
                    return Err(Error::param("day_two", "needs at least two outcomes"));
                }
                Self {
                    mode,
                    delays: env_delays.clone(),
                    reward: RewardSpec::unit(j, 1),
                    outcome_limit: 2,
                }
            }
        })
    }

    /// Batch offset after which whitened value `j` is usable (`None` when the
    /// view discards outcome `j`).
    pub fn usable_delays(&self) -> Vec<Option<usize>> {
        self.delays
            .prefix_delays()
            .into_iter()
            .enumerate()
            .map(|(j, d)| (j < self.outcome_limit).then_some(d))
            .collect()
    }
}

/// Prior and whitening shared by all arms of one feature class.
#[derive(Clone, Debug)]
pub struct ClassModel {
    pub factors: CholeskyFactors,
    prior: WhitenedBelief,
    reward_w: Vector,
    r0: f64,
}

impl ClassModel {
    pub fn new(prior: &PriorParams, reward: &RewardSpec) -> Result<Self> {
        if reward.dim() != prior.dim() {
            return Err(Error::dim("reward weights", prior.dim(), reward.dim()));
        }
        let factors = prior.noise_factors()?;
        let belief = WhitenedBelief::from_belief(&prior.prior_belief(), &factors)?;
        Ok(Self {
            reward_w: whitened_reward(reward, &factors),
            r0: reward.r0(),
            prior: belief,
            factors,
        })
    }
}

/// Per-arm posterior with cached reward moments.
#[derive(Clone, Debug)]
pub struct ArmPosterior {
    model: Arc<ClassModel>,
    belief: WhitenedBelief,
    mean: f64,
    sd: f64,
}

impl ArmPosterior {
    fn new(model: Arc<ClassModel>) -> Self {
        let belief = model.prior.clone();
        let mut out = Self {
            model,
            belief,
            mean: 0.0,
            sd: 0.0,
        };
        out.refresh();
        out
    }

    fn refresh(&mut self) {
        let (m, v) = self.belief.reward_moments(self.model.r0, &self.model.reward_w);
        self.mean = m;
        self.sd = v.max(0.0).sqrt();
    }

    /// Mean and standard deviation of the optimized reward.
    pub fn reward_moments(&self) -> (f64, f64) {
        (self.mean, self.sd)
    }

    pub fn belief(&self) -> Belief {
        self.belief.to_belief(&self.model.factors)
    }
}

/// Aggregated feedback for one arm: `count` users assigned at batch `tau`
/// whose outcome prefixes `1..=outcome` sum to `prefix_sum`.
#[derive(Clone, Copy, Debug)]
pub struct Revealed<'a> {
    pub arm: ArmId,
    pub tau: usize,
    pub outcome: usize,
    pub count: usize,
    pub prefix_sum: &'a [f64],
}

/// Outcomes realized in one batch, summed per arm.
#[derive(Clone, Debug, Default)]
pub struct BatchRecord {
    pub tau: usize,
    pub arms: BTreeMap<ArmId, (usize, Vec<f64>)>,
}

impl BatchRecord {
    pub fn new(tau: usize) -> Self {
        Self {
            tau,
            arms: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, arm: ArmId, y: &[f64]) {
        let entry = self.arms.entry(arm).or_insert_with(|| (0, vec![0.0; y.len()]));
        entry.0 += 1;
        for (s, v) in entry.1.iter_mut().zip(y) {
            *s += v;
        }
    }
}

/// Everything a policy has been shown so far, one record per batch.
#[derive(Clone, Debug, Default)]
pub struct History {
    batches: Vec<BatchRecord>,
}

impl History {
    pub fn push(&mut self, record: BatchRecord) {
        debug_assert_eq!(record.tau, self.batches.len() + 1);
        self.batches.push(record);
    }

    pub fn batch(&self, tau: usize) -> Option<&BatchRecord> {
        tau.checked_sub(1).and_then(|i| self.batches.get(i))
    }

    /// Whitened values that become usable at batch `t + 1` under `view`: the
    /// prefix `1..=j` of a user assigned at `tau` is complete once
    /// `t + 1 > tau + prefix_delay_j`, and was not complete at `t`.
    pub fn newly_usable<'a>(&'a self, view: &FeedbackView, t: usize) -> Vec<Revealed<'a>> {
        let mut out = Vec::new();
        for (j, d) in view.usable_delays().into_iter().enumerate() {
            let Some(d) = d else { continue };
            let Some(tau) = t.checked_sub(d) else { continue };
            let Some(batch) = self.batch(tau) else { continue };
            for (&arm, (count, sum)) in &batch.arms {
                out.push(Revealed {
                    arm,
                    tau,
                    outcome: j,
                    count: *count,
                    prefix_sum: &sum[..=j],
                });
            }
        }
        out
    }
}

/// Beliefs, active set and view of one policy.
#[derive(Clone, Debug)]
pub struct PolicyState {
    pub view: FeedbackView,
    arms: BTreeMap<ArmId, ArmPosterior>,
    active: BTreeSet<ArmId>,
}

impl PolicyState {
    pub fn new(view: FeedbackView) -> Self {
        Self {
            view,
            arms: BTreeMap::new(),
            active: BTreeSet::new(),
        }
    }

    /// Builds a state where every arm starts from the same prior.
    pub fn with_prior(view: FeedbackView, prior: &PriorParams, arms: &[ArmId]) -> Result<Self> {
        let model = Arc::new(ClassModel::new(prior, &view.reward)?);
        let mut s = Self::new(view);
        for &a in arms {
            s.add_arm(a, model.clone());
        }
        Ok(s)
    }

    pub fn add_arm(&mut self, arm: ArmId, model: Arc<ClassModel>) {
        self.arms.insert(arm, ArmPosterior::new(model));
        self.active.insert(arm);
    }

    /// Forgets an arm entirely (used when an arm leaves the catalogue).
    pub fn remove_arm(&mut self, arm: ArmId) {
        self.arms.remove(&arm);
        self.active.remove(&arm);
    }

    /// Removes an arm from the candidate set but keeps learning about it.
    pub fn eliminate(&mut self, arm: ArmId) {
        self.active.remove(&arm);
    }

    pub fn active(&self) -> &BTreeSet<ArmId> {
        &self.active
    }

    pub fn known_arms(&self) -> impl Iterator<Item = ArmId> + '_ {
        self.arms.keys().copied()
    }

    pub fn posterior(&self, arm: ArmId) -> Option<&ArmPosterior> {
        self.arms.get(&arm)
    }

    pub fn belief(&self, arm: ArmId) -> Option<Belief> {
        self.arms.get(&arm).map(ArmPosterior::belief)
    }

    /// `(arm, reward mean, reward sd)` over the active set, ascending by arm.
    pub fn active_moments(&self) -> Vec<(ArmId, f64, f64)> {
        self.active
            .iter()
            .map(|&a| {
                let (m, s) = self.arms[&a].reward_moments();
                (a, m, s)
            })
            .collect()
    }

    /// Absorbs feedback, one factorization per arm. Outcomes the view discards
    /// and arms no longer tracked are skipped.
    pub fn apply_feedback(&mut self, revealed: &[Revealed<'_>]) -> Result<()> {
        let mut per_arm: BTreeMap<ArmId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in revealed {
            if r.outcome >= self.view.outcome_limit || r.count == 0 {
                continue;
            }
            let Some(post) = self.arms.get(&r.arm) else { continue };
            let f = &post.model.factors;
            if r.prefix_sum.len() != r.outcome + 1 {
                return Err(Error::dim("revealed prefix", r.outcome + 1, r.prefix_sum.len()));
            }
            let j = f.dim();
            let entry = per_arm.entry(r.arm).or_insert_with(|| (vec![0.0; j], vec![0.0; j]));
            entry.0[r.outcome] += r.count as f64;
            entry.1[r.outcome] += f.whiten_entry(r.prefix_sum, r.outcome);
        }
        for (arm, (counts, sums)) in per_arm {
            let post = self.arms.get_mut(&arm).expect("arm checked above");
            post.belief.absorb(&counts, &sums)?;
            post.refresh();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{posterior_batch_oracle, Matrix};

    fn setup() -> (PriorParams, DelaySchedule, RewardSpec) {
        let v = Matrix::from_row_slice(3, 3, &[2.0, 0.4, 0.1, 0.4, 1.5, 0.3, 0.1, 0.3, 1.0]);
        let s = Matrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.5, 0.2, 0.5, 1.0]);
        let prior = PriorParams::new(Vector::from_column_slice(&[0.1, 0.2, 0.3]), s, v).unwrap();
        (prior, DelaySchedule::progressive(3), RewardSpec::sum(3, 1.0))
    }

    #[test]
    fn names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!(matches!("greedy".parse::<PolicyKind>(), Err(Error::UnknownPolicy { .. })));
    }

    #[test]
    fn view_definitions() {
        let (_, d, r) = setup();
        let delayed = FeedbackView::new(ViewMode::Delayed, &d, &r).unwrap();
        assert_eq!(delayed.delays.delays(), &[2, 2, 2]);
        let oracle = FeedbackView::new(ViewMode::Oracle, &d, &r).unwrap();
        assert_eq!(oracle.delays.delays(), &[0, 0, 0]);
        let dt = FeedbackView::new(ViewMode::DayTwoProxy, &d, &r).unwrap();
        assert_eq!(dt.usable_delays(), vec![Some(0), Some(1), None]);
        assert_eq!(dt.reward.r1().as_slice(), &[0.0, 1.0, 0.0]);
    }

    fn run(view: ViewMode, until: usize) -> (PolicyState, Vec<(Vector, usize)>) {
        let (prior, d, r) = setup();
        let view = FeedbackView::new(view, &d, &r).unwrap();
        let mut state = PolicyState::with_prior(view, &prior, &[0]).unwrap();
        let mut hist = History::default();
        let mut users = Vec::new();
        for t in 1..=until {
            let mut rec = BatchRecord::new(t);
            if t <= 2 {
                for u in 0..2 {
                    let y = Vector::from_column_slice(&[t as f64, u as f64 - 0.5, 0.3 * t as f64]);
                    rec.record(0, y.as_slice());
                    users.push((y, t));
                }
            }
            hist.push(rec);
            let arrivals = hist.newly_usable(&state.view, t);
            state.apply_feedback(&arrivals).unwrap();
        }
        (state, users)
    }

    #[test]
    fn delayed_view_withholds_partial_feedback() {
        let (prior, _, _) = setup();
        let (state, _) = run(ViewMode::Delayed, 2);
        let b = state.belief(0).unwrap();
        assert!((&b.mean - prior.mu1()).amax() < 1e-12);
        assert!((&b.cov - prior.sigma1()).amax() < 1e-12);
        let (state, _) = run(ViewMode::Progressive, 2);
        assert!((&state.belief(0).unwrap().mean - prior.mu1()).amax() > 1e-6);
    }

    #[test]
    fn views_agree_once_everything_is_visible() {
        let (prior, _, _) = setup();
        let (p, users) = run(ViewMode::Progressive, 6);
        let (d, _) = run(ViewMode::Delayed, 6);
        let (o, _) = run(ViewMode::Oracle, 6);
        let data: Vec<_> = users.iter().map(|(y, _)| (y.clone(), vec![true; 3])).collect();
        let ora = posterior_batch_oracle(&prior, &data).unwrap();
        for s in [&p, &d, &o] {
            let b = s.belief(0).unwrap();
            assert!((&b.mean - &ora.mean).amax() < 1e-9);
            assert!((&b.cov - &ora.cov).amax() < 1e-9);
        }
    }

    #[test]
    fn progressive_matches_oracle_on_censored_masks() {
        let (prior, d, _) = setup();
        for until in 1..=4 {
            let (p, users) = run(ViewMode::Progressive, until);
            let data: Vec<_> = users
                .iter()
                .map(|(y, tau)| (y.clone(), (0..3).map(|j| until + 1 > tau + d.delays()[j]).collect()))
                .collect();
            let ora = posterior_batch_oracle(&prior, &data).unwrap();
            let b = p.belief(0).unwrap();
            assert!((&b.mean - &ora.mean).amax() < 1e-9, "t = {until}");
        }
    }

    #[test]
    fn oracle_is_progressive_on_a_shifted_clock() {
        let (o, _) = run(ViewMode::Oracle, 2);
        let (p, _) = run(ViewMode::Progressive, 4);
        let (bo, bp) = (o.belief(0).unwrap(), p.belief(0).unwrap());
        assert!((&bo.mean - &bp.mean).amax() < 1e-9);
        assert!((&bo.cov - &bp.cov).amax() < 1e-9);
    }

    #[test]
    fn empty_feedback_is_a_no_op() {
        let (prior, d, r) = setup();
        let view = FeedbackView::new(ViewMode::Progressive, &d, &r).unwrap();
        let mut s = PolicyState::with_prior(view, &prior, &[0, 1]).unwrap();
        let before = s.belief(1).unwrap();
        s.apply_feedback(&[]).unwrap();
        assert_eq!(s.belief(1).unwrap(), before);
    }
}
