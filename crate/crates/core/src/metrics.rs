//! Value of progressive feedback, regret bookkeeping and the regret-ratio curve.

use nalgebra::Cholesky;

use crate::env::{replay_sample, DelaySchedule, TraceDataset};
use crate::error::{Error, Result};
use crate::gaussian::{
    cholesky_jittered, lower_inverse, symmetrize, whitened_reward, Matrix, PriorParams, RewardSpec, Vector,
    WhitenedBelief,
};
use crate::rng::SimRng;

/// Inputs of a VoPF evaluation at batch `t`.
#[derive(Clone, Debug)]
pub struct VopfQuery<'a> {
    pub prior: &'a PriorParams,
    pub reward: &'a RewardSpec,
    pub delays: &'a DelaySchedule,
    pub m: usize,
    pub t: usize,
}

/// Rows `A` with `AᵀA = E_Sᵀ V_SS⁻¹ E_S`: the information one user carries
/// when only the outcomes in `mask` are seen. For a prefix mask these are the
/// leading rows of `L⁻¹`.
fn information_rows(l_inv: &Matrix, v: &Matrix, mask: &[bool]) -> Result<Matrix> {
    let j = mask.len();
    let seen: Vec<usize> = (0..j).filter(|&i| mask[i]).collect();
    let k = seen.len();
    if seen.iter().enumerate().all(|(a, &b)| a == b) {
        return Ok(l_inv.rows(0, k).into_owned());
    }
    let v_ss = Matrix::from_fn(k, k, |a, b| v[(seen[a], seen[b])]);
    let (l_s, _) = cholesky_jittered(&v_ss)?;
    let l_s_inv = lower_inverse(&l_s);
    let mut out = Matrix::zeros(k, j);
    for (c, &col) in seen.iter().enumerate() {
        out.set_column(col, &l_s_inv.column(c));
    }
    Ok(out)
}

/// `r1ᵀ Cov(θ | data) r1` where `data` groups users by visibility mask.
///
/// Uses the covariance form `Σ − ΣGᵀ(I + GΣGᵀ)⁻¹GΣ`, so a singular prior
/// covariance never needs inverting.
fn reward_variance(prior: &PriorParams, l_inv: &Matrix, r1: &Vector, groups: &[(Vec<bool>, usize)]) -> Result<f64> {
    let j = prior.dim();
    let mut blocks = Vec::new();
    for (mask, users) in groups {
        if *users == 0 || !mask.iter().any(|&b| b) {
            continue;
        }
        blocks.push(information_rows(l_inv, prior.v(), mask)? * (*users as f64).sqrt());
    }
    let sigma = prior.sigma1();
    let s = sigma * r1;
    let prior_var = r1.dot(&s);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    if rows == 0 {
        return Ok(prior_var);
    }
    let mut g = Matrix::zeros(rows, j);
    let mut at = 0;
    for b in &blocks {
        g.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    let k = symmetrize(&(Matrix::identity(rows, rows) + &g * sigma * g.transpose()));
    let gs = &g * &s;
    let chol = Cholesky::new(k).ok_or_else(|| Error::Numerical {
        context: "VoPF",
        detail: "I + GΣGᵀ is not positive definite".into(),
    })?;
    Ok(prior_var - gs.dot(&chol.solve(&gs)))
}

/// `½ log[Var(R̄ | delayed-only) / Var(R̄ | censored history)]` in nats.
///
/// The numerator conditions on users of batches `t′ < t − d_max`, fully
/// revealed; the denominator on every cell `(t′, j)` with `t > t′ + d_j`.
pub fn vopf_general(q: &VopfQuery<'_>) -> Result<f64> {
    let j = q.prior.dim();
    if q.t == 0 {
        return Err(Error::param("t", "batches are numbered from 1"));
    }
    if q.m == 0 {
        return Err(Error::param("m", "batch size must be at least 1"));
    }
    if q.delays.len() != j || q.reward.dim() != j {
        return Err(Error::dim("VoPF query", j, q.delays.len().max(q.reward.dim())));
    }
    let factors = q.prior.noise_factors()?;
    let l_inv = factors.l_inv();
    let r1 = q.reward.r1();
    let d_max = q.delays.d_max();

    let full = q.m * q.t.saturating_sub(d_max + 1);
    let num = reward_variance(q.prior, l_inv, r1, &[(vec![true; j], full)])?;

    let mut groups: Vec<(Vec<bool>, usize)> = Vec::new();
    for tp in 1..q.t {
        let mask: Vec<bool> = (0..j).map(|i| q.delays.visible(tp, q.t, i)).collect();
        match groups.iter_mut().find(|(m, _)| *m == mask) {
            Some(g) => g.1 += q.m,
            None => groups.push((mask, q.m)),
        }
    }
    let den = reward_variance(q.prior, l_inv, r1, &groups)?;
    if !(den > 0.0) {
        return Err(Error::Numerical {
            context: "VoPF",
            detail: format!("posterior reward variance {den} is not positive"),
        });
    }
    Ok((0.5 * (num / den).ln()).max(0.0))
}

/// VoPF for `t = 1..=t_max`.
pub fn vopf_curve(
    prior: &PriorParams,
    reward: &RewardSpec,
    delays: &DelaySchedule,
    m: usize,
    t_max: usize,
) -> Result<Vec<f64>> {
    (1..=t_max)
        .map(|t| {
            vopf_general(&VopfQuery {
                prior,
                reward,
                delays,
                m,
                t,
            })
        })
        .collect()
}

fn check_two_outcome(rho: f64, sigma_r_sq: f64, t: usize, d_max: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::param("rho", format!("{rho} outside [0, 1]")));
    }
    if !(sigma_r_sq >= 0.0) || !sigma_r_sq.is_finite() {
        return Err(Error::param("sigma_r_sq", format!("{sigma_r_sq} must be non-negative")));
    }
    if t < d_max {
        return Err(Error::param("t", format!("closed form holds for t >= d_max = {d_max}, got {t}")));
    }
    Ok(())
}

/// Closed form for two outcomes with `Σ₁ = [[1, ρ], [ρ, 1]]`, `V = σ²Σ₁`,
/// delays `(0, d_max)` and reward `Y⁽²⁾`:
/// `½ log[(σ² + m(t − d_max) + 1) / (σ² + m(t − d_max) + 1 − ρ²)]`.
pub fn vopf_two_outcome(rho: f64, sigma_r_sq: f64, m: usize, t: usize, d_max: usize) -> Result<f64> {
    check_two_outcome(rho, sigma_r_sq, t, d_max)?;
    let a = sigma_r_sq + (m * (t - d_max)) as f64 + 1.0;
    Ok(0.5 * (a / (a - rho * rho)).ln())
}

/// Exact value of [`vopf_general`] in the same two-outcome setting.
///
/// With `n = m·max(0, t − d_max − 1)` fully revealed users and
/// `k = m(t − 1) − n` users whose first outcome alone is visible, the ratio of
/// variances is `(σ² + n + k) / (σ² + n + k − ρ²k)`.
pub fn vopf_two_outcome_exact(rho: f64, sigma_r_sq: f64, m: usize, t: usize, d_max: usize) -> Result<f64> {
    check_two_outcome(rho, sigma_r_sq, t.max(d_max), d_max)?;
    if t == 0 {
        return Err(Error::param("t", "batches are numbered from 1"));
    }
    let n = (m * t.saturating_sub(d_max + 1)) as f64;
    let k = (m * (t - 1)) as f64 - n;
    let a = sigma_r_sq + n + k;
    Ok(0.5 * (a / (a - rho * rho * k)).ln())
}

/// Per-batch regret of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretRecord {
    pub replication: usize,
    pub deltas: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretRecord {
    pub fn from_deltas(replication: usize, deltas: Vec<f64>) -> Self {
        let cumulative = deltas
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        Self {
            replication,
            deltas,
            cumulative,
        }
    }

    pub fn horizon(&self) -> usize {
        self.deltas.len()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// `(1/m) Σ_u [R(Y_u(A*)) − R(Y_u(A_u))]` from per-user realized outcomes.
pub fn instantaneous_regret(reward: &RewardSpec, assigned: &[Vec<f64>], optimal: &[Vec<f64>]) -> Result<f64> {
    if assigned.len() != optimal.len() || assigned.is_empty() {
        return Err(Error::dim("regret users", assigned.len().max(1), optimal.len()));
    }
    let gap: f64 = assigned
        .iter()
        .zip(optimal)
        .map(|(a, o)| reward.value(o) - reward.value(a))
        .sum();
    Ok(gap / assigned.len() as f64)
}

/// Sample mean and standard error `sd/√n` (`NaN` error for fewer than two values).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Pointwise mean and standard error across replications.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSummary {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl CurveSummary {
    pub fn from_curves<'a>(curves: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let curves: Vec<&[f64]> = curves.into_iter().collect();
        let len = curves.first().map_or(0, |c| c.len());
        if let Some(bad) = curves.iter().find(|c| c.len() != len) {
            return Err(Error::dim("curve length", len, bad.len()));
        }
        let (mut mean, mut stderr) = (Vec::with_capacity(len), Vec::with_capacity(len));
        let mut column = Vec::with_capacity(curves.len());
        for t in 0..len {
            column.clear();
            column.extend(curves.iter().map(|c| c[t]));
            let (m, s) = mean_stderr(&column);
            mean.push(m);
            stderr.push(s);
        }
        Ok(Self { mean, stderr })
    }

    pub fn cumulative(records: &[RegretRecord]) -> Result<Self> {
        Self::from_curves(records.iter().map(|r| r.cumulative.as_slice()))
    }

    pub fn per_batch(records: &[RegretRecord]) -> Result<Self> {
        Self::from_curves(records.iter().map(|r| r.deltas.as_slice()))
    }
}

/// `log(mean delayed Δ_t / mean progressive Δ_t)` per batch; `None` where
/// either mean is not positive.
pub fn regret_ratio_log(progressive: &[RegretRecord], delayed: &[RegretRecord]) -> Result<Vec<Option<f64>>> {
    let p = CurveSummary::per_batch(progressive)?;
    let d = CurveSummary::per_batch(delayed)?;
    if p.mean.len() != d.mean.len() {
        return Err(Error::dim("regret ratio batches", p.mean.len(), d.mean.len()));
    }
    Ok(p.mean
        .iter()
        .zip(&d.mean)
        .map(|(&a, &b)| (a > 0.0 && b > 0.0).then(|| (b / a).ln()))
        .collect())
}

/// Mean absolute error of the posterior mean reward after `m` users per arm
/// have each revealed their first `days` outcomes, against each arm's
/// empirical mean reward. Returns `(mae, stderr)` over arms.
pub fn predictive_error(
    prior: &PriorParams,
    reward: &RewardSpec,
    eval: &TraceDataset,
    m: usize,
    days: usize,
    rng: &mut SimRng,
) -> Result<(f64, f64)> {
    let j = prior.dim();
    if eval.num_outcomes() != j || reward.dim() != j {
        return Err(Error::dim("predictive error", j, eval.num_outcomes()));
    }
    if days > j {
        return Err(Error::param("days", format!("{days} exceeds {j} outcomes")));
    }
    let factors = prior.noise_factors()?;
    let base = WhitenedBelief::from_belief(&prior.prior_belief(), &factors)?;
    let rw = whitened_reward(reward, &factors);
    let mut errors = Vec::with_capacity(eval.arms().len());
    for arm in eval.arms() {
        let truth = arm.traces().map(|y| reward.value(y)).sum::<f64>() / arm.count() as f64;
        let mut counts = vec![0.0; j];
        let mut sums = vec![0.0; j];
        for _ in 0..m {
            let y = replay_sample(eval, &arm.arm_id, rng)?;
            for k in 0..days {
                counts[k] += 1.0;
                sums[k] += factors.whiten_entry(&y[..=k], k);
            }
        }
        let mut post = base.clone();
        post.absorb(&counts, &sums)?;
        let (mean, _) = post.reward_moments(reward.r0(), &rw);
        errors.push((mean - truth).abs());
    }
    Ok(mean_stderr(&errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_two_outcome, SyntheticEnvSpec, TwoOutcomeSpec};
    use crate::gaussian::posterior_batch_oracle;
    use crate::rng::seeded;

    fn two_outcome(rho: f64, s2: f64, d_max: usize) -> (PriorParams, RewardSpec, DelaySchedule) {
        let spec = TwoOutcomeSpec {
            rho,
            sigma_r_sq: s2,
            d_max,
            num_arms: 2,
        };
        let setup = make_two_outcome(&spec, &mut seeded(0)).unwrap();
        (setup.prior, setup.reward, setup.delays)
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(vopf_two_outcome(0.0, 1.0, 10, 5, 3).unwrap(), 0.0);
        assert!((vopf_two_outcome(1.0, 1.0, 1, 4, 4).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        let mut last = -1.0;
        for rho in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let v = vopf_two_outcome(rho, 1.0, 10, 12, 10).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(vopf_two_outcome(0.5, 1.0, 10, 2, 3).is_err());
    }

    #[test]
    fn pure_delay_has_no_value() {
        let spec = SyntheticEnvSpec::new(0.8, 5, 10, 2).unwrap();
        let prior = PriorParams::new(Vector::zeros(5), spec.sigma1(), spec.noise_cov()).unwrap();
        let r = RewardSpec::sum(5, 1.0 / spec.reward_scale());
        let d = DelaySchedule::uniform(5, 4);
        for v in vopf_curve(&prior, &r, &d, 10, 12).unwrap() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn general_form_matches_exact_two_outcome_value() {
        for rho in [0.0, 0.25, 0.5, 0.75, 0.95] {
            for m in [1, 10, 100] {
                let (prior, r, d) = two_outcome(rho, 1.0, 4);
                for t in 1..=25 {
                    let q = VopfQuery {
                        prior: &prior,
                        reward: &r,
                        delays: &d,
                        m,
                        t,
                    };
                    let got = vopf_general(&q).unwrap();
                    let want = vopf_two_outcome_exact(rho, 1.0, m, t, 4).unwrap();
                    assert!((got - want).abs() < 1e-9, "rho {rho} m {m} t {t}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn variance_matches_batch_oracle() {
        let (prior, r, d) = two_outcome(0.6, 2.0, 2);
        let t = 4;
        let users: Vec<_> = (1..t)
            .flat_map(|tp| {
                let mask: Vec<bool> = (0..2).map(|j| d.visible(tp, t, j)).collect();
                std::iter::repeat_n((Vector::zeros(2), mask), 3)
            })
            .collect();
        let post = posterior_batch_oracle(&prior, &users).unwrap();
        let l_inv = prior.noise_factors().unwrap().l_inv().clone();
        let groups: Vec<_> = users.iter().map(|(_, m)| (m.clone(), 1)).collect();
        let var = reward_variance(&prior, &l_inv, r.r1(), &groups).unwrap();
        assert!((var - post.cov[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn non_prefix_masks_use_the_marginal_block() {
        let v = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.3, 0.5, 1.0, 0.2, 0.3, 0.2, 1.5]);
        let prior = PriorParams::new(Vector::zeros(3), Matrix::identity(3, 3), v.clone()).unwrap();
        let l_inv = prior.noise_factors().unwrap().l_inv().clone();
        let mask = vec![true, false, true];
        let rows = information_rows(&l_inv, &v, &mask).unwrap();
        let info = rows.transpose() * &rows;
        let vs = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]).try_inverse().unwrap();
        let idx = [0, 2];
        for a in 0..2 {
            for b in 0..2 {
                assert!((info[(idx[a], idx[b])] - vs[(a, b)]).abs() < 1e-12);
            }
        }
        assert!(info.row(1).amax() < 1e-15);
    }

    #[test]
    fn vopf_drops_after_the_last_outcome_lands() {
        let j = 25;
        let spec = SyntheticEnvSpec::new(0.8, j, 10, 20).unwrap();
        let prior = PriorParams::new(Vector::zeros(j), spec.sigma1(), spec.noise_cov()).unwrap();
        let r = RewardSpec::sum(j, 1.0 / spec.reward_scale());
        let c = vopf_curve(&prior, &r, &DelaySchedule::progressive(j), 10, 30).unwrap();
        assert!(c[25] < c[24], "VoPF(26) = {} vs VoPF(25) = {}", c[25], c[24]);
        assert!(c.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn regret_helpers() {
        let r = RewardSpec::unit(1, 0);
        let same = vec![vec![1.0], vec![2.0]];
        assert_eq!(instantaneous_regret(&r, &same, &same).unwrap(), 0.0);
        let gap = instantaneous_regret(&r, &[vec![0.0], vec![1.0]], &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(gap, 0.5);

        let rec = RegretRecord::from_deltas(0, vec![1.0, 0.5, 0.25]);
        assert_eq!(rec.cumulative, vec![1.0, 1.5, 1.75]);

        let runs = vec![rec.clone(), RegretRecord::from_deltas(1, vec![3.0, 0.5, 0.75])];
        assert!(regret_ratio_log(&runs, &runs).unwrap().iter().all(|v| *v == Some(0.0)));
        let doubled: Vec<_> = runs
            .iter()
            .map(|r| RegretRecord::from_deltas(r.replication, r.deltas.iter().map(|d| 2.0 * d).collect()))
            .collect();
        for v in regret_ratio_log(&runs, &doubled).unwrap() {
            assert!((v.unwrap() - 2f64.ln()).abs() < 1e-12);
        }
        let zero = vec![RegretRecord::from_deltas(0, vec![0.0, 1.0, 1.0])];
        assert_eq!(regret_ratio_log(&zero, &zero).unwrap()[0], None);
        let short = vec![RegretRecord::from_deltas(0, vec![1.0])];
        assert!(regret_ratio_log(&runs, &short).is_err());

        let s = CurveSummary::per_batch(&runs).unwrap();
        assert_eq!(s.mean[0], 2.0);
        assert!((s.stderr[0] - 1.0).abs() < 1e-12);
    }
}
