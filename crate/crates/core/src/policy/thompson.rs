//! Thompson sampling, its rounded variant and sequential elimination.
//!
//! The reward of an arm is affine in θ, so drawing `R(θ′)` from the scalar
//! marginal `N(r0 + r1ᵀμ, r1ᵀΣr1)` has the same law as drawing θ′ and mapping
//! it through `R`. All rules below use the scalar form.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::rounding::{round_probs, AllocationProbs};
use super::PolicyState;
use crate::env::ArmId;
use crate::error::{Error, Result};

/// Monte-Carlo draws used for allocation probabilities unless configured otherwise.
pub const DEFAULT_N_MC: usize = 2048;

/// One joint posterior draw of every arm's reward; returns the argmax (lowest id on ties).
fn draw_argmax<R: Rng + ?Sized>(moments: &[(ArmId, f64, f64)], rng: &mut R) -> ArmId {
    let mut best = moments[0].0;
    let mut best_r = f64::NEG_INFINITY;
    for &(a, m, s) in moments {
        let z: f64 = rng.sample(StandardNormal);
        let r = m + s * z;
        if r > best_r {
            best = a;
            best_r = r;
        }
    }
    best
}

fn nonempty(state: &PolicyState) -> Result<Vec<(ArmId, f64, f64)>> {
    let moments = state.active_moments();
    if moments.is_empty() {
        return Err(Error::param("active arms", "policy has no active arms"));
    }
    Ok(moments)
}

/// Independent Thompson draw per user.
pub fn ts_assign<R: Rng + ?Sized>(state: &PolicyState, m: usize, rng: &mut R) -> Result<Vec<ArmId>> {
    let moments = nonempty(state)?;
    Ok((0..m).map(|_| draw_argmax(&moments, rng)).collect())
}

/// Monte-Carlo estimate of the probability that each active arm is the argmax.
pub fn ts_probs<R: Rng + ?Sized>(state: &PolicyState, n_mc: usize, rng: &mut R) -> Result<AllocationProbs> {
    if n_mc == 0 {
        return Err(Error::param("n_mc", "must be at least 1"));
    }
    let moments = nonempty(state)?;
    let mut wins: BTreeMap<ArmId, usize> = moments.iter().map(|&(a, _, _)| (a, 0)).collect();
    for _ in 0..n_mc {
        *wins.get_mut(&draw_argmax(&moments, rng)).expect("active arm") += 1;
    }
    Ok(AllocationProbs::new(
        wins.into_iter().map(|(a, w)| (a, w as f64 / n_mc as f64)).collect(),
    ))
}

/// Rounded Thompson sampling: exactly `m · p_rnd(a)` users per arm, in
/// contiguous blocks by ascending arm id.
pub fn ts_rnd_assign<R: Rng + ?Sized>(
    state: &PolicyState,
    m: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<ArmId>> {
    let p = ts_probs(state, n_mc, rng)?;
    let rounded = round_probs(&p, m)?;
    let mut out = Vec::with_capacity(m);
    for (a, q) in rounded.counts(m) {
        out.extend(std::iter::repeat_n(a, q));
    }
    debug_assert_eq!(out.len(), m);
    Ok(out)
}

/// One step of sequential elimination: drop active arms whose optimal-arm
/// probability falls below `threshold` (never the last one), then spread the
/// `m` users evenly over the survivors starting at a random offset.
pub fn seq_elim_step<R: Rng + ?Sized>(
    state: &mut PolicyState,
    threshold: f64,
    n_mc: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<ArmId>> {
    let n_active = state.active().len();
    if n_active == 0 {
        return Err(Error::param("active arms", "policy has no active arms"));
    }
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", format!("{threshold} must be positive")));
    }
    if n_active > 1 {
        if threshold >= 1.0 / n_active as f64 {
            return Err(Error::param(
                "threshold",
                format!("{threshold} must be below 1/{n_active}"),
            ));
        }
        let p = ts_probs(state, n_mc, rng)?;
        let best = p.argmax().expect("non-empty");
        for (&a, &pa) in &p.probs {
            if pa < threshold && a != best {
                state.eliminate(a);
            }
        }
    }
    let survivors: Vec<ArmId> = state.active().iter().copied().collect();
    let offset = rng.random_range(0..survivors.len());
    Ok((0..m).map(|i| survivors[(offset + i) % survivors.len()]).collect())
}
