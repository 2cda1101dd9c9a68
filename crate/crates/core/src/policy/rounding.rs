use std::collections::BTreeMap;

use crate::env::ArmId;
use crate::error::{Error, Result};

/// Probability of assigning a user to each arm. `granularity = Some(m)` marks a
/// rounded allocation whose entries are multiples of `1/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationProbs {
    pub probs: BTreeMap<ArmId, f64>,
    pub granularity: Option<usize>,
}

impl AllocationProbs {
    pub fn new(probs: BTreeMap<ArmId, f64>) -> Self {
        Self {
            probs,
            granularity: None,
        }
    }

    pub fn get(&self, arm: ArmId) -> f64 {
        self.probs.get(&arm).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Highest probability, lowest id on ties.
    pub fn argmax(&self) -> Option<ArmId> {
        let mut best: Option<(ArmId, f64)> = None;
        for (&a, &p) in &self.probs {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((a, p));
            }
        }
        best.map(|(a, _)| a)
    }

    /// User counts `m · p` for a rounded allocation.
    pub fn counts(&self, m: usize) -> BTreeMap<ArmId, usize> {
        self.probs
            .iter()
            .map(|(&a, &p)| (a, (p * m as f64).round() as usize))
            .collect()
    }
}

/// `q` with `p ∈ ((q-1)/m, q/m]`, treating values within 1e-9 of a multiple as exact.
fn round_up_count(p: f64, m: usize) -> usize {
    let x = p * m as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Rounds every non-argmax probability up to a multiple of `1/m` and gives the
/// argmax arm the residual. Zero probabilities stay zero.
pub fn round_probs(p: &AllocationProbs, m: usize) -> Result<AllocationProbs> {
    if m == 0 {
        return Err(Error::param("m", "batch size must be at least 1"));
    }
    if p.probs.values().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("p", "probabilities must be finite and non-negative"));
    }
    if (p.total() - 1.0).abs() > 1e-9 {
        return Err(Error::param("p", format!("probabilities sum to {}", p.total())));
    }
    let top = p.argmax().ok_or_else(|| Error::param("p", "no arms"))?;
    let mut counts = BTreeMap::new();
    let mut used = 0usize;
    for (&a, &v) in &p.probs {
        if a != top {
            let q = round_up_count(v, m);
            used += q;
            counts.insert(a, q);
        }
    }
    if used > m {
        return Err(Error::RoundingInfeasible {
            residual: (m as f64 - used as f64) / m as f64,
            m,
            arms: p.probs.len(),
        });
    }
    counts.insert(top, m - used);
    Ok(AllocationProbs {
        probs: counts.into_iter().map(|(a, q)| (a, q as f64 / m as f64)).collect(),
        granularity: Some(m),
    })
}
