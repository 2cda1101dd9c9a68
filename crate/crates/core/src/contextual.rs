//! Linear-in-context extension.
//!
//! Each arm carries `θ ∈ R^{kJ}` split into `J` blocks of length `k`; a user
//! with context `x` has mean outcome `(xᵀθ⁽¹⁾, …, xᵀθ⁽ᴶ⁾)`. Whitening works as
//! in the plain model, with `φ(x, ℓ⁽ʲ⁾)` playing the role of `ℓ⁽ʲ⁾`.

use std::collections::BTreeMap;

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{ArmId, DelaySchedule};
use crate::error::{Error, Result};
use crate::gaussian::{
    cholesky_lower, check_symmetric, sample_belief, symmetrize, Belief, CholeskyFactors, Matrix, PriorParams,
    RewardSpec, Vector, SYMMETRY_TOL,
};
use crate::metrics::RegretRecord;
use crate::rng::{stream, Purpose, SimRng};

/// Prior over `θ ∈ R^{kJ}` plus the `J×J` noise covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualPrior {
    mu1: Vector,
    sigma1: Matrix,
    v: Matrix,
    k: usize,
}

impl ContextualPrior {
    pub fn new(mu1: Vector, sigma1: Matrix, v: Matrix, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "context dimension must be at least 1"));
        }
        let j = v.nrows();
        if v.ncols() != j || j == 0 {
            return Err(Error::dim("noise covariance", j, v.ncols()));
        }
        if mu1.len() != k * j {
            return Err(Error::dim("contextual prior mean", k * j, mu1.len()));
        }
        if sigma1.nrows() != k * j || sigma1.ncols() != k * j {
            return Err(Error::dim("contextual prior covariance", k * j, sigma1.nrows()));
        }
        for m in [&sigma1, &v] {
            check_symmetric(m, SYMMETRY_TOL)?;
            cholesky_lower(m).map_err(|minor| Error::NotPositiveDefinite { minor, dim: m.nrows() })?;
        }
        Ok(Self { mu1, sigma1, v, k })
    }

    /// The `k = 1` embedding of a plain prior.
    pub fn from_plain(prior: &PriorParams) -> Self {
        Self {
            mu1: prior.mu1().clone(),
            sigma1: prior.sigma1().clone(),
            v: prior.v().clone(),
            k: 1,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn num_outcomes(&self) -> usize {
        self.v.nrows()
    }
    pub fn mu1(&self) -> &Vector {
        &self.mu1
    }
    pub fn sigma1(&self) -> &Matrix {
        &self.sigma1
    }
    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn prior_belief(&self) -> Belief {
        Belief {
            mean: self.mu1.clone(),
            cov: self.sigma1.clone(),
        }
    }
}

/// Block vector whose `i`-th block is `x · ℓᵢ`.
pub fn phi(x: &[f64], ell: &[f64]) -> Vector {
    let k = x.len();
    Vector::from_fn(k * ell.len(), |r, _| x[r % k] * ell[r / k])
}

/// `(xᵀθ⁽¹⁾, …, xᵀθ⁽ᴶ⁾)`.
pub fn project(theta: &Vector, x: &[f64]) -> Result<Vector> {
    let k = x.len();
    if k == 0 || theta.len() % k != 0 {
        return Err(Error::dim("context projection", k.max(1), theta.len()));
    }
    let j = theta.len() / k;
    Ok(Vector::from_fn(j, |b, _| (0..k).map(|i| x[i] * theta[b * k + i]).sum()))
}

/// One whitened observation with its feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualObservation {
    pub phi: Vector,
    pub value: f64,
}

impl ContextualObservation {
    /// Whitens the length-`j + 1` prefix of a user's outcomes.
    pub fn new(factors: &CholeskyFactors, x: &[f64], prefix: &[f64], j: usize) -> Result<Self> {
        if prefix.len() != j + 1 || j >= factors.dim() {
            return Err(Error::dim("outcome prefix", j + 1, prefix.len()));
        }
        let row = factors.row(j);
        Ok(Self {
            phi: phi(x, row.as_slice()),
            value: factors.whiten_entry(prefix, j),
        })
    }
}

/// Precision-form update: `Σ′ = (Σ⁻¹ + Σ φφᵀ)⁻¹`, `μ′ = Σ′(Σ⁻¹μ + Σ φ𝒴)`.
pub fn contextual_posterior_update(belief: &Belief, obs: &[ContextualObservation]) -> Result<Belief> {
    if obs.is_empty() {
        return Ok(belief.clone());
    }
    let n = belief.dim();
    let fail = |what: &str| Error::Numerical {
        context: "contextual posterior update",
        detail: format!("{what} is not positive definite"),
    };
    let prior = Cholesky::new(symmetrize(&belief.cov)).ok_or_else(|| fail("belief covariance"))?;
    let mut precision = prior.inverse();
    let mut shift = prior.solve(&belief.mean);
    for o in obs {
        if o.phi.len() != n {
            return Err(Error::dim("context features", n, o.phi.len()));
        }
        precision.ger(1.0, &o.phi, &o.phi, 1.0);
        shift.axpy(o.value, &o.phi, 1.0);
    }
    let post = Cholesky::new(symmetrize(&precision)).ok_or_else(|| fail("posterior precision"))?;
    Ok(Belief {
        mean: post.solve(&shift),
        cov: symmetrize(&post.inverse()),
    })
}

/// A user seen by the contextual oracle: context, outcomes and visibility mask.
#[derive(Clone, Debug)]
pub struct ContextualUser {
    pub x: Vec<f64>,
    pub y: Vector,
    pub mask: Vec<bool>,
}

/// Test oracle: condition the joint Gaussian of `θ` and every visible entry.
pub fn contextual_batch_oracle(prior: &ContextualPrior, users: &[ContextualUser]) -> Result<Belief> {
    let (j, k) = (prior.num_outcomes(), prior.k());
    let mut picks = Vec::new();
    for (u, user) in users.iter().enumerate() {
        if user.x.len() != k || user.y.len() != j || user.mask.len() != j {
            return Err(Error::dim("oracle user", j, user.y.len()));
        }
        picks.extend((0..j).filter(|&i| user.mask[i]).map(|i| (u, i)));
    }
    if picks.is_empty() {
        return Ok(prior.prior_belief());
    }
    let n = picks.len();
    let mut h = Matrix::zeros(n, k * j);
    let mut z = Vector::zeros(n);
    let mut noise = Matrix::zeros(n, n);
    for (r, &(u, i)) in picks.iter().enumerate() {
        for c in 0..k {
            h[(r, i * k + c)] = users[u].x[c];
        }
        z[r] = users[u].y[i];
        for (c, &(u2, i2)) in picks.iter().enumerate() {
            if u2 == u {
                noise[(r, c)] = prior.v()[(i, i2)];
            }
        }
    }
    let cross = prior.sigma1() * h.transpose();
    let s = &h * &cross + noise;
    let chol = Cholesky::new(symmetrize(&s)).ok_or_else(|| Error::Numerical {
        context: "contextual oracle",
        detail: "observation covariance is singular".into(),
    })?;
    let mean = prior.mu1() + &cross * chol.solve(&(z - &h * prior.mu1()));
    let cov = prior.sigma1() - &cross * chol.solve(&cross.transpose());
    Ok(Belief {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Arm maximizing `R(xᵀθ′)` among given draws, lowest id on ties.
pub fn select_from_draws(draws: &[(ArmId, Vector)], x: &[f64], reward: &RewardSpec) -> Result<ArmId> {
    let mut best: Option<(ArmId, f64)> = None;
    for (a, theta) in draws {
        let r = reward.value(project(theta, x)?.as_slice());
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((*a, r));
        }
    }
    best.map(|(a, _)| a).ok_or_else(|| Error::param("beliefs", "no arms"))
}

/// One Thompson step: a full draw `θ′` per arm, then [`select_from_draws`].
pub fn contextual_ts_select<R: Rng + ?Sized>(
    beliefs: &[(ArmId, Belief)],
    x: &[f64],
    reward: &RewardSpec,
    rng: &mut R,
) -> Result<ArmId> {
    let draws = beliefs
        .iter()
        .map(|(a, b)| Ok((*a, sample_belief(b, rng)?)))
        .collect::<Result<Vec<_>>>()?;
    select_from_draws(&draws, x, reward)
}

/// Non-contextual counterpart: argmax of `R(θ′)` over full posterior draws.
pub fn ts_select_joint<R: Rng + ?Sized>(beliefs: &[(ArmId, Belief)], reward: &RewardSpec, rng: &mut R) -> Result<ArmId> {
    let mut best: Option<(ArmId, f64)> = None;
    for (a, b) in beliefs {
        let r = reward.value(sample_belief(b, rng)?.as_slice());
        if best.is_none_or(|(_, v)| r > v) {
            best = Some((*a, r));
        }
    }
    best.map(|(a, _)| a).ok_or_else(|| Error::param("beliefs", "no arms"))
}

/// Standard normal context of dimension `k`.
pub fn draw_context(k: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

/// Arms with latent `θ ∈ R^{kJ}` drawn from a contextual prior.
#[derive(Clone, Debug)]
pub struct ContextualEnv {
    thetas: Vec<Vector>,
    noise_l: Matrix,
    reward: RewardSpec,
    delays: DelaySchedule,
    k: usize,
}

impl ContextualEnv {
    pub fn sample(
        prior: &ContextualPrior,
        num_arms: usize,
        reward: RewardSpec,
        delays: DelaySchedule,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let j = prior.num_outcomes();
        if reward.dim() != j || delays.len() != j {
            return Err(Error::dim("contextual environment", j, reward.dim().max(delays.len())));
        }
        if num_arms == 0 {
            return Err(Error::param("num_arms", "need at least one arm"));
        }
        let thetas = (0..num_arms)
            .map(|_| sample_belief(&prior.prior_belief(), rng))
            .collect::<Result<Vec<_>>>()?;
        let noise_l = cholesky_lower(prior.v()).map_err(|minor| Error::NotPositiveDefinite { minor, dim: j })?;
        Ok(Self {
            thetas,
            noise_l,
            reward,
            delays,
            k: prior.k(),
        })
    }

    pub fn num_arms(&self) -> usize {
        self.thetas.len()
    }

    pub fn mean_reward(&self, arm: ArmId, x: &[f64]) -> Result<f64> {
        Ok(self.reward.value(project(&self.thetas[arm], x)?.as_slice()))
    }

    /// Per-user optimal arm `argmax_a R(xᵀθ_a)`, lowest id on ties.
    pub fn optimal_arm(&self, x: &[f64]) -> Result<ArmId> {
        let draws: Vec<(ArmId, Vector)> = self.thetas.iter().cloned().enumerate().collect();
        select_from_draws(&draws, x, &self.reward)
    }

    /// `Y ~ N(xᵀθ, V)`; always consumes `J` normals.
    pub fn draw(&self, arm: ArmId, x: &[f64], rng: &mut SimRng) -> Result<Vector> {
        let j = self.noise_l.nrows();
        let z = Vector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(project(&self.thetas[arm], x)? + &self.noise_l * z)
    }
}

struct PendingUser {
    arm: ArmId,
    tau: usize,
    x: Vec<f64>,
    y: Vector,
}

/// Contextual Thompson sampling over `horizon` batches of `m` users, scored
/// against the per-user optimal arm. Streams are derived from `(seed, replication)`.
pub fn run_contextual_episode(
    env: &ContextualEnv,
    prior: &ContextualPrior,
    horizon: usize,
    m: usize,
    seed: u64,
    replication: u64,
) -> Result<RegretRecord> {
    if prior.k() != env.k {
        return Err(Error::dim("context dimension", env.k, prior.k()));
    }
    let label = "contextual";
    let mut ctx_rng = stream(seed, replication, label, Purpose::Contexts);
    let mut out_rng = stream(seed, replication, label, Purpose::Outcomes);
    let mut pol_rng = stream(seed, replication, label, Purpose::Policy);
    let factors = CholeskyFactors::jittered(prior.v())?;
    let prefix_delays = env.delays.prefix_delays();
    let mut beliefs: Vec<(ArmId, Belief)> = (0..env.num_arms()).map(|a| (a, prior.prior_belief())).collect();
    let mut users: Vec<PendingUser> = Vec::new();
    let mut deltas = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut gap = 0.0;
        for _ in 0..m {
            let x = draw_context(env.k, &mut ctx_rng);
            let arm = contextual_ts_select(&beliefs, &x, &env.reward, &mut pol_rng)?;
            let star = env.optimal_arm(&x)?;
            let y = env.draw(arm, &x, &mut out_rng)?;
            let y_star = env.draw(star, &x, &mut out_rng)?;
            let r_star = if star == arm { env.reward.value(y.as_slice()) } else { env.reward.value(y_star.as_slice()) };
            gap += r_star - env.reward.value(y.as_slice());
            users.push(PendingUser { arm, tau: t, x, y });
        }
        deltas.push(gap / m as f64);

        let mut obs: BTreeMap<ArmId, Vec<ContextualObservation>> = BTreeMap::new();
        for u in &users {
            for (j, &d) in prefix_delays.iter().enumerate() {
                if u.tau + d == t {
                    obs.entry(u.arm)
                        .or_default()
                        .push(ContextualObservation::new(&factors, &u.x, &u.y.as_slice()[..=j], j)?);
                }
            }
        }
        for (arm, o) in obs {
            beliefs[arm].1 = contextual_posterior_update(&beliefs[arm].1, &o)?;
        }
        let d_max = env.delays.d_max();
        users.retain(|u| u.tau + d_max > t);
    }
    Ok(RegretRecord::from_deltas(replication as usize, deltas))
}
