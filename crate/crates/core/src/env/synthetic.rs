//! Gaussian environments: the equicorrelated synthetic model and the two-outcome
//! surrogate model.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ArmId, ArmLatent, DelaySchedule, Environment};
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_jittered, Matrix, PriorParams, RewardSpec, Vector};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEnvSpec {
    pub alpha: f64,
    pub j_outcomes: usize,
    pub batch_size: usize,
    pub num_arms: usize,
}

impl SyntheticEnvSpec {
    pub fn new(alpha: f64, j_outcomes: usize, batch_size: usize, num_arms: usize) -> Result<Self> {
        let spec = Self {
            alpha,
            j_outcomes,
            batch_size,
            num_arms,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", format!("{} is outside [0, 1)", self.alpha)));
        }
        if self.j_outcomes == 0 {
            return Err(Error::param("j_outcomes", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if self.num_arms == 0 {
            return Err(Error::param("num_arms", "must be at least 1"));
        }
        Ok(())
    }

    /// `c = sqrt((1 - α²) J + α² J²)`, so that the mean reward has unit variance.
    pub fn reward_scale(&self) -> f64 {
        let a2 = self.alpha * self.alpha;
        let j = self.j_outcomes as f64;
        ((1.0 - a2) * j + a2 * j * j).sqrt()
    }

    /// `(1 - α²) I + α² 11ᵀ`.
    pub fn sigma1(&self) -> Matrix {
        let j = self.j_outcomes;
        let a2 = self.alpha * self.alpha;
        Matrix::from_fn(j, j, |r, c| if r == c { 1.0 } else { a2 })
    }

    pub fn noise_cov(&self) -> Matrix {
        Matrix::identity(self.j_outcomes, self.j_outcomes) * self.batch_size as f64
    }
}

/// Two outcomes with correlation `rho`, reward `Y²` revealed after `d_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoOutcomeSpec {
    pub rho: f64,
    pub sigma_r_sq: f64,
    pub d_max: usize,
    pub num_arms: usize,
}

impl TwoOutcomeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::param("rho", format!("{} is outside [0, 1]", self.rho)));
        }
        if !(self.sigma_r_sq > 0.0) {
            return Err(Error::param("sigma_r_sq", "must be positive"));
        }
        if self.num_arms == 0 {
            return Err(Error::param("num_arms", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sigma1(&self) -> Matrix {
        Matrix::from_row_slice(2, 2, &[1.0, self.rho, self.rho, 1.0])
    }
}

/// Everything a policy and the harness need from a Gaussian environment.
#[derive(Clone, Debug)]
pub struct SyntheticSetup {
    pub prior: PriorParams,
    pub arms: Vec<ArmLatent>,
    pub reward: RewardSpec,
    pub delays: DelaySchedule,
}

impl SyntheticSetup {
    pub fn into_env(self) -> Result<GaussianEnv> {
        GaussianEnv::new(self.arms, self.prior.v(), self.reward, self.delays)
    }
}

fn draw_arms(
    n: usize,
    mean: &Vector,
    cov: &Matrix,
    reward: &RewardSpec,
    rng: &mut SimRng,
) -> Result<Vec<ArmLatent>> {
    let (l, _) = cholesky_jittered(cov)?;
    Ok((0..n)
        .map(|a| {
            let z = Vector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            ArmLatent::new(a, None, mean + &l * z, reward)
        })
        .collect())
}

/// Draws `θ_a ~ N(0, Σ₁)` for every arm and returns the correctly specified prior.
pub fn make_synthetic(spec: &SyntheticEnvSpec, rng: &mut SimRng) -> Result<SyntheticSetup> {
    spec.validate()?;
    let j = spec.j_outcomes;
    let prior = PriorParams::new(Vector::zeros(j), spec.sigma1(), spec.noise_cov())?;
    let reward = RewardSpec::sum(j, 1.0 / spec.reward_scale());
    let arms = draw_arms(spec.num_arms, prior.mu1(), prior.sigma1(), &reward, rng)?;
    Ok(SyntheticSetup {
        prior,
        arms,
        reward,
        delays: DelaySchedule::progressive(j),
    })
}

/// Two-outcome environment. At `rho = 1` both covariances are singular; the
/// prior is repaired with diagonal jitter.
pub fn make_two_outcome(spec: &TwoOutcomeSpec, rng: &mut SimRng) -> Result<SyntheticSetup> {
    spec.validate()?;
    let sigma1 = spec.sigma1();
    let v = &sigma1 * spec.sigma_r_sq;
    let prior = PriorParams::with_psd_repair(Vector::zeros(2), sigma1, v)?;
    let reward = RewardSpec::unit(2, 1);
    let arms = draw_arms(spec.num_arms, prior.mu1(), prior.sigma1(), &reward, rng)?;
    Ok(SyntheticSetup {
        prior,
        arms,
        reward,
        delays: DelaySchedule::new(vec![0, spec.d_max])?,
    })
}

/// `n` independent draws of `Y ~ N(θ_a, V)`.
pub fn sample_outcomes(arm: &ArmLatent, v: &Matrix, n: usize, rng: &mut SimRng) -> Result<Vec<Vector>> {
    let (l, _) = cholesky_jittered(v)?;
    let j = arm.theta.len();
    Ok((0..n)
        .map(|_| {
            let z = Vector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal));
            &arm.theta + &l * z
        })
        .collect())
}

/// Arms with Gaussian outcome noise. Every draw consumes exactly `J` normals.
#[derive(Clone, Debug)]
pub struct GaussianEnv {
    arms: Vec<ArmLatent>,
    active: Vec<ArmId>,
    noise_l: Matrix,
    reward: RewardSpec,
    delays: DelaySchedule,
}

impl GaussianEnv {
    pub fn new(arms: Vec<ArmLatent>, v: &Matrix, reward: RewardSpec, delays: DelaySchedule) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::param("arms", "environment needs at least one arm"));
        }
        for (i, a) in arms.iter().enumerate() {
            if a.arm_id != i {
                return Err(Error::param("arms", "arm ids must be 0..n in order"));
            }
        }
        let (noise_l, _) = cholesky_jittered(v)?;
        Ok(Self {
            active: (0..arms.len()).collect(),
            arms,
            noise_l,
            reward,
            delays,
        })
    }

    pub fn arms(&self) -> &[ArmLatent] {
        &self.arms
    }
}

impl Environment for GaussianEnv {
    fn num_outcomes(&self) -> usize {
        self.delays.len()
    }
    fn reward(&self) -> &RewardSpec {
        &self.reward
    }
    fn delays(&self) -> &DelaySchedule {
        &self.delays
    }
    fn active_arms(&self) -> &[ArmId] {
        &self.active
    }
    fn mean_reward(&self, arm: ArmId) -> f64 {
        self.arms[arm].r_bar
    }
    fn draw(&self, arm: ArmId, rng: &mut SimRng, out: &mut [f64]) {
        let j = self.num_outcomes();
        let mut z = vec![0.0; j];
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let theta = &self.arms[arm].theta;
        for r in 0..j {
            let mut s = theta[r];
            for (c, zc) in z.iter().enumerate().take(r + 1) {
                s += self.noise_l[(r, c)] * zc;
            }
            out[r] = s;
        }
    }
}
