//! Gaussian beliefs over the latent mean-outcome vector, Cholesky whitening of
//! correlated outcome noise, and exact precision-form posterior updates.
//!
//! Outcome indices are 0-based in this API (`index = 0` is the first outcome).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative tolerance for symmetry checks on inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;
const JITTER_BASE: f64 = 1e-10;
const JITTER_RETRIES: u32 = 3;

fn square_dim(m: &Matrix, context: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(context, m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}

/// Checks symmetry relative to the largest entry of the matrix.
pub fn check_symmetric(m: &Matrix, rel_tol: f64) -> Result<()> {
    let n = square_dim(m, "symmetry check")?;
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if !(gap <= rel_tol * scale) {
                return Err(Error::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Plain lower Cholesky. On failure returns the 1-based order of the first
/// leading minor whose pivot is not positive.
pub fn cholesky_lower(a: &Matrix) -> std::result::Result<Matrix, usize> {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(j + 1);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Cholesky with the diagonal-jitter repair policy: on failure add
/// `1e-10 * trace / n` to the diagonal and retry, growing the jitter tenfold up
/// to three more times. Returns the factor and the jitter that was used.
pub fn cholesky_jittered(a: &Matrix) -> Result<(Matrix, f64)> {
    let n = square_dim(a, "cholesky")?;
    let minor = match cholesky_lower(a) {
        Ok(l) => return Ok((l, 0.0)),
        Err(minor) => minor,
    };
    let scale = a.trace() / n.max(1) as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::NotPositiveDefinite { minor, dim: n });
    }
    let mut jitter = JITTER_BASE * scale;
    for _ in 0..=JITTER_RETRIES {
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += jitter;
        }
        if let Ok(l) = cholesky_lower(&b) {
            log::debug!("cholesky repaired with diagonal jitter {jitter:e}");
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical {
        context: "cholesky",
        detail: format!(
            "matrix of order {n} still not positive definite after jitter {:e}",
            jitter / 10.0
        ),
    })
}

/// Inverse of a lower-triangular matrix with positive diagonal. Entries above
/// the diagonal are exactly zero.
pub fn lower_inverse(l: &Matrix) -> Matrix {
    let n = l.nrows();
    let mut inv = Matrix::zeros(n, n);
    for c in 0..n {
        inv[(c, c)] = 1.0 / l[(c, c)];
        for i in (c + 1)..n {
            let mut s = 0.0;
            for k in c..i {
                s += l[(i, k)] * inv[(k, c)];
            }
            inv[(i, c)] = -s / l[(i, i)];
        }
    }
    inv
}

/// Solves L x = b for lower-triangular L.
fn forward_solve(l: &Matrix, b: &Vector) -> Vector {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves Lᵀ x = b for lower-triangular L.
fn backward_solve_t(l: &Matrix, b: &Vector) -> Vector {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of a PD matrix from its lower Cholesky factor.
fn inverse_from_cholesky(l: &Matrix) -> Matrix {
    let li = lower_inverse(l);
    symmetrize(&(li.transpose() * li))
}

/// `L` with `L Lᵀ = V` and the rows `ℓ⁽ʲ⁾` of `L⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactors {
    l: Matrix,
    l_inv: Matrix,
}

impl CholeskyFactors {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn l_inv(&self) -> &Matrix {
        &self.l_inv
    }

    /// Row `ℓ⁽ʲ⁾` of `L⁻¹` as a column vector (entries past `j` are zero).
    pub fn row(&self, j: usize) -> Vector {
        self.l_inv.row(j).transpose()
    }

    /// `ℓ⁽ʲ⁾ · prefix` using only the first `j + 1` entries of `y`.
    pub fn whiten_entry(&self, y: &[f64], j: usize) -> f64 {
        let mut s = 0.0;
        for (i, yi) in y.iter().enumerate().take(j + 1) {
            s += self.l_inv[(j, i)] * yi;
        }
        s
    }

    /// `L⁻¹ y` for a fully observed vector.
    pub fn whiten(&self, y: &[f64]) -> Result<Vector> {
        if y.len() != self.dim() {
            return Err(Error::dim("whiten", self.dim(), y.len()));
        }
        Ok(&self.l_inv * Vector::from_column_slice(y))
    }

    /// Factorization of a PSD matrix using the jitter repair policy.
    pub fn jittered(v: &Matrix) -> Result<Self> {
        let (l, _) = cholesky_jittered(&symmetrize(v))?;
        let l_inv = lower_inverse(&l);
        Ok(Self { l, l_inv })
    }
}

/// Factorizes a symmetric PD noise covariance. Fails with the index of the
/// first non-positive leading minor.
pub fn cholesky_whiten(v: &Matrix) -> Result<CholeskyFactors> {
    let n = square_dim(v, "cholesky_whiten")?;
    check_symmetric(v, SYMMETRY_TOL)?;
    let l = cholesky_lower(v).map_err(|minor| Error::NotPositiveDefinite { minor, dim: n })?;
    let l_inv = lower_inverse(&l);
    Ok(CholeskyFactors { l, l_inv })
}

/// Prior `θ ~ N(mu1, sigma1)` and within-user noise `Y | θ ~ N(θ, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams {
    mu1: Vector,
    sigma1: Matrix,
    v: Matrix,
}

impl PriorParams {
    /// Strict constructor: symmetric and positive definite inputs only.
    pub fn new(mu1: Vector, sigma1: Matrix, v: Matrix) -> Result<Self> {
        let j = mu1.len();
        Self::check_shapes(j, &sigma1, &v)?;
        check_symmetric(&sigma1, SYMMETRY_TOL)?;
        check_symmetric(&v, SYMMETRY_TOL)?;
        cholesky_lower(&sigma1).map_err(|minor| Error::NotPositiveDefinite { minor, dim: j })?;
        cholesky_lower(&v).map_err(|minor| Error::NotPositiveDefinite { minor, dim: j })?;
        Ok(Self { mu1, sigma1, v })
    }

    /// Symmetrizes both matrices and adds the smallest diagonal jitter from the
    /// repair policy that makes each positive definite. Meant for fitted
    /// estimates, which are only PSD by construction.
    pub fn with_psd_repair(mu1: Vector, sigma1: Matrix, v: Matrix) -> Result<Self> {
        let j = mu1.len();
        Self::check_shapes(j, &sigma1, &v)?;
        let repair = |m: &Matrix| -> Result<Matrix> {
            let mut m = symmetrize(m);
            let (_, jitter) = cholesky_jittered(&m)?;
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            Ok(m)
        };
        let sigma1 = repair(&sigma1)?;
        let v = repair(&v)?;
        Ok(Self { mu1, sigma1, v })
    }

    /// Uninformative preset: `μ₁ = 0`, `Σ₁ = 100·I`, `V = I`.
    pub fn isotropic(j: usize) -> Self {
        Self {
            mu1: Vector::zeros(j),
            sigma1: Matrix::identity(j, j) * 100.0,
            v: Matrix::identity(j, j),
        }
    }

    fn check_shapes(j: usize, sigma1: &Matrix, v: &Matrix) -> Result<()> {
        if j == 0 {
            return Err(Error::param("mu1", "outcome dimension must be at least 1"));
        }
        for (m, ctx) in [(sigma1, "sigma1"), (v, "noise covariance")] {
            if m.nrows() != j || m.ncols() != j {
                return Err(Error::dim(ctx, j, m.nrows().max(m.ncols())));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
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

    pub fn noise_factors(&self) -> Result<CholeskyFactors> {
        CholeskyFactors::jittered(&self.v)
    }
}

/// Posterior `N(mean, cov)` for one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub mean: Vector,
    pub cov: Matrix,
}

impl Belief {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dim("belief covariance", mean.len(), cov.nrows()));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Precision-form conditioning on accumulated whitened information.
    pub fn condition(&self, info: &Information) -> Result<Belief> {
        let j = self.dim();
        if info.dim() != j {
            return Err(Error::dim("posterior update", j, info.dim()));
        }
        let (l0, _) = cholesky_jittered(&self.cov).map_err(|e| numerical("posterior update", e))?;
        let p0_mean = backward_solve_t(&l0, &forward_solve(&l0, &self.mean));
        let p1 = inverse_from_cholesky(&l0) + &info.precision;
        let (l1, _) = cholesky_jittered(&p1).map_err(|e| numerical("posterior update", e))?;
        let cov = inverse_from_cholesky(&l1);
        let rhs = p0_mean + &info.shift;
        let mean = backward_solve_t(&l1, &forward_solve(&l1, &rhs));
        Ok(Belief { mean, cov })
    }
}

fn numerical(context: &'static str, e: Error) -> Error {
    match e {
        e @ Error::Numerical { .. } => e,
        other => Error::Numerical {
            context,
            detail: other.to_string(),
        },
    }
}

/// A whitened scalar `𝒴⁽ʲ⁾` together with the row `ℓ⁽ʲ⁾` that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenedObservation {
    pub index: usize,
    pub value: f64,
    pub row: Vector,
}

/// `𝒴⁽ʲ⁾ = ℓ⁽ʲ⁾ · [prefix; 0]`. `prefix` must hold exactly `index + 1` entries.
pub fn transform_outcome(
    prefix: &[f64],
    factors: &CholeskyFactors,
    index: usize,
) -> Result<WhitenedObservation> {
    if index >= factors.dim() {
        return Err(Error::dim("outcome index", factors.dim(), index + 1));
    }
    if prefix.len() != index + 1 {
        return Err(Error::dim("outcome prefix", index + 1, prefix.len()));
    }
    let value = factors.whiten_entry(prefix, index);
    if !value.is_finite() {
        return Err(Error::Numerical {
            context: "transform_outcome",
            detail: format!("non-finite whitened value at outcome {}", index + 1),
        });
    }
    Ok(WhitenedObservation {
        index,
        value,
        row: factors.row(index),
    })
}

/// Sufficient statistics `Σ ℓℓᵀ` and `Σ ℓ𝒴` of a set of whitened observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Information {
    pub precision: Matrix,
    pub shift: Vector,
}

impl Information {
    pub fn zeros(j: usize) -> Self {
        Self {
            precision: Matrix::zeros(j, j),
            shift: Vector::zeros(j),
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn add(&mut self, row: &Vector, value: f64) {
        self.precision.ger(1.0, row, row, 1.0);
        self.shift.axpy(value, row, 1.0);
    }

    /// Aggregated form: `counts[j]` observations of outcome `j` whose whitened
    /// values sum to `sums[j]`. Equivalent to calling [`add`](Self::add) once
    /// per observation.
    pub fn from_counts(factors: &CholeskyFactors, counts: &[f64], sums: &[f64]) -> Self {
        let j = factors.dim();
        let mut w = factors.l_inv.clone();
        for (r, c) in counts.iter().enumerate() {
            let s = c.sqrt();
            for col in 0..=r {
                w[(r, col)] *= s;
            }
        }
        let precision = w.tr_mul(&w);
        let shift = factors.l_inv.tr_mul(&Vector::from_column_slice(&sums[..j]));
        Self { precision, shift }
    }
}

/// Conditions `belief` on whitened observations. Arrival order is irrelevant.
pub fn posterior_update(belief: &Belief, observations: &[WhitenedObservation]) -> Result<Belief> {
    if observations.is_empty() {
        return Ok(belief.clone());
    }
    let mut info = Information::zeros(belief.dim());
    for obs in observations {
        if obs.row.len() != belief.dim() {
            return Err(Error::dim("whitening row", belief.dim(), obs.row.len()));
        }
        info.add(&obs.row, obs.value);
    }
    belief.condition(&info)
}

/// Test oracle: exact conditioning of `θ` on every observed entry via the joint
/// Gaussian of `(θ, observed entries)`. No whitening and no incremental steps.
///
/// `users` pairs an outcome vector with its observability mask; any mask shape
/// is accepted.
pub fn posterior_batch_oracle(prior: &PriorParams, users: &[(Vector, Vec<bool>)]) -> Result<Belief> {
    let j = prior.dim();
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (u, (y, mask)) in users.iter().enumerate() {
        if y.len() != j {
            return Err(Error::dim("oracle outcome", j, y.len()));
        }
        if mask.len() != j {
            return Err(Error::dim("oracle mask", j, mask.len()));
        }
        picks.extend(mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| (u, k)));
    }
    if picks.is_empty() {
        return Ok(prior.prior_belief());
    }
    let n = picks.len();
    let sigma = prior.sigma1();
    let mut h = Matrix::zeros(n, j);
    let mut z = Vector::zeros(n);
    let mut noise = Matrix::zeros(n, n);
    for (r, &(u, k)) in picks.iter().enumerate() {
        h[(r, k)] = 1.0;
        z[r] = users[u].0[k];
        for (c, &(u2, k2)) in picks.iter().enumerate() {
            if u2 == u {
                noise[(r, c)] = prior.v()[(k, k2)];
            }
        }
    }
    let cross = sigma * h.transpose();
    let s = &h * &cross + noise;
    let chol = s.cholesky().ok_or_else(|| Error::Numerical {
        context: "posterior_batch_oracle",
        detail: "observation covariance is singular".into(),
    })?;
    let resid = z - &h * prior.mu1();
    let mean = prior.mu1() + &cross * chol.solve(&resid);
    let cov = sigma - &cross * chol.solve(&cross.transpose());
    Ok(Belief {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Draws `θ′ = mean + A z` with `A Aᵀ = cov`.
pub fn sample_belief<R: Rng + ?Sized>(belief: &Belief, rng: &mut R) -> Result<Vector> {
    let j = belief.dim();
    if belief.cov.iter().all(|&c| c == 0.0) {
        return Ok(belief.mean.clone());
    }
    let (l, _) = cholesky_jittered(&symmetrize(&belief.cov))?;
    let z = Vector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(&belief.mean + l * z)
}

/// Affine reward `R(y) = r0 + r1ᵀ y`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardSpec {
    r0: f64,
    r1: Vector,
}

impl RewardSpec {
    pub fn new(r0: f64, r1: Vector) -> Result<Self> {
        if r1.iter().all(|&w| w == 0.0) {
            return Err(Error::param("r1", "reward weights must have a nonzero entry"));
        }
        Ok(Self { r0, r1 })
    }

    /// `R(y) = y_index`.
    pub fn unit(j: usize, index: usize) -> Self {
        let mut r1 = Vector::zeros(j);
        r1[index] = 1.0;
        Self { r0: 0.0, r1 }
    }

    /// `R(y) = scale · Σ y`.
    pub fn sum(j: usize, scale: f64) -> Self {
        Self {
            r0: 0.0,
            r1: Vector::from_element(j, scale),
        }
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn r1(&self) -> &Vector {
        &self.r1
    }
    pub fn dim(&self) -> usize {
        self.r1.len()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.r0 + self.r1.iter().zip(y).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Mean and variance of `r0 + r1ᵀθ` under the belief.
pub fn reward_belief(belief: &Belief, reward: &RewardSpec) -> Result<(f64, f64)> {
    if reward.dim() != belief.dim() {
        return Err(Error::dim("reward weights", belief.dim(), reward.dim()));
    }
    let mean = reward.r0 + reward.r1.dot(&belief.mean);
    let var = reward.r1.dot(&(&belief.cov * &reward.r1)).max(0.0);
    Ok((mean, var))
}

/// Belief held in whitened coordinates `φ = L⁻¹θ`, where `L Lᵀ = V`.
///
/// In these coordinates each whitened observation `𝒴⁽ʲ⁾` is `φⱼ` plus unit
/// noise, so absorbing a batch only adds counts to the diagonal of the
/// precision and sums to the shift. One Cholesky per batch, no explicit inverse.
#[derive(Clone, Debug)]
pub struct WhitenedBelief {
    precision: Matrix,
    shift: Vector,
    chol: Matrix,
    mean: Vector,
}

impl WhitenedBelief {
    pub fn from_belief(belief: &Belief, factors: &CholeskyFactors) -> Result<Self> {
        if factors.dim() != belief.dim() {
            return Err(Error::dim("whitened belief", belief.dim(), factors.dim()));
        }
        let cov_w = symmetrize(&(factors.l_inv() * &belief.cov * factors.l_inv().transpose()));
        let mean_w = factors.l_inv() * &belief.mean;
        let (l0, _) = cholesky_jittered(&cov_w).map_err(|e| numerical("prior precision", e))?;
        let precision = inverse_from_cholesky(&l0);
        let shift = backward_solve_t(&l0, &forward_solve(&l0, &mean_w));
        let mut out = Self {
            chol: Matrix::zeros(0, 0),
            mean: mean_w,
            precision,
            shift,
        };
        out.refactor()?;
        Ok(out)
    }

    fn refactor(&mut self) -> Result<()> {
        let (l, _) =
            cholesky_jittered(&self.precision).map_err(|e| numerical("posterior precision", e))?;
        self.mean = backward_solve_t(&l, &forward_solve(&l, &self.shift));
        self.chol = l;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `counts[j]` whitened observations of outcome `j` with values summing to `sums[j]`.
    pub fn absorb(&mut self, counts: &[f64], sums: &[f64]) -> Result<()> {
        let j = self.dim();
        if counts.len() != j || sums.len() != j {
            return Err(Error::dim("posterior update", j, counts.len().max(sums.len())));
        }
        if counts.iter().all(|&c| c == 0.0) {
            return Ok(());
        }
        for k in 0..j {
            self.precision[(k, k)] += counts[k];
            self.shift[k] += sums[k];
        }
        self.refactor()
    }

    /// `(r0 + r1ᵀθ̂, r1ᵀΣr1)` given `reward_w = Lᵀ r1`.
    pub fn reward_moments(&self, r0: f64, reward_w: &Vector) -> (f64, f64) {
        let mean = r0 + reward_w.dot(&self.mean);
        let w = forward_solve(&self.chol, reward_w);
        (mean, w.norm_squared())
    }

    /// Full draw `θ′ = L(φ̂ + C⁻ᵀz)` where `C Cᵀ` is the whitened precision.
    pub fn sample<R: Rng + ?Sized>(&self, factors: &CholeskyFactors, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        factors.l() * (&self.mean + backward_solve_t(&self.chol, &z))
    }

    pub fn to_belief(&self, factors: &CholeskyFactors) -> Belief {
        let cov_w = inverse_from_cholesky(&self.chol);
        Belief {
            mean: factors.l() * &self.mean,
            cov: symmetrize(&(factors.l() * cov_w * factors.l().transpose())),
        }
    }
}

/// `Lᵀ r1`: reward weights in whitened coordinates.
pub fn whitened_reward(reward: &RewardSpec, factors: &CholeskyFactors) -> Vector {
    factors.l().tr_mul(reward.r1())
}
