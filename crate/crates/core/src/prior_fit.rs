//! Empirical-Bayes fit of per-class priors from historical traces.
//!
//! The estimators are the simple moment ones: the mean of per-arm trace means,
//! the mean outer product of their deviations, and the average within-arm
//! covariance (1/N normalization). None of them corrects for the `V/N`
//! inflation of the between-arm covariance.

use std::collections::BTreeMap;
use std::path::Path;

use crate::env::{TraceArm, TraceDataset};
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_lower, symmetrize, Matrix, PriorParams, Vector};
use crate::io;

fn class_arms<'a>(ds: &'a TraceDataset, z: &'a str) -> Vec<&'a TraceArm> {
    ds.arms_in_class(z).collect()
}

fn arm_mean(arm: &TraceArm) -> Vector {
    Vector::from_vec(arm.mean_outcome())
}

/// Within-arm covariance `(1/N) Σ (Y − Ȳ)(Y − Ȳ)ᵀ`.
fn arm_noise_cov(arm: &TraceArm, j: usize) -> Result<Matrix> {
    let n = arm.count();
    if n < 2 {
        return Err(Error::InsufficientData {
            arm: arm.arm_id.clone(),
            count: n,
            needed: 2,
        });
    }
    let mean = arm.mean_outcome();
    let mut s = Matrix::zeros(j, j);
    let mut dev = vec![0.0; j];
    for y in arm.traces() {
        for (d, (a, b)) in dev.iter_mut().zip(y.iter().zip(&mean)) {
            *d = a - b;
        }
        for r in 0..j {
            if dev[r] == 0.0 {
                continue;
            }
            for c in 0..j {
                s[(r, c)] += dev[r] * dev[c];
            }
        }
    }
    Ok(s / n as f64)
}

/// Unweighted average of per-arm noise covariances over class `z`.
pub fn fit_noise_cov(ds: &TraceDataset, z: &str) -> Result<Matrix> {
    let arms = class_arms(ds, z);
    if arms.is_empty() {
        return Err(Error::InsufficientArms {
            class: z.to_string(),
            arms: 0,
            needed: 1,
        });
    }
    let j = ds.num_outcomes();
    let mut acc = Matrix::zeros(j, j);
    for a in &arms {
        acc += arm_noise_cov(a, j)?;
    }
    Ok(acc / arms.len() as f64)
}

/// Unweighted mean of per-arm trace means over class `z`.
pub fn fit_prior_mean(ds: &TraceDataset, z: &str) -> Result<Vector> {
    let arms = class_arms(ds, z);
    if arms.is_empty() {
        return Err(Error::InsufficientArms {
            class: z.to_string(),
            arms: 0,
            needed: 1,
        });
    }
    let mut acc = Vector::zeros(ds.num_outcomes());
    for a in &arms {
        acc += arm_mean(a);
    }
    Ok(acc / arms.len() as f64)
}

fn outer_mean<'a>(means: impl Iterator<Item = Vector>, mu: &Vector, n: usize) -> Matrix {
    let j = mu.len();
    let mut acc = Matrix::zeros(j, j);
    for m in means {
        let d = m - mu;
        acc += &d * d.transpose();
    }
    acc / n as f64
}

/// Mean over class `z` of `(Ȳ − μ̂)(Ȳ − μ̂)ᵀ`.
pub fn fit_prior_cov(ds: &TraceDataset, z: &str, mu: &Vector) -> Result<Matrix> {
    let arms = class_arms(ds, z);
    if arms.len() < 2 {
        return Err(Error::InsufficientArms {
            class: z.to_string(),
            arms: arms.len(),
            needed: 2,
        });
    }
    if mu.len() != ds.num_outcomes() {
        return Err(Error::dim("prior mean", ds.num_outcomes(), mu.len()));
    }
    Ok(outer_mean(arms.iter().map(|a| arm_mean(a)), mu, arms.len()))
}

/// Between-arm covariance pooled over every class, centred on the grand mean.
fn pooled_prior_cov(ds: &TraceDataset) -> Result<Matrix> {
    let n = ds.arms().len();
    if n < 2 {
        return Err(Error::InsufficientArms {
            class: "(all)".into(),
            arms: n,
            needed: 2,
        });
    }
    let mut mu = Vector::zeros(ds.num_outcomes());
    for a in ds.arms() {
        mu += arm_mean(a);
    }
    mu /= n as f64;
    Ok(outer_mean(ds.arms().iter().map(arm_mean), &mu, n))
}

/// Σ_a [log det(Σ + V/Nₐ) + (Ȳₐ − μ)ᵀ(Σ + V/Nₐ)⁻¹(Ȳₐ − μ)] over class `z`.
pub fn marginal_nll(ds: &TraceDataset, z: &str, mu: &Vector, sigma: &Matrix, v: &Matrix) -> Result<f64> {
    let j = ds.num_outcomes();
    if mu.len() != j || sigma.nrows() != j || v.nrows() != j {
        return Err(Error::dim("marginal likelihood", j, mu.len()));
    }
    let mut total = 0.0;
    for a in class_arms(ds, z) {
        let c = symmetrize(&(sigma + v / a.count() as f64));
        let l = cholesky_lower(&c).map_err(|minor| Error::NotPositiveDefinite { minor, dim: j })?;
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let dev = arm_mean(a) - mu;
        let w = l
            .solve_lower_triangular(&dev)
            .ok_or_else(|| Error::Numerical {
                context: "marginal likelihood",
                detail: "triangular solve failed".into(),
            })?;
        total += log_det + w.norm_squared();
    }
    Ok(total)
}

/// Raw estimates for one class. `pooled_cov` marks a class whose Σ̂ came from
/// the all-class fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassFit {
    pub mu1: Vector,
    pub sigma1: Matrix,
    pub v: Matrix,
    pub arms: usize,
    pub traces: usize,
    pub pooled_cov: bool,
}

impl ClassFit {
    /// Prior usable by the filter. Fitted matrices are only PSD, so they go
    /// through the jitter repair.
    pub fn prior(&self) -> Result<PriorParams> {
        PriorParams::with_psd_repair(self.mu1.clone(), self.sigma1.clone(), self.v.clone())
    }
}

/// Fitted priors keyed by class label.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FittedPrior {
    pub classes: BTreeMap<String, ClassFit>,
}

const MEAN_FILE: &str = "prior_mean.csv";
const COV_FILE: &str = "prior_cov.csv";
const NOISE_FILE: &str = "noise_cov.csv";

impl FittedPrior {
    /// Fits every class present in `ds`.
    pub fn fit(ds: &TraceDataset) -> Result<Self> {
        let mut classes = BTreeMap::new();
        let mut pooled: Option<Matrix> = None;
        for z in ds.classes() {
            let arms = class_arms(ds, &z);
            let mu1 = fit_prior_mean(ds, &z)?;
            let v = fit_noise_cov(ds, &z)?;
            let (sigma1, pooled_cov) = if arms.len() >= 2 {
                (fit_prior_cov(ds, &z, &mu1)?, false)
            } else {
                log::warn!("class {z:?} has a single arm; using the pooled prior covariance");
                if pooled.is_none() {
                    pooled = Some(pooled_prior_cov(ds)?);
                }
                (pooled.clone().expect("just set"), true)
            };
            let fit = ClassFit {
                mu1,
                sigma1,
                v,
                traces: arms.iter().map(|a| a.count()).sum(),
                arms: arms.len(),
                pooled_cov,
            };
            classes.insert(z, fit);
        }
        Ok(Self { classes })
    }

    pub fn class(&self, z: &str) -> Result<&ClassFit> {
        self.classes.get(z).ok_or_else(|| Error::Config {
            key: "z".into(),
            detail: format!("no fitted prior for class {z:?}"),
        })
    }

    /// Writes `prior_mean.csv`, `prior_cov.csv` and `noise_cov.csv` (1-based indices).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let mut mean = io::create(&dir.join(MEAN_FILE))?;
        mean.write_record(["z", "j", "value"])?;
        for (z, c) in &self.classes {
            for (j, v) in c.mu1.iter().enumerate() {
                mean.write_record([z.as_str(), &(j + 1).to_string(), &io::fmt_f64(*v)])?;
            }
        }
        mean.flush().map_err(|e| Error::io(dir.join(MEAN_FILE), e))?;
        for (file, pick) in [
            (COV_FILE, (|c: &ClassFit| &c.sigma1) as fn(&ClassFit) -> &Matrix),
            (NOISE_FILE, |c: &ClassFit| &c.v),
        ] {
            let path = dir.join(file);
            let mut w = io::create(&path)?;
            w.write_record(["z", "i", "j", "value"])?;
            for (z, c) in &self.classes {
                let m = pick(c);
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        w.write_record([
                            z.as_str(),
                            &(i + 1).to_string(),
                            &(j + 1).to_string(),
                            &io::fmt_f64(m[(i, j)]),
                        ])?;
                    }
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Loads a bundle written by [`FittedPrior::write_dir`]. Arm and trace
    /// counts are not part of the bundle and come back as zero.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let means = read_entries(&dir.join(MEAN_FILE), 1)?;
        let covs = read_entries(&dir.join(COV_FILE), 2)?;
        let noises = read_entries(&dir.join(NOISE_FILE), 2)?;
        let mut classes = BTreeMap::new();
        for (z, entries) in &means {
            let j = entries.iter().map(|(idx, _)| idx[0]).max().unwrap_or(0);
            let mut mu1 = Vector::zeros(j);
            for (idx, v) in entries {
                mu1[idx[0] - 1] = *v;
            }
            let path = |f: &str| dir.join(f).display().to_string();
            let sigma1 = assemble(covs.get(z), j, z, &path(COV_FILE))?;
            let v = assemble(noises.get(z), j, z, &path(NOISE_FILE))?;
            classes.insert(
                z.clone(),
                ClassFit {
                    mu1,
                    sigma1,
                    v,
                    arms: 0,
                    traces: 0,
                    pooled_cov: false,
                },
            );
        }
        Ok(Self { classes })
    }
}

type Entries = BTreeMap<String, Vec<(Vec<usize>, f64)>>;

fn read_entries(path: &Path, n_idx: usize) -> Result<Entries> {
    let mut r = io::open(path)?;
    let src = path.display().to_string();
    let headers = r.headers()?.clone();
    let expected: Vec<&str> = match n_idx {
        1 => vec!["z", "j", "value"],
        _ => vec!["z", "i", "j", "value"],
    };
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: src,
            line: 1,
            detail: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Entries::new();
    for rec in r.records() {
        let rec = rec?;
        let line = io::line_of(&rec);
        let bad = |detail: String| Error::Parse {
            path: src.clone(),
            line,
            detail,
        };
        let mut idx = Vec::with_capacity(n_idx);
        for k in 0..n_idx {
            let s = &rec[1 + k];
            let v: usize = s.parse().map_err(|_| bad(format!("bad index {s:?}")))?;
            if v == 0 {
                return Err(bad("indices are 1-based".into()));
            }
            idx.push(v);
        }
        let s = &rec[1 + n_idx];
        let value: f64 = s.parse().map_err(|_| bad(format!("bad value {s:?}")))?;
        out.entry(rec[0].to_string()).or_default().push((idx, value));
    }
    Ok(out)
}

fn assemble(entries: Option<&Vec<(Vec<usize>, f64)>>, j: usize, z: &str, path: &str) -> Result<Matrix> {
    let entries = entries.ok_or_else(|| Error::Parse {
        path: path.to_string(),
        line: 0,
        detail: format!("class {z:?} missing"),
    })?;
    let mut m = Matrix::from_element(j, j, f64::NAN);
    for (idx, v) in entries {
        if idx[0] > j || idx[1] > j {
            return Err(Error::Parse {
                path: path.to_string(),
                line: 0,
                detail: format!("index ({}, {}) outside {j}x{j} for class {z:?}", idx[0], idx[1]),
            });
        }
        m[(idx[0] - 1, idx[1] - 1)] = *v;
    }
    if m.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 0,
            detail: format!("class {z:?} has missing matrix entries"),
        });
    }
    Ok(m)
}
