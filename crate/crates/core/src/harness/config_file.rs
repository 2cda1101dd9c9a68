//! TOML experiment files and command-line overrides.
//!
//! ```toml
//! preset = "genmodel"
//! replications = 50
//! policies = ["progressive", "delayed"]
//!
//! [env]
//! alpha = 0.4
//!
//! [policy.seq_elim_1pct]
//! threshold = 0.02
//! ```
//!
//! Flags override file values and the preset fills the rest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{preset, EnvSpec, ExperimentConfig, PolicySpec, TraceSource};
use crate::env::synthetic::TwoOutcomeSpec;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub horizon: Option<usize>,
    pub batch_size: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub n_mc: Option<usize>,
    pub common_random_numbers: Option<bool>,
    pub audit: Option<bool>,
    pub policies: Option<Vec<String>>,
    pub env: Option<EnvSection>,
    #[serde(default)]
    pub policy: BTreeMap<String, PolicySection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub kind: Option<String>,
    pub alpha: Option<f64>,
    pub outcomes: Option<usize>,
    pub arms: Option<usize>,
    pub rho: Option<f64>,
    pub sigma_r_sq: Option<f64>,
    pub d_max: Option<usize>,
    pub traces_per_arm: Option<usize>,
    pub num_classes: Option<usize>,
    pub active: Option<usize>,
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub n_mc: Option<usize>,
    pub threshold: Option<f64>,
}

/// Values given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub horizon: Option<usize>,
    pub batch_size: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub n_mc: Option<usize>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub policies: Option<Vec<String>>,
    pub common_random_numbers: Option<bool>,
    pub audit: Option<bool>,
    pub output_dir: Option<PathBuf>,
}

/// Pulls the offending key out of a TOML error message such as
/// "unknown field `alhpa`, expected one of ...".
fn toml_key(msg: &str) -> String {
    let mut parts = msg.split('`');
    parts.next();
    parts.next().unwrap_or("<file>").to_string()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            Error::config(toml_key(&msg), msg)
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn default_env(kind: &str) -> Result<EnvSpec> {
    Ok(match kind {
        "synthetic" => EnvSpec::Synthetic {
            alpha: 0.8,
            outcomes: 25,
            arms: 20,
        },
        "two-outcome" => EnvSpec::TwoOutcome(TwoOutcomeSpec {
            rho: 0.5,
            sigma_r_sq: 1.0,
            d_max: 10,
            num_arms: 10,
        }),
        "replay" => EnvSpec::Replay(TraceSource::default()),
        "nonstationary" => EnvSpec::Nonstationary {
            source: TraceSource::default(),
            active: 60,
        },
        other => {
            return Err(Error::config(
                "env.kind",
                format!("unknown kind {other:?}; expected synthetic, two-outcome, replay or nonstationary"),
            ))
        }
    })
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn misplaced(key: &str, env: &EnvSpec) -> Error {
    Error::config(key, format!("does not apply to a {} environment", env.kind()))
}

fn apply_alpha(env: &mut EnvSpec, alpha: f64, key: &str) -> Result<()> {
    match env {
        EnvSpec::Synthetic { alpha: a, .. } => {
            *a = alpha;
            Ok(())
        }
        other => Err(misplaced(key, other)),
    }
}

fn apply_rho(env: &mut EnvSpec, rho: f64, key: &str) -> Result<()> {
    match env {
        EnvSpec::TwoOutcome(t) => {
            t.rho = rho;
            Ok(())
        }
        other => Err(misplaced(key, other)),
    }
}

fn apply_env(env: &mut EnvSpec, s: &EnvSection) -> Result<()> {
    if let Some(kind) = &s.kind {
        if kind != env.kind() {
            *env = default_env(kind)?;
        }
    }
    if let Some(a) = s.alpha {
        apply_alpha(env, a, "env.alpha")?;
    }
    if let Some(r) = s.rho {
        apply_rho(env, r, "env.rho")?;
    }
    match env {
        EnvSpec::Synthetic { outcomes, arms, .. } => {
            set(outcomes, s.outcomes);
            set(arms, s.arms);
            for (k, given) in [
                ("env.sigma_r_sq", s.sigma_r_sq.is_some()),
                ("env.d_max", s.d_max.is_some()),
                ("env.traces_per_arm", s.traces_per_arm.is_some()),
                ("env.num_classes", s.num_classes.is_some()),
                ("env.active", s.active.is_some()),
                ("env.train", s.train.is_some()),
                ("env.eval", s.eval.is_some()),
            ] {
                if given {
                    return Err(misplaced(k, env));
                }
            }
        }
        EnvSpec::TwoOutcome(t) => {
            set(&mut t.sigma_r_sq, s.sigma_r_sq);
            set(&mut t.d_max, s.d_max);
            set(&mut t.num_arms, s.arms);
            for (k, given) in [
                ("env.outcomes", s.outcomes.is_some()),
                ("env.traces_per_arm", s.traces_per_arm.is_some()),
                ("env.num_classes", s.num_classes.is_some()),
                ("env.active", s.active.is_some()),
                ("env.train", s.train.is_some()),
                ("env.eval", s.eval.is_some()),
            ] {
                if given {
                    return Err(misplaced(k, env));
                }
            }
        }
        EnvSpec::Replay(_) | EnvSpec::Nonstationary { .. } => {
            for (k, given) in [
                ("env.sigma_r_sq", s.sigma_r_sq.is_some()),
                ("env.d_max", s.d_max.is_some()),
            ] {
                if given {
                    return Err(misplaced(k, env));
                }
            }
            if s.active.is_some() && matches!(env, EnvSpec::Replay(_)) {
                return Err(misplaced("env.active", env));
            }
            let (src, active) = match env {
                EnvSpec::Replay(src) => (src, None),
                EnvSpec::Nonstationary { source, active } => (source, Some(active)),
                _ => unreachable!(),
            };
            set(&mut src.params.num_arms, s.arms);
            set(&mut src.params.j, s.outcomes);
            set(&mut src.params.traces_per_arm, s.traces_per_arm);
            set(&mut src.params.num_classes, s.num_classes);
            if let Some(p) = &s.train {
                src.train = Some(p.clone());
            }
            if let Some(p) = &s.eval {
                src.eval = Some(p.clone());
            }
            if let (Some(slot), Some(v)) = (active, s.active) {
                *slot = v;
            }
        }
    }
    Ok(())
}

fn parse_roster(names: &[String], key: &str) -> Result<Vec<PolicySpec>> {
    names
        .iter()
        .map(|n| {
            n.trim()
                .parse::<PolicyKind>()
                .map(PolicySpec::new)
                .map_err(|e| Error::config(key, e.to_string()))
        })
        .collect()
}

/// Resolves preset, optional file and flags into one validated configuration.
pub fn load_config(file: Option<&ConfigFile>, flags: &Overrides) -> Result<ExperimentConfig> {
    let empty = ConfigFile::default();
    let f = file.unwrap_or(&empty);
    let name = flags.preset.as_deref().or(f.preset.as_deref()).unwrap_or("genmodel");
    let mut c = preset(name)?;

    set(&mut c.horizon, f.horizon);
    set(&mut c.batch_size, f.batch_size);
    set(&mut c.replications, f.replications);
    set(&mut c.seed, f.seed);
    set(&mut c.jobs, f.jobs);
    set(&mut c.common_random_numbers, f.common_random_numbers);
    set(&mut c.audit, f.audit);
    if let Some(env) = &f.env {
        apply_env(&mut c.env, env)?;
    }
    if let Some(names) = &f.policies {
        c.policies = parse_roster(names, "policies")?;
    }

    set(&mut c.horizon, flags.horizon);
    set(&mut c.batch_size, flags.batch_size);
    set(&mut c.replications, flags.replications);
    set(&mut c.seed, flags.seed);
    set(&mut c.jobs, flags.jobs);
    set(&mut c.common_random_numbers, flags.common_random_numbers);
    set(&mut c.audit, flags.audit);
    if let Some(a) = flags.alpha {
        apply_alpha(&mut c.env, a, "alpha")?;
    }
    if let Some(r) = flags.rho {
        apply_rho(&mut c.env, r, "rho")?;
    }
    if let Some(names) = &flags.policies {
        c.policies = parse_roster(names, "policies")?;
    }
    if let Some(dir) = &flags.output_dir {
        c.output_dir = Some(dir.clone());
    }

    if let Some(n) = f.n_mc {
        c.set_n_mc(n);
    }
    for (name, section) in &f.policy {
        let key = format!("policy.{name}");
        let kind: PolicyKind = name.parse().map_err(|e: Error| Error::config(&key, e.to_string()))?;
        let Some(spec) = c.policies.iter_mut().find(|p| p.kind == kind) else {
            return Err(Error::config(key, "policy is not in the roster"));
        };
        set(&mut spec.n_mc, section.n_mc);
        if let Some(th) = section.threshold {
            if kind.elimination_threshold().is_none() {
                return Err(Error::config(format!("{key}.threshold"), "only elimination policies take a threshold"));
            }
            spec.threshold = Some(th);
        }
    }
    if let Some(n) = flags.n_mc {
        c.set_n_mc(n);
    }

    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = ConfigFile::parse("replications = 3\nalhpa = 0.1\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "alhpa"),
            other => panic!("{other:?}"),
        }
        let err = ConfigFile::parse("[env]\nrhoo = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "rhoo"));
    }

    #[test]
    fn flags_beat_file_beats_preset() {
        let file = ConfigFile::parse(
            "preset = \"genmodel\"\nreplications = 40\nseed = 3\n[env]\nalpha = 0.4\n[policy.delayed]\nn_mc = 64\n",
        )
        .unwrap();
        let flags = Overrides {
            replications: Some(5),
            ..Default::default()
        };
        let c = load_config(Some(&file), &flags).unwrap();
        assert_eq!(c.replications, 5);
        assert_eq!(c.seed, 3);
        assert_eq!(c.horizon, 50);
        assert_eq!(c.env, EnvSpec::Synthetic { alpha: 0.4, outcomes: 25, arms: 20 });
        assert_eq!(c.policy(PolicyKind::Delayed).unwrap().n_mc, 64);
    }

    #[test]
    fn misplaced_keys_are_config_errors() {
        let flags = Overrides {
            preset: Some("replay-200".into()),
            alpha: Some(0.3),
            ..Default::default()
        };
        assert!(matches!(load_config(None, &flags), Err(Error::Config { key, .. }) if key == "alpha"));
        let file = ConfigFile::parse("[policy.progressive]\nthreshold = 0.1\n").unwrap();
        assert!(matches!(
            load_config(Some(&file), &Overrides::default()),
            Err(Error::Config { key, .. }) if key == "policy.progressive.threshold"
        ));
        let file = ConfigFile::parse("policies = [\"progressive\", \"greedy\"]\n").unwrap();
        let err = load_config(Some(&file), &Overrides::default()).unwrap_err();
        assert!(err.is_config_error());
        let flags = Overrides {
            replications: Some(0),
            ..Default::default()
        };
        assert!(matches!(load_config(None, &flags), Err(Error::Config { key, .. }) if key == "replications"));
    }

    #[test]
    fn env_kind_switch() {
        let file = ConfigFile::parse("[env]\nkind = \"two-outcome\"\nrho = 1.0\nd_max = 4\n").unwrap();
        let c = load_config(Some(&file), &Overrides::default()).unwrap();
        match c.env {
            EnvSpec::TwoOutcome(t) => {
                assert_eq!((t.rho, t.d_max, t.num_arms), (1.0, 4, 10));
            }
            other => panic!("{other:?}"),
        }
    }
}
