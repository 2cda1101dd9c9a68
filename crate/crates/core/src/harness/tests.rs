use super::*;
use crate::env::traces::BinaryTraceParams;
use crate::metrics::mean_stderr;
use crate::policy::{BatchRecord, History};

fn small_synthetic(policies: &[PolicyKind], reps: usize) -> ExperimentConfig {
    let mut c = preset("genmodel").unwrap();
    c.env = EnvSpec::Synthetic {
        alpha: 0.8,
        outcomes: 5,
        arms: 4,
    };
    c.policies = policies.iter().copied().map(PolicySpec::new).collect();
    c.horizon = 12;
    c.replications = reps;
    c.seed = 11;
    c.jobs = 1;
    c.audit = true;
    c
}

fn small_replay(active: Option<usize>) -> ExperimentConfig {
    let params = BinaryTraceParams {
        num_arms: 12,
        traces_per_arm: 30,
        j: 6,
        num_classes: 2,
        ..Default::default()
    };
    let source = TraceSource {
        params,
        ..Default::default()
    };
    let mut c = preset("replay-200").unwrap();
    c.env = match active {
        None => EnvSpec::Replay(source),
        Some(k) => EnvSpec::Nonstationary { source, active: k },
    };
    c.horizon = 8;
    c.batch_size = 5;
    c.replications = 2;
    c.jobs = 1;
    c.audit = true;
    c
}

#[test]
fn preset_contents() {
    let g = preset("genmodel").unwrap();
    assert!(matches!(g.env, EnvSpec::Synthetic { arms: 20, outcomes: 25, .. }));
    assert_eq!((g.horizon, g.batch_size, g.replications), (50, 10, 500));
    let s = preset("seqelim").unwrap();
    let th: Vec<f64> = s.policies.iter().filter_map(|p| p.threshold()).collect();
    assert_eq!(th, vec![0.01, 0.04]);
    let n = preset("nonstationary").unwrap();
    assert!(matches!(n.env, EnvSpec::Nonstationary { active: 60, .. }));
    for name in PRESETS {
        preset(name).unwrap().validate().unwrap();
    }
    match preset("genmodle") {
        Err(Error::UnknownPreset { valid, .. }) => assert!(valid.contains("replay-200")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn single_batch_uses_the_prior_only() {
    // T = 1: nothing is visible before the only assignment, so every policy's
    // draws come from the same prior and the same policy stream seed gives the
    // same first batch across views.
    let mut c = small_synthetic(&[PolicyKind::Progressive], 1);
    c.horizon = 1;
    let prepared = Prepared::new(&c).unwrap();
    let (env, priors) = prepared.build(c.seed, 0).unwrap();
    let mut a = PolicyRunner::new(PolicySpec::new(PolicyKind::Progressive), env.as_ref(), priors.clone()).unwrap();
    let mut b = PolicyRunner::new(PolicySpec::new(PolicyKind::Oracle), env.as_ref(), priors).unwrap();
    let mut r1 = crate::rng::seeded(5);
    let mut r2 = crate::rng::seeded(5);
    assert_eq!(a.assign(50, &mut r1).unwrap(), b.assign(50, &mut r2).unwrap());
}

#[test]
fn visibility_timing_of_views() {
    let c = small_synthetic(&[PolicyKind::Progressive], 1);
    let prepared = Prepared::new(&c).unwrap();
    let (env, priors) = prepared.build(c.seed, 0).unwrap();
    let d_max = env.delays().d_max();
    for (kind, first) in [(PolicyKind::Oracle, 1), (PolicyKind::Delayed, d_max + 1), (PolicyKind::Progressive, 1)] {
        let runner = PolicyRunner::new(PolicySpec::new(kind), env.as_ref(), priors.clone()).unwrap();
        let mut h = History::default();
        let mut rec = BatchRecord::new(1);
        rec.record(0, &vec![1.0; env.num_outcomes()]);
        h.push(rec);
        for t in 2..=first {
            h.push(BatchRecord::new(t));
        }
        // Feedback released at the end of batch `first` is used at `first + 1`.
        let released = h.newly_usable(&runner.state().view, first);
        assert!(released.iter().any(|r| r.tau == 1), "{kind}");
        if first > 1 {
            assert!(h.newly_usable(&runner.state().view, first - 1).is_empty(), "{kind}");
        }
    }
}

#[test]
fn audited_runs_of_every_policy() {
    let c = small_synthetic(
        &[
            PolicyKind::Progressive,
            PolicyKind::Delayed,
            PolicyKind::DayTwo,
            PolicyKind::Oracle,
            PolicyKind::SeqElim4Pct,
            PolicyKind::ProgressiveIsotropic,
        ],
        2,
    );
    let r = run_replications(&c).unwrap();
    assert!(r.is_complete());
    for p in &r.policies {
        assert_eq!(p.records.len(), 2);
        assert!(p.records.iter().all(|x| x.horizon() == 12));
    }
}

#[test]
fn rounded_policy_runs_when_batch_is_large_enough() {
    let mut c = small_synthetic(&[PolicyKind::ProgressiveRnd], 1);
    c.batch_size = 2 * 4 * 3;
    c.policies[0].n_mc = 256;
    let r = run_replications(&c).unwrap();
    assert!(r.is_complete(), "{:?}", r.failures);
}

#[test]
fn failures_are_reported_not_fatal() {
    // Rounding is infeasible for 4 arms and m = 2, so every replication fails.
    let mut c = small_synthetic(&[PolicyKind::ProgressiveRnd], 2);
    c.batch_size = 2;
    let r = run_replications(&c).unwrap();
    assert_eq!(r.failures.len(), 2);
    assert!(r.policies[0].records.is_empty());
}

#[test]
fn replay_and_rolling_runs() {
    for active in [None, Some(4)] {
        let c = small_replay(active);
        let r = run_replications(&c).unwrap();
        assert!(r.is_complete(), "{:?}", r.failures);
        let p = r.policy("progressive").unwrap();
        assert_eq!(p.records.len(), 2);
        if active.is_some() {
            assert_eq!(p.final_moments.len(), 4);
        }
    }
}

#[test]
fn reruns_are_identical_and_order_free() {
    let c = small_synthetic(&[PolicyKind::Progressive, PolicyKind::Delayed], 3);
    let a = run_replications(&c).unwrap();
    let mut c2 = c.clone();
    c2.jobs = 2;
    let b = run_replications(&c2).unwrap();
    for (x, y) in a.policies.iter().zip(&b.policies) {
        assert_eq!(x.records, y.records);
    }
}

#[test]
fn n_mc_does_not_move_oracle_noise() {
    let mut c = small_synthetic(&[PolicyKind::Oracle, PolicyKind::SeqElim1Pct], 2);
    c.policies[1].n_mc = 64;
    let a = run_replications(&c).unwrap();
    c.policies[1].n_mc = 512;
    let b = run_replications(&c).unwrap();
    assert_eq!(a.policies[0].records, b.policies[0].records);
}

#[test]
fn summary_matches_direct_recomputation() {
    let c = small_synthetic(&[PolicyKind::Progressive], 4);
    let r = run_replications(&c).unwrap();
    let recs = &r.policies[0].records;
    let s = crate::metrics::CurveSummary::cumulative(recs).unwrap();
    for t in 0..c.horizon {
        let col: Vec<f64> = recs.iter().map(|x| x.cumulative[t]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        assert!((s.mean[t] - mean).abs() < 1e-12);
        assert!((s.stderr[t] - sd / 2.0).abs() < 1e-12);
        assert_eq!(mean_stderr(&col).0, s.mean[t]);
    }
}

#[test]
fn describe_echoes_every_setting() {
    let c = preset("seqelim").unwrap();
    let d = c.describe();
    for key in ["preset=seqelim", "alpha=0.1", "horizon=50", "policy.seq_elim_4pct.threshold=0.04"] {
        assert!(d.contains(key), "{d}");
    }
}
