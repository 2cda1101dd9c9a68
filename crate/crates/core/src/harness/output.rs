//! CSV files written after a run. Floats use the shortest round-trip form, so
//! identical runs give identical bytes.

use std::path::Path;

use super::RunResult;
use crate::error::Result;
use crate::io::{create, fmt_f64};
use crate::metrics::{regret_ratio_log, vopf_curve, CurveSummary};

/// `v<crate version>`, recorded in the manifest.
pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// `policy,replication,t,delta,cumulative`, policies in roster order.
pub fn write_regret(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["policy", "replication", "t", "delta", "cumulative"])?;
    for run in &result.policies {
        for rec in &run.records {
            for (i, (d, c)) in rec.deltas.iter().zip(&rec.cumulative).enumerate() {
                w.write_record([
                    run.name.clone(),
                    rec.replication.to_string(),
                    (i + 1).to_string(),
                    fmt_f64(*d),
                    fmt_f64(*c),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// Per-batch mean and standard error of instantaneous and cumulative regret.
pub fn write_summary(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "policy",
        "t",
        "mean_delta",
        "stderr_delta",
        "mean_cumulative",
        "stderr_cumulative",
        "replications",
    ])?;
    for run in &result.policies {
        if run.records.is_empty() {
            continue;
        }
        let inst = CurveSummary::per_batch(&run.records)?;
        let cum = CurveSummary::cumulative(&run.records)?;
        for t in 0..inst.mean.len() {
            w.write_record([
                run.name.clone(),
                (t + 1).to_string(),
                fmt_f64(inst.mean[t]),
                fmt_f64(inst.stderr[t]),
                fmt_f64(cum.mean[t]),
                fmt_f64(cum.stderr[t]),
                run.records.len().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// `preset,t,log_ratio` of delayed over progressive regret; empty cells where undefined.
pub fn write_ratio(path: &Path, preset: &str, ratio: &[Option<f64>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["preset", "t", "log_ratio"])?;
    for (i, r) in ratio.iter().enumerate() {
        w.write_record([preset.to_string(), (i + 1).to_string(), r.map(fmt_f64).unwrap_or_default()])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// `preset,m,t,vopf_nats`; `curves` holds one `(m, values for t = 1..)` per batch size.
pub fn write_vopf(path: &Path, preset: &str, curves: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["preset", "m", "t", "vopf_nats"])?;
    for (m, values) in curves {
        for (i, v) in values.iter().enumerate() {
            w.write_record([preset.to_string(), m.to_string(), (i + 1).to_string(), fmt_f64(*v)])?;
        }
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// Final posterior reward moments of the first completed replication.
pub fn write_final_beliefs(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["policy", "arm", "mean", "sd"])?;
    for run in &result.policies {
        for &(arm, mean, sd) in &run.final_moments {
            w.write_record([run.name.clone(), arm.to_string(), fmt_f64(mean), fmt_f64(sd)])?;
        }
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

pub fn write_manifest(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "preset",
        "seed",
        "version",
        "wall_clock_secs",
        "replications_completed",
        "config",
    ])?;
    let done = result.config.replications - result.failures.len();
    w.write_record([
        result.config.preset.clone(),
        result.config.seed.to_string(),
        version_string(),
        format!("{:.3}", result.wall_clock_secs),
        done.to_string(),
        result.config.describe(),
    ])?;
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// Writes every CSV of a run into `dir`: regret, summary, final beliefs,
/// manifest, the VoPF curve at the run's batch size and, when both
/// progressive and delayed ran, the log regret ratio.
pub fn write_all(dir: &Path, result: &RunResult) -> Result<()> {
    let c = &result.config;
    write_regret(&dir.join("regret.csv"), result)?;
    write_summary(&dir.join("summary.csv"), result)?;
    write_final_beliefs(&dir.join("final_beliefs.csv"), result)?;
    if let (Some(p), Some(d)) = (result.policy("progressive"), result.policy("delayed")) {
        if !p.records.is_empty() && !d.records.is_empty() {
            let ratio = regret_ratio_log(&p.records, &d.records)?;
            write_ratio(&dir.join("ratio.csv"), &c.preset, &ratio)?;
        }
    }
    let (prior, reward, delays) = result.prepared.vopf_model()?;
    let curve = vopf_curve(&prior, &reward, &delays, c.batch_size, c.horizon)?;
    write_vopf(&dir.join("vopf.csv"), &c.preset, &[(c.batch_size, curve)])?;
    write_manifest(&dir.join("manifest.csv"), result)?;
    Ok(())
}
