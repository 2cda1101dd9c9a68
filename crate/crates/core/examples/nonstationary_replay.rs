//! Rolling catalogue: a fixed number of arms is active and after every batch
//! the oldest is replaced by a fresh one from the reservoir.

use impatient::env::BinaryTraceParams;
use impatient::harness::{preset, run_replications, EnvSpec, Prepared, TraceSource};
use impatient::metrics::CurveSummary;

fn main() -> impatient::Result<()> {
    let mut c = preset("nonstationary")?;
    c.env = EnvSpec::Nonstationary {
        source: TraceSource {
            params: BinaryTraceParams {
                num_arms: 80,
                traces_per_arm: 100,
                j: 20,
                ..Default::default()
            },
            ..Default::default()
        },
        active: 20,
    };
    c.horizon = 40;
    c.batch_size = 20;
    c.replications = 4;

    let (mut env, _) = Prepared::new(&c)?.build(c.seed, 0)?;
    println!("initially active: {:?}", env.active_arms());
    let swap = env.rotate(1)?;
    println!("after batch 1: out/in = {swap:?}");

    let r = run_replications(&c)?;
    for run in &r.policies {
        let s = CurveSummary::cumulative(&run.records)?;
        println!("{:<12} {:.1}", run.name, s.mean[c.horizon - 1]);
    }
    Ok(())
}
