//! A small replicated experiment written to CSV, plus the log regret ratio.
//! Reruns with the same seed give byte-identical files.

use impatient::harness::{output, preset, run_replications};
use impatient::metrics::regret_ratio_log;

fn main() -> impatient::Result<()> {
    let mut c = preset("genmodel-ratio")?;
    c.replications = 50;
    c.seed = 7;
    let result = run_replications(&c)?;
    let dir = std::env::temp_dir().join("impatient-regret-example");
    output::write_all(&dir, &result)?;

    let ratio = regret_ratio_log(
        &result.policy("progressive").unwrap().records,
        &result.policy("delayed").unwrap().records,
    )?;
    for t in [5, 15, 25, 30, 40] {
        println!("t={t:<3} log(delayed/progressive) = {:?}", ratio[t - 1]);
    }
    println!("{:.2}s, CSVs in {}", result.wall_clock_secs, dir.display());
    Ok(())
}
