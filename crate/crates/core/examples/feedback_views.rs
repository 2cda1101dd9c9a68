//! How the four views see the same progressive data. Every policy runs on the
//! same synthetic draw with common random numbers; only what it is allowed to
//! observe differs.

use impatient::harness::{preset, run_replications, PolicySpec};
use impatient::metrics::CurveSummary;
use impatient::policy::PolicyKind;

fn main() -> impatient::Result<()> {
    let mut c = preset("genmodel")?;
    c.policies = [PolicyKind::Oracle, PolicyKind::Progressive, PolicyKind::DayTwo, PolicyKind::Delayed]
        .into_iter()
        .map(PolicySpec::new)
        .collect();
    c.replications = 40;
    c.audit = true;
    let r = run_replications(&c)?;
    for run in &r.policies {
        let s = CurveSummary::cumulative(&run.records)?;
        let t = c.horizon - 1;
        println!("{:<12} regret at T: {:7.2} ± {:.2}", run.name, s.mean[t], s.stderr[t]);
    }
    Ok(())
}
