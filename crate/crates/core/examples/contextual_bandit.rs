//! Linear-in-context outcomes: contextual Thompson sampling against the
//! per-user optimal arm.

use impatient::contextual::{run_contextual_episode, ContextualEnv, ContextualPrior};
use impatient::env::DelaySchedule;
use impatient::gaussian::{Matrix, RewardSpec, Vector};
use impatient::metrics::CurveSummary;
use impatient::rng::{stream, Purpose};

fn main() -> impatient::Result<()> {
    let (j, k) = (4, 2);
    let n = j * k;
    let sigma1 = Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else if r % k == c % k { 0.5 } else { 0.0 });
    let prior = ContextualPrior::new(Vector::zeros(n), sigma1, Matrix::identity(j, j) * 4.0, k)?;
    let reward = RewardSpec::sum(j, 0.5);

    let mut records = Vec::new();
    for rep in 0..20 {
        let mut rng = stream(9, rep, "contextual", Purpose::Environment);
        let env = ContextualEnv::sample(&prior, 6, reward.clone(), DelaySchedule::progressive(j), &mut rng)?;
        records.push(run_contextual_episode(&env, &prior, 30, 10, 9, rep)?);
    }
    let s = CurveSummary::per_batch(&records)?;
    for t in [1, 5, 10, 20, 30] {
        println!("t={t:<3} mean regret per user {:.3} ± {:.3}", s.mean[t - 1], s.stderr[t - 1]);
    }
    Ok(())
}
