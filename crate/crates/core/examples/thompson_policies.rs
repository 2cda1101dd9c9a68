//! One decision step of each selection rule on the same posteriors:
//! per-user Thompson sampling, rounded allocations and sequential elimination.

use impatient::env::DelaySchedule;
use impatient::gaussian::{Matrix, PriorParams, RewardSpec, Vector};
use impatient::policy::{
    round_probs, seq_elim_step, ts_assign, ts_probs, ts_rnd_assign, ClassModel, FeedbackView, PolicyState, ViewMode,
};
use impatient::rng::seeded;
use std::sync::Arc;

fn main() -> impatient::Result<()> {
    let reward = RewardSpec::unit(1, 0);
    let view = FeedbackView::new(ViewMode::Progressive, &DelaySchedule::uniform(1, 0), &reward)?;
    let mut state = PolicyState::new(view);
    for (arm, mu) in [0.0, 0.4, 0.5, -1.0].into_iter().enumerate() {
        let prior = PriorParams::new(
            Vector::from_element(1, mu),
            Matrix::from_element(1, 1, 0.1),
            Matrix::identity(1, 1),
        )?;
        state.add_arm(arm, Arc::new(ClassModel::new(&prior, &reward)?));
    }
    let mut rng = seeded(3);

    println!("thompson: {:?}", ts_assign(&state, 12, &mut rng)?);
    let p = ts_probs(&state, 4096, &mut rng)?;
    println!("p(best):  {:?}", p.probs);
    let m = 48;
    println!("rounded to 1/{m}: {:?}", round_probs(&p, m)?.counts(m));
    println!("rounded assignment: {:?}", ts_rnd_assign(&state, m, 4096, &mut rng)?);

    let users = seq_elim_step(&mut state, 0.04, 4096, 12, &mut rng)?;
    println!("after elimination active = {:?}, users {:?}", state.active(), users);
    Ok(())
}
