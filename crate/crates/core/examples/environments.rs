//! The three kinds of environment: equicorrelated synthetic, two-outcome
//! surrogate and trace replay, all behind the same `Environment` trait.

use std::sync::Arc;

use impatient::env::{
    gen_binary_traces, make_synthetic, make_two_outcome, BinaryTraceParams, Environment, ReplayEnv,
    SyntheticEnvSpec, TwoOutcomeSpec,
};
use impatient::rng::{stream, Purpose};

fn show(name: &str, env: &dyn Environment, rng: &mut impatient::rng::SimRng) {
    let best = env.optimal_arm();
    let mut y = vec![0.0; env.num_outcomes()];
    env.draw(best, rng, &mut y);
    println!(
        "{name:<12} J={:<3} arms={:<4} delays={:?}.. best arm {best} (mean reward {:.3}), one draw R={:.3}",
        env.num_outcomes(),
        env.active_arms().len(),
        &env.delays().delays()[..env.num_outcomes().min(4)],
        env.mean_reward(best),
        env.reward().value(&y)
    );
}

fn main() -> impatient::Result<()> {
    let mut rng = stream(1, 0, "example", Purpose::Environment);

    let spec = SyntheticEnvSpec::new(0.8, 25, 10, 20)?;
    let synthetic = make_synthetic(&spec, &mut rng)?.into_env()?;
    show("synthetic", &synthetic, &mut rng);

    let two = TwoOutcomeSpec {
        rho: 0.9,
        sigma_r_sq: 1.0,
        d_max: 10,
        num_arms: 5,
    };
    let surrogate = make_two_outcome(&two, &mut rng)?.into_env()?;
    show("two-outcome", &surrogate, &mut rng);

    let params = BinaryTraceParams {
        num_arms: 50,
        traces_per_arm: 100,
        ..Default::default()
    };
    let ds = gen_binary_traces(&params, &mut stream(1, 0, "traces", Purpose::Data))?;
    let replay = ReplayEnv::new(Arc::new(ds))?;
    show("replay", &replay, &mut rng);
    Ok(())
}
