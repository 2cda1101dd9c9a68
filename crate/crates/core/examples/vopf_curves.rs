//! Value of progressive feedback: the general Gaussian formula for the
//! synthetic model at several batch sizes, and the two-outcome closed forms.

use impatient::env::{DelaySchedule, SyntheticEnvSpec};
use impatient::gaussian::{PriorParams, RewardSpec, Vector};
use impatient::metrics::{vopf_curve, vopf_two_outcome, vopf_two_outcome_exact};

fn main() -> impatient::Result<()> {
    // The synthetic noise covariance grows with m, so a batch carries the same
    // information at every batch size and these rows coincide.
    for m in [10, 50, 200] {
        let spec = SyntheticEnvSpec::new(0.8, 25, m, 20)?;
        let prior = PriorParams::new(Vector::zeros(25), spec.sigma1(), spec.noise_cov())?;
        let reward = RewardSpec::sum(25, 1.0 / spec.reward_scale());
        let curve = vopf_curve(&prior, &reward, &DelaySchedule::progressive(25), m, 30)?;
        let picks: Vec<String> = [5, 15, 25, 26, 30].iter().map(|&t| format!("t={t}:{:.3}", curve[t - 1])).collect();
        println!("m={m:<4} {}", picks.join("  "));
    }

    // With a fixed model a bigger batch means more early outcomes per step.
    let spec = SyntheticEnvSpec::new(0.8, 25, 10, 20)?;
    let prior = PriorParams::new(Vector::zeros(25), spec.sigma1(), spec.noise_cov())?;
    let reward = RewardSpec::sum(25, 1.0);
    for m in [10, 50, 200] {
        let curve = vopf_curve(&prior, &reward, &DelaySchedule::progressive(25), m, 30)?;
        println!("fixed noise, m={m:<4} t=10:{:.3}  t=25:{:.3}", curve[9], curve[24]);
    }

    println!("\ntwo outcomes, rho=0.7, d_max=10, m=10");
    for t in [10, 11, 12, 20] {
        println!(
            "t={t:<3} closed form {:.5}   exact {:.5}",
            vopf_two_outcome(0.7, 1.0, 10, t, 10)?,
            vopf_two_outcome_exact(0.7, 1.0, 10, t, 10)?
        );
    }
    Ok(())
}
