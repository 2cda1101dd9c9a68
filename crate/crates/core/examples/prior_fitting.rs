//! Empirical-Bayes prior fitting on a stand-in trace dataset, written out as
//! the three CSVs the CLI produces and read back.

use impatient::env::{gen_binary_traces, BinaryTraceParams};
use impatient::prior_fit::{marginal_nll, FittedPrior};
use impatient::rng::{stream, Purpose};

fn main() -> impatient::Result<()> {
    let params = BinaryTraceParams {
        num_arms: 80,
        traces_per_arm: 200,
        j: 10,
        num_classes: 2,
        ..Default::default()
    };
    let ds = gen_binary_traces(&params, &mut stream(5, 0, "train", Purpose::Data))?;
    let fit = FittedPrior::fit(&ds)?;
    for (z, c) in &fit.classes {
        // Raw estimates are only PSD (binary outcomes can be constant), so score the repaired prior.
        let p = c.prior()?;
        let nll = marginal_nll(&ds, z, p.mu1(), p.sigma1(), p.v())?;
        println!(
            "class {z}: {} arms, {} traces, mean of Y2..Y4 {:.3?}, nll {nll:.1}",
            c.arms,
            c.traces,
            &c.mu1.as_slice()[1..4]
        );
    }

    let dir = std::env::temp_dir().join("impatient-prior-example");
    fit.write_dir(&dir)?;
    let back = FittedPrior::read_dir(&dir)?;
    println!("round trip through {}: {} classes", dir.display(), back.classes.len());
    Ok(())
}
