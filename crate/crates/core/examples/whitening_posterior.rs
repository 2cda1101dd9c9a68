//! Cholesky whitening of correlated outcomes and the incremental posterior
//! update, checked against direct conditioning of the joint Gaussian.
//!
//! cargo run --example whitening_posterior

use impatient::gaussian::{
    cholesky_whiten, posterior_batch_oracle, posterior_update, transform_outcome, Matrix, PriorParams, Vector,
};

fn main() -> impatient::Result<()> {
    let v = Matrix::from_row_slice(3, 3, &[4.0, 2.0, 1.0, 2.0, 5.0, 2.0, 1.0, 2.0, 3.0]);
    let sigma1 = Matrix::from_row_slice(3, 3, &[1.0, 0.6, 0.4, 0.6, 1.0, 0.6, 0.4, 0.6, 1.0]);
    let prior = PriorParams::new(Vector::zeros(3), sigma1, v)?;
    let f = cholesky_whiten(prior.v())?;
    println!("L =\n{}", f.l());
    println!("rows of L^-1 =\n{}", f.l_inv());

    // Three users: one fully observed, one with two outcomes, one with only the first.
    let users = [
        (Vector::from_column_slice(&[1.0, 2.0, 0.5]), 3),
        (Vector::from_column_slice(&[0.2, -0.4, 9.9]), 2),
        (Vector::from_column_slice(&[1.5, 9.9, 9.9]), 1),
    ];
    let mut belief = prior.prior_belief();
    let mut masked = Vec::new();
    for (y, seen) in &users {
        let obs: Vec<_> = (0..*seen)
            .map(|j| transform_outcome(&y.as_slice()[..=j], &f, j))
            .collect::<impatient::Result<_>>()?;
        belief = posterior_update(&belief, &obs)?;
        masked.push((y.clone(), (0..3).map(|j| j < *seen).collect()));
    }
    let oracle = posterior_batch_oracle(&prior, &masked)?;
    println!("incremental mean {:?}", belief.mean.as_slice());
    println!("oracle mean      {:?}", oracle.mean.as_slice());
    println!("max |cov gap| = {:.2e}", (&belief.cov - &oracle.cov).amax());
    Ok(())
}
