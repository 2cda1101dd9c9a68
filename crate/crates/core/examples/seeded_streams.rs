//! Every random stream is keyed by (master seed, replication, label, purpose).
//! Policies never share a stream, so one policy drawing more numbers cannot
//! shift another's.

use impatient::rng::{derive_seed, stream, Purpose};
use rand::Rng;

fn main() {
    for (label, purpose) in [
        ("environment", Purpose::Environment),
        ("outcomes", Purpose::Outcomes),
        ("progressive", Purpose::Policy),
        ("delayed", Purpose::Policy),
    ] {
        let seed = derive_seed(42, 0, label, purpose);
        let first: f64 = stream(42, 0, label, purpose).random();
        println!("{label:<12} {purpose:?}: seed {seed:#018x}, first uniform {first:.6}");
    }
    let a: Vec<u32> = (0..3).map(|_| 0).scan(stream(42, 1, "x", Purpose::Policy), |r, _: u32| Some(r.random())).collect();
    let b: Vec<u32> = (0..3).map(|_| 0).scan(stream(42, 1, "x", Purpose::Policy), |r, _: u32| Some(r.random())).collect();
    assert_eq!(a, b);
    println!("replication 1 stream repeats: {a:?}");
}
