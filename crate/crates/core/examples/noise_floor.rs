//! SA-CD between two independent densifications of the same phantom
//! instance. No prediction at that point count can be expected to score
//! much below this against a freshly sampled reference.
//!
//! cargo run --release --example noise_floor

use heartformer::evalmetrics::sa_cd;
use heartformer::phantom::{build_default_model, densify, sample_instance};
use heartformer::rng::rng_from_seed;

fn main() {
    let model = build_default_model(1);
    for n in [2048usize, 4096, 16384] {
        let mut acc = 0.0;
        for s in 0..5 {
            let inst = sample_instance(&model, s, 3.0).unwrap();
            let a = densify(&inst, n, &mut rng_from_seed(100 + s)).unwrap();
            let b = densify(&inst, n, &mut rng_from_seed(200 + s)).unwrap();
            acc += sa_cd(&a, &b).unwrap().value;
        }
        println!("{n:>6} points: {:.3} mm", acc / 5.0);
    }
}
