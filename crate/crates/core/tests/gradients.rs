mod common;

use common::*;
use heartformer::rng::rng_from_seed;

#[test]
fn every_op_matches_finite_differences() {
    for (name, err) in op_suite(20, 7) {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn sa_cd_matches_finite_differences() {
    let mut rng = rng_from_seed(8);
    for _ in 0..20 {
        let err = sa_cd_gradient_error(&mut rng);
        assert!(err < 1e-4, "relative error {err:e}");
    }
}

#[test]
fn toy_network_matches_finite_differences() {
    let err = network_gradient_error(3);
    assert!(err < 1e-3, "relative error {err:e}");
}

