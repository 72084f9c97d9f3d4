mod common;

use common::*;

const CASES: u64 = 25;
const TOL: f64 = 1e-6;

fn check(name: &str, errors: impl Fn(u64) -> Vec<(String, f64)>) {
    for case in 0..CASES {
        let errs = errors(case);
        let (array, err) = worst(&errs);
        assert!(err < TOL, "{name} case {case}: {array} relative error {err:e}");
    }
}

#[test]
fn gcn_encoder_train_mode() {
    check("gcn", gcn_gradient_errors);
}

#[test]
fn mlp_head() {
    check("mlp", mlp_gradient_errors);
}

#[test]
fn bootstrap_pipeline() {
    check("bgrl", bgrl_gradient_errors);
}

#[test]
fn cross_entropy_through_encoder() {
    check("ce", ce_gradient_errors);
}
