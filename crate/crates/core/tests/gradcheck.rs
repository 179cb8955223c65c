mod support;

const TOL: f64 = 1e-4;

#[test]
fn tape_operations_match_central_differences() {
    for seed in 0..20 {
        for (name, err) in support::op_reports(seed) {
            assert!(err < TOL, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn model_losses_match_central_differences() {
    for seed in 0..3 {
        for (name, err) in support::model_reports(seed) {
            assert!(err < TOL, "{name} seed {seed}: {err:e}");
        }
    }
}

