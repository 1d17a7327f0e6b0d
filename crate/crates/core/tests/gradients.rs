mod common;

use common::gradcheck;

#[test]
fn analytic_gradients_match_finite_differences() {
    for (name, err) in gradcheck::all_losses(17) {
        assert!(err < 1e-4, "{name}: max relative error {err:.3e}");
    }
}
