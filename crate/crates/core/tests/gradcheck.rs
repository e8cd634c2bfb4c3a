mod common;

use common::{all_ops, OpReport, SHAPES_PER_OP};

fn assert_ok(r: &OpReport) {
    assert!(r.shapes >= 20, "{}: only {} shapes", r.op, r.shapes);
    assert!(r.worst < 1e-4, "{}: error {:.3e} at {}", r.op, r.worst, r.worst_shape);
}

#[test]
fn every_op_matches_finite_differences() {
    let reports = all_ops(11);
    assert_eq!(reports.len(), 9);
    for r in &reports {
        assert_eq!(r.shapes, SHAPES_PER_OP);
        assert_ok(r);
    }
}

#[test]
fn a_broken_gradient_is_caught() {
    // Sanity check on the metric itself: a 1% error in one entry must register.
    let a = [1.0, -2.0, 0.5];
    let n = [1.0, -2.02, 0.5];
    assert!(common::tensor_error(&a, &n) > 1e-4);
    assert_eq!(common::tensor_error(&[0.0; 3], &[0.0; 3]), 0.0);
}
