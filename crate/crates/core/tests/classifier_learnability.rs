mod common;

#[test]
fn order_classifier_learns_straight_line_trajectories() {
    let (reached, acc) = common::train_order_classifier(500, 0.9);
    assert!(reached.is_some(), "held-out accuracy {acc:.3} after 500 updates");
}
