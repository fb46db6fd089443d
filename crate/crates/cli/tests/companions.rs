//! Exact forms of the bounds behind criteria 3 and 8.

use analog_cli::verify::companion_checks;

#[test]
fn exact_bounds_hold() {
    for check in companion_checks() {
        println!("{check}");
        assert!(check.passed, "{check}");
    }
}
