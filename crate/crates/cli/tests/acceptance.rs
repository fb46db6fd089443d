//! Acceptance criteria: one pass/fail line per criterion. Exits nonzero when
//! any criterion fails.

use std::process::ExitCode;

use analog_cli::verify;

fn main() -> ExitCode {
    println!("running 12 acceptance criteria");
    let checks = verify::run_all();
    for check in &checks {
        println!("{check}");
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("\nacceptance: {passed} of {} criteria passed", checks.len());
    if passed == checks.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
