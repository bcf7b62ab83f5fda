//! Runs every acceptance criterion and prints one line each. Built without the
//! libtest harness so the lines are never captured.

use std::process::ExitCode;

use starvol::suite::{run_criterion, SuiteOptions, CRITERIA};

fn main() -> ExitCode {
    let opts = SuiteOptions::default();
    let mut failed = Vec::new();
    for id in 1..=CRITERIA {
        let outcome = run_criterion(id, &opts);
        println!("{}", outcome.summary_line());
        if !outcome.passed {
            for c in outcome.checks.iter().filter(|c| !c.passed) {
                println!("    {} = {:e} (limit {:e})", c.name, c.value, c.limit);
            }
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: {CRITERIA}/{CRITERIA} criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
