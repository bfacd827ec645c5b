//! Full verification suite at its stated tolerances, one line per criterion.

use std::process::ExitCode;

use condaj::check::{run_suite, SuiteOptions};

fn main() -> ExitCode {
    let report = run_suite(&SuiteOptions { quick: false });
    println!("\nacceptance");
    for r in &report {
        println!("{r}");
    }
    let failed = report.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed\n", report.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
