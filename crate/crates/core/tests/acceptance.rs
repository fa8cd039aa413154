//! Acceptance report: one pass/fail line per criterion, with the numbers
//! behind each verdict.
//!
//! Criterion 1 cannot be met by a faithful implementation: three catalog
//! lines have a noise-free prominence below the 0.15 counts/pulse detection
//! threshold. It is run and reported like every other criterion; its failure
//! does not fail this target, any other failure does, and so does an
//! unexpected pass (the bookkeeping would then be stale).

use std::process::ExitCode;

use ple_core::reproduce::{run_all, ReproduceOptions};

const KNOWN_UNATTAINABLE: &[u32] = &[1];

fn main() -> ExitCode {
    let outcomes = run_all(&ReproduceOptions::default());
    let mut regressions = Vec::new();
    for o in &outcomes {
        let known = KNOWN_UNATTAINABLE.contains(&o.id);
        let tag = match (o.passed, known) {
            (true, false) => "",
            (false, true) => "  (known unattainable)",
            (true, true) => "  (listed as unattainable but passed)",
            (false, false) => "  (REGRESSION)",
        };
        println!("{}{tag}", o.summary());
        for d in &o.details {
            println!("    {d}");
        }
        if o.passed == known {
            regressions.push(o.id);
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    if regressions.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {regressions:?}");
        ExitCode::FAILURE
    }
}
