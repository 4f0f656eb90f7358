//! One line per acceptance criterion. Criteria 1 to 8 run through the same
//! library entry point as `rayforge selftest`; criterion 9 times the whole
//! suite against its budget.

use std::io::Write;
use std::time::Instant;

use rayforge::selftest::{run_criterion, CRITERIA, SUITE_BUDGET};
use rayforge::Exec;

/// Written to the raw handle so the table shows up without `--nocapture`.
fn report(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance_criteria() {
    let started = Instant::now();
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        let r = run_criterion(id, Exec::default());
        report(format!(
            "criterion {}: {} [{}] {:.2}s: {}",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.elapsed.as_secs_f64(),
            r.detail
        ));
        if !r.passed {
            failed.push(r.id);
        }
    }
    let total = started.elapsed();
    let ok9 = failed.is_empty() && total < SUITE_BUDGET;
    report(format!(
        "criterion 9: {} [selftest aggregate] {:.2}s: {} of 8 passed, budget {}s",
        if ok9 { "PASS" } else { "FAIL" },
        total.as_secs_f64(),
        8 - failed.len(),
        SUITE_BUDGET.as_secs()
    ));
    if !ok9 {
        failed.push(9);
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
