//! One PASS/FAIL line per acceptance criterion at the desk scale.
//!
//! Runs without the libtest harness so the lines always reach stdout.
//! `ACCEPTANCE_SEED` overrides the default seed.

use std::process::ExitCode;
use std::time::Instant;

use convexity_lab::lab::suite::{desk_calibration, run_criterion, CRITERIA};

fn main() -> ExitCode {
    let seed = std::env::var("ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1u64);
    let t = Instant::now();
    let calibration = match desk_calibration(seed) {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL calibration: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("calibration: c0_hat = {:.6e} ({:.1}s)", calibration.c0_hat(), t.elapsed().as_secs_f64());

    let mut failed = 0;
    for (i, title) in CRITERIA.iter().enumerate() {
        let k = i + 1;
        let t = Instant::now();
        let (ok, detail) = match run_criterion(k, seed, &calibration) {
            Ok(report) => {
                let bad: Vec<String> = report.summary_lines().into_iter().filter(|l| l.starts_with("[FAIL]")).collect();
                (report.all_passed(), bad.join("; "))
            }
            Err(e) => (false, e.to_string()),
        };
        let secs = t.elapsed().as_secs_f64();
        if ok {
            println!("PASS criterion {k:>2}: {title} ({secs:.1}s)");
        } else {
            failed += 1;
            println!("FAIL criterion {k:>2}: {title} ({secs:.1}s) {detail}");
        }
    }
    println!("acceptance: {} of {} criteria pass", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
