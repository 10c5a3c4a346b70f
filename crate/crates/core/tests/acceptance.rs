//! Runs every validation suite at full size and prints one PASS/FAIL line
//! per criterion. Tolerances live in `zetasize::suite`.
//!
//! Criteria listed in `KNOWN_FAILING` are reported but do not fail the run;
//! any other failure does.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use zetasize::suite::{run_suite, SuiteConfig, SUITE_NAMES};

const KNOWN_FAILING: [(&str, &str); 1] = [(
    "merging",
    "the oracle/estimate ratio drifts monotonically by about 5% over six decades of root gap; \
     the spread stays near 1.05, but a monotone drift correlates with ln t (about 0.71), above the 0.3 limit",
)];

fn main() -> ExitCode {
    let cfg = SuiteConfig::default();
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("artifact directory");
    let mut unexpected = Vec::new();
    let mut reports = Vec::new();
    for name in SUITE_NAMES {
        let r = run_suite(name, &cfg).expect("known suite");
        println!("{}", r.line());
        let known = KNOWN_FAILING.iter().find(|(n, _)| *n == name);
        match (r.passed, known) {
            (false, Some((_, why))) => println!("       known failure: {why}"),
            (false, None) => unexpected.push(name),
            (true, Some(_)) => println!("       listed as known failing but passed"),
            (true, None) => {}
        }
        for (file, text) in &r.artifacts {
            fs::write(dir.join(file), text).expect("write artifact");
        }
        reports.push(r);
    }
    let summary = serde_json::to_string_pretty(&reports).expect("reports serialize");
    fs::write(dir.join("reports.json"), summary).expect("write reports");
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} passed; artifacts in {}", reports.len(), dir.display());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
