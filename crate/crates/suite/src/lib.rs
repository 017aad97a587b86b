//! Bookkeeping for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Default)]
pub struct Report {
    pub outcomes: Vec<Outcome>,
}

impl Report {
    /// Records one criterion and prints its PASS/FAIL line straight to stderr, bypassing the test
    /// harness output capture.
    pub fn record(&mut self, id: u32, name: &str, passed: bool, detail: String, elapsed: Duration) {
        let line = format!(
            "{} [{id:>2}] {name}: {detail} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        let _ = writeln!(std::io::stderr(), "{line}");
        self.outcomes.push(Outcome { id, name: name.into(), passed, detail, elapsed });
    }

    pub fn failures(&self) -> Vec<&Outcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    pub fn summary(&self) -> String {
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        format!("acceptance: {passed}/{} criteria passed", self.outcomes.len())
    }
}

/// Runs `f` and returns its value with the elapsed wall time.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}
