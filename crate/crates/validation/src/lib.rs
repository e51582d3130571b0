//! Criterion runner for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion reports one `[PASS]` or `[FAIL]` line followed by
//! indented notes. A criterion that finishes over its time limit fails.

use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

pub struct Criterion {
    pub id: &'static str,
    pub name: &'static str,
    pub limit: Duration,
    pub run: fn() -> Outcome,
}

pub fn status_line(c: &Criterion, outcome: &Outcome, elapsed: Duration) -> (bool, String) {
    let in_time = elapsed <= c.limit;
    let pass = outcome.pass && in_time;
    let line = format!(
        "[{}] {} {}: {} ({:.1} s, limit {} s{})",
        if pass { "PASS" } else { "FAIL" },
        c.id,
        c.name,
        outcome.detail,
        elapsed.as_secs_f64(),
        c.limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    (pass, line)
}

/// Runs the criteria whose ids are in `only` (all when empty), printing as
/// it goes. Returns the number that failed.
pub fn run_all(criteria: &[Criterion], only: &[String]) -> usize {
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria {
        if !only.is_empty() && !only.iter().any(|id| id == c.id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let (pass, line) = status_line(c, &outcome, start.elapsed());
        failed += !pass as usize;
        println!("{line}");
        for note in &outcome.notes {
            println!("       {note}");
        }
    }
    println!("acceptance: {} of {} criteria passed", ran - failed, ran);
    failed
}

/// True when no point of `(x, y)` falls more than `tol` below its
/// predecessor, so the curve rises and then stays on a plateau.
pub fn non_decreasing_to_plateau(curve: &[(f64, f64)], tol: f64) -> bool {
    curve.windows(2).all(|w| w[1].1 >= w[0].1 - tol)
}

/// Checks that `grid[i][j]` never decreases along either index.
pub fn monotone_grid<const R: usize, const C: usize>(grid: &[[f64; C]; R]) -> bool {
    (0..R).all(|i| {
        (0..C).all(|j| (i + 1 == R || grid[i + 1][j] >= grid[i][j]) && (j + 1 == C || grid[i][j + 1] >= grid[i][j]))
    })
}
