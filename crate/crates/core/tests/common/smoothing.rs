//! The smoothing contract as a property, runnable with any case count.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use sensorclf::train::{smooth, PredictionTrack};

/// Decision series with optional no-prediction markers, and a width.
pub fn track_strategy() -> impl Strategy<Value = (Vec<Option<u8>>, usize)> {
    (
        prop::collection::vec(prop_oneof![8 => (0u8..=1).prop_map(Some), 1 => Just(None)], 0..120),
        1usize..8,
    )
}

pub fn track(decisions: Vec<Option<u8>>) -> PredictionTrack {
    let n = decisions.len();
    PredictionTrack {
        timestamps: (0..n as i64).map(|t| 120 * t).collect(),
        class_names: vec!["window_open".into()],
        probabilities: vec![vec![Some(0.5); n]],
        decisions: vec![decisions],
        threshold: 0.5,
        warnings: vec![],
    }
}

/// Runs of equal values inside one marker-free stretch.
fn stretch_runs(d: &[Option<u8>]) -> Vec<Vec<(usize, u8)>> {
    d.split(Option::is_none)
        .map(|s| {
            let mut runs: Vec<(usize, u8)> = Vec::new();
            for v in s.iter().map(|v| v.unwrap()) {
                match runs.last_mut() {
                    Some(r) if r.1 == v => r.0 += 1,
                    _ => runs.push((1, v)),
                }
            }
            runs
        })
        .collect()
}

pub fn check_smoothed(input: &[Option<u8>], w: usize) -> Result<(), TestCaseError> {
    let once = smooth(&track(input.to_vec()), w).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let twice = smooth(&once, w).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let out = &once.decisions[0];
    prop_assert_eq!(out.len(), input.len());
    prop_assert!(
        out.iter().zip(input).all(|(a, b)| a.is_none() == b.is_none()),
        "markers moved"
    );
    for runs in stretch_runs(out) {
        for i in 1..runs.len().saturating_sub(1) {
            prop_assert!(
                !(runs[i].0 < w && runs[i - 1].1 == runs[i + 1].1),
                "flank-agreeing run of {} < {} survived in {:?}",
                runs[i].0,
                w,
                out
            );
        }
    }
    prop_assert_eq!(&twice.decisions, &once.decisions, "not idempotent");
    prop_assert_eq!(&once.probabilities, &track(input.to_vec()).probabilities);
    Ok(())
}

/// Checks `cases` random tracks; the error carries the minimal failing case.
pub fn run(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&track_strategy(), |(d, w)| check_smoothed(&d, w))
        .map_err(|e| e.to_string())
}
