//! Runs every requested mode on the same trace and reports the counters.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event::Event;
use crate::expr::EvalError;
use crate::oracle::{oracle_verdict, Verdict};
use crate::runtime::{run_trace, Backend, FinishReport, Injection, Outcome, RuntimeError, SchedulerConfig};
use crate::synthesis::{synthesize, Mode};
use crate::wellformed::WellFormedFormula;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub formula_hash: String,
    pub workload: String,
    pub backend: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeReport {
    pub events: u64,
    pub forwards: u64,
    pub spawned: u64,
    pub peak_live: u64,
    pub merges_completed: u64,
    pub max_depth_seen: u64,
    /// `no_violation`, `violation` or `eval_fault`.
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub violation_index: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ns: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metadata: BenchMetadata,
    pub modes: BTreeMap<Mode, ModeReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{mode}: top-level condition: {source}")]
    Synthesis { mode: Mode, source: EvalError },
    #[error("{mode}: {source}")]
    Runtime { mode: Mode, source: RuntimeError },
    #[error("{mode}: verdict `{got}` disagrees with the reference `{expected}`")]
    Mismatch { mode: Mode, expected: String, got: String },
    #[error("{mode}: counters differ between repetitions")]
    Nondeterministic { mode: Mode },
}

/// SHA-256 of the formula source, hex encoded.
pub fn formula_hash(src: &str) -> String {
    hex::encode(Sha256::digest(src.as_bytes()))
}

fn describe(o: &Outcome) -> (String, Option<u64>) {
    match o {
        Outcome::Verdict(Verdict::NoViolation) => ("no_violation".into(), None),
        Outcome::Verdict(Verdict::Violation(i)) => ("violation".into(), Some(*i)),
        Outcome::EvalFault { index, .. } => ("eval_fault".into(), Some(*index)),
    }
}

fn counters(r: &FinishReport) -> [u64; 6] {
    let m = &r.metrics;
    [r.events_offered, m.forwards, m.spawned, m.peak_live, m.merges_completed, m.max_depth_seen]
}

/// Runs `modes` over `trace` with quiescent injection. Counters come from
/// the first repetition and must be identical in the others; wall time is
/// averaged and reported for the thread backend only. Any disagreement
/// with the sequential oracle aborts the run.
pub fn run_bench(
    formula: &WellFormedFormula,
    formula_src: &str,
    trace: &[Event],
    workload: &str,
    modes: &[Mode],
    config: &SchedulerConfig,
    reps: usize,
) -> Result<BenchReport, BenchError> {
    let reps = reps.max(1);
    let reference = match oracle_verdict(formula, trace) {
        Ok(Verdict::NoViolation) => ("no_violation".to_string(), None),
        Ok(Verdict::Violation(i)) => ("violation".to_string(), Some(i)),
        Err(e) => ("eval_fault".to_string(), Some(e.index)),
    };
    let config = SchedulerConfig { injection: Injection::Quiescent, ..config.clone() };
    let seed = match config.backend {
        Backend::Sim { seed } => seed,
        Backend::Threads { .. } => 0,
    };
    let mut out = BTreeMap::new();
    for &mode in modes {
        let plan = synthesize(formula, mode).map_err(|source| BenchError::Synthesis { mode, source })?;
        let mut first: Option<FinishReport> = None;
        let mut wall = 0u128;
        for _ in 0..reps {
            let start = Instant::now();
            let report = run_trace(&plan, trace, &config).map_err(|source| BenchError::Runtime { mode, source })?;
            wall += start.elapsed().as_nanos();
            match &first {
                Some(f) if counters(f) != counters(&report) => return Err(BenchError::Nondeterministic { mode }),
                Some(_) => {}
                None => first = Some(report),
            }
        }
        let report = first.expect("at least one repetition");
        let (verdict, violation_index) = describe(&report.outcome);
        if (verdict.clone(), violation_index) != reference {
            let show = |v: &str, i: Option<u64>| i.map_or(v.to_string(), |i| format!("{v} at {i}"));
            return Err(BenchError::Mismatch {
                mode,
                expected: show(&reference.0, reference.1),
                got: show(&verdict, violation_index),
            });
        }
        let m = &report.metrics;
        out.insert(
            mode,
            ModeReport {
                events: report.events_offered,
                forwards: m.forwards,
                spawned: m.spawned,
                peak_live: m.peak_live,
                merges_completed: m.merges_completed,
                max_depth_seen: m.max_depth_seen,
                verdict,
                violation_index,
                wall_ns: matches!(config.backend, Backend::Threads { .. }).then(|| (wall / reps as u128) as u64),
            },
        );
    }
    Ok(BenchReport {
        metadata: BenchMetadata {
            formula_hash: formula_hash(formula_src),
            workload: workload.to_string(),
            backend: config.backend.name().to_string(),
            seed,
        },
        modes: out,
    })
}
