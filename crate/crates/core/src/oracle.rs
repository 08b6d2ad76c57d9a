//! Reference semantics: a direct, sequential evaluation of a formula over a
//! finite trace.
//!
//! The state is a multiset of pending necessities. Each event either matches
//! a necessity, replacing it by its instantiated body, or discharges it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{match_action, Event};
use crate::expr::EvalError;
use crate::formula::Formula;
use crate::wellformed::WellFormedFormula;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "index")]
pub enum Verdict {
    /// Violated by the event at this 1-based index; `0` when the formula is
    /// unsatisfiable before any event is seen.
    Violation(u64),
    NoViolation,
}

impl Verdict {
    pub fn violation_index(self) -> Option<u64> {
        match self {
            Verdict::Violation(i) => Some(i),
            Verdict::NoViolation => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Violation(i) => write!(f, "violation at event {i}"),
            Verdict::NoViolation => f.write_str("no violation"),
        }
    }
}

/// A boolean test failed to evaluate while processing an event.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("event {index}: {source}")]
pub struct OracleError {
    pub index: u64,
    pub source: EvalError,
}

/// Result of normalising a formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Normalized {
    /// Conjunction of necessities; empty means trivially true.
    Obligations(Vec<Formula>),
    ImmediateViolation,
}

/// Unfolds fixpoints, decides conditionals and flattens conjunctions until
/// only necessities remain.
pub fn normalize(f: &Formula) -> Result<Normalized, EvalError> {
    let mut out = Vec::new();
    if push_normalized(f, &mut out)? {
        Ok(Normalized::Obligations(out))
    } else {
        Ok(Normalized::ImmediateViolation)
    }
}

// Returns false on `ff`. Every element is still visited so that an
// evaluation error is found whatever the order of conjuncts.
fn push_normalized(f: &Formula, out: &mut Vec<Formula>) -> Result<bool, EvalError> {
    match f {
        Formula::Truth => Ok(true),
        Formula::Falsity => Ok(false),
        Formula::Nec(..) => {
            out.push(f.clone());
            Ok(true)
        }
        Formula::Conj(children) => {
            let mut ok = true;
            let mut first_err = None;
            for c in children {
                match push_normalized(c, out) {
                    Ok(b) => ok &= b,
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            match first_err {
                Some(e) => Err(e),
                None => Ok(ok),
            }
        }
        Formula::Max(..) => push_normalized(&f.unfold().expect("fixpoint"), out),
        Formula::Cond(b, t, e) => {
            if b.eval()? {
                push_normalized(t, out)
            } else {
                push_normalized(e, out)
            }
        }
        Formula::FVar(x) => panic!("free recursion variable {x} in a well-formed formula"),
    }
}

/// Outcome of feeding one event to a single obligation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// The event does not match: the obligation is discharged.
    Discharged,
    Residual(Vec<Formula>),
    Violated,
}

pub fn step_obligation(obligation: &Formula, event: &Event) -> Result<StepOutcome, EvalError> {
    let Formula::Nec(pattern, body) = obligation else {
        panic!("obligation is not a necessity: {obligation}");
    };
    let Some(sigma) = match_action(pattern, event) else {
        return Ok(StepOutcome::Discharged);
    };
    Ok(match normalize(&body.apply_subst(&sigma))? {
        Normalized::ImmediateViolation => StepOutcome::Violated,
        Normalized::Obligations(next) => StepOutcome::Residual(next),
    })
}

/// Incremental oracle over a stream of events.
#[derive(Clone, Debug)]
pub struct OracleState {
    obligations: Vec<Formula>,
    verdict: Option<Verdict>,
    seen: u64,
}

impl OracleState {
    pub fn new(f: &WellFormedFormula) -> Result<Self, OracleError> {
        let mut state = OracleState { obligations: Vec::new(), verdict: None, seen: 0 };
        match normalize(f.formula()).map_err(|source| OracleError { index: 0, source })? {
            Normalized::ImmediateViolation => state.verdict = Some(Verdict::Violation(0)),
            Normalized::Obligations(o) => state.obligations = o,
        }
        Ok(state)
    }

    /// Processes the next event. Once a violation has been found, further
    /// events are ignored.
    pub fn step(&mut self, event: &Event) -> Result<Option<Verdict>, OracleError> {
        self.seen += 1;
        if self.verdict.is_some() {
            return Ok(self.verdict);
        }
        let mut next = Vec::new();
        let mut violated = false;
        let mut first_err = None;
        for ob in &self.obligations {
            match step_obligation(ob, event) {
                Ok(StepOutcome::Discharged) => {}
                Ok(StepOutcome::Residual(r)) => next.extend(r),
                Ok(StepOutcome::Violated) => violated = true,
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(source) = first_err {
            return Err(OracleError { index: self.seen, source });
        }
        if violated {
            self.verdict = Some(Verdict::Violation(self.seen));
        }
        self.obligations = next;
        Ok(self.verdict)
    }

    pub fn obligations(&self) -> &[Formula] {
        &self.obligations
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict.unwrap_or(Verdict::NoViolation)
    }
}

/// Evaluates `f` over the whole trace. An evaluation error takes precedence
/// over a violation detected at the same event.
pub fn oracle_verdict(f: &WellFormedFormula, trace: &[Event]) -> Result<Verdict, OracleError> {
    let mut state = OracleState::new(f)?;
    for e in trace {
        if state.step(e)?.is_some() {
            break;
        }
        if state.obligations.is_empty() {
            break;
        }
    }
    Ok(state.verdict())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_formula, parse_trace};
    use crate::wellformed::check_wellformed;

    fn verdict(formula: &str, trace: &str) -> Result<Verdict, OracleError> {
        let wf = check_wellformed(&parse_formula(formula).unwrap()).unwrap();
        oracle_verdict(&wf, &parse_trace(trace).unwrap())
    }

    #[test]
    fn good_exchange_has_no_violation() {
        let v = verdict(crate::PREDECESSOR_SRC, "srv ? {5,c1}\nc1 ! 4\nsrv ? {0,c2}\nerr ! c2\n");
        assert_eq!(v, Ok(Verdict::NoViolation));
    }

    #[test]
    fn wrong_answer_is_flagged_at_the_response() {
        let v = verdict(crate::PREDECESSOR_SRC, "srv ? {5,c1}\nc1 ! 4\nsrv ? {3,c2}\nc2 ! 3\n");
        assert_eq!(v, Ok(Verdict::Violation(4)));
    }

    #[test]
    fn end_of_service_is_a_violation() {
        let v = verdict(crate::PREDECESSOR_SRC, "srv ? {1,c1}\nend ! done\n");
        assert_eq!(v, Ok(Verdict::Violation(2)));
    }

    #[test]
    fn misdirected_error_report() {
        assert_eq!(verdict(crate::PREDECESSOR_SRC, "srv ? {2,c1}\nerr ! c1\n"), Ok(Verdict::Violation(2)));
        assert_eq!(verdict(crate::PREDECESSOR_SRC, "srv ? {0,c1}\nerr ! c2\n"), Ok(Verdict::Violation(2)));
    }

    #[test]
    fn unrelated_event_ends_monitoring() {
        // After a non-matching event the remaining obligations are discharged.
        let v = verdict(crate::PREDECESSOR_SRC, "c9 ! 1\nsrv ? {1,c1}\nc1 ! 7\n");
        assert_eq!(v, Ok(Verdict::NoViolation));
    }

    #[test]
    fn falsity_is_violated_before_any_event() {
        assert_eq!(verdict("ff", ""), Ok(Verdict::Violation(0)));
        assert_eq!(verdict("tt & (if (1 == 2) then tt else ff)", "a ! 1\n"), Ok(Verdict::Violation(0)));
    }

    #[test]
    fn empty_trace_is_not_a_violation() {
        assert_eq!(verdict(crate::PREDECESSOR_SRC, ""), Ok(Verdict::NoViolation));
    }

    #[test]
    fn type_error_beats_violation_at_the_same_event() {
        let src = "[a ? x] ff & [a ? y] if (y + 1 == 2) then tt else ff";
        let err = verdict(src, "a ? c1\n").unwrap_err();
        assert_eq!(err.index, 1);
        assert!(matches!(err.source, EvalError::Type { .. }));
    }

    #[test]
    fn recursion_keeps_per_round_bindings() {
        let src = "max X. [a ? x] [b ? y] if (x == y) then X else ff";
        assert_eq!(verdict(src, "a ? 1\nb ? 1\na ? 2\nb ? 2\n"), Ok(Verdict::NoViolation));
        assert_eq!(verdict(src, "a ? 1\nb ? 1\na ? 2\nb ? 1\n"), Ok(Verdict::Violation(4)));
    }
}
