//! Runtime verification for the safety fragment of Hennessy-Milner logic
//! with recursion.
//!
//! A formula is parsed ([`syntax`]), checked ([`wellformed`]), and then
//! either evaluated directly over a trace ([`oracle`]) or compiled into a
//! network of communicating monitor processes ([`synthesis`], [`runtime`]).

pub mod event;
pub mod expr;
pub mod formula;
pub mod harness;
pub mod synthesis;
pub mod syntax;
pub mod oracle;
pub mod runtime;
pub mod value;
pub mod wellformed;

pub use event::{match_action, ActionPattern, Direction, Event, Name, Pattern, Substitution};
pub use expr::{eval_bool, Arith, ArithOp, BoolExpr, CmpOp, EvalError, Operand};
pub use formula::{flatten_conjunctions, unfold_max, Formula};
pub use synthesis::{plan_stats, resolve, synthesize, Mode, MonitorPlan, PlanNode, PlanRoot, PlanStats, Resolved};
pub use runtime::{deploy, run_trace, Backend, FinishReport, Injection, Metrics, NetworkHandle, Outcome, RuntimeError, SchedulerConfig};
pub use syntax::{parse_action, parse_bool_expr, parse_event, parse_formula, parse_trace, SyntaxError};
pub use oracle::{oracle_verdict, OracleError, Verdict};
pub use value::{Atom, Value};
pub use wellformed::{check_wellformed, WellFormedError, WellFormedErrors, WellFormedFormula};

/// The request/response property: every request `{x,y}` to `srv` is answered
/// on channel `y` with `x - 1`, a zero request is answered on `err` with the
/// client name, and the server never emits on `end`.
pub const PREDECESSOR_SRC: &str = "max X. [srv ? {x,y}] ( [end ! _] ff & [err ! z] (if (x != 0 or y != z) then ff else X) & [y ! z] (if (z == x - 1) then X else ff) )";
