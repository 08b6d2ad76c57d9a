//! Compilation of formulas into monitor plans.
//!
//! A plan is the static shape of a monitor network: conjunctions become
//! hubs, necessities become leaves. The same resolution step is used at
//! runtime whenever a leaf instantiates its body after a match.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::event::{ActionPattern, Substitution};
use crate::expr::EvalError;
use crate::formula::{flatten_conjunctions, Formula};
use crate::wellformed::WellFormedFormula;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Binary conjunction hubs, static child lists.
    Baseline,
    /// N-ary hubs with pruning of terminated children.
    Multi,
    /// `Multi` plus merging of conjunction-rooted children into their parent.
    Reconf,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Multi, Mode::Reconf];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Multi => "multi",
            Mode::Reconf => "reconf",
        }
    }

    pub fn flattens(self) -> bool {
        self != Mode::Baseline
    }

    pub fn prunes(self) -> bool {
        self != Mode::Baseline
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "multi" => Ok(Mode::Multi),
            "reconf" => Ok(Mode::Reconf),
            other => Err(format!("unknown mode `{other}` (expected baseline, multi or reconf)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanNode {
    Hub(Vec<PlanNode>),
    Nec { pattern: ActionPattern, body: Formula, env: Substitution },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanRoot {
    /// Nothing left to monitor.
    Satisfied,
    /// Violated before any event.
    Violated,
    Network(PlanNode),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonitorPlan {
    pub mode: Mode,
    pub root: PlanRoot,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStats {
    pub hubs: usize,
    pub leaves: usize,
    pub depth: usize,
}

/// What a formula turns into once conditionals and fixpoints at its top are
/// resolved under an environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolved {
    Discharged,
    Violated,
    Node(PlanNode),
}

/// Resolves `f` under `env` into a plan fragment.
///
/// Conditionals are decided and fixpoints unfolded inline. Trivially true
/// conjuncts are dropped and a conjunction left with one child collapses to
/// it. Baseline keeps conjunctions binary; the other modes splice nested
/// hubs into their parent. Every conjunct is resolved even after one of them
/// is violated, so an evaluation error anywhere always surfaces.
pub fn resolve(f: &Formula, env: &Substitution, mode: Mode) -> Result<Resolved, EvalError> {
    match f {
        Formula::Truth => Ok(Resolved::Discharged),
        Formula::Falsity => Ok(Resolved::Violated),
        Formula::Nec(pattern, body) => Ok(Resolved::Node(PlanNode::Nec {
            pattern: pattern.clone(),
            body: (**body).clone(),
            env: env.clone(),
        })),
        Formula::Max(..) => resolve(&f.unfold().expect("fixpoint"), env, mode),
        Formula::Cond(test, then, otherwise) => {
            if test.substitute(env).eval()? {
                resolve(then, env, mode)
            } else {
                resolve(otherwise, env, mode)
            }
        }
        Formula::Conj(children) => {
            let mut nodes = Vec::with_capacity(children.len());
            let mut violated = false;
            let mut first_err = None;
            for c in children {
                match resolve(c, env, mode) {
                    Ok(Resolved::Discharged) => {}
                    Ok(Resolved::Violated) => violated = true,
                    Ok(Resolved::Node(PlanNode::Hub(grand))) if mode.flattens() => nodes.extend(grand),
                    Ok(Resolved::Node(n)) => nodes.push(n),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
            if violated {
                return Ok(Resolved::Violated);
            }
            Ok(match nodes.len() {
                0 => Resolved::Discharged,
                1 => Resolved::Node(nodes.pop().expect("one node")),
                _ => Resolved::Node(PlanNode::Hub(nodes)),
            })
        }
        Formula::FVar(x) => panic!("free recursion variable {x} reached the monitor"),
    }
}

/// Compiles a well-formed formula. A top-level fixpoint is unfolded once so
/// the plan has a concrete root; later unfoldings happen inside leaves.
pub fn synthesize(f: &WellFormedFormula, mode: Mode) -> Result<MonitorPlan, EvalError> {
    let formula = if mode.flattens() { flatten_conjunctions(f.formula()) } else { f.formula().clone() };
    let root = match resolve(&formula, &Substitution::new(), mode)? {
        Resolved::Discharged => PlanRoot::Satisfied,
        Resolved::Violated => PlanRoot::Violated,
        Resolved::Node(n) => PlanRoot::Network(n),
    };
    Ok(MonitorPlan { mode, root })
}

impl PlanNode {
    pub fn is_hub(&self) -> bool {
        matches!(self, PlanNode::Hub(_))
    }

    fn stats_into(&self, depth: usize, s: &mut PlanStats) {
        s.depth = s.depth.max(depth);
        match self {
            PlanNode::Hub(children) => {
                s.hubs += 1;
                children.iter().for_each(|c| c.stats_into(depth + 1, s));
            }
            PlanNode::Nec { .. } => s.leaves += 1,
        }
    }

    /// Leaves in left-to-right order, rendered with their environment applied.
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each_leaf(&mut |p, b, env| out.push(render_leaf(p, b, env)));
        out
    }

    fn for_each_leaf(&self, f: &mut impl FnMut(&ActionPattern, &Formula, &Substitution)) {
        match self {
            PlanNode::Hub(children) => children.iter().for_each(|c| c.for_each_leaf(f)),
            PlanNode::Nec { pattern, body, env } => f(pattern, body, env),
        }
    }

    fn write_tree(&self, f: &mut fmt::Formatter<'_>, indent: usize) -> fmt::Result {
        match self {
            PlanNode::Hub(children) => {
                writeln!(f, "{:indent$}hub", "")?;
                for c in children {
                    c.write_tree(f, indent + 2)?;
                }
                Ok(())
            }
            PlanNode::Nec { pattern, body, env } => writeln!(f, "{:indent$}nec {}", "", render_leaf(pattern, body, env)),
        }
    }
}

pub(crate) fn render_leaf(pattern: &ActionPattern, body: &Formula, env: &Substitution) -> String {
    let nec = Formula::nec(pattern.clone(), body.clone());
    nec.apply_subst(env).to_string()
}

impl MonitorPlan {
    pub fn stats(&self) -> PlanStats {
        plan_stats(self)
    }

    /// True when no hub has a hub child.
    pub fn is_spider(&self) -> bool {
        match &self.root {
            PlanRoot::Network(PlanNode::Hub(children)) => children.iter().all(|c| !c.is_hub()),
            _ => true,
        }
    }

    pub fn leaves(&self) -> Vec<String> {
        match &self.root {
            PlanRoot::Network(n) => n.leaves(),
            _ => Vec::new(),
        }
    }
}

pub fn plan_stats(p: &MonitorPlan) -> PlanStats {
    let mut s = PlanStats::default();
    if let PlanRoot::Network(n) = &p.root {
        n.stats_into(1, &mut s);
    }
    s
}

/// Indented tree, one node per line.
impl fmt::Display for MonitorPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.root {
            PlanRoot::Satisfied => writeln!(f, "tt"),
            PlanRoot::Violated => writeln!(f, "ff"),
            PlanRoot::Network(n) => n.write_tree(f, 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::match_action;
    use crate::syntax::{parse_event, parse_formula};
    use crate::wellformed::check_wellformed;
    use crate::Value;

    fn wf(src: &str) -> WellFormedFormula {
        check_wellformed(&parse_formula(src).unwrap()).unwrap()
    }

    /// The root leaf's body resolved after the first request of a round.
    fn after_first_request(mode: Mode) -> MonitorPlan {
        let plan = synthesize(&wf(crate::PREDECESSOR_SRC), mode).unwrap();
        let PlanRoot::Network(PlanNode::Nec { pattern, body, env }) = plan.root else { panic!("root is not a leaf") };
        let e = parse_event("srv ? {5,c1}", 1, 1).unwrap();
        let sigma = match_action(&pattern.substitute(&env), &e).unwrap();
        let Resolved::Node(n) = resolve(&body, &env.overridden_by(&sigma), mode).unwrap() else { panic!() };
        MonitorPlan { mode, root: PlanRoot::Network(n) }
    }

    #[test]
    fn root_is_a_single_necessity() {
        for mode in Mode::ALL {
            let plan = synthesize(&wf(crate::PREDECESSOR_SRC), mode).unwrap();
            assert_eq!(plan.stats(), PlanStats { hubs: 0, leaves: 1, depth: 1 });
        }
    }

    #[test]
    fn instantiated_body_shapes() {
        assert_eq!(after_first_request(Mode::Baseline).stats(), PlanStats { hubs: 2, leaves: 3, depth: 3 });
        for mode in [Mode::Multi, Mode::Reconf] {
            let plan = after_first_request(mode);
            assert_eq!(plan.stats(), PlanStats { hubs: 1, leaves: 3, depth: 2 });
            assert!(plan.is_spider());
        }
    }

    #[test]
    fn leaves_agree_across_modes() {
        let base = after_first_request(Mode::Baseline).leaves();
        assert_eq!(base.len(), 3);
        assert_eq!(base[0], "[end ! _] ff");
        assert!(base[2].starts_with("[c1 ! z1] "), "{}", base[2]);
        assert_eq!(after_first_request(Mode::Multi).leaves(), base);
    }

    #[test]
    fn tree_rendering() {
        let text = after_first_request(Mode::Baseline).to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "hub");
        assert_eq!(lines[1], "  nec [end ! _] ff");
        assert_eq!(lines[2], "  hub");
        assert!(lines[3].starts_with("    nec [err ! z] "));
        assert!(lines[3].contains("5 != 0 or c1 != z"), "{}", lines[3]);
    }

    #[test]
    fn degenerate_plans() {
        assert_eq!(synthesize(&wf("tt"), Mode::Multi).unwrap().root, PlanRoot::Satisfied);
        assert_eq!(synthesize(&wf("ff"), Mode::Baseline).unwrap().root, PlanRoot::Violated);
        assert_eq!(synthesize(&wf("[a ! 1] ff & ff"), Mode::Reconf).unwrap().root, PlanRoot::Violated);
        assert_eq!(synthesize(&wf("tt & tt"), Mode::Baseline).unwrap().root, PlanRoot::Satisfied);
    }

    #[test]
    fn top_level_condition_is_decided_statically() {
        let plan = synthesize(&wf("if (2 > 1) then [a ! 1] ff else tt"), Mode::Multi).unwrap();
        assert_eq!(plan.stats().leaves, 1);
        assert!(matches!(synthesize(&wf("if (a + 1 == 2) then tt else ff"), Mode::Multi), Err(EvalError::Type { .. })));
    }

    #[test]
    fn baseline_keeps_binary_hubs() {
        let f = wf("[a ! 1] ff & [b ! 1] ff & [c ! 1] ff & [d ! 1] ff");
        let base = synthesize(&f, Mode::Baseline).unwrap();
        assert_eq!(base.stats(), PlanStats { hubs: 3, leaves: 4, depth: 4 });
        let multi = synthesize(&f, Mode::Multi).unwrap();
        assert_eq!(multi.stats(), PlanStats { hubs: 1, leaves: 4, depth: 2 });
    }

    #[test]
    fn environment_is_applied_when_rendering() {
        let env: Substitution = [("x", Value::int(3))].into_iter().collect();
        let n = PlanNode::Nec { pattern: parse_formula_nec("[a ! x] ff").0, body: Formula::Falsity, env };
        assert_eq!(n.leaves(), ["[a ! 3] ff"]);
    }

    fn parse_formula_nec(src: &str) -> (ActionPattern, Formula) {
        match parse_formula(src).unwrap() {
            Formula::Nec(p, b) => (p, *b),
            _ => panic!(),
        }
    }
}
