//! Well-formedness: closedness, guardedness and unique binder names.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::event::{ActionPattern, Name, Pattern};
use crate::expr::{Arith, BoolExpr, Operand};
use crate::formula::{flatten_conjunctions, Formula};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum WellFormedError {
    #[error("unbound variable `{name}` at {location}")]
    UnboundVariable { name: Name, location: String },
    #[error("recursion variable `{0}` occurs outside any necessity in its fixpoint")]
    UnguardedRecursion(Name),
}

/// All problems found in one formula, in traversal order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WellFormedErrors(pub Vec<WellFormedError>);

impl fmt::Display for WellFormedErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for WellFormedErrors {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinderKind {
    /// Term variable bound by a necessity pattern.
    Term,
    /// Formula variable bound by `max`.
    Recursion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinderSite {
    pub name: Name,
    pub original: Name,
    pub kind: BinderKind,
    pub location: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarOccurrence {
    pub name: Name,
    pub location: String,
    /// Index into [`WellFormedFormula::binders`].
    pub binder: usize,
}

/// A closed, guarded formula whose binders are pairwise distinct and whose
/// binding pattern occurrences are marked [`Pattern::Bind`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WellFormedFormula {
    formula: Formula,
    binders: Vec<BinderSite>,
    occurrences: Vec<VarOccurrence>,
}

impl WellFormedFormula {
    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn into_formula(self) -> Formula {
        self.formula
    }

    pub fn binders(&self) -> &[BinderSite] {
        &self.binders
    }

    pub fn occurrences(&self) -> &[VarOccurrence] {
        &self.occurrences
    }

    /// `(original, new)` for every binder that was renamed.
    pub fn renames(&self) -> impl Iterator<Item = (&Name, &Name)> {
        self.binders.iter().filter(|b| b.name != b.original).map(|b| (&b.original, &b.name))
    }

    pub fn flatten(&self) -> WellFormedFormula {
        flatten_wellformed(self)
    }
}

impl fmt::Display for WellFormedFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.formula.fmt(f)
    }
}

struct ScopeEntry {
    original: Name,
    binder: usize,
    nec_depth: usize,
}

struct Checker {
    taken: HashSet<Name>,
    seen: HashSet<Name>,
    binders: Vec<BinderSite>,
    occurrences: Vec<VarOccurrence>,
    errors: Vec<WellFormedError>,
    unguarded_reported: HashSet<usize>,
    terms: Vec<ScopeEntry>,
    fvars: Vec<ScopeEntry>,
    path: Vec<String>,
    nec_depth: usize,
}

fn collect_names(f: &Formula, out: &mut HashSet<Name>) {
    let pat = |p: &ActionPattern, out: &mut HashSet<Name>| {
        p.for_each_var(&mut |n, _| {
            out.insert(n.clone());
        })
    };
    match f {
        Formula::Truth | Formula::Falsity => {}
        Formula::FVar(x) => {
            out.insert(x.clone());
        }
        Formula::Conj(children) => children.iter().for_each(|c| collect_names(c, out)),
        Formula::Nec(p, body) => {
            pat(p, out);
            collect_names(body, out);
        }
        Formula::Max(x, body) => {
            out.insert(x.clone());
            collect_names(body, out);
        }
        Formula::Cond(b, t, e) => {
            b.for_each_var(&mut |n| {
                out.insert(n.clone());
            });
            collect_names(t, out);
            collect_names(e, out);
        }
    }
}

impl Checker {
    fn location(&self) -> String {
        if self.path.is_empty() {
            "top level".to_string()
        } else {
            self.path.join(" / ")
        }
    }

    fn bind(&mut self, original: &Name, kind: BinderKind) -> usize {
        let name = if self.seen.contains(original) {
            let mut k = 1usize;
            loop {
                let candidate: Name = Name::from(format!("{original}{k}"));
                if !self.taken.contains(&candidate) && !self.seen.contains(&candidate) {
                    break candidate;
                }
                k += 1;
            }
        } else {
            original.clone()
        };
        self.seen.insert(name.clone());
        self.taken.insert(name.clone());
        self.binders.push(BinderSite { name, original: original.clone(), kind, location: self.location() });
        self.binders.len() - 1
    }

    fn lookup_term(&self, name: &str) -> Option<usize> {
        self.terms.iter().rev().find(|e| &*e.original == name).map(|e| e.binder)
    }

    fn reference(&mut self, binder: usize) -> Name {
        let name = self.binders[binder].name.clone();
        self.occurrences.push(VarOccurrence { name: name.clone(), location: self.location(), binder });
        name
    }

    fn pattern(&mut self, p: &Pattern, fresh: &mut Vec<(Name, usize)>) -> Pattern {
        match p {
            Pattern::Var(n) if !fresh.iter().any(|(o, _)| o == n) => match self.lookup_term(n) {
                Some(b) => Pattern::Var(self.reference(b)),
                None => {
                    let b = self.bind(n, BinderKind::Term);
                    fresh.push((n.clone(), b));
                    Pattern::Bind(self.binders[b].name.clone())
                }
            },
            Pattern::Bind(n) if !fresh.iter().any(|(o, _)| o == n) => {
                let b = self.bind(n, BinderKind::Term);
                fresh.push((n.clone(), b));
                Pattern::Bind(self.binders[b].name.clone())
            }
            Pattern::Var(n) | Pattern::Bind(n) => {
                let b = fresh.iter().find(|(o, _)| o == n).map(|(_, b)| *b).expect("fresh binder");
                Pattern::Bind(self.binders[b].name.clone())
            }
            Pattern::Wildcard | Pattern::Lit(_) => p.clone(),
            Pattern::Tuple(items) => Pattern::Tuple(items.iter().map(|i| self.pattern(i, fresh)).collect()),
        }
    }

    fn arith(&mut self, a: &Arith) -> Arith {
        match a {
            Arith::Operand(Operand::Var(n)) => match self.lookup_term(n) {
                Some(b) => Arith::Operand(Operand::Var(self.reference(b))),
                None => {
                    self.errors.push(WellFormedError::UnboundVariable { name: n.clone(), location: self.location() });
                    a.clone()
                }
            },
            Arith::Operand(Operand::Lit(_)) => a.clone(),
            Arith::Bin(op, l, r) => {
                let l = self.arith(l);
                let r = self.arith(r);
                Arith::bin(*op, l, r)
            }
        }
    }

    fn bool_expr(&mut self, b: &BoolExpr) -> BoolExpr {
        match b {
            BoolExpr::Cmp(op, l, r) => {
                let l = self.arith(l);
                let r = self.arith(r);
                BoolExpr::Cmp(*op, l, r)
            }
            BoolExpr::And(l, r) => {
                let l = self.bool_expr(l);
                BoolExpr::and(l, self.bool_expr(r))
            }
            BoolExpr::Or(l, r) => {
                let l = self.bool_expr(l);
                BoolExpr::or(l, self.bool_expr(r))
            }
            BoolExpr::Not(inner) => BoolExpr::not(self.bool_expr(inner)),
        }
    }

    fn walk(&mut self, f: &Formula) -> Formula {
        match f {
            Formula::Truth | Formula::Falsity => f.clone(),
            Formula::FVar(x) => {
                let found = self.fvars.iter().rev().find(|e| &e.original == x).map(|e| (e.binder, e.nec_depth));
                match found {
                    Some((b, depth)) => {
                        if depth == self.nec_depth && self.unguarded_reported.insert(b) {
                            self.errors.push(WellFormedError::UnguardedRecursion(self.binders[b].original.clone()));
                        }
                        Formula::FVar(self.reference(b))
                    }
                    None => {
                        self.errors.push(WellFormedError::UnboundVariable { name: x.clone(), location: self.location() });
                        f.clone()
                    }
                }
            }
            Formula::Conj(children) => {
                let mut out = Vec::with_capacity(children.len());
                for (i, c) in children.iter().enumerate() {
                    self.path.push(format!("&{}", i + 1));
                    out.push(self.walk(c));
                    self.path.pop();
                }
                Formula::Conj(out)
            }
            Formula::Nec(p, body) => {
                let mut fresh = Vec::new();
                let target = self.pattern(&p.target, &mut fresh);
                let payload = self.pattern(&p.payload, &mut fresh);
                let pattern = ActionPattern::new(p.direction, target, payload);
                self.path.push(format!("[{p}]"));
                self.nec_depth += 1;
                let scope_len = self.terms.len();
                for (original, binder) in fresh {
                    self.terms.push(ScopeEntry { original, binder, nec_depth: self.nec_depth });
                }
                let body = self.walk(body);
                self.terms.truncate(scope_len);
                self.nec_depth -= 1;
                self.path.pop();
                Formula::nec(pattern, body)
            }
            Formula::Max(x, body) => {
                let b = self.bind(x, BinderKind::Recursion);
                self.path.push(format!("max {x}"));
                self.fvars.push(ScopeEntry { original: x.clone(), binder: b, nec_depth: self.nec_depth });
                let body = self.walk(body);
                self.fvars.pop();
                self.path.pop();
                Formula::Max(self.binders[b].name.clone(), Box::new(body))
            }
            Formula::Cond(test, t, e) => {
                self.path.push("if".into());
                let test = self.bool_expr(test);
                self.path.pop();
                self.path.push("then".into());
                let t = self.walk(t);
                self.path.pop();
                self.path.push("else".into());
                let e = self.walk(e);
                self.path.pop();
                Formula::cond(test, t, e)
            }
        }
    }
}

/// Validates and α-renames a formula.
///
/// A pattern variable already bound by an enclosing necessity is a reference
/// to that binding; any other pattern variable binds. Binders that reuse an
/// earlier binder's name get the smallest free numeric suffix, assigned in
/// left-to-right order. All errors are reported together.
pub fn check_wellformed(f: &Formula) -> Result<WellFormedFormula, WellFormedErrors> {
    let mut taken = HashSet::new();
    collect_names(f, &mut taken);
    let mut checker = Checker {
        taken,
        seen: HashSet::new(),
        binders: Vec::new(),
        occurrences: Vec::new(),
        errors: Vec::new(),
        unguarded_reported: HashSet::new(),
        terms: Vec::new(),
        fvars: Vec::new(),
        path: Vec::new(),
        nec_depth: 0,
    };
    let formula = checker.walk(f);
    if checker.errors.is_empty() {
        Ok(WellFormedFormula { formula, binders: checker.binders, occurrences: checker.occurrences })
    } else {
        Err(WellFormedErrors(checker.errors))
    }
}

/// Flattens conjunctions of an already well-formed formula.
pub fn flatten_wellformed(f: &WellFormedFormula) -> WellFormedFormula {
    let flat = flatten_conjunctions(&f.formula);
    check_wellformed(&flat).expect("flattening preserves well-formedness")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_formula;

    fn check(src: &str) -> Result<WellFormedFormula, WellFormedErrors> {
        check_wellformed(&parse_formula(src).unwrap())
    }

    #[test]
    fn predecessor_renames_second_response_binder() {
        let wf = check(crate::PREDECESSOR_SRC).unwrap();
        let renames: Vec<_> = wf.renames().map(|(o, n)| (o.to_string(), n.to_string())).collect();
        assert_eq!(renames, [("z".to_string(), "z1".to_string())]);
        // X, x, y, z, z1
        assert_eq!(wf.binders().len(), 5);
        assert!(wf.formula().to_string().contains("[y ! z1] if (z1 == x - 1) then X else ff"));
    }

    #[test]
    fn bare_recursion_is_unguarded() {
        let err = check("max X. X").unwrap_err();
        assert_eq!(err.0, vec![WellFormedError::UnguardedRecursion("X".into())]);
    }

    #[test]
    fn guard_must_be_inside_the_fixpoint() {
        assert!(check("[a ! 1] max X. X").is_err());
        assert!(check("max X. max Y. [a ! 1] (X & Y)").is_ok());
        let err = check("max X. [a ! 1] max Y. (X & Y)").unwrap_err();
        assert_eq!(err.0, vec![WellFormedError::UnguardedRecursion("Y".into())]);
        assert!(check("max X. if (1 == 1) then X else ff").is_err());
    }

    #[test]
    fn sibling_binders_are_renamed() {
        let wf = check("[a ? x] ff & [b ? x] ff").unwrap();
        assert_eq!(wf.formula().to_string(), "[a ? x] ff & [b ? x1] ff");
        let renames: Vec<_> = wf.renames().map(|(o, n)| (o.to_string(), n.to_string())).collect();
        assert_eq!(renames, [("x".to_string(), "x1".to_string())]);
    }

    #[test]
    fn renaming_skips_names_already_in_use() {
        let wf = check("[a ? x] [b ? x1] ff & [c ? x] if (x == 1) then ff else tt").unwrap();
        assert_eq!(wf.formula().to_string(), "[a ? x] [b ? x1] ff & [c ? x2] if (x2 == 1) then ff else tt");
    }

    #[test]
    fn shadowed_fixpoint_is_renamed() {
        let wf = check("max X. [a ! 1] max X. [b ! 1] X").unwrap();
        assert_eq!(wf.formula().to_string(), "max X. [a ! 1] max X1. [b ! 1] X1");
    }

    #[test]
    fn nested_pattern_variable_in_scope_is_a_reference() {
        let wf = check("[srv ? {x,y}] [y ! z] ff").unwrap();
        let Formula::Nec(outer, body) = wf.formula() else { panic!() };
        assert_eq!(outer.binders().len(), 2);
        let Formula::Nec(inner, _) = &**body else { panic!() };
        assert_eq!(inner.target, Pattern::var("y"));
        assert_eq!(inner.binders(), vec![Name::from("z")]);
    }

    #[test]
    fn all_errors_reported() {
        let err = check("[a ! 1] if (w == 1) then Y else ff & max X. X").unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
        assert!(matches!(&err.0[0], WellFormedError::UnboundVariable { name, .. } if &**name == "w"));
        assert!(matches!(&err.0[1], WellFormedError::UnboundVariable { name, .. } if &**name == "Y"));
        assert_eq!(err.0[2], WellFormedError::UnguardedRecursion("X".into()));
    }

    #[test]
    fn non_linear_pattern_binds_once() {
        let wf = check("[a ! {x,x}] ff").unwrap();
        assert_eq!(wf.binders().len(), 1);
        assert_eq!(wf.formula().to_string(), "[a ! {x,x}] ff");
    }

    #[test]
    fn rechecking_is_stable() {
        let wf = check("[a ? x] ff & [b ? x] [c ! x] ff").unwrap();
        let again = check_wellformed(wf.formula()).unwrap();
        assert_eq!(again.formula(), wf.formula());
        assert_eq!(again.renames().count(), 0);
    }
}
