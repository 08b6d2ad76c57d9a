//! The sHML formula AST and its syntactic operations.

use std::fmt;

use crate::event::{ActionPattern, Name, Substitution};
use crate::expr::BoolExpr;

/// A formula of the safety fragment of Hennessy-Milner logic with maximal
/// fixpoints.
///
/// `Conj` holds two children straight out of the parser and any number
/// (at least two) after [`flatten_conjunctions`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Truth,
    Falsity,
    Conj(Vec<Formula>),
    Nec(ActionPattern, Box<Formula>),
    FVar(Name),
    Max(Name, Box<Formula>),
    Cond(BoolExpr, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn conj(l: Formula, r: Formula) -> Self {
        Formula::Conj(vec![l, r])
    }

    pub fn nec(pattern: ActionPattern, body: Formula) -> Self {
        Formula::Nec(pattern, Box::new(body))
    }

    pub fn max(name: &str, body: Formula) -> Self {
        Formula::Max(Name::from(name), Box::new(body))
    }

    pub fn fvar(name: &str) -> Self {
        Formula::FVar(Name::from(name))
    }

    pub fn cond(test: BoolExpr, then: Formula, otherwise: Formula) -> Self {
        Formula::Cond(test, Box::new(then), Box::new(otherwise))
    }

    /// Applies a term substitution to every free term variable.
    ///
    /// A necessity's binders shadow the substitution inside its body, which
    /// is what keeps unfolded copies of a recursive necessity independent of
    /// the bindings made by an earlier copy.
    pub fn apply_subst(&self, sigma: &Substitution) -> Formula {
        if sigma.is_empty() {
            return self.clone();
        }
        match self {
            Formula::Truth | Formula::Falsity | Formula::FVar(_) => self.clone(),
            Formula::Conj(children) => Formula::Conj(children.iter().map(|c| c.apply_subst(sigma)).collect()),
            Formula::Nec(p, body) => {
                let pattern = p.substitute(sigma);
                let binders = p.binders();
                if binders.iter().any(|b| sigma.contains(b)) {
                    let mut inner = sigma.clone();
                    for b in &binders {
                        inner.remove(b);
                    }
                    Formula::nec(pattern, body.apply_subst(&inner))
                } else {
                    Formula::nec(pattern, body.apply_subst(sigma))
                }
            }
            Formula::Max(x, body) => Formula::Max(x.clone(), Box::new(body.apply_subst(sigma))),
            Formula::Cond(b, t, e) => Formula::cond(b.substitute(sigma), t.apply_subst(sigma), e.apply_subst(sigma)),
        }
    }

    /// Replaces every free occurrence of formula variable `x` by `replacement`.
    pub fn substitute_fvar(&self, x: &str, replacement: &Formula) -> Formula {
        match self {
            Formula::FVar(y) if &**y == x => replacement.clone(),
            Formula::Truth | Formula::Falsity | Formula::FVar(_) => self.clone(),
            Formula::Conj(children) => {
                Formula::Conj(children.iter().map(|c| c.substitute_fvar(x, replacement)).collect())
            }
            Formula::Nec(p, body) => Formula::nec(p.clone(), body.substitute_fvar(x, replacement)),
            Formula::Max(y, _) if &**y == x => self.clone(),
            Formula::Max(y, body) => Formula::Max(y.clone(), Box::new(body.substitute_fvar(x, replacement))),
            Formula::Cond(b, t, e) => Formula::cond(
                b.clone(),
                t.substitute_fvar(x, replacement),
                e.substitute_fvar(x, replacement),
            ),
        }
    }

    /// True when formula variable `x` occurs free.
    pub fn has_free_fvar(&self, x: &str) -> bool {
        match self {
            Formula::FVar(y) => &**y == x,
            Formula::Truth | Formula::Falsity => false,
            Formula::Conj(children) => children.iter().any(|c| c.has_free_fvar(x)),
            Formula::Nec(_, body) => body.has_free_fvar(x),
            Formula::Max(y, _) if &**y == x => false,
            Formula::Max(_, body) => body.has_free_fvar(x),
            Formula::Cond(_, t, e) => t.has_free_fvar(x) || e.has_free_fvar(x),
        }
    }

    /// One unfolding step of `max X. body`; `None` for any other formula.
    pub fn unfold(&self) -> Option<Formula> {
        match self {
            Formula::Max(x, body) => Some(body.substitute_fvar(x, self)),
            _ => None,
        }
    }

    /// Collects the non-conjunction subformulas reachable through
    /// conjunction nodes, left to right.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::Conj(children) => children.iter().for_each(|c| walk(c, out)),
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Number of AST nodes; used to bound random generation.
    pub fn size(&self) -> usize {
        match self {
            Formula::Truth | Formula::Falsity | Formula::FVar(_) => 1,
            Formula::Conj(children) => 1 + children.iter().map(Formula::size).sum::<usize>(),
            Formula::Nec(_, body) | Formula::Max(_, body) => 1 + body.size(),
            Formula::Cond(_, t, e) => 1 + t.size() + e.size(),
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, open_right: bool) -> fmt::Result {
        let extends_right = matches!(self, Formula::Conj(_) | Formula::Max(..) | Formula::Cond(..));
        if extends_right && !open_right {
            f.write_str("(")?;
            self.fmt_at(f, true)?;
            return f.write_str(")");
        }
        match self {
            Formula::Truth => f.write_str("tt"),
            Formula::Falsity => f.write_str("ff"),
            Formula::FVar(x) => f.write_str(x),
            Formula::Nec(p, body) => {
                write!(f, "[{p}] ")?;
                if let Formula::Conj(_) = **body {
                    f.write_str("(")?;
                    body.fmt_at(f, true)?;
                    f.write_str(")")
                } else {
                    body.fmt_at(f, open_right)
                }
            }
            Formula::Max(x, body) => {
                write!(f, "max {x}. ")?;
                body.fmt_at(f, true)
            }
            Formula::Cond(b, t, e) => {
                write!(f, "if ({b}) then ")?;
                t.fmt_at(f, true)?;
                f.write_str(" else ")?;
                e.fmt_at(f, true)
            }
            Formula::Conj(children) => {
                let last = children.len().saturating_sub(1);
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    c.fmt_at(f, i == last)?;
                }
                Ok(())
            }
        }
    }
}

/// Prints in the concrete formula syntax; parsing the output yields the
/// same AST for any formula the parser produced.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, true)
    }
}

/// One unfolding of a maximal fixpoint: `body` with every free `name`
/// replaced by `max name. body`.
pub fn unfold_max(name: &str, body: &Formula) -> Formula {
    body.substitute_fvar(name, &Formula::Max(Name::from(name), Box::new(body.clone())))
}

/// Merges nested conjunctions into n-ary nodes, preserving left-to-right
/// order and leaving every other node unchanged.
pub fn flatten_conjunctions(f: &Formula) -> Formula {
    match f {
        Formula::Truth | Formula::Falsity | Formula::FVar(_) => f.clone(),
        Formula::Conj(children) => {
            let mut flat = Vec::with_capacity(children.len());
            for c in children {
                match flatten_conjunctions(c) {
                    Formula::Conj(grand) => flat.extend(grand),
                    other => flat.push(other),
                }
            }
            Formula::Conj(flat)
        }
        Formula::Nec(p, body) => Formula::nec(p.clone(), flatten_conjunctions(body)),
        Formula::Max(x, body) => Formula::Max(x.clone(), Box::new(flatten_conjunctions(body))),
        Formula::Cond(b, t, e) => Formula::cond(b.clone(), flatten_conjunctions(t), flatten_conjunctions(e)),
    }
}
