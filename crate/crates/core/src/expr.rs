//! Boolean tests used by conditional formulas.

use std::fmt;

use thiserror::Error;

use crate::event::{Name, Substitution};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Var(Name),
    Lit(Value),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Arith {
    Operand(Operand),
    Bin(ArithOp, Box<Arith>, Box<Arith>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Cmp(CmpOp, Arith, Arith),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("type error in `{expression}`: operand `{operand}` is not an integer")]
    Type { expression: String, operand: String },
    #[error("unbound variable `{0}` in boolean test")]
    Unbound(Name),
}

impl Arith {
    pub fn var(name: &str) -> Self {
        Arith::Operand(Operand::Var(Name::from(name)))
    }

    pub fn lit(v: impl Into<Value>) -> Self {
        Arith::Operand(Operand::Lit(v.into()))
    }

    pub fn bin(op: ArithOp, l: Arith, r: Arith) -> Self {
        Arith::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Name)) {
        match self {
            Arith::Operand(Operand::Var(n)) => f(n),
            Arith::Operand(Operand::Lit(_)) => {}
            Arith::Bin(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
        }
    }

    pub fn substitute(&self, sigma: &Substitution) -> Arith {
        match self {
            Arith::Operand(Operand::Var(n)) => match sigma.get(n) {
                Some(v) => Arith::Operand(Operand::Lit(v.clone())),
                None => self.clone(),
            },
            Arith::Operand(Operand::Lit(_)) => self.clone(),
            Arith::Bin(op, l, r) => Arith::bin(*op, l.substitute(sigma), r.substitute(sigma)),
        }
    }

    pub fn rename(&self, from: &str, to: &Name) -> Arith {
        match self {
            Arith::Operand(Operand::Var(n)) if &**n == from => Arith::Operand(Operand::Var(to.clone())),
            Arith::Operand(_) => self.clone(),
            Arith::Bin(op, l, r) => Arith::bin(*op, l.rename(from, to), r.rename(from, to)),
        }
    }

    pub fn eval(&self) -> Result<Value, EvalError> {
        match self {
            Arith::Operand(Operand::Lit(v)) => Ok(v.clone()),
            Arith::Operand(Operand::Var(n)) => Err(EvalError::Unbound(n.clone())),
            Arith::Bin(op, l, r) => {
                let lv = l.eval()?;
                let rv = r.eval()?;
                let (a, b) = match (&lv, &rv) {
                    (Value::Int(a), Value::Int(b)) => (a, b),
                    (Value::Int(_), bad) | (bad, _) => {
                        return Err(EvalError::Type {
                            expression: self.to_string(),
                            operand: bad.to_string(),
                        })
                    }
                };
                Ok(Value::Int(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                }))
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arith::Operand(Operand::Var(n)) => f.write_str(n),
            Arith::Operand(Operand::Lit(v)) => write!(f, "{v}"),
            // The surface syntax has no arithmetic parentheses; the parser only
            // builds left-associative trees with `*` above `+`/`-`.
            Arith::Bin(op, l, r) => {
                l.fmt_prec(f)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f)
            }
        }
    }
}

impl fmt::Display for Arith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f)
    }
}

impl BoolExpr {
    pub fn cmp(op: CmpOp, l: Arith, r: Arith) -> Self {
        BoolExpr::Cmp(op, l, r)
    }

    pub fn and(l: BoolExpr, r: BoolExpr) -> Self {
        BoolExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: BoolExpr, r: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(b: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(b))
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Name)) {
        match self {
            BoolExpr::Cmp(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            BoolExpr::Not(b) => b.for_each_var(f),
        }
    }

    pub fn substitute(&self, sigma: &Substitution) -> BoolExpr {
        match self {
            BoolExpr::Cmp(op, l, r) => BoolExpr::Cmp(*op, l.substitute(sigma), r.substitute(sigma)),
            BoolExpr::And(l, r) => BoolExpr::and(l.substitute(sigma), r.substitute(sigma)),
            BoolExpr::Or(l, r) => BoolExpr::or(l.substitute(sigma), r.substitute(sigma)),
            BoolExpr::Not(b) => BoolExpr::not(b.substitute(sigma)),
        }
    }

    pub fn rename(&self, from: &str, to: &Name) -> BoolExpr {
        match self {
            BoolExpr::Cmp(op, l, r) => BoolExpr::Cmp(*op, l.rename(from, to), r.rename(from, to)),
            BoolExpr::And(l, r) => BoolExpr::and(l.rename(from, to), r.rename(from, to)),
            BoolExpr::Or(l, r) => BoolExpr::or(l.rename(from, to), r.rename(from, to)),
            BoolExpr::Not(b) => BoolExpr::not(b.rename(from, to)),
        }
    }

    /// Evaluates a closed test. Both sides of `and`/`or` are evaluated so
    /// that an ill-typed operand is reported regardless of short-circuiting.
    pub fn eval(&self) -> Result<bool, EvalError> {
        match self {
            BoolExpr::Cmp(op, l, r) => {
                let a = l.eval()?;
                let b = r.eval()?;
                Ok(match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                })
            }
            BoolExpr::And(l, r) => {
                let a = l.eval()?;
                let b = r.eval()?;
                Ok(a && b)
            }
            BoolExpr::Or(l, r) => {
                let a = l.eval()?;
                let b = r.eval()?;
                Ok(a || b)
            }
            BoolExpr::Not(b) => Ok(!b.eval()?),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            BoolExpr::Or(..) => 1,
            BoolExpr::And(..) => 2,
            BoolExpr::Not(_) => 3,
            BoolExpr::Cmp(..) => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Cmp(op, l, r) => write!(f, "{l} {} {r}", op.symbol()),
            // `and`/`or` parse left-associatively, so a right child of equal
            // precedence needs parentheses.
            BoolExpr::Or(l, r) => {
                l.fmt_child(f, 1)?;
                f.write_str(" or ")?;
                r.fmt_child(f, 2)
            }
            BoolExpr::And(l, r) => {
                l.fmt_child(f, 2)?;
                f.write_str(" and ")?;
                r.fmt_child(f, 3)
            }
            BoolExpr::Not(b) => {
                f.write_str("not ")?;
                b.fmt_child(f, 3)
            }
        }
    }
}

/// Evaluates a closed boolean test.
pub fn eval_bool(b: &BoolExpr) -> Result<bool, EvalError> {
    b.eval()
}
