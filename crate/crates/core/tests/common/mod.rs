//! Random closed, guarded formulas and small traces over a tiny value domain.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use shmlmon_core::{
    check_wellformed, parse_formula, ActionPattern, Arith, ArithOp, BoolExpr, CmpOp, Direction, Event, Formula, Pattern,
    Value, WellFormedFormula, PREDECESSOR_SRC,
};

const ATOMS: [&str; 3] = ["a", "b", "c"];
const TERM_VARS: [&str; 6] = ["u", "v", "w", "x", "y", "z"];

pub fn predecessor() -> WellFormedFormula {
    check_wellformed(&parse_formula(PREDECESSOR_SRC).unwrap()).unwrap()
}

fn random_value(rng: &mut impl Rng) -> Value {
    match rng.gen_range(0..6) {
        0..=2 => Value::int(rng.gen_range(0..=3)),
        3 | 4 => Value::atom(ATOMS.choose(rng).unwrap()),
        _ => Value::tuple([Value::int(rng.gen_range(0..=3)), Value::atom(ATOMS.choose(rng).unwrap())]),
    }
}

pub fn random_event(rng: &mut impl Rng, index: u64) -> Event {
    let target = Value::atom(ATOMS.choose(rng).unwrap());
    let payload = random_value(rng);
    if rng.gen_bool(0.5) {
        Event::input(target, payload, index)
    } else {
        Event::output(target, payload, index)
    }
}

pub fn random_trace(rng: &mut impl Rng, max_len: usize) -> Vec<Event> {
    let len = rng.gen_range(0..=max_len);
    (1..=len as u64).map(|i| random_event(rng, i)).collect()
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    terms: Vec<String>,
    // Recursion variables in scope and whether a necessity separates them
    // from their binder.
    recs: Vec<(String, bool)>,
    fresh: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn fresh_term(&mut self) -> String {
        self.fresh += 1;
        let base = TERM_VARS[self.fresh % TERM_VARS.len()];
        let n = self.fresh / TERM_VARS.len();
        if n == 0 { base.to_string() } else { format!("{base}{n}") }
    }

    fn leaf_pattern(&mut self, binders: &mut Vec<String>) -> Pattern {
        match self.rng.gen_range(0..8) {
            0 | 1 => Pattern::lit(self.rng.gen_range(0..=3)),
            2 => Pattern::atom(ATOMS.choose(self.rng).unwrap()),
            3 => Pattern::Wildcard,
            4 if !self.terms.is_empty() => Pattern::var(self.terms.choose(self.rng).unwrap()),
            _ => {
                let x = self.fresh_term();
                binders.push(x.clone());
                Pattern::var(&x)
            }
        }
    }

    fn action(&mut self) -> (ActionPattern, Vec<String>) {
        let mut binders = Vec::new();
        let direction = if self.rng.gen_bool(0.5) { Direction::Input } else { Direction::Output };
        let target = match self.rng.gen_range(0..4) {
            0 => Pattern::Wildcard,
            1 if !self.terms.is_empty() => Pattern::var(self.terms.choose(self.rng).unwrap()),
            _ => Pattern::atom(ATOMS.choose(self.rng).unwrap()),
        };
        let payload = if self.rng.gen_ratio(1, 4) {
            let a = self.leaf_pattern(&mut binders);
            let b = self.leaf_pattern(&mut binders);
            Pattern::Tuple(vec![a, b])
        } else {
            self.leaf_pattern(&mut binders)
        };
        (ActionPattern::new(direction, target, payload), binders)
    }

    fn arith(&mut self, depth: usize) -> Arith {
        if depth == 0 || self.rng.gen_bool(0.6) {
            return match self.terms.choose(self.rng) {
                Some(x) if self.rng.gen_bool(0.6) => Arith::var(x),
                _ => Arith::lit(self.rng.gen_range(0..=3)),
            };
        }
        let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul].choose(self.rng).unwrap();
        Arith::bin(op, self.arith(depth - 1), self.arith(depth - 1))
    }

    fn test(&mut self, depth: usize) -> BoolExpr {
        match self.rng.gen_range(0..6) {
            0 if depth > 0 => BoolExpr::and(self.test(depth - 1), self.test(depth - 1)),
            1 if depth > 0 => BoolExpr::or(self.test(depth - 1), self.test(depth - 1)),
            2 if depth > 0 => BoolExpr::not(self.test(depth - 1)),
            _ => {
                let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge].choose(self.rng).unwrap();
                BoolExpr::cmp(op, self.arith(1), self.arith(1))
            }
        }
    }

    fn formula(&mut self, depth: usize) -> Formula {
        let guarded: Vec<String> = self.recs.iter().filter(|(_, g)| *g).map(|(x, _)| x.clone()).collect();
        if depth == 0 {
            return match self.rng.gen_range(0..3) {
                0 if !guarded.is_empty() => Formula::fvar(guarded.choose(self.rng).unwrap()),
                0 | 1 => Formula::Falsity,
                _ => Formula::Truth,
            };
        }
        // Weights: tt, ff, conjunction, necessity, fixpoint, conditional, variable.
        let fixpoints = if self.recs.len() < 2 { 2 } else { 0 };
        let vars = if guarded.is_empty() { 0 } else { 3 };
        let weights = [1, 1, 3, 5, fixpoints, 2, vars];
        let pick = rand::distributions::WeightedIndex::new(weights).unwrap();
        match self.rng.sample(pick) {
            0 => Formula::Truth,
            1 => Formula::Falsity,
            2 => {
                let l = self.formula(depth - 1);
                let r = self.formula(depth - 1);
                Formula::conj(l, r)
            }
            3 => self.necessity(depth),
            4 => {
                let name = format!("X{}", self.recs.len());
                self.recs.push((name.clone(), false));
                // A fixpoint that is not followed by a necessity is trivial.
                let body = self.necessity(depth - 1);
                self.recs.pop();
                Formula::max(&name, body)
            }
            5 => {
                let test = self.test(1);
                let then = self.formula(depth - 1);
                let otherwise = self.formula(depth - 1);
                Formula::cond(test, then, otherwise)
            }
            _ => Formula::fvar(guarded.choose(self.rng).unwrap()),
        }
    }

    fn necessity(&mut self, depth: usize) -> Formula {
        if depth == 0 {
            return Formula::Falsity;
        }
        let (pattern, binders) = self.action();
        let scope = self.terms.len();
        self.terms.extend(binders);
        let saved: Vec<bool> = self.recs.iter().map(|(_, g)| *g).collect();
        self.recs.iter_mut().for_each(|r| r.1 = true);
        let body = self.formula(depth - 1);
        self.recs.iter_mut().zip(saved).for_each(|(r, g)| r.1 = g);
        self.terms.truncate(scope);
        Formula::nec(pattern, body)
    }
}

/// A closed, guarded formula of nesting depth at most `depth`.
pub fn random_formula(rng: &mut impl Rng, depth: usize) -> WellFormedFormula {
    loop {
        let mut g = Gen { rng: &mut *rng, terms: Vec::new(), recs: Vec::new(), fresh: 0 };
        let f = g.formula(depth);
        if let Ok(wf) = check_wellformed(&f) {
            return wf;
        }
    }
}
