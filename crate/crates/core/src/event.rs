//! Trace events, action patterns and pattern matching.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::value::Value;

/// Identifier of a term or formula variable.
pub type Name = Arc<str>;

/// Whether an action is a receive (`?`) or a send (`!`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Input,
    Output,
}

impl Direction {
    pub fn symbol(self) -> char {
        match self {
            Direction::Input => '?',
            Direction::Output => '!',
        }
    }
}

/// A closed trace action together with its 1-based position in the trace.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub direction: Direction,
    pub target: Value,
    pub payload: Value,
    pub index: u64,
}

impl Event {
    pub fn input(target: Value, payload: Value, index: u64) -> Self {
        Event { direction: Direction::Input, target, payload, index }
    }

    pub fn output(target: Value, payload: Value, index: u64) -> Self {
        Event { direction: Direction::Output, target, payload, index }
    }
}

/// The event line as it appears in a trace file, without the index.
impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.target, self.direction.symbol(), self.payload)
    }
}

/// Term pattern inside an action.
///
/// `Var` is a variable whose role has not been fixed: it is substituted when
/// the substitution defines it and binds otherwise. Well-formedness checking
/// rewrites every binding occurrence to `Bind`, which substitution never
/// touches, so that copies of a necessity produced by fixpoint unfolding keep
/// their own binders.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    Var(Name),
    Bind(Name),
    Wildcard,
    Lit(Value),
    Tuple(Vec<Pattern>),
}

impl Pattern {
    pub fn var(name: &str) -> Self {
        Pattern::Var(Name::from(name))
    }

    pub fn lit(v: impl Into<Value>) -> Self {
        Pattern::Lit(v.into())
    }

    pub fn atom(name: &str) -> Self {
        Pattern::Lit(Value::atom(name))
    }

    /// Visits every variable occurrence (either role) in left-to-right order.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Name, bool)) {
        match self {
            Pattern::Var(n) => f(n, false),
            Pattern::Bind(n) => f(n, true),
            Pattern::Wildcard | Pattern::Lit(_) => {}
            Pattern::Tuple(items) => items.iter().for_each(|p| p.for_each_var(f)),
        }
    }

    /// The closed value this pattern denotes, if it has no variables or wildcards.
    pub fn to_value(&self) -> Option<Value> {
        match self {
            Pattern::Lit(v) => Some(v.clone()),
            Pattern::Tuple(items) => {
                items.iter().map(Pattern::to_value).collect::<Option<Vec<_>>>().map(Value::Tuple)
            }
            _ => None,
        }
    }

    pub(crate) fn substitute(&self, sigma: &Substitution) -> Pattern {
        match self {
            Pattern::Var(n) => match sigma.get(n) {
                Some(v) => Pattern::Lit(v.clone()),
                None => self.clone(),
            },
            Pattern::Tuple(items) => Pattern::Tuple(items.iter().map(|p| p.substitute(sigma)).collect()),
            Pattern::Bind(_) | Pattern::Wildcard | Pattern::Lit(_) => self.clone(),
        }
    }

    fn match_value(&self, value: &Value, sigma: &mut Substitution) -> bool {
        match self {
            Pattern::Wildcard => true,
            Pattern::Lit(v) => v == value,
            Pattern::Var(n) | Pattern::Bind(n) => match sigma.get(n) {
                Some(bound) => bound == value,
                None => {
                    sigma.insert(n.clone(), value.clone());
                    true
                }
            },
            Pattern::Tuple(items) => match value {
                Value::Tuple(vals) if vals.len() == items.len() => {
                    items.iter().zip(vals).all(|(p, v)| p.match_value(v, sigma))
                }
                _ => false,
            },
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(n) | Pattern::Bind(n) => f.write_str(n),
            Pattern::Wildcard => f.write_str("_"),
            Pattern::Lit(v) => write!(f, "{v}"),
            Pattern::Tuple(items) => {
                f.write_str("{")?;
                for (i, p) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// An open action `target ! payload` or `target ? payload`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionPattern {
    pub direction: Direction,
    pub target: Pattern,
    pub payload: Pattern,
}

impl ActionPattern {
    pub fn new(direction: Direction, target: Pattern, payload: Pattern) -> Self {
        ActionPattern { direction, target, payload }
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Name, bool)) {
        self.target.for_each_var(f);
        self.payload.for_each_var(f);
    }

    /// Names bound by this pattern after well-formedness marking.
    pub fn binders(&self) -> Vec<Name> {
        let mut out: Vec<Name> = Vec::new();
        self.for_each_var(&mut |n, bind| {
            if bind && !out.contains(n) {
                out.push(n.clone());
            }
        });
        out
    }

    pub fn substitute(&self, sigma: &Substitution) -> ActionPattern {
        ActionPattern {
            direction: self.direction,
            target: self.target.substitute(sigma),
            payload: self.payload.substitute(sigma),
        }
    }
}

impl fmt::Display for ActionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.target, self.direction.symbol(), self.payload)
    }
}

/// A finite map from term variables to values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Substitution(BTreeMap<Name, Value>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: Name, value: Value) -> Option<Value> {
        self.0.insert(name, value)
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Value)> {
        self.0.iter()
    }

    /// `self` extended by `other`; bindings in `other` win.
    pub fn overridden_by(&self, other: &Substitution) -> Substitution {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.0.insert(k.clone(), v.clone());
        }
        out
    }
}

impl<N: Into<Name>> FromIterator<(N, Value)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (N, Value)>>(iter: I) -> Self {
        Substitution(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}↦{v}")?;
        }
        f.write_str("}")
    }
}

/// Matches an action pattern against a closed event.
///
/// Returns the unique substitution over the pattern's variables that makes
/// the pattern equal to the event. A variable occurring more than once must
/// match equal values.
pub fn match_action(pattern: &ActionPattern, event: &Event) -> Option<Substitution> {
    if pattern.direction != event.direction {
        return None;
    }
    let mut sigma = Substitution::new();
    if pattern.target.match_value(&event.target, &mut sigma)
        && pattern.payload.match_value(&event.payload, &mut sigma)
    {
        Some(sigma)
    } else {
        None
    }
}
