//! Concrete syntax for formulas and trace files.
//!
//! Lexical conventions: formula variables start with an uppercase letter;
//! term variables are one of the letters `u`..`z` optionally followed by
//! digits (`x`, `y1`, `z12`); every other lowercase identifier is an atom.
//! Atoms that would read as a variable or keyword are written quoted, as in
//! `'x'` or `'max'`. `#` starts a comment that runs to the end of the line.

use std::str::FromStr;

use num_bigint::BigInt;
use thiserror::Error;

use crate::event::{ActionPattern, Direction, Event, Name, Pattern};
use crate::expr::{Arith, ArithOp, BoolExpr, CmpOp, Operand};
use crate::formula::Formula;
use crate::value::{Atom, Value};

const KEYWORDS: [&str; 9] = ["tt", "ff", "max", "if", "then", "else", "or", "and", "not"];

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// True for identifiers lexed as term variables.
pub fn is_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('u'..='z')) && chars.all(|c| c.is_ascii_digit())
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    LBrack,
    RBrack,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Amp,
    Bang,
    Query,
    Underscore,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Int(BigInt),
    Var(String),
    Atom(String),
    FVar(String),
    Kw(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Var(s) => format!("variable `{s}`"),
            Tok::Atom(s) => format!("atom `{s}`"),
            Tok::FVar(s) => format!("formula variable `{s}`"),
            Tok::Kw(k) => format!("keyword `{k}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrack => "[",
            Tok::RBrack => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Amp => "&",
            Tok::Bang => "!",
            Tok::Query => "?",
            Tok::Underscore => "_",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            _ => "",
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str, first_line: usize) -> Result<Vec<Spanned>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, first_line, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let err = |message: String| SyntaxError { line: start_line, column: start_col, message };
        let next = chars.get(i + 1).copied();
        let (tok, len) = match c {
            '[' => (Tok::LBrack, 1),
            ']' => (Tok::RBrack, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '{' => (Tok::LBrace, 1),
            '}' => (Tok::RBrace, 1),
            ',' => (Tok::Comma, 1),
            '.' => (Tok::Dot, 1),
            '&' => (Tok::Amp, 1),
            '?' => (Tok::Query, 1),
            '+' => (Tok::Plus, 1),
            '-' => (Tok::Minus, 1),
            '*' => (Tok::Star, 1),
            '!' if next == Some('=') => (Tok::NotEq, 2),
            '!' => (Tok::Bang, 1),
            '=' if next == Some('=') => (Tok::EqEq, 2),
            '<' if next == Some('=') => (Tok::Le, 2),
            '<' => (Tok::Lt, 1),
            '>' if next == Some('=') => (Tok::Ge, 2),
            '>' => (Tok::Gt, 1),
            '\'' => {
                let mut name = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => return Err(err("unterminated quoted atom".into())),
                        Some('\'') => break,
                        Some('\\') => {
                            match chars.get(j + 1) {
                                Some(&e) if e != '\n' => name.push(e),
                                _ => return Err(err("unterminated quoted atom".into())),
                            }
                            j += 2;
                        }
                        Some(&ch) => {
                            name.push(ch);
                            j += 1;
                        }
                    }
                }
                if name.is_empty() {
                    return Err(err("empty quoted atom".into()));
                }
                (Tok::Atom(name), j + 1 - i)
            }
            d if d.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = chars[i..j].iter().collect();
                (Tok::Int(BigInt::from_str(&digits).expect("digits")), j - i)
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = if word == "_" {
                    Tok::Underscore
                } else if let Some(k) = KEYWORDS.iter().find(|k| **k == word) {
                    Tok::Kw(k)
                } else if a.is_ascii_uppercase() {
                    Tok::FVar(word)
                } else if a == '_' {
                    return Err(err(format!("unknown token `{word}`")));
                } else if is_var_name(&word) {
                    Tok::Var(word)
                } else {
                    Tok::Atom(word)
                };
                (tok, j - i)
            }
            other => return Err(err(format!("unknown token `{other}`"))),
        };
        out.push(Spanned { tok, line: start_line, column: start_col });
        i += len;
        col += len;
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn new(toks: Vec<Spanned>) -> Self {
        Parser { toks, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: String) -> SyntaxError {
        let s = &self.toks[self.pos];
        SyntaxError { line: s.line, column: s.column, message }
    }

    fn unexpected(&self, wanted: &str) -> SyntaxError {
        self.error_here(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }

    fn formula(&mut self) -> PResult<Formula> {
        let left = self.unary()?;
        if self.eat(&Tok::Amp) {
            let right = self.formula()?;
            Ok(Formula::conj(left, right))
        } else {
            Ok(left)
        }
    }

    fn unary(&mut self) -> PResult<Formula> {
        match self.peek().clone() {
            Tok::Kw("tt") => {
                self.bump();
                Ok(Formula::Truth)
            }
            Tok::Kw("ff") => {
                self.bump();
                Ok(Formula::Falsity)
            }
            Tok::FVar(name) => {
                self.bump();
                Ok(Formula::FVar(Name::from(name)))
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::LBrack => {
                self.bump();
                let action = self.action()?;
                self.expect(Tok::RBrack, "`]`")?;
                let body = self.unary()?;
                Ok(Formula::nec(action, body))
            }
            Tok::Kw("max") => {
                self.bump();
                let name = match self.bump() {
                    Tok::FVar(n) => n,
                    _ => {
                        self.pos -= 1;
                        return Err(self.unexpected("a formula variable after `max`"));
                    }
                };
                self.expect(Tok::Dot, "`.`")?;
                let body = self.formula()?;
                Ok(Formula::Max(Name::from(name), Box::new(body)))
            }
            Tok::Kw("if") => {
                self.bump();
                let test = self.bool_expr()?;
                self.expect(Tok::Kw("then"), "`then`")?;
                let then = self.formula()?;
                self.expect(Tok::Kw("else"), "`else`")?;
                let otherwise = self.formula()?;
                Ok(Formula::cond(test, then, otherwise))
            }
            _ => Err(self.unexpected("a formula")),
        }
    }

    fn action(&mut self) -> PResult<ActionPattern> {
        let target = self.pattern()?;
        let direction = match self.peek() {
            Tok::Bang => Direction::Output,
            Tok::Query => Direction::Input,
            _ => return Err(self.unexpected("`!` or `?`")),
        };
        self.bump();
        let payload = self.pattern()?;
        Ok(ActionPattern::new(direction, target, payload))
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.bump();
                Ok(Pattern::Var(Name::from(v)))
            }
            Tok::Underscore => {
                self.bump();
                Ok(Pattern::Wildcard)
            }
            Tok::Atom(a) => {
                self.bump();
                Ok(Pattern::Lit(Value::Atom(Atom::new(&a))))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Pattern::Lit(Value::Int(n)))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) => Ok(Pattern::Lit(Value::Int(-n))),
                    _ => {
                        self.pos -= 1;
                        Err(self.unexpected("an integer after `-`"))
                    }
                }
            }
            Tok::LBrace => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        items.push(self.pattern()?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RBrace, "`,` or `}`")?;
                        break;
                    }
                }
                Ok(Pattern::Tuple(items))
            }
            _ => Err(self.unexpected("a pattern")),
        }
    }

    fn bool_expr(&mut self) -> PResult<BoolExpr> {
        let mut left = self.bool_and()?;
        while self.eat(&Tok::Kw("or")) {
            let right = self.bool_and()?;
            left = BoolExpr::or(left, right);
        }
        Ok(left)
    }

    fn bool_and(&mut self) -> PResult<BoolExpr> {
        let mut left = self.bool_not()?;
        while self.eat(&Tok::Kw("and")) {
            let right = self.bool_not()?;
            left = BoolExpr::and(left, right);
        }
        Ok(left)
    }

    fn bool_not(&mut self) -> PResult<BoolExpr> {
        if self.eat(&Tok::Kw("not")) {
            return Ok(BoolExpr::not(self.bool_not()?));
        }
        if self.eat(&Tok::LParen) {
            let b = self.bool_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(b);
        }
        let l = self.arith()?;
        let op = match self.peek() {
            Tok::EqEq => CmpOp::Eq,
            Tok::NotEq => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Err(self.unexpected("a comparison operator")),
        };
        self.bump();
        let r = self.arith()?;
        Ok(BoolExpr::cmp(op, l, r))
    }

    fn arith(&mut self) -> PResult<Arith> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.term()?;
            left = Arith::bin(op, left, right);
        }
    }

    fn term(&mut self) -> PResult<Arith> {
        let mut left = self.operand()?;
        while self.eat(&Tok::Star) {
            let right = self.operand()?;
            left = Arith::bin(ArithOp::Mul, left, right);
        }
        Ok(left)
    }

    fn operand(&mut self) -> PResult<Arith> {
        let op = match self.peek().clone() {
            Tok::Var(v) => Operand::Var(Name::from(v)),
            Tok::Atom(a) => Operand::Lit(Value::atom(&a)),
            Tok::Int(n) => Operand::Lit(Value::Int(n)),
            Tok::Minus => {
                self.bump();
                return match self.bump() {
                    Tok::Int(n) => Ok(Arith::Operand(Operand::Lit(Value::Int(-n)))),
                    _ => {
                        self.pos -= 1;
                        Err(self.unexpected("an integer after `-`"))
                    }
                };
            }
            _ => return Err(self.unexpected("a variable, integer or atom")),
        };
        self.bump();
        Ok(Arith::Operand(op))
    }
}

/// Parses formula source text.
pub fn parse_formula(src: &str) -> Result<Formula, SyntaxError> {
    let mut p = Parser::new(lex(src, 1)?);
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

pub fn parse_bool_expr(src: &str) -> Result<BoolExpr, SyntaxError> {
    let mut p = Parser::new(lex(src, 1)?);
    let b = p.bool_expr()?;
    p.expect_eof()?;
    Ok(b)
}

pub fn parse_action(src: &str) -> Result<ActionPattern, SyntaxError> {
    let mut p = Parser::new(lex(src, 1)?);
    let a = p.action()?;
    p.expect_eof()?;
    Ok(a)
}

fn closed_value(p: &Pattern) -> Result<Value, &'static str> {
    match p {
        Pattern::Lit(v) => Ok(v.clone()),
        Pattern::Var(_) | Pattern::Bind(_) => Err("variables are not allowed in trace events"),
        Pattern::Wildcard => Err("wildcards are not allowed in trace events"),
        Pattern::Tuple(items) => items.iter().map(closed_value).collect::<Result<Vec<_>, _>>().map(Value::Tuple),
    }
}

/// Parses a single event line; `index` is its trace position.
pub fn parse_event(line: &str, line_no: usize, index: u64) -> Result<Event, SyntaxError> {
    let toks = lex(line, line_no)?;
    let mut p = Parser::new(toks);
    let start = p.toks[0].clone();
    let action = p.action()?;
    p.expect_eof()?;
    let closed = |pat: &Pattern| {
        closed_value(pat).map_err(|m| SyntaxError { line: start.line, column: start.column, message: m.into() })
    };
    Ok(Event {
        direction: action.direction,
        target: closed(&action.target)?,
        payload: closed(&action.payload)?,
        index,
    })
}

/// Parses a trace file: one event per line, blank lines and `#` comments
/// skipped, events numbered from 1 in file order.
pub fn parse_trace(src: &str) -> Result<Vec<Event>, SyntaxError> {
    let mut events = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let index = events.len() as u64 + 1;
        events.push(parse_event(content, i + 1, index)?);
    }
    Ok(events)
}

/// Renders events in trace-file format, one per line.
pub fn format_trace(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}
