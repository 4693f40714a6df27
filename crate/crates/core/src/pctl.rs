//! The PCTL fragment: AST, parser, printer, and the synthesizable subset.
//!
//! Concrete syntax:
//!
//! ```text
//! P<=0.28 [ true U<=3 "fail" ]
//! P<0.5 [ "a" U<=2 "b" & !"c" ]
//! ```

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Le,
    Lt,
    Ge,
    Gt,
}

impl Comparison {
    fn symbol(self) -> &'static str {
        match self {
            Comparison::Le => "<=",
            Comparison::Lt => "<",
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateFormula {
    True,
    Atom(String),
    Not(Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
    Prob {
        cmp: Comparison,
        bound: f64,
        path: Box<PathFormula>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathFormula {
    Next(StateFormula),
    /// `bound == None` is the unbounded until.
    Until {
        left: StateFormula,
        right: StateFormula,
        bound: Option<usize>,
    },
}

/// Upper-bound comparison allowed in synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpperBound {
    Le,
    Lt,
}

impl UpperBound {
    /// Exact comparison against the bound; no tolerance is applied.
    pub fn holds(self, value: f64, p: f64) -> bool {
        match self {
            UpperBound::Le => value <= p,
            UpperBound::Lt => value < p,
        }
    }
}

/// `P⊴p [ phi1 U<=k phi2 ]` with propositional operands.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundedUntilSpec {
    pub phi1: StateFormula,
    pub phi2: StateFormula,
    pub k: usize,
    pub cmp: UpperBound,
    pub p: f64,
}

impl BoundedUntilSpec {
    pub fn holds(&self, value: f64) -> bool {
        self.cmp.holds(value, self.p)
    }

    pub fn to_formula(&self) -> StateFormula {
        StateFormula::Prob {
            cmp: match self.cmp {
                UpperBound::Le => Comparison::Le,
                UpperBound::Lt => Comparison::Lt,
            },
            bound: self.p,
            path: Box::new(PathFormula::Until {
                left: self.phi1.clone(),
                right: self.phi2.clone(),
                bound: Some(self.k),
            }),
        }
    }
}

impl fmt::Display for BoundedUntilSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_formula())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("unsupported fragment at `{node}`: {reason}")]
    Unsupported { node: String, reason: &'static str },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl StateFormula {
    pub fn atom(name: &str) -> Self {
        StateFormula::Atom(name.to_string())
    }

    pub fn negate(f: StateFormula) -> Self {
        StateFormula::Not(Box::new(f))
    }

    pub fn and(l: StateFormula, r: StateFormula) -> Self {
        StateFormula::And(Box::new(l), Box::new(r))
    }

    pub fn is_propositional(&self) -> bool {
        match self {
            StateFormula::True | StateFormula::Atom(_) => true,
            StateFormula::Not(f) => f.is_propositional(),
            StateFormula::And(l, r) => l.is_propositional() && r.is_propositional(),
            StateFormula::Prob { .. } => false,
        }
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            StateFormula::True => {}
            StateFormula::Atom(a) => {
                out.insert(a.clone());
            }
            StateFormula::Not(f) => f.collect_atoms(out),
            StateFormula::And(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
            StateFormula::Prob { path, .. } => match path.as_ref() {
                PathFormula::Next(f) => f.collect_atoms(out),
                PathFormula::Until { left, right, .. } => {
                    left.collect_atoms(out);
                    right.collect_atoms(out);
                }
            },
        }
    }

    /// Truth value at a state with the given labels.
    pub fn eval(&self, labels: &BTreeSet<String>) -> Result<bool, FormulaError> {
        match self {
            StateFormula::True => Ok(true),
            StateFormula::Atom(a) => Ok(labels.contains(a)),
            StateFormula::Not(f) => Ok(!f.eval(labels)?),
            StateFormula::And(l, r) => Ok(l.eval(labels)? && r.eval(labels)?),
            StateFormula::Prob { .. } => Err(FormulaError::Unsupported {
                node: self.to_string(),
                reason: "probabilistic operator inside a state label check",
            }),
        }
    }
}

pub fn eval_state_formula(f: &StateFormula, labels: &BTreeSet<String>) -> Result<bool, FormulaError> {
    f.eval(labels)
}

/// Extracts the synthesizable bounded-until spec, or names the offending node.
pub fn check_synthesizable(f: &StateFormula) -> Result<BoundedUntilSpec, FormulaError> {
    let unsupported = |node: String, reason| Err(FormulaError::Unsupported { node, reason });
    let StateFormula::Prob { cmp, bound, path } = f else {
        return unsupported(f.to_string(), "expected a top-level P operator");
    };
    let cmp = match cmp {
        Comparison::Le => UpperBound::Le,
        Comparison::Lt => UpperBound::Lt,
        _ => return unsupported(f.to_string(), "only upper bounds (<=, <) are synthesizable"),
    };
    match path.as_ref() {
        PathFormula::Next(_) => unsupported(f.to_string(), "the next operator is not synthesizable"),
        PathFormula::Until { bound: None, .. } => {
            unsupported(f.to_string(), "unbounded until is not synthesizable")
        }
        PathFormula::Until {
            left,
            right,
            bound: Some(k),
        } => {
            for side in [left, right] {
                if !side.is_propositional() {
                    return unsupported(side.to_string(), "nested P operators are not synthesizable");
                }
            }
            Ok(BoundedUntilSpec {
                phi1: left.clone(),
                phi2: right.clone(),
                k: *k,
                cmp,
                p: *bound,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// printer

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateFormula::True => write!(f, "true"),
            StateFormula::Atom(a) => write!(f, "\"{}\"", a),
            StateFormula::Not(inner) => match inner.as_ref() {
                StateFormula::And(..) => write!(f, "!({})", inner),
                _ => write!(f, "!{}", inner),
            },
            StateFormula::And(l, r) => match r.as_ref() {
                StateFormula::And(..) => write!(f, "{} & ({})", l, r),
                _ => write!(f, "{} & {}", l, r),
            },
            StateFormula::Prob { cmp, bound, path } => {
                write!(f, "P{}{} [ {} ]", cmp.symbol(), bound, path)
            }
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(s) => write!(f, "X {}", s),
            PathFormula::Until {
                left,
                right,
                bound: Some(k),
            } => write!(f, "{} U<={} {}", left, k, right),
            PathFormula::Until {
                left,
                right,
                bound: None,
            } => write!(f, "{} U {}", left, right),
        }
    }
}

// ---------------------------------------------------------------------------
// parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    P,
    Cmp(Comparison),
    Num(String),
    LBrack,
    RBrack,
    LParen,
    RParen,
    Bang,
    Amp,
    True,
    False,
    X,
    U,
    Str(String),
    Eof,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
                self.bump();
            }
            let (line, col) = (self.line, self.column);
            let Some(c) = self.bump() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                '[' => Tok::LBrack,
                ']' => Tok::RBrack,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '!' => Tok::Bang,
                '&' => Tok::Amp,
                '<' | '>' => {
                    let eq = self.chars.peek() == Some(&'=');
                    if eq {
                        self.bump();
                    }
                    Tok::Cmp(match (c, eq) {
                        ('<', true) => Comparison::Le,
                        ('<', false) => Comparison::Lt,
                        ('>', true) => Comparison::Ge,
                        _ => Comparison::Gt,
                    })
                }
                '"' => {
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            Some('"') => break,
                            Some(ch) => s.push(ch),
                            None => return Err(Self::error(line, col, "unterminated string")),
                        }
                    }
                    Tok::Str(s)
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let mut s = c.to_string();
                    while let Some(&d) = self.chars.peek() {
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || d == '-' {
                            s.push(d);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Num(s)
                }
                c if c.is_ascii_alphabetic() => {
                    let mut s = c.to_string();
                    while let Some(&d) = self.chars.peek() {
                        if d.is_ascii_alphanumeric() || d == '_' {
                            s.push(d);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    match s.as_str() {
                        "P" => Tok::P,
                        "X" => Tok::X,
                        "U" => Tok::U,
                        "true" => Tok::True,
                        "false" => Tok::False,
                        _ => {
                            return Err(Self::error(
                                line,
                                col,
                                format!("unexpected identifier `{}` (atoms must be quoted)", s),
                            ))
                        }
                    }
                }
                other => return Err(Self::error(line, col, format!("unexpected character `{}`", other))),
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let (_, line, column) = self.toks[self.pos];
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected {}", what)))
        }
    }

    fn state(&mut self) -> Result<StateFormula, ParseError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::Amp {
            self.next();
            let right = self.unary()?;
            left = StateFormula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<StateFormula, ParseError> {
        if *self.peek() == Tok::Bang {
            self.next();
            return Ok(StateFormula::negate(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<StateFormula, ParseError> {
        match self.peek().clone() {
            Tok::True => {
                self.next();
                Ok(StateFormula::True)
            }
            Tok::False => {
                self.next();
                Ok(StateFormula::negate(StateFormula::True))
            }
            Tok::Str(s) => {
                self.next();
                Ok(StateFormula::Atom(s))
            }
            Tok::LParen => {
                self.next();
                let f = self.state()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::P => {
                self.next();
                let Tok::Cmp(cmp) = self.peek().clone() else {
                    return Err(self.error("expected a comparison after `P`"));
                };
                self.next();
                let bound = self.probability()?;
                self.expect(Tok::LBrack, "`[`")?;
                let path = self.path()?;
                self.expect(Tok::RBrack, "`]`")?;
                Ok(StateFormula::Prob {
                    cmp,
                    bound,
                    path: Box::new(path),
                })
            }
            _ => Err(self.error("expected a state formula")),
        }
    }

    fn probability(&mut self) -> Result<f64, ParseError> {
        let Tok::Num(s) = self.peek().clone() else {
            return Err(self.error("expected a probability"));
        };
        let p: f64 = s.parse().map_err(|_| self.error(format!("malformed number `{}`", s)))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(self.error(format!("probability {} outside [0,1]", s)));
        }
        self.next();
        Ok(p)
    }

    fn horizon(&mut self) -> Result<usize, ParseError> {
        let Tok::Num(s) = self.peek().clone() else {
            return Err(self.error("expected a step bound"));
        };
        let k: usize = s
            .parse()
            .map_err(|_| self.error(format!("step bound `{}` is not a non-negative integer", s)))?;
        self.next();
        Ok(k)
    }

    fn path(&mut self) -> Result<PathFormula, ParseError> {
        if *self.peek() == Tok::X {
            self.next();
            return Ok(PathFormula::Next(self.state()?));
        }
        let left = self.state()?;
        self.expect(Tok::U, "`U`")?;
        let bound = match self.peek() {
            Tok::Cmp(Comparison::Le) => {
                self.next();
                Some(self.horizon()?)
            }
            Tok::Cmp(_) => return Err(self.error("step bounds use `<=`")),
            _ => None,
        };
        let right = self.state()?;
        Ok(PathFormula::Until { left, right, bound })
    }
}

pub fn parse(text: &str) -> Result<StateFormula, ParseError> {
    let toks = Lexer {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    }
    .tokens()?;
    let mut p = Parser { toks, pos: 0 };
    let f = p.state()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("trailing input"));
    }
    Ok(f)
}

/// Parses and checks in one go.
pub fn parse_spec(text: &str) -> Result<BoundedUntilSpec, SpecError> {
    Ok(check_synthesizable(&parse(text)?)?)
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Fragment(#[from] FormulaError),
}
