//! Parser and classifier for the supported MITL fragment.
//!
//! A task is written as up to two `;`-separated sections:
//!
//! ```text
//! formula  := [ "hard:" conj? ";" ] [ "soft:" conj? ]
//! conj     := term ( "&" term )*
//! term     := "G" atomexpr
//!           | "G" "F" interval atom
//!           | "F" interval? atom
//!           | "G" "(" atom "->" "F" interval atom ")"
//!           | atom "U" interval atom
//!           | atom "W" atom                (internal: hold-until-release flag)
//! atomexpr := atom | "!" atom
//! interval := "[" num "," ( num | "inf" ) ")"
//! ```
//!
//! Hard conjuncts must be of the form `G !p`. Intervals are half-open `[a,b)`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper limit on the number of atomic propositions (symbols are `u64` bitsets).
pub const MAX_ATOMS: usize = 64;

/// Index of an atomic proposition inside an [`Alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom(pub u8);

impl Atom {
    pub fn bit(self) -> u64 {
        1u64 << self.0
    }
}

/// A set of atoms, i.e. one letter of the alphabet `2^AP`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomSet(pub u64);

impl AtomSet {
    pub const EMPTY: AtomSet = AtomSet(0);

    pub fn single(a: Atom) -> Self {
        AtomSet(a.bit())
    }
    pub fn contains(self, a: Atom) -> bool {
        self.0 & a.bit() != 0
    }
    pub fn insert(&mut self, a: Atom) {
        self.0 |= a.bit();
    }
    pub fn remove(&mut self, a: Atom) {
        self.0 &= !a.bit();
    }
    pub fn union(self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 | other.0)
    }
    pub fn intersects(self, other: AtomSet) -> bool {
        self.0 & other.0 != 0
    }
    pub fn is_subset(self, other: AtomSet) -> bool {
        self.0 & !other.0 == 0
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn iter(self) -> impl Iterator<Item = Atom> {
        (0..MAX_ATOMS as u8).map(Atom).filter(move |a| self.contains(*a))
    }
}

/// Ordered set of proposition names. Atom `i` is `names[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<I, S>(names: I) -> Result<Self, ParseError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for n in names {
            let n = n.into();
            if !is_identifier(&n) {
                return Err(ParseError::BadPropositionName(n));
            }
            if !out.contains(&n) {
                out.push(n);
            }
        }
        if out.is_empty() {
            return Err(ParseError::EmptyAlphabet);
        }
        if out.len() > MAX_ATOMS {
            return Err(ParseError::TooManyAtoms(out.len()));
        }
        Ok(Alphabet { names: out })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
    /// Set containing every atom of the alphabet.
    pub fn full(&self) -> AtomSet {
        if self.names.len() == MAX_ATOMS {
            AtomSet(u64::MAX)
        } else {
            AtomSet((1u64 << self.names.len()) - 1)
        }
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn atom(&self, name: &str) -> Option<Atom> {
        self.names.iter().position(|n| n == name).map(|i| Atom(i as u8))
    }
    pub fn name(&self, atom: Atom) -> &str {
        &self.names[atom.0 as usize]
    }
    /// Every letter `2^AP`, in increasing bit order.
    pub fn all_symbols(&self) -> impl Iterator<Item = AtomSet> {
        (0..1u64 << self.names.len()).map(AtomSet)
    }
    pub fn set_of<'a, I: IntoIterator<Item = &'a str>>(&self, names: I) -> Option<AtomSet> {
        let mut s = AtomSet::EMPTY;
        for n in names {
            s.insert(self.atom(n)?);
        }
        Some(s)
    }
    pub fn render_set(&self, set: AtomSet) -> String {
        let v: Vec<&str> = set.iter().map(|a| self.name(a)).collect();
        format!("{{{}}}", v.join(","))
    }
}

/// Half-open time interval `[lower, upper)`; `upper` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub lower: f64,
    #[serde(with = "inf_as_null")]
    pub upper: f64,
}

impl TimeInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ParseError> {
        if !(lower >= 0.0) || !(upper > lower) {
            return Err(ParseError::EmptyInterval {
                line: 0,
                column: 0,
                lower,
                upper,
            });
        }
        Ok(TimeInterval { lower, upper })
    }
    pub fn is_bounded(&self) -> bool {
        self.upper.is_finite()
    }
    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower && t < self.upper
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.upper.is_finite() {
            write!(f, "[{},{})", self.lower, self.upper)
        } else {
            write!(f, "[{},inf)", self.lower)
        }
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One conjunct of the supported fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum SubFormula {
    /// `G !p`
    AlwaysNot { p: Atom },
    /// `G p`
    Always { p: Atom },
    /// `F p`
    Eventually { p: Atom },
    /// `F[a,b) p`
    EventuallyWithin { p: Atom, interval: TimeInterval },
    /// `G F[a,b) p`
    AlwaysEventuallyWithin { p: Atom, interval: TimeInterval },
    /// `G (p -> F[a,b) q)`
    AlwaysImpliesEventuallyWithin { p: Atom, q: Atom, interval: TimeInterval },
    /// `p U[a,b) q`
    UntilWithin { p: Atom, q: Atom, interval: TimeInterval },
    /// `p W q`: `p` holds at every position up to and including the first `q`.
    /// Produced by [`split_until`].
    AlwaysUntilFlag { hold: Atom, release: Atom },
}

impl SubFormula {
    pub fn atoms(&self) -> AtomSet {
        use SubFormula::*;
        let mut s = AtomSet::EMPTY;
        match *self {
            AlwaysNot { p } | Always { p } | Eventually { p } => s.insert(p),
            EventuallyWithin { p, .. } | AlwaysEventuallyWithin { p, .. } => s.insert(p),
            AlwaysImpliesEventuallyWithin { p, q, .. } | UntilWithin { p, q, .. } => {
                s.insert(p);
                s.insert(q)
            }
            AlwaysUntilFlag { hold, release } => {
                s.insert(hold);
                s.insert(release)
            }
        }
        s
    }

    pub fn interval(&self) -> Option<TimeInterval> {
        use SubFormula::*;
        match *self {
            EventuallyWithin { interval, .. }
            | AlwaysEventuallyWithin { interval, .. }
            | AlwaysImpliesEventuallyWithin { interval, .. }
            | UntilWithin { interval, .. } => Some(interval),
            _ => None,
        }
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        use SubFormula::*;
        let n = |a: Atom| alphabet.name(a).to_string();
        match *self {
            AlwaysNot { p } => format!("G !{}", n(p)),
            Always { p } => format!("G {}", n(p)),
            Eventually { p } => format!("F {}", n(p)),
            EventuallyWithin { p, interval } => format!("F{} {}", interval, n(p)),
            AlwaysEventuallyWithin { p, interval } => format!("G F{} {}", interval, n(p)),
            AlwaysImpliesEventuallyWithin { p, q, interval } => {
                format!("G ({} -> F{} {})", n(p), interval, n(q))
            }
            UntilWithin { p, q, interval } => format!("{} U{} {}", n(p), interval, n(q)),
            AlwaysUntilFlag { hold, release } => format!("{} W {}", n(hold), n(release)),
        }
    }
}

/// Temporal class of a conjunct, which fixes its admissible evaluation statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalClass {
    TemporallyBounded,
    /// Can only be satisfied or undecided on a finite prefix.
    NonBoundedTypeI,
    /// Can only be violated or undecided on a finite prefix.
    NonBoundedTypeII,
}

pub fn classify(f: &SubFormula) -> TemporalClass {
    use SubFormula::*;
    match f {
        AlwaysNot { .. } | Always { .. } | AlwaysUntilFlag { .. } => TemporalClass::NonBoundedTypeII,
        Eventually { .. } => TemporalClass::NonBoundedTypeI,
        EventuallyWithin { .. }
        | AlwaysEventuallyWithin { .. }
        | AlwaysImpliesEventuallyWithin { .. }
        | UntilWithin { .. } => TemporalClass::TemporallyBounded,
    }
}

/// Splits `p U[a,b) q` into its bounded obligation `F[a,b) q` and the
/// hold flag `p W q`. Other patterns are returned unchanged.
pub fn split_until(f: &SubFormula) -> Vec<SubFormula> {
    match *f {
        SubFormula::UntilWithin { p, q, interval } => vec![
            SubFormula::EventuallyWithin { p: q, interval },
            SubFormula::AlwaysUntilFlag {
                hold: p,
                release: q,
            },
        ],
        ref other => vec![other.clone()],
    }
}

/// A parsed task `phi_h & phi_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub alphabet: Alphabet,
    pub hard: Vec<SubFormula>,
    pub soft: Vec<SubFormula>,
}

impl Formula {
    pub fn new(alphabet: Alphabet, hard: Vec<SubFormula>, soft: Vec<SubFormula>) -> Result<Self, ParseError> {
        if hard.is_empty() && soft.is_empty() {
            return Err(ParseError::EmptyFormula);
        }
        for h in &hard {
            if !matches!(h, SubFormula::AlwaysNot { .. }) {
                return Err(ParseError::Unsupported {
                    line: 0,
                    column: 0,
                    message: "hard conjuncts must have the form `G !p`".into(),
                });
            }
        }
        for (i, s) in soft.iter().enumerate() {
            if soft[..i].contains(s) {
                return Err(ParseError::DuplicateConjunct(s.render(&alphabet)));
            }
        }
        Ok(Formula { alphabet, hard, soft })
    }

    /// Atoms forbidden by the hard part.
    pub fn hard_atoms(&self) -> AtomSet {
        self.hard.iter().fold(AtomSet::EMPTY, |acc, h| acc.union(h.atoms()))
    }

    /// Soft conjuncts with every until split, duplicates removed (first occurrence kept).
    pub fn expanded_soft(&self) -> Vec<SubFormula> {
        let mut out: Vec<SubFormula> = Vec::new();
        for f in self.soft.iter().flat_map(split_until) {
            if !out.contains(&f) {
                out.push(f);
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let join = |v: &[SubFormula]| {
            v.iter()
                .map(|f| f.render(&self.alphabet))
                .collect::<Vec<_>>()
                .join(" & ")
        };
        let hard = join(&self.hard);
        let soft = join(&self.soft);
        let sep = |s: &str| if s.is_empty() { String::new() } else { format!(" {}", s) };
        format!("hard:{} ; soft:{}", sep(&hard), sep(&soft))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown proposition `{name}` at {line}:{column}")]
    UnknownProposition { name: String, line: usize, column: usize },
    #[error("unsupported pattern at {line}:{column}: {message}")]
    Unsupported { line: usize, column: usize, message: String },
    #[error("empty interval [{lower},{upper}) at {line}:{column}")]
    EmptyInterval { line: usize, column: usize, lower: f64, upper: f64 },
    #[error("formula has neither hard nor soft conjuncts")]
    EmptyFormula,
    #[error("duplicate soft conjunct `{0}`")]
    DuplicateConjunct(String),
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("alphabet has {0} propositions, at most 64 are supported")]
    TooManyAtoms(usize),
    #[error("`{0}` is not a valid proposition name")]
    BadPropositionName(String),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !is_keyword(s)
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "G" | "F" | "U" | "W" | "inf" | "hard" | "soft")
}

/// Collects every identifier in `text` that could be a proposition.
pub fn propositions_in(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut lexer = Lexer::new(text);
    while let Ok(Some(tok)) = lexer.next_token() {
        if let Tok::Ident(name) = tok.tok {
            if !is_keyword(&name) {
                out.insert(name);
            }
        }
    }
    out
}

pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Formula, ParseError> {
    if alphabet.is_empty() {
        return Err(ParseError::EmptyAlphabet);
    }
    let mut p = Parser::new(text, alphabet)?;
    p.formula()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Colon,
    Semi,
    Amp,
    Bang,
    Arrow,
    LParen,
    RParen,
    LBracket,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let r = self.chars.next();
        if let Some((_, c)) = r {
            if c == '\n' {
                self.line += 1;
                self.column = 1;
            } else {
                self.column += 1;
            }
        }
        r
    }

    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn next_token(&mut self) -> Result<Option<Spanned>, ParseError> {
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
        let (line, column) = (self.line, self.column);
        let Some((start, c)) = self.bump() else {
            return Ok(None);
        };
        let tok = match c {
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            '&' => Tok::Amp,
            '!' => Tok::Bang,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ',' => Tok::Comma,
            '-' => match self.bump() {
                Some((_, '>')) => Tok::Arrow,
                _ => return Err(self.err(line, column, "expected `->`")),
            },
            c if c.is_ascii_digit() || c == '.' => {
                let mut end = start + c.len_utf8();
                while let Some(&(i, d)) = self.chars.peek() {
                    if d.is_ascii_digit() || d == '.' {
                        end = i + d.len_utf8();
                        self.bump();
                    } else {
                        break;
                    }
                }
                let s = &self.src[start..end];
                let v: f64 = s
                    .parse()
                    .map_err(|_| self.err(line, column, format!("bad number `{}`", s)))?;
                Tok::Num(v)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = start + 1;
                while let Some(&(i, d)) = self.chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = i + 1;
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(self.src[start..end].to_string())
            }
            other => return Err(self.err(line, column, format!("unexpected character `{}`", other))),
        };
        Ok(Some(Spanned { tok, line, column }))
    }
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    alphabet: &'a Alphabet,
    end: (usize, usize),
}

impl<'a> Parser<'a> {
    fn new(text: &str, alphabet: &'a Alphabet) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(text);
        let mut toks = Vec::new();
        while let Some(t) = lexer.next_token()? {
            toks.push(t);
        }
        Ok(Parser {
            toks,
            pos: 0,
            alphabet,
            end: (lexer.line, lexer.column),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }
    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .unwrap_or(self.end)
    }
    fn syntax(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = self.here();
        ParseError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
    fn unsupported(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = self.here();
        ParseError::Unsupported {
            line,
            column,
            message: message.into(),
        }
    }
    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(format!("expected {}", what)))
        }
    }
    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut hard = None;
        let mut soft = None;
        loop {
            if self.peek().is_none() {
                break;
            }
            let section = match self.peek() {
                Some(Tok::Ident(s)) if s == "hard" || s == "soft" => s.clone(),
                _ => return Err(self.syntax("expected `hard:` or `soft:`")),
            };
            if section == "hard" && (hard.is_some() || soft.is_some()) {
                return Err(self.syntax("`hard:` must appear once, before `soft:`"));
            }
            if section == "soft" && soft.is_some() {
                return Err(self.syntax("`soft:` appears twice"));
            }
            self.pos += 1;
            self.expect(Tok::Colon, "`:`")?;
            let conj = if matches!(self.peek(), None | Some(Tok::Semi)) {
                Vec::new()
            } else {
                self.conj()?
            };
            if section == "hard" {
                for (f, (line, column)) in &conj {
                    if !matches!(f, SubFormula::AlwaysNot { .. }) {
                        return Err(ParseError::Unsupported {
                            line: *line,
                            column: *column,
                            message: "hard conjuncts must have the form `G !p`".into(),
                        });
                    }
                }
                hard = Some(conj.into_iter().map(|(f, _)| f).collect::<Vec<_>>());
            } else {
                soft = Some(conj.into_iter().map(|(f, _)| f).collect::<Vec<_>>());
            }
            match self.peek() {
                None => break,
                Some(Tok::Semi) => {
                    self.pos += 1;
                }
                Some(_) => return Err(self.syntax("expected `&`, `;` or end of input")),
            }
        }
        Formula::new(
            self.alphabet.clone(),
            hard.unwrap_or_default(),
            soft.unwrap_or_default(),
        )
    }

    fn conj(&mut self) -> Result<Vec<(SubFormula, (usize, usize))>, ParseError> {
        let mut out = Vec::new();
        loop {
            let at = self.here();
            out.push((self.term()?, at));
            if self.peek() == Some(&Tok::Amp) {
                self.pos += 1;
            } else {
                return Ok(out);
            }
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let (line, column) = self.here();
        match self.peek().cloned() {
            Some(Tok::Ident(name)) if !is_keyword(&name) => {
                self.pos += 1;
                self.alphabet
                    .atom(&name)
                    .ok_or(ParseError::UnknownProposition { name, line, column })
            }
            Some(Tok::LParen) | Some(Tok::Bang) => {
                Err(self.unsupported("nested or negated sub-formula outside the template set"))
            }
            Some(Tok::Ident(kw)) if kw == "G" || kw == "F" => {
                Err(self.unsupported("nested temporal operator outside the template set"))
            }
            _ => Err(self.syntax("expected a proposition")),
        }
    }

    fn interval(&mut self) -> Result<TimeInterval, ParseError> {
        let (line, column) = self.here();
        self.expect(Tok::LBracket, "`[`")?;
        let lower = match self.peek() {
            Some(Tok::Num(v)) => *v,
            _ => return Err(self.syntax("expected interval lower bound")),
        };
        self.pos += 1;
        self.expect(Tok::Comma, "`,`")?;
        let upper = match self.peek() {
            Some(Tok::Num(v)) => *v,
            Some(Tok::Ident(s)) if s == "inf" => f64::INFINITY,
            _ => return Err(self.syntax("expected interval upper bound or `inf`")),
        };
        self.pos += 1;
        self.expect(Tok::RParen, "`)` (intervals are half-open `[a,b)`)")?;
        if !(upper > lower) {
            return Err(ParseError::EmptyInterval {
                line,
                column,
                lower,
                upper,
            });
        }
        Ok(TimeInterval { lower, upper })
    }

    fn bounded_interval(&mut self) -> Result<TimeInterval, ParseError> {
        let at = self.here();
        let i = self.interval()?;
        if !i.is_bounded() {
            return Err(ParseError::Unsupported {
                line: at.0,
                column: at.1,
                message: "this pattern needs a finite upper bound".into(),
            });
        }
        Ok(i)
    }

    fn term(&mut self) -> Result<SubFormula, ParseError> {
        if self.is_kw("G") {
            self.pos += 1;
            return match self.peek() {
                Some(Tok::Bang) => {
                    self.pos += 1;
                    Ok(SubFormula::AlwaysNot { p: self.atom()? })
                }
                Some(Tok::Ident(s)) if s == "F" => {
                    self.pos += 1;
                    if self.peek() != Some(&Tok::LBracket) {
                        return Err(self.unsupported("`G F` needs a bounded interval"));
                    }
                    let interval = self.bounded_interval()?;
                    let p = self.atom()?;
                    Ok(SubFormula::AlwaysEventuallyWithin { p, interval })
                }
                Some(Tok::LParen) => {
                    self.pos += 1;
                    let p = self.atom()?;
                    self.expect(Tok::Arrow, "`->`")?;
                    if !self.is_kw("F") {
                        return Err(self.unsupported("only `G (p -> F[a,b) q)` is supported"));
                    }
                    self.pos += 1;
                    if self.peek() != Some(&Tok::LBracket) {
                        return Err(self.unsupported("the response needs a bounded interval"));
                    }
                    let interval = self.bounded_interval()?;
                    let q = self.atom()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(SubFormula::AlwaysImpliesEventuallyWithin { p, q, interval })
                }
                _ => Ok(SubFormula::Always { p: self.atom()? }),
            };
        }
        if self.is_kw("F") {
            self.pos += 1;
            if self.peek() == Some(&Tok::LBracket) {
                let at = self.here();
                let interval = self.interval()?;
                let p = self.atom()?;
                if interval.is_bounded() {
                    return Ok(SubFormula::EventuallyWithin { p, interval });
                }
                if interval.lower == 0.0 {
                    return Ok(SubFormula::Eventually { p });
                }
                return Err(ParseError::Unsupported {
                    line: at.0,
                    column: at.1,
                    message: "unbounded eventually must start at 0".into(),
                });
            }
            return Ok(SubFormula::Eventually { p: self.atom()? });
        }
        if self.peek() == Some(&Tok::Bang) {
            return Err(self.unsupported("negation is only supported under `G`"));
        }
        let p = self.atom()?;
        match self.peek() {
            Some(Tok::Ident(s)) if s == "U" => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LBracket) {
                    return Err(self.unsupported("until needs a bounded interval"));
                }
                let interval = self.bounded_interval()?;
                let q = self.atom()?;
                Ok(SubFormula::UntilWithin { p, q, interval })
            }
            Some(Tok::Ident(s)) if s == "W" => {
                self.pos += 1;
                let q = self.atom()?;
                Ok(SubFormula::AlwaysUntilFlag { hold: p, release: q })
            }
            _ => Err(self.unsupported("a bare proposition is not a supported conjunct")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab(names: &[&str]) -> Alphabet {
        Alphabet::new(names.iter().copied()).unwrap()
    }

    #[test]
    fn running_example() {
        let a = ab(&["obs", "g", "p"]);
        let f = parse("hard: G !obs ; soft: G !g & F[0,10) p", &a).unwrap();
        assert_eq!(f.hard, vec![SubFormula::AlwaysNot { p: Atom(0) }]);
        assert_eq!(
            f.soft,
            vec![
                SubFormula::AlwaysNot { p: Atom(1) },
                SubFormula::EventuallyWithin {
                    p: Atom(2),
                    interval: TimeInterval { lower: 0.0, upper: 10.0 }
                }
            ]
        );
    }

    #[test]
    fn empty_soft_section() {
        let a = ab(&["obs"]);
        let f = parse("hard: G !obs ; soft: ", &a).unwrap();
        assert_eq!(f.hard.len(), 1);
        assert!(f.soft.is_empty());
    }

    #[test]
    fn case_study_soft_only() {
        let a = ab(&["grass", "cherry", "pear"]);
        let f = parse("soft: G !grass & G F[0,10) cherry & G (cherry -> F[0,20) pear)", &a).unwrap();
        assert!(f.hard.is_empty());
        assert!(matches!(f.soft[0], SubFormula::AlwaysNot { .. }));
        assert!(matches!(f.soft[1], SubFormula::AlwaysEventuallyWithin { .. }));
        assert!(matches!(f.soft[2], SubFormula::AlwaysImpliesEventuallyWithin { .. }));
    }

    #[test]
    fn errors() {
        let a = ab(&["p", "q"]);
        assert!(matches!(
            parse("soft: F[0,10) r", &a),
            Err(ParseError::UnknownProposition { ref name, line: 1, column: 15 }) if name == "r"
        ));
        assert!(matches!(parse("soft: F[5,5) p", &a), Err(ParseError::EmptyInterval { .. })));
        assert!(matches!(parse("soft: F[0,10) F[0,3) p", &a), Err(ParseError::Unsupported { .. })));
        assert!(matches!(parse("hard: F p ; soft:", &a), Err(ParseError::Unsupported { .. })));
        assert!(matches!(parse("soft: G F p", &a), Err(ParseError::Unsupported { .. })));
        assert!(matches!(parse("soft: F[0,10 p", &a), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("hard: ; soft:", &a), Err(ParseError::EmptyFormula)));
        assert!(matches!(parse("soft: G !p & G !p", &a), Err(ParseError::DuplicateConjunct(_))));
        let e = parse("soft: G !p &\n  $", &a).unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 2, column: 3, .. }), "{e:?}");
    }

    #[test]
    fn classification() {
        let i = TimeInterval { lower: 0.0, upper: 10.0 };
        assert_eq!(classify(&SubFormula::AlwaysNot { p: Atom(0) }), TemporalClass::NonBoundedTypeII);
        assert_eq!(
            classify(&SubFormula::EventuallyWithin { p: Atom(0), interval: i }),
            TemporalClass::TemporallyBounded
        );
        assert_eq!(classify(&SubFormula::Eventually { p: Atom(0) }), TemporalClass::NonBoundedTypeI);
    }

    #[test]
    fn until_split() {
        let i = TimeInterval { lower: 0.0, upper: 5.0 };
        let u = SubFormula::UntilWithin { p: Atom(0), q: Atom(1), interval: i };
        assert_eq!(
            split_until(&u),
            vec![
                SubFormula::EventuallyWithin { p: Atom(1), interval: i },
                SubFormula::AlwaysUntilFlag { hold: Atom(0), release: Atom(1) }
            ]
        );
        let g = SubFormula::AlwaysNot { p: Atom(0) };
        assert_eq!(split_until(&g), vec![g.clone()]);
    }

    fn arb_interval() -> impl Strategy<Value = TimeInterval> {
        (0u32..5, 1u32..30).prop_map(|(a, w)| TimeInterval {
            lower: a as f64,
            upper: (a + w) as f64,
        })
    }

    fn arb_sub(n: u8) -> impl Strategy<Value = SubFormula> {
        let atom = (0..n).prop_map(Atom);
        prop_oneof![
            atom.clone().prop_map(|p| SubFormula::AlwaysNot { p }),
            atom.clone().prop_map(|p| SubFormula::Always { p }),
            atom.clone().prop_map(|p| SubFormula::Eventually { p }),
            (atom.clone(), arb_interval()).prop_map(|(p, interval)| SubFormula::EventuallyWithin { p, interval }),
            (atom.clone(), arb_interval())
                .prop_map(|(p, interval)| SubFormula::AlwaysEventuallyWithin { p, interval }),
            (atom.clone(), atom.clone(), arb_interval())
                .prop_map(|(p, q, interval)| SubFormula::AlwaysImpliesEventuallyWithin { p, q, interval }),
            (atom.clone(), atom.clone(), arb_interval())
                .prop_map(|(p, q, interval)| SubFormula::UntilWithin { p, q, interval }),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(
            hard in proptest::collection::vec((0u8..4).prop_map(|p| SubFormula::AlwaysNot { p: Atom(p) }), 0..3),
            soft in proptest::collection::vec(arb_sub(4), 0..4),
        ) {
            let a = ab(&["a", "b", "c", "d"]);
            let mut hs = Vec::new();
            for h in hard { if !hs.contains(&h) { hs.push(h); } }
            let mut ss = Vec::new();
            for s in soft { if !ss.contains(&s) { ss.push(s); } }
            prop_assume!(!hs.is_empty() || !ss.is_empty());
            let f = Formula::new(a.clone(), hs, ss).unwrap();
            let back = parse(&f.render(), &a).unwrap();
            prop_assert_eq!(back, f);
        }

        #[test]
        fn bounded_patterns_classify_bounded(s in arb_sub(3)) {
            prop_assert_eq!(s.interval().is_some(), classify(&s) == TemporalClass::TemporallyBounded);
            for part in split_until(&s) {
                let is_until = matches!(part, SubFormula::UntilWithin { .. });
                prop_assert!(!is_until);
            }
        }
    }
}
