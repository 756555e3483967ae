//! Relaxed timed Büchi automaton.
//!
//! States are sub-formula evaluations (one [`Status`] per soft conjunct) plus a
//! sink for hard-constraint violations. Edges are obtained by composing, per
//! conjunct, a small template of local moves (symbol constraint, clock guard,
//! reset, next status). Composite edges are tagged with the construction step
//! they belong to:
//!
//! 1. progress: conjuncts only move from `unc` to `sat`/`vio` (or are re-armed
//!    by a recurrent pattern),
//! 2. recovery of a non-bounded conjunct from `vio`,
//! 3. recovery of a bounded conjunct from `vio` to `sat`, with that conjunct's
//!    clock constraints dropped,
//! 4. self-loops.
//!
//! For every state, clock valuation and input symbol exactly one edge is
//! enabled, so the automaton is deterministic and deadlock-free.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::mitl::{classify, Alphabet, Atom, AtomSet, Formula, SubFormula, TemporalClass};

/// Default cap on soft conjuncts (the state space is a product over them).
pub const DEFAULT_MAX_SOFT: usize = 20;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Unc,
    Vio,
    Sat,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Unc => "unc",
            Status::Vio => "vio",
            Status::Sat => "sat",
        })
    }
}

/// Admissible statuses of a conjunct, in the order `unc < vio < sat`.
pub fn evaluation_set(f: &SubFormula) -> Vec<Status> {
    match classify(f) {
        TemporalClass::TemporallyBounded => vec![Status::Unc, Status::Vio, Status::Sat],
        TemporalClass::NonBoundedTypeI => vec![Status::Unc, Status::Sat],
        TemporalClass::NonBoundedTypeII => vec![Status::Unc, Status::Vio],
    }
}

/// One status per soft conjunct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evaluation(pub Vec<Status>);

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("true");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "phi{}^{}", i + 1, s)?;
        }
        Ok(())
    }
}

/// Indices of the conjuncts evaluated differently by `a` and `b`.
pub fn distance_set(a: &Evaluation, b: &Evaluation) -> BTreeSet<usize> {
    assert_eq!(a.0.len(), b.0.len(), "evaluations over different conjuncts");
    a.0.iter()
        .zip(&b.0)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

/// Violation cost of a state: a finite count or infinity (sink).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Finite(u32),
    Infinite,
}

impl Level {
    pub fn as_f64(self) -> f64 {
        match self {
            Level::Finite(v) => v as f64,
            Level::Infinite => f64::INFINITY,
        }
    }
    pub fn is_zero(self) -> bool {
        self == Level::Finite(0)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Finite(v) => write!(f, "{}", v),
            Level::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Level::Finite(v) => s.serialize_u32(*v),
            Level::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Clock {
    pub id: ClockId,
    /// Index of the soft conjunct owning the clock.
    pub owner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Relation {
    fn holds(self, v: f64, c: f64) -> bool {
        match self {
            Relation::Lt => v < c,
            Relation::Le => v <= c,
            Relation::Eq => v == c,
            Relation::Ge => v >= c,
            Relation::Gt => v > c,
        }
    }
    fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockConstraint {
    pub clock: ClockId,
    pub relation: Relation,
    pub constant: f64,
}

/// Conjunction of clock constraints; empty means `true`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Guard(pub Vec<ClockConstraint>);

impl Guard {
    pub fn is_true(&self) -> bool {
        self.0.is_empty()
    }
    pub fn satisfied(&self, clocks: &[f64]) -> bool {
        self.0
            .iter()
            .all(|c| c.relation.holds(clocks[c.clock.0], c.constant))
    }
    /// Drops every constraint over `clock`.
    pub fn without_clock(&self, clock: ClockId) -> Guard {
        Guard(self.0.iter().copied().filter(|c| c.clock != clock).collect())
    }
    pub fn constrains(&self, clock: ClockId) -> bool {
        self.0.iter().any(|c| c.clock == clock)
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("true");
        }
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "x{}{}{}", c.clock.0, c.relation.symbol(), c.constant)?;
        }
        Ok(())
    }
}

/// Set of letters described by required and forbidden atoms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SymbolConstraint {
    pub must: AtomSet,
    pub must_not: AtomSet,
}

impl SymbolConstraint {
    pub const ANY: SymbolConstraint = SymbolConstraint {
        must: AtomSet::EMPTY,
        must_not: AtomSet::EMPTY,
    };

    pub fn admits(&self, symbol: AtomSet) -> bool {
        self.must.is_subset(symbol) && !self.must_not.intersects(symbol)
    }
    pub fn is_satisfiable(&self) -> bool {
        !self.must.intersects(self.must_not)
    }
    fn merge(self, other: SymbolConstraint) -> SymbolConstraint {
        SymbolConstraint {
            must: self.must.union(other.must),
            must_not: self.must_not.union(other.must_not),
        }
    }
    pub fn render(&self, alphabet: &Alphabet) -> String {
        let mut parts: Vec<String> = self.must.iter().map(|a| alphabet.name(a).to_string()).collect();
        parts.extend(self.must_not.iter().map(|a| format!("!{}", alphabet.name(a))));
        if parts.is_empty() {
            "*".into()
        } else {
            parts.join(" & ")
        }
    }
}

/// Construction step an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Progress,
    NonBoundedRecovery,
    BoundedRecovery,
    SelfLoop,
    HardViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub guard: Guard,
    pub symbol: SymbolConstraint,
    pub resets: Vec<ClockId>,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TbaState {
    pub id: usize,
    /// `None` for the sink.
    pub evaluation: Option<Evaluation>,
    pub v_c: Level,
    pub v_d: Level,
    /// Atoms that may be observed while in this state.
    pub labels: AtomSet,
    /// Clock constraint associated with the state's bounded statuses.
    pub clock_map: Guard,
}

impl TbaState {
    pub fn is_sink(&self) -> bool {
        self.evaluation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TbaError {
    #[error("{count} soft conjuncts exceed the limit of {max}")]
    TooManySoftConjuncts { count: usize, max: usize },
    #[error("the accepting state is unreachable from the initial state")]
    AcceptingUnreachable,
}

/// Output of [`build_states`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateSet {
    pub evaluations: Vec<Evaluation>,
    pub initial: usize,
    pub accepting: usize,
    /// Index of the sink, equal to `evaluations.len()`.
    pub sink: usize,
}

impl StateSet {
    pub fn len(&self) -> usize {
        self.evaluations.len() + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Enumerates evaluation states in reflected mixed-radix Gray order: the first
/// conjunct varies fastest and consecutive states differ in one conjunct.
pub fn build_states(soft: &[SubFormula], max_soft: usize) -> Result<StateSet, TbaError> {
    if soft.len() > max_soft {
        return Err(TbaError::TooManySoftConjuncts {
            count: soft.len(),
            max: max_soft,
        });
    }
    let sets: Vec<Vec<Status>> = soft.iter().map(evaluation_set).collect();
    let evaluations: Vec<Evaluation> = gray_order(&sets).into_iter().map(Evaluation).collect();
    let initial_eval = Evaluation(vec![Status::Unc; soft.len()]);
    let accepting_eval = accepting_evaluation(soft);
    let initial = evaluations.iter().position(|e| *e == initial_eval).expect("all-unc evaluation");
    let accepting = evaluations
        .iter()
        .position(|e| *e == accepting_eval)
        .expect("accepting evaluation");
    let sink = evaluations.len();
    Ok(StateSet {
        evaluations,
        initial,
        accepting,
        sink,
    })
}

fn gray_order(sets: &[Vec<Status>]) -> Vec<Vec<Status>> {
    let Some((last, rest)) = sets.split_last() else {
        return vec![Vec::new()];
    };
    let sub = gray_order(rest);
    let mut out = Vec::with_capacity(sub.len() * last.len());
    for (pos, s) in last.iter().enumerate() {
        let mut push = |v: &Vec<Status>| {
            let mut v = v.clone();
            v.push(*s);
            out.push(v);
        };
        if pos % 2 == 0 {
            sub.iter().for_each(&mut push);
        } else {
            sub.iter().rev().for_each(&mut push);
        }
    }
    out
}

fn accepting_evaluation(soft: &[SubFormula]) -> Evaluation {
    Evaluation(
        soft.iter()
            .map(|f| match classify(f) {
                TemporalClass::NonBoundedTypeII => Status::Unc,
                _ => Status::Sat,
            })
            .collect(),
    )
}

/// `(v_c, v_d)` of an evaluation state; `None` is the sink.
pub fn violation_costs(soft: &[SubFormula], evaluation: Option<&Evaluation>) -> (Level, Level) {
    let Some(e) = evaluation else {
        return (Level::Infinite, Level::Infinite);
    };
    let mut bounded_vio = 0;
    let mut nonbounded_vio = false;
    for (f, s) in soft.iter().zip(&e.0) {
        if *s == Status::Vio {
            if classify(f) == TemporalClass::TemporallyBounded {
                bounded_vio += 1;
            } else {
                nonbounded_vio = true;
            }
        }
    }
    (Level::Finite(bounded_vio), Level::Finite(nonbounded_vio as u32))
}

/// Clock assignment: one clock per bounded conjunct, numbered in conjunct order.
pub fn assign_clocks(soft: &[SubFormula]) -> Vec<Option<ClockId>> {
    let mut next = 0;
    soft.iter()
        .map(|f| {
            if classify(f) == TemporalClass::TemporallyBounded {
                next += 1;
                Some(ClockId(next - 1))
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct LocalMove {
    symbol: SymbolConstraint,
    guard: Vec<ClockConstraint>,
    reset: bool,
    next: Status,
    recovery: bool,
}

fn mv(must: &[Atom], must_not: &[Atom], guard: Vec<ClockConstraint>, next: Status) -> LocalMove {
    let mut symbol = SymbolConstraint::ANY;
    must.iter().for_each(|a| symbol.must.insert(*a));
    must_not.iter().for_each(|a| symbol.must_not.insert(*a));
    LocalMove {
        symbol,
        guard,
        reset: false,
        next,
        recovery: false,
    }
}

impl LocalMove {
    fn reset(mut self) -> Self {
        self.reset = true;
        self
    }
    fn recovery(mut self) -> Self {
        self.recovery = true;
        self
    }
}

struct Ctx<'a> {
    soft: &'a [SubFormula],
    clocks: &'a [Option<ClockId>],
    partners: &'a [Option<usize>],
}

fn cc(clock: ClockId, relation: Relation, constant: f64) -> ClockConstraint {
    ClockConstraint {
        clock,
        relation,
        constant,
    }
}

/// Local moves of conjunct `i` when the source evaluation is `src`. Each list
/// partitions (symbol, clock valuation) space.
fn local_moves(ctx: &Ctx<'_>, i: usize, src: &Evaluation, at_accepting: bool) -> Vec<LocalMove> {
    use Status::*;
    use SubFormula::*;
    let status = src.0[i];
    let clock = ctx.clocks[i];
    match (&ctx.soft[i], status) {
        (AlwaysNot { p }, Unc) => vec![mv(&[], &[*p], vec![], Unc), mv(&[*p], &[], vec![], Vio)],
        (AlwaysNot { p }, Vio) => vec![mv(&[*p], &[], vec![], Vio), mv(&[], &[*p], vec![], Unc).recovery()],
        (Always { p }, Unc) => vec![mv(&[*p], &[], vec![], Unc), mv(&[], &[*p], vec![], Vio)],
        (Always { p }, Vio) => vec![mv(&[], &[*p], vec![], Vio), mv(&[*p], &[], vec![], Unc).recovery()],
        (Eventually { p }, Unc) => vec![mv(&[*p], &[], vec![], Sat), mv(&[], &[*p], vec![], Unc)],
        (Eventually { .. }, Sat) => vec![mv(&[], &[], vec![], Sat)],
        (EventuallyWithin { p, interval } | AlwaysEventuallyWithin { p, interval }, Unc) => {
            let x = clock.expect("bounded conjunct has a clock");
            let recurrent = matches!(ctx.soft[i], AlwaysEventuallyWithin { .. });
            let (a, b) = (interval.lower, interval.upper);
            let mut window = vec![cc(x, Relation::Lt, b)];
            if a > 0.0 {
                window.insert(0, cc(x, Relation::Ge, a));
            }
            let mut sat = mv(&[*p], &[], window, Sat);
            sat.reset = recurrent;
            let mut out = vec![
                sat,
                mv(&[], &[], vec![cc(x, Relation::Ge, b)], Vio),
                mv(&[], &[*p], vec![cc(x, Relation::Lt, b)], Unc),
            ];
            if a > 0.0 {
                out.push(mv(&[*p], &[], vec![cc(x, Relation::Lt, a)], Unc));
            }
            out
        }
        (EventuallyWithin { .. }, Sat) => vec![mv(&[], &[], vec![], Sat)],
        (EventuallyWithin { p, .. }, Vio) => {
            vec![mv(&[*p], &[], vec![], Sat).recovery(), mv(&[], &[*p], vec![], Vio)]
        }
        (AlwaysEventuallyWithin { p, interval }, Sat) => {
            if at_accepting {
                // re-arm for the next round; the clock restarts now
                if interval.lower == 0.0 {
                    vec![mv(&[*p], &[], vec![], Sat).reset(), mv(&[], &[*p], vec![], Unc).reset()]
                } else {
                    vec![mv(&[], &[], vec![], Unc).reset()]
                }
            } else {
                vec![mv(&[], &[], vec![], Sat)]
            }
        }
        (AlwaysEventuallyWithin { p, .. }, Vio) => {
            vec![mv(&[*p], &[], vec![], Sat).reset().recovery(), mv(&[], &[*p], vec![], Vio)]
        }
        (AlwaysImpliesEventuallyWithin { p, q, interval }, Unc) => {
            let y = clock.expect("bounded conjunct has a clock");
            let (a, b) = (interval.lower, interval.upper);
            let mut window = vec![cc(y, Relation::Lt, b)];
            if a > 0.0 {
                window.insert(0, cc(y, Relation::Ge, a));
            }
            let mut out = vec![
                mv(&[*q], &[], window, Sat),
                mv(&[], &[], vec![cc(y, Relation::Ge, b)], Vio),
                mv(&[*p], &[*q], vec![cc(y, Relation::Lt, b)], Unc).reset(),
                mv(&[], &[*p, *q], vec![cc(y, Relation::Lt, b)], Unc),
            ];
            if a > 0.0 {
                out.push(mv(&[*p, *q], &[], vec![cc(y, Relation::Lt, a)], Unc).reset());
                out.push(mv(&[*q], &[*p], vec![cc(y, Relation::Lt, a)], Unc));
            }
            out
        }
        (AlwaysImpliesEventuallyWithin { p, q, .. }, Sat) => vec![
            mv(&[*p], &[*q], vec![], Unc).reset(),
            mv(&[*q], &[], vec![], Sat),
            mv(&[], &[*p, *q], vec![], Sat),
        ],
        (AlwaysImpliesEventuallyWithin { q, .. }, Vio) => {
            vec![mv(&[*q], &[], vec![], Sat).recovery(), mv(&[], &[*q], vec![], Vio)]
        }
        (AlwaysUntilFlag { hold, .. }, st) => {
            let released = ctx.partners[i].is_some_and(|k| src.0[k] == Sat);
            match (st, released) {
                (Unc, true) => vec![mv(&[], &[], vec![], Unc)],
                (Unc, false) => vec![mv(&[*hold], &[], vec![], Unc), mv(&[], &[*hold], vec![], Vio)],
                (Vio, true) => vec![mv(&[], &[], vec![], Unc).recovery()],
                (Vio, false) => vec![
                    mv(&[*hold], &[], vec![], Unc).recovery(),
                    mv(&[], &[*hold], vec![], Vio),
                ],
                (Sat, _) => unreachable!("type II conjunct has no sat status"),
            }
        }
        (UntilWithin { .. }, _) => unreachable!("until conjuncts are split before construction"),
        (f, s) => unreachable!("status {s} not admissible for {f:?}"),
    }
}

fn until_partners(soft: &[SubFormula]) -> Vec<Option<usize>> {
    soft.iter()
        .map(|f| match f {
            SubFormula::AlwaysUntilFlag { release, .. } => soft.iter().position(
                |g| matches!(g, SubFormula::EventuallyWithin { p, .. } if p == release),
            ),
            _ => None,
        })
        .collect()
}

/// Builds the edge set for `states`. Edges are grouped by construction step.
pub fn build_edges(states: &StateSet, soft: &[SubFormula], hard: AtomSet) -> Vec<Edge> {
    let clocks = assign_clocks(soft);
    let partners = until_partners(soft);
    let ctx = Ctx {
        soft,
        clocks: &clocks,
        partners: &partners,
    };
    let index_of = |e: &Evaluation| states.evaluations.iter().position(|x| x == e);
    let accepting_eval = &states.evaluations[states.accepting];

    let mut by_kind: [Vec<Edge>; 5] = Default::default();
    for (sid, src) in states.evaluations.iter().enumerate() {
        let at_accepting = src == accepting_eval;
        let moves: Vec<Vec<LocalMove>> = (0..soft.len())
            .map(|i| local_moves(&ctx, i, src, at_accepting))
            .collect();
        let mut choice = vec![0usize; soft.len()];
        'combos: loop {
            let mut symbol = SymbolConstraint {
                must: AtomSet::EMPTY,
                must_not: hard,
            };
            let mut guard = Vec::new();
            let mut resets = Vec::new();
            let mut next = Vec::with_capacity(soft.len());
            let (mut nb_rec, mut b_rec) = (false, false);
            for (i, &c) in choice.iter().enumerate() {
                let m = &moves[i][c];
                symbol = symbol.merge(m.symbol);
                guard.extend(m.guard.iter().copied());
                if m.reset {
                    resets.push(clocks[i].expect("reset on a clocked conjunct"));
                }
                if m.recovery {
                    if clocks[i].is_some() {
                        b_rec = true;
                    } else {
                        nb_rec = true;
                    }
                }
                next.push(m.next);
            }
            if symbol.is_satisfiable() {
                let target = index_of(&Evaluation(next)).expect("target evaluation exists");
                let kind = if target == sid {
                    EdgeKind::SelfLoop
                } else if b_rec {
                    EdgeKind::BoundedRecovery
                } else if nb_rec {
                    EdgeKind::NonBoundedRecovery
                } else {
                    EdgeKind::Progress
                };
                by_kind[kind as usize].push(Edge {
                    source: sid,
                    target,
                    guard: Guard(guard),
                    symbol,
                    resets,
                    kind,
                });
            }
            // odometer over the per-conjunct move lists
            for i in 0..choice.len() {
                choice[i] += 1;
                if choice[i] < moves[i].len() {
                    continue 'combos;
                }
                choice[i] = 0;
            }
            break;
        }
        for h in hard.iter() {
            by_kind[EdgeKind::HardViolation as usize].push(Edge {
                source: sid,
                target: states.sink,
                guard: Guard::default(),
                symbol: SymbolConstraint {
                    must: AtomSet::single(h),
                    must_not: AtomSet::EMPTY,
                },
                resets: Vec::new(),
                kind: EdgeKind::HardViolation,
            });
        }
    }
    by_kind[EdgeKind::SelfLoop as usize].push(Edge {
        source: states.sink,
        target: states.sink,
        guard: Guard::default(),
        symbol: SymbolConstraint::ANY,
        resets: Vec::new(),
        kind: EdgeKind::SelfLoop,
    });
    by_kind.into_iter().flatten().collect()
}

/// The relaxed timed Büchi automaton of a formula.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedTba {
    pub schema_version: u32,
    pub alphabet: Alphabet,
    pub soft: Vec<SubFormula>,
    pub hard: AtomSet,
    pub clocks: Vec<Clock>,
    pub states: Vec<TbaState>,
    pub initial: usize,
    pub accepting: usize,
    pub sink: usize,
    pub edges: Vec<Edge>,
    /// State count before reachability pruning.
    pub raw_state_count: usize,
    #[serde(skip)]
    out_edges: Vec<Vec<usize>>,
}

impl RelaxedTba {
    /// Full construction without pruning.
    pub fn build(formula: &Formula) -> Result<Self, TbaError> {
        Self::build_with_limit(formula, DEFAULT_MAX_SOFT)
    }

    pub fn build_with_limit(formula: &Formula, max_soft: usize) -> Result<Self, TbaError> {
        let soft = formula.expanded_soft();
        let hard = formula.hard_atoms();
        let set = build_states(&soft, max_soft)?;
        let edges = build_edges(&set, &soft, hard);
        let clock_ids = assign_clocks(&soft);
        let all = formula.alphabet.full();
        let mut states: Vec<TbaState> = set
            .evaluations
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let (v_c, v_d) = violation_costs(&soft, Some(e));
                TbaState {
                    id,
                    evaluation: Some(e.clone()),
                    v_c,
                    v_d,
                    labels: AtomSet(all.0 & !hard.0),
                    clock_map: clock_map(&soft, &clock_ids, e),
                }
            })
            .collect();
        states.push(TbaState {
            id: set.sink,
            evaluation: None,
            v_c: Level::Infinite,
            v_d: Level::Infinite,
            labels: all,
            clock_map: Guard::default(),
        });
        let clocks = clock_ids
            .iter()
            .enumerate()
            .filter_map(|(owner, c)| c.map(|id| Clock { id, owner }))
            .collect();
        let mut tba = RelaxedTba {
            schema_version: SCHEMA_VERSION,
            alphabet: formula.alphabet.clone(),
            soft,
            hard,
            clocks,
            raw_state_count: states.len(),
            states,
            initial: set.initial,
            accepting: set.accepting,
            sink: set.sink,
            edges,
            out_edges: Vec::new(),
        };
        tba.index_edges();
        Ok(tba)
    }

    /// Construction followed by [`prune_unreachable`].
    pub fn build_pruned(formula: &Formula) -> Result<Self, TbaError> {
        prune_unreachable(Self::build(formula)?)
    }

    fn index_edges(&mut self) {
        self.out_edges = vec![Vec::new(); self.states.len()];
        for (i, e) in self.edges.iter().enumerate() {
            self.out_edges[e.source].push(i);
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn clock_count(&self) -> usize {
        self.clocks.len()
    }

    pub fn out_edges(&self, state: usize) -> impl Iterator<Item = &Edge> {
        self.out_edges[state].iter().map(move |&i| &self.edges[i])
    }

    pub fn v_c(&self) -> Vec<Level> {
        self.states.iter().map(|s| s.v_c).collect()
    }
    pub fn v_d(&self) -> Vec<Level> {
        self.states.iter().map(|s| s.v_d).collect()
    }

    /// Edge enabled in `state` after `dt` time units for `symbol`, without
    /// applying it. `clocks` are the valuations before time elapses.
    pub fn enabled_edge(&self, state: usize, clocks: &[f64], dt: f64, symbol: AtomSet) -> Option<&Edge> {
        let advanced: Vec<f64> = clocks.iter().map(|c| c + dt).collect();
        self.out_edges(state)
            .find(|e| e.symbol.admits(symbol) && e.guard.satisfied(&advanced))
    }

    /// Lets `dt` elapse, reads `symbol`, applies the enabled edge and returns
    /// the target state.
    pub fn step(&self, state: usize, clocks: &mut [f64], dt: f64, symbol: AtomSet) -> Option<usize> {
        clocks.iter_mut().for_each(|c| *c += dt);
        let edge = self
            .out_edges(state)
            .find(|e| e.symbol.admits(symbol) && e.guard.satisfied(clocks))?;
        for r in &edge.resets {
            clocks[r.0] = 0.0;
        }
        Some(edge.target)
    }

    /// Whether some edge `state -> target` admits `symbol`, ignoring guards.
    pub fn admits_pair(&self, state: usize, target: usize, symbol: AtomSet) -> bool {
        self.out_edges(state)
            .any(|e| e.target == target && e.symbol.admits(symbol))
    }

    /// Distinct targets of `state` over all edges.
    pub fn successors(&self, state: usize) -> BTreeSet<usize> {
        self.out_edges(state).map(|e| e.target).collect()
    }

    /// Targets reachable from `state` on `symbol` under some clock valuation.
    pub fn targets_on(&self, state: usize, symbol: AtomSet) -> BTreeSet<usize> {
        self.out_edges(state)
            .filter(|e| e.symbol.admits(symbol))
            .map(|e| e.target)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("automaton serializes")
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph relaxed_tba {\n  rankdir=LR;\n  node [shape=circle];\n");
        for st in &self.states {
            let name = match &st.evaluation {
                Some(e) => e.to_string(),
                None => "sink".into(),
            };
            let shape = if st.id == self.accepting {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(
                s,
                "  s{} [shape={}, label=\"s{}\\n{}\\nv_c={} v_d={}\"];",
                st.id, shape, st.id, name, st.v_c, st.v_d
            );
        }
        let _ = writeln!(s, "  init [shape=point];\n  init -> s{};", self.initial);
        for e in &self.edges {
            let mut label = format!("{} | {}", e.symbol.render(&self.alphabet), e.guard);
            if !e.resets.is_empty() {
                let r: Vec<String> = e.resets.iter().map(|c| format!("x{}", c.0)).collect();
                let _ = write!(label, " | reset {}", r.join(","));
            }
            let _ = writeln!(
                s,
                "  s{} -> s{} [label=\"{}\"];",
                e.source, e.target, label
            );
        }
        s.push_str("}\n");
        s
    }
}

fn clock_map(soft: &[SubFormula], clocks: &[Option<ClockId>], e: &Evaluation) -> Guard {
    let mut g = Vec::new();
    for (i, f) in soft.iter().enumerate() {
        let (Some(x), Some(iv)) = (clocks[i], f.interval()) else {
            continue;
        };
        match e.0[i] {
            Status::Sat if matches!(f, SubFormula::EventuallyWithin { .. }) => {
                if iv.lower > 0.0 {
                    g.push(cc(x, Relation::Ge, iv.lower));
                }
                g.push(cc(x, Relation::Lt, iv.upper));
            }
            Status::Vio => g.push(cc(x, Relation::Ge, iv.upper)),
            _ => {}
        }
    }
    Guard(g)
}

/// Removes evaluation states unreachable from the initial state. The sink is
/// always kept; state order is preserved.
pub fn prune_unreachable(tba: RelaxedTba) -> Result<RelaxedTba, TbaError> {
    let n = tba.states.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([tba.initial]);
    seen[tba.initial] = true;
    while let Some(s) = queue.pop_front() {
        for e in tba.out_edges(s) {
            if !seen[e.target] {
                seen[e.target] = true;
                queue.push_back(e.target);
            }
        }
    }
    if !seen[tba.accepting] {
        return Err(TbaError::AcceptingUnreachable);
    }
    seen[tba.sink] = true;
    let mut remap = vec![usize::MAX; n];
    let mut next = 0;
    for (i, keep) in seen.iter().enumerate() {
        if *keep {
            remap[i] = next;
            next += 1;
        }
    }
    let states = tba
        .states
        .iter()
        .filter(|s| seen[s.id])
        .map(|s| TbaState {
            id: remap[s.id],
            ..s.clone()
        })
        .collect();
    let edges = tba
        .edges
        .iter()
        .filter(|e| seen[e.source])
        .map(|e| Edge {
            source: remap[e.source],
            target: remap[e.target],
            ..e.clone()
        })
        .collect();
    let mut out = RelaxedTba {
        states,
        edges,
        initial: remap[tba.initial],
        accepting: remap[tba.accepting],
        sink: remap[tba.sink],
        out_edges: Vec::new(),
        ..tba
    };
    out.index_edges();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mitl::{parse, TimeInterval};

    fn running() -> RelaxedTba {
        let a = Alphabet::new(["obs", "g", "p"]).unwrap();
        RelaxedTba::build(&parse("hard: G !obs ; soft: G !g & F[0,10) p", &a).unwrap()).unwrap()
    }

    #[test]
    fn evaluation_sets() {
        let i = TimeInterval { lower: 0.0, upper: 10.0 };
        assert_eq!(evaluation_set(&SubFormula::AlwaysNot { p: Atom(0) }), vec![Status::Unc, Status::Vio]);
        assert_eq!(
            evaluation_set(&SubFormula::EventuallyWithin { p: Atom(0), interval: i }),
            vec![Status::Unc, Status::Vio, Status::Sat]
        );
        assert_eq!(evaluation_set(&SubFormula::Eventually { p: Atom(0) }), vec![Status::Unc, Status::Sat]);
    }

    #[test]
    fn state_counts() {
        let i = TimeInterval { lower: 0.0, upper: 5.0 };
        assert_eq!(build_states(&[], DEFAULT_MAX_SOFT).unwrap().len(), 2);
        let one = [SubFormula::EventuallyWithin { p: Atom(0), interval: i }];
        assert_eq!(build_states(&one, DEFAULT_MAX_SOFT).unwrap().len(), 4);
        let many: Vec<SubFormula> = (0..21).map(|k| SubFormula::AlwaysNot { p: Atom(k) }).collect();
        assert!(matches!(
            build_states(&many, DEFAULT_MAX_SOFT),
            Err(TbaError::TooManySoftConjuncts { count: 21, max: 20 })
        ));
    }

    #[test]
    fn running_example_states_and_costs() {
        let t = running();
        assert_eq!(t.len(), 7);
        use Level::*;
        assert_eq!(t.v_c(), vec![Finite(0), Finite(0), Finite(1), Finite(1), Finite(0), Finite(0), Infinite]);
        assert_eq!(t.v_d(), vec![Finite(0), Finite(1), Finite(1), Finite(0), Finite(0), Finite(1), Infinite]);
        assert_eq!(t.initial, 0);
        assert_eq!(t.accepting, 4);
        assert_eq!(t.sink, 6);
        assert_eq!(
            t.states[4].evaluation,
            Some(Evaluation(vec![Status::Unc, Status::Sat]))
        );
    }

    #[test]
    fn distance_sets() {
        use Status::*;
        let e = |v: &[Status]| Evaluation(v.to_vec());
        assert_eq!(distance_set(&e(&[Unc, Unc]), &e(&[Vio, Unc])), BTreeSet::from([0]));
        assert!(distance_set(&e(&[Unc, Sat]), &e(&[Unc, Sat])).is_empty());
        assert_eq!(distance_set(&e(&[Unc, Unc]), &e(&[Vio, Sat])), BTreeSet::from([0, 1]));
    }

    #[test]
    fn running_example_named_edges() {
        let t = running();
        let p = AtomSet(0b100);
        let x = ClockId(0);
        let lt = ClockConstraint { clock: x, relation: Relation::Lt, constant: 10.0 };
        let ge = ClockConstraint { clock: x, relation: Relation::Ge, constant: 10.0 };
        assert!(t.edges.iter().any(|e| e.source == 0
            && e.target == 4
            && e.symbol.admits(p)
            && e.guard.0 == vec![lt]));
        assert!(t.edges.iter().any(|e| e.source == 0
            && e.target == 3
            && e.symbol.admits(p)
            && e.guard.0 == vec![ge]));
        // grass step then recovery straight to the accepting state
        assert!(t
            .edges
            .iter()
            .any(|e| e.source == 1 && e.target == 4 && e.kind == EdgeKind::NonBoundedRecovery));
    }

    #[test]
    fn sink_absorbs() {
        let t = running();
        let obs = AtomSet(0b001);
        for e in &t.edges {
            if e.source == t.sink {
                assert_eq!(e.target, t.sink);
            } else if e.symbol.must.intersects(obs) {
                assert_eq!(e.target, t.sink);
            } else {
                assert!(e.symbol.must_not.intersects(obs));
            }
        }
        let mut clocks = vec![0.0];
        assert_eq!(t.step(0, &mut clocks, 1.0, AtomSet(0b101)), Some(t.sink));
    }

    #[test]
    fn pruning() {
        let t = running();
        let p = prune_unreachable(t.clone()).unwrap();
        assert_eq!(p.len(), 7);
        let a = Alphabet::new(["obs"]).unwrap();
        let e = RelaxedTba::build(&parse("hard: G !obs ; soft:", &a).unwrap()).unwrap();
        assert_eq!(prune_unreachable(e).unwrap().len(), 2);
    }

    #[test]
    fn pruning_drops_isolated_state() {
        let mut t = running();
        // cut every edge into state 5 (vio, sat)
        t.edges.retain(|e| e.target != 5 || e.source == 5);
        t.index_edges();
        let p = prune_unreachable(t).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.states.iter().all(|s| s.evaluation != Some(Evaluation(vec![Status::Vio, Status::Sat]))));
        assert_eq!(p.sink, 5);
        assert_eq!(p.accepting, 4);
    }

    #[test]
    fn pruning_fails_when_accepting_unreachable() {
        let mut t = running();
        t.edges.retain(|e| e.target != t.accepting || e.source == t.accepting);
        t.index_edges();
        assert_eq!(prune_unreachable(t), Err(TbaError::AcceptingUnreachable));
    }

    #[test]
    fn dot_and_json_exports() {
        let t = running();
        let dot = t.to_dot();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("s6 [shape=circle, label=\"s6\\nsink\\nv_c=inf v_d=inf\"]"));
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["states"][6]["v_c"], "inf");
        assert_eq!(v["states"].as_array().unwrap().len(), 7);
    }
}
