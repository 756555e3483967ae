use std::collections::BTreeSet;

use mitl_relax::mitl::{parse, Alphabet, AtomSet, Formula};
use mitl_relax::tba::{distance_set, EdgeKind, Evaluation, RelaxedTba, Status};
use proptest::prelude::*;

const FORMULAS: &[&str] = &[
    "hard: G !obs ; soft: G !g & F[0,10) p",
    "hard: G !obs ; soft: G !g & G F[0,10) p & G (p -> F[0,20) q)",
    "soft: F[2,6) p & G q",
    "soft: g U[0,5) p & F q",
    "soft: G F[3,7) p & G !q",
    "soft: G (p -> F[1,4) q) & F g",
    "hard: G !obs ; soft: g W p & F[0,8) p",
];

fn load(text: &str) -> (Formula, RelaxedTba) {
    let a = Alphabet::new(["obs", "g", "p", "q"]).unwrap();
    let f = parse(text, &a).unwrap();
    let t = RelaxedTba::build(&f).unwrap();
    (f, t)
}

/// Clock valuations that cover every region the guards of `t` distinguish.
fn probe_valuations(t: &RelaxedTba) -> Vec<Vec<f64>> {
    let mut consts: BTreeSet<u64> = BTreeSet::from([0]);
    for e in &t.edges {
        for c in &e.guard.0 {
            consts.insert(c.constant as u64);
        }
    }
    let points: Vec<f64> = consts
        .iter()
        .flat_map(|&c| [c as f64, c as f64 + 0.5])
        .collect();
    let mut vals = vec![vec![]];
    for _ in 0..t.clock_count() {
        vals = vals
            .into_iter()
            .flat_map(|v| {
                points.iter().map(move |p| {
                    let mut w = v.clone();
                    w.push(*p);
                    w
                })
            })
            .collect();
    }
    vals
}

#[test]
fn exactly_one_edge_enabled_everywhere() {
    for text in FORMULAS {
        let (f, t) = load(text);
        let vals = probe_valuations(&t);
        for s in 0..t.len() {
            for sym in f.alphabet.all_symbols() {
                for v in &vals {
                    let n = t
                        .out_edges(s)
                        .filter(|e| e.symbol.admits(sym) && e.guard.satisfied(v))
                        .count();
                    assert_eq!(n, 1, "{text}: state {s} symbol {sym:?} clocks {v:?}");
                }
            }
        }
    }
}

#[test]
fn edge_kinds_match_status_changes() {
    for text in FORMULAS {
        let (_, t) = load(text);
        for e in &t.edges {
            let src = t.states[e.source].evaluation.as_ref();
            let dst = t.states[e.target].evaluation.as_ref();
            match e.kind {
                EdgeKind::SelfLoop => assert_eq!(e.source, e.target),
                EdgeKind::HardViolation => {
                    assert_eq!(e.target, t.sink);
                    assert!(e.symbol.must.intersects(t.hard));
                }
                EdgeKind::Progress => {
                    assert_ne!(e.source, e.target);
                    let (s, d) = (src.unwrap(), dst.unwrap());
                    for i in distance_set(s, d) {
                        // either leaves unc, or is a recurrent pattern re-arming / being re-triggered
                        assert!(s.0[i] == Status::Unc || !e.resets.is_empty() || t.soft[i].interval().is_none(),
                            "{text}: {s} -> {d}");
                        assert_ne!(s.0[i], Status::Vio, "{text}: {s} -> {d}");
                    }
                }
                EdgeKind::NonBoundedRecovery | EdgeKind::BoundedRecovery => {
                    let (s, d) = (src.unwrap(), dst.unwrap());
                    assert!(distance_set(s, d)
                        .iter()
                        .any(|&i| s.0[i] == Status::Vio && d.0[i] != Status::Vio));
                }
            }
        }
    }
}

/// The recovered state `s''` (recovered conjuncts reset to `unc`) has an edge
/// to the same target on the same letters. For bounded recoveries its guard,
/// with the recovered clocks removed, is the recovery edge's guard.
#[test]
fn recovery_edges_mirror_an_edge_from_the_reset_state() {
    for text in FORMULAS {
        let (_, t) = load(text);
        for e in t.edges.iter().filter(|e| {
            matches!(e.kind, EdgeKind::NonBoundedRecovery | EdgeKind::BoundedRecovery)
        }) {
            let s = t.states[e.source].evaluation.clone().unwrap();
            let d = t.states[e.target].evaluation.clone().unwrap();
            let recovered: Vec<usize> = (0..s.0.len())
                .filter(|&i| s.0[i] == Status::Vio && d.0[i] != Status::Vio)
                .collect();
            let mut mid = s.clone();
            for &i in &recovered {
                mid.0[i] = Status::Unc;
            }
            if mid == t.states[t.accepting].evaluation.clone().unwrap() {
                // recurrent patterns behave differently at the accepting state
                continue;
            }
            let mid_id = t.states.iter().position(|x| x.evaluation.as_ref() == Some(&mid)).unwrap();
            let mirror = t.out_edges(mid_id).find(|m| {
                m.target == e.target
                    && m.symbol == e.symbol
                    && {
                        let mut g = m.guard.clone();
                        for &i in &recovered {
                            if let Some(c) = t.clocks.iter().find(|c| c.owner == i) {
                                g = g.without_clock(c.id);
                            }
                        }
                        let mut a: Vec<String> = g.0.iter().map(|c| format!("{c:?}")).collect();
                        let mut b: Vec<String> = e.guard.0.iter().map(|c| format!("{c:?}")).collect();
                        a.sort();
                        b.sort();
                        a == b
                    }
            });
            assert!(mirror.is_some(), "{text}: no mirror for {s} -> {d} via {mid}");
            if e.kind == EdgeKind::BoundedRecovery {
                for &i in &recovered {
                    if let Some(c) = t.clocks.iter().find(|c| c.owner == i) {
                        assert!(!e.guard.constrains(c.id));
                    }
                }
            }
        }
    }
}

#[test]
fn sink_is_absorbing() {
    for text in FORMULAS {
        let (f, t) = load(text);
        for sym in f.alphabet.all_symbols() {
            assert_eq!(t.targets_on(t.sink, sym), BTreeSet::from([t.sink]));
        }
    }
}

/// Direct finite-word semantics of `G !g & F[0,10) p` with hard `G !obs`.
fn running_oracle(word: &[(f64, AtomSet)]) -> bool {
    let (obs, g, p) = (1u64, 2u64, 4u64);
    word.iter().all(|(_, s)| s.0 & (obs | g) == 0) && word.iter().any(|(t, s)| s.0 & p != 0 && *t < 10.0)
}

proptest! {
    #[test]
    fn zero_cost_runs_are_exactly_satisfying_words(
        letters in prop::collection::vec(0u64..8, 1..=6),
        dts in prop::collection::vec(1u32..5, 6),
    ) {
        let a = Alphabet::new(["obs", "g", "p"]).unwrap();
        let f = parse("hard: G !obs ; soft: G !g & F[0,10) p", &a).unwrap();
        let t = RelaxedTba::build(&f).unwrap();
        let mut state = t.initial;
        let mut clocks = vec![0.0; t.clock_count()];
        let mut now = 0.0;
        let mut zero = true;
        let mut word = Vec::new();
        for (sym, dt) in letters.iter().zip(&dts) {
            let dt = *dt as f64;
            now += dt;
            word.push((now, AtomSet(*sym)));
            state = t.step(state, &mut clocks, dt, AtomSet(*sym)).unwrap();
            zero &= t.states[state].v_c.is_zero() && t.states[state].v_d.is_zero();
        }
        let accepted = zero && state == t.accepting;
        prop_assert_eq!(accepted, running_oracle(&word));
    }

    #[test]
    fn runs_never_deadlock(
        idx in 0..FORMULAS.len(),
        letters in prop::collection::vec(0u64..16, 1..12),
        dts in prop::collection::vec(0.5f64..6.0, 12),
    ) {
        let (_, t) = load(FORMULAS[idx]);
        let mut state = t.initial;
        let mut clocks = vec![0.0; t.clock_count()];
        for (sym, dt) in letters.iter().zip(&dts) {
            let next = t.step(state, &mut clocks, *dt, AtomSet(*sym));
            prop_assert!(next.is_some());
            state = next.unwrap();
        }
    }
}

#[test]
fn evaluation_display() {
    let e = Evaluation(vec![Status::Unc, Status::Sat]);
    assert_eq!(e.to_string(), "phi1^unc & phi2^sat");
}
