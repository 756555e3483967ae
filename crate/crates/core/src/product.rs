//! Relaxed product automaton of a grid WTS and a relaxed TBA.
//!
//! The product graph is fixed at construction: `(q,s) -> (q',s')` exists when
//! `q -> q'` is a WTS move and the automaton has some edge `s -> s'`. Whether a
//! transition is currently usable depends on the labels the agent knows about
//! and is tracked by [`Transition::blocked`]; sensing only flips those flags.

use serde::Serialize;
use thiserror::Error;

use crate::mitl::AtomSet;
use crate::tba::{RelaxedTba, SCHEMA_VERSION};
use crate::wts::Wts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    /// Traversal time of the underlying WTS move.
    pub weight: f64,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProductError {
    #[error("no automaton initial state is compatible with the labels of the initial cell")]
    EmptyInitialSet,
}

#[derive(Debug, Clone)]
pub struct Rpa {
    wts: Wts,
    tba: RelaxedTba,
    n_tba: usize,
    present: Vec<bool>,
    transitions: Vec<Transition>,
    out_start: Vec<usize>,
    in_start: Vec<usize>,
    in_index: Vec<usize>,
    version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductStats {
    pub schema_version: u32,
    pub wts_states: usize,
    pub tba_states: usize,
    pub tba_raw_states: usize,
    /// `|Q|·|S|`
    pub product_grid: usize,
    /// States whose cell labels are admissible in their automaton state.
    pub product_states: usize,
    pub transitions: usize,
    pub enabled_transitions: usize,
    pub accepting_states: usize,
}

/// Builds the product. Fails when the initial state is not label-consistent.
pub fn build_product(wts: Wts, tba: RelaxedTba) -> Result<Rpa, ProductError> {
    let n_tba = tba.len();
    let n = wts.len() * n_tba;
    let succ: Vec<Vec<usize>> = (0..n_tba).map(|s| tba.successors(s).into_iter().collect()).collect();
    let mut transitions = Vec::new();
    let mut out_start = Vec::with_capacity(n + 1);
    for q in 0..wts.len() {
        for s in 0..n_tba {
            out_start.push(transitions.len());
            for &(q2, w) in wts.successors(q) {
                for &s2 in &succ[s] {
                    transitions.push(Transition {
                        from: q * n_tba + s,
                        to: q2 * n_tba + s2,
                        weight: w,
                        blocked: true,
                    });
                }
            }
        }
    }
    out_start.push(transitions.len());

    let mut in_count = vec![0usize; n + 1];
    for t in &transitions {
        in_count[t.to + 1] += 1;
    }
    for i in 0..n {
        in_count[i + 1] += in_count[i];
    }
    let in_start = in_count.clone();
    let mut fill = in_count;
    let mut in_index = vec![0; transitions.len()];
    for (i, t) in transitions.iter().enumerate() {
        in_index[fill[t.to]] = i;
        fill[t.to] += 1;
    }

    let mut rpa = Rpa {
        wts,
        tba,
        n_tba,
        present: vec![false; n],
        transitions,
        out_start,
        in_start,
        in_index,
        version: 0,
    };
    let cells: Vec<usize> = (0..rpa.wts.len()).collect();
    rpa.refresh_cells(&cells);
    rpa.version = 0;
    if rpa.initial_states().is_empty() {
        return Err(ProductError::EmptyInitialSet);
    }
    Ok(rpa)
}

impl Rpa {
    pub fn wts(&self) -> &Wts {
        &self.wts
    }
    pub fn tba(&self) -> &RelaxedTba {
        &self.tba
    }
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of state ids (`|Q|·|S|`), including label-inconsistent ones.
    pub fn len(&self) -> usize {
        self.present.len()
    }
    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn id(&self, q: usize, s: usize) -> usize {
        q * self.n_tba + s
    }
    pub fn cell_of(&self, p: usize) -> usize {
        p / self.n_tba
    }
    pub fn tba_state_of(&self, p: usize) -> usize {
        p % self.n_tba
    }
    pub fn is_present(&self, p: usize) -> bool {
        self.present[p]
    }
    pub fn is_sink(&self, p: usize) -> bool {
        self.tba_state_of(p) == self.tba.sink
    }
    pub fn is_accepting(&self, p: usize) -> bool {
        self.present[p] && self.tba_state_of(p) == self.tba.accepting
    }
    pub fn accepting_states(&self) -> Vec<usize> {
        (0..self.wts.len())
            .map(|q| self.id(q, self.tba.accepting))
            .filter(|&p| self.present[p])
            .collect()
    }
    pub fn initial_states(&self) -> Vec<usize> {
        let p = self.id(self.wts.q0(), self.tba.initial);
        if self.present[p] {
            vec![p]
        } else {
            vec![]
        }
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
    pub fn out_transitions(&self, p: usize) -> &[Transition] {
        &self.transitions[self.out_start[p]..self.out_start[p + 1]]
    }
    pub fn in_transitions(&self, p: usize) -> impl Iterator<Item = &Transition> {
        self.in_index[self.in_start[p]..self.in_start[p + 1]]
            .iter()
            .map(move |&i| &self.transitions[i])
    }
    pub fn transition(&self, from: usize, to: usize) -> Option<&Transition> {
        self.out_transitions(from).iter().find(|t| t.to == to)
    }

    /// Label consistency `L(q) ⊆ L̂(s)` under current knowledge.
    fn consistent(&self, p: usize) -> bool {
        let labels = self.tba.states[self.tba_state_of(p)].labels;
        self.wts.label(self.cell_of(p)).is_subset(labels)
    }

    fn usable(&self, t: &Transition) -> bool {
        self.present[t.from]
            && self.present[t.to]
            && self.tba.admits_pair(
                self.tba_state_of(t.from),
                self.tba_state_of(t.to),
                self.wts.label(self.cell_of(t.to)),
            )
    }

    /// Replaces the label of `q` in the agent's knowledge. Call
    /// [`Rpa::refresh_cells`] afterwards.
    pub fn set_label(&mut self, q: usize, l: AtomSet) {
        self.wts.set_label(q, l);
    }

    /// Recomputes state presence and transition enabledness around `cells`.
    pub fn refresh_cells(&mut self, cells: &[usize]) {
        for &q in cells {
            for s in 0..self.n_tba {
                let p = self.id(q, s);
                self.present[p] = self.consistent(p);
            }
        }
        for &q in cells {
            for s in 0..self.n_tba {
                let p = self.id(q, s);
                for i in self.out_start[p]..self.out_start[p + 1] {
                    self.transitions[i].blocked = !self.usable(&self.transitions[i]);
                }
                for k in self.in_start[p]..self.in_start[p + 1] {
                    let i = self.in_index[k];
                    self.transitions[i].blocked = !self.usable(&self.transitions[i]);
                }
            }
        }
        self.version += 1;
    }

    /// `ω_v` of entering `p`: `(1-α)·v_c + α·v_d`, infinite at the sink.
    pub fn state_violation(&self, p: usize, alpha: f64) -> f64 {
        let st = &self.tba.states[self.tba_state_of(p)];
        if st.is_sink() {
            return f64::INFINITY;
        }
        (1.0 - alpha) * st.v_c.as_f64() + alpha * st.v_d.as_f64()
    }

    /// Violation weight of the transition `from -> to`.
    pub fn violation_weight(&self, from: usize, to: usize, alpha: f64) -> Option<f64> {
        self.transition(from, to)?;
        Some(self.state_violation(to, alpha))
    }

    /// Total weight `Σ ω·ω_v` of a state sequence; `None` if a step is not a
    /// product transition.
    pub fn path_weight(&self, path: &[usize], alpha: f64) -> Option<f64> {
        let mut total = 0.0;
        for w in path.windows(2) {
            let t = self.transition(w[0], w[1])?;
            let v = self.state_violation(w[1], alpha);
            if v.is_infinite() {
                return Some(f64::INFINITY);
            }
            total += t.weight * v;
        }
        Some(total)
    }

    /// Time-weighted `(continuous, discrete)` violation costs of a run.
    pub fn run_violation_costs(&self, path: &[usize]) -> Option<(f64, f64)> {
        let (mut c, mut d) = (0.0, 0.0);
        for w in path.windows(2) {
            let t = self.transition(w[0], w[1])?;
            let st = &self.tba.states[self.tba_state_of(w[1])];
            if st.is_sink() {
                return Some((f64::INFINITY, f64::INFINITY));
            }
            c += st.v_c.as_f64() * t.weight;
            d += st.v_d.as_f64() * t.weight;
        }
        Some((c, d))
    }

    /// Replays `path` through the automaton with clocks, checking each step
    /// lands on the listed automaton state. Returns the arrival timestamps.
    pub fn timed_replay(&self, path: &[usize], clocks: &mut [f64]) -> Option<Vec<f64>> {
        let mut times = vec![0.0];
        for w in path.windows(2) {
            let t = self.transition(w[0], w[1])?;
            let sym = self.wts.label(self.cell_of(w[1]));
            let next = self.tba.step(self.tba_state_of(w[0]), clocks, t.weight, sym)?;
            if next != self.tba_state_of(w[1]) {
                return None;
            }
            times.push(times.last().unwrap() + t.weight);
        }
        Some(times)
    }

    pub fn stats(&self) -> ProductStats {
        ProductStats {
            schema_version: SCHEMA_VERSION,
            wts_states: self.wts.len(),
            tba_states: self.n_tba,
            tba_raw_states: self.tba.raw_state_count,
            product_grid: self.len(),
            product_states: self.present.iter().filter(|p| **p).count(),
            transitions: self.transitions.len(),
            enabled_transitions: self.transitions.iter().filter(|t| !t.blocked).count(),
            accepting_states: self.accepting_states().len(),
        }
    }

    pub fn stats_json(&self) -> String {
        serde_json::to_string_pretty(&self.stats()).expect("stats serialize")
    }
}
