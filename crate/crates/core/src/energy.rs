//! Largest self-reachable accepting set, energy function and automaton update.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::mitl::AtomSet;
use crate::product::Rpa;

/// Cost assigned to a product transition when computing energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCost {
    /// `ω·(1 + ω_v)`: strictly positive.
    #[default]
    Positive,
    /// `ω·ω_v`: zero on violation-free moves.
    Literal,
}

impl EdgeCost {
    pub fn apply(self, weight: f64, violation: f64) -> f64 {
        match self {
            EdgeCost::Positive => weight * (1.0 + violation),
            EdgeCost::Literal => weight * violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub alpha: f64,
    pub edge_cost: EdgeCost,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            alpha: 0.8,
            edge_cost: EdgeCost::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    pub j: Vec<f64>,
    pub fstar: Vec<bool>,
    pub version: u64,
}

impl EnergyTable {
    pub fn energy(&self, p: usize) -> f64 {
        self.j[p]
    }
    pub fn fstar_states(&self) -> Vec<usize> {
        self.fstar
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Accepting vertices from which some accepting vertex on a cycle is
/// reachable by a non-empty path.
pub fn self_reachable_set(n: usize, edges: &[(usize, usize)], accepting: &[bool]) -> Vec<bool> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for &(a, b) in edges {
        g.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
        preds[b].push(a);
        if a == b {
            self_loop[a] = true;
        }
    }
    let mut on_cycle = vec![false; n];
    for comp in kosaraju_scc(&g) {
        if comp.len() > 1 || self_loop[comp[0].index()] {
            for v in comp {
                on_cycle[v.index()] = true;
            }
        }
    }
    // backward closure from the recurrent accepting vertices, paths of length >= 1
    let mut reach = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&v| accepting[v] && on_cycle[v]).collect();
    while let Some(v) = stack.pop() {
        for &u in &preds[v] {
            if !reach[u] {
                reach[u] = true;
                stack.push(u);
            }
        }
    }
    (0..n).map(|v| accepting[v] && reach[v]).collect()
}

#[derive(Copy, Clone, PartialEq)]
struct Item {
    dist: f64,
    node: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distance from every vertex to the nearest source, given the in-edges
/// `(from, cost)` of each vertex. Infinite costs are skipped.
pub fn distances_to(n: usize, in_edges: &dyn Fn(usize, &mut Vec<(usize, f64)>), sources: &[bool]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for v in (0..n).filter(|&v| sources[v]) {
        dist[v] = 0.0;
        heap.push(Item { dist: 0.0, node: v });
    }
    let mut buf = Vec::new();
    while let Some(Item { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        buf.clear();
        in_edges(node, &mut buf);
        for &(u, c) in &buf {
            if !c.is_finite() {
                continue;
            }
            let nd = d + c;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Item { dist: nd, node: u });
            }
        }
    }
    dist
}

/// F* of the product over its full transition structure, independent of
/// which transitions are currently blocked.
pub fn largest_self_reachable(rpa: &Rpa) -> Vec<bool> {
    let edges: Vec<(usize, usize)> = rpa.transitions().iter().map(|t| (t.from, t.to)).collect();
    let acc_state = rpa.tba().accepting;
    let accepting: Vec<bool> = (0..rpa.len()).map(|p| rpa.tba_state_of(p) == acc_state).collect();
    self_reachable_set(rpa.len(), &edges, &accepting)
}

/// Energy `J`: 0 on F*, shortest enabled-path cost to F* elsewhere.
pub fn compute_energy(rpa: &Rpa, fstar: &[bool], cfg: &EnergyConfig) -> EnergyTable {
    let violation: Vec<f64> = (0..rpa.len()).map(|p| rpa.state_violation(p, cfg.alpha)).collect();
    let in_edges = |v: usize, out: &mut Vec<(usize, f64)>| {
        if rpa.is_sink(v) {
            return;
        }
        for t in rpa.in_transitions(v) {
            if !t.blocked {
                out.push((t.from, cfg.edge_cost.apply(t.weight, violation[v])));
            }
        }
    };
    EnergyTable {
        j: distances_to(rpa.len(), &in_edges, fstar),
        fstar: fstar.to_vec(),
        version: 0,
    }
}

/// Applies sensed label changes `(cell, labels)` to the agent's knowledge and
/// recomputes energy. Entries matching current knowledge are ignored; with
/// nothing new the table is returned unchanged.
pub fn automaton_update(
    rpa: &mut Rpa,
    info: &[(usize, AtomSet)],
    table: &EnergyTable,
    cfg: &EnergyConfig,
) -> EnergyTable {
    let mut changed = Vec::new();
    for &(q, l) in info {
        if rpa.wts().label(q) != l {
            rpa.set_label(q, l);
            changed.push(q);
        }
    }
    if changed.is_empty() {
        return table.clone();
    }
    rpa.refresh_cells(&changed);
    let mut next = compute_energy(rpa, &table.fstar, cfg);
    next.version = table.version + 1;
    next
}

/// CSV rows `state,x,y,tba_state,energy` for present product states.
pub fn energy_csv(rpa: &Rpa, table: &EnergyTable) -> String {
    let mut s = String::from("state,x,y,tba_state,energy\n");
    for p in (0..rpa.len()).filter(|&p| rpa.is_present(p)) {
        let c = rpa.wts().cell(rpa.cell_of(p));
        let j = table.j[p];
        let j = if j.is_finite() { j.to_string() } else { "inf".into() };
        let _ = writeln!(s, "{},{},{},{},{}", p, c.x, c.y, rpa.tba_state_of(p), j);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mitl::{parse, Alphabet};
    use crate::product::build_product;
    use crate::tba::RelaxedTba;
    use crate::wts::{Cell, Wts};

    #[test]
    fn self_reachable_chains() {
        let acc = [false, false, true];
        assert_eq!(self_reachable_set(3, &[(0, 1), (1, 2), (2, 2)], &acc), vec![false, false, true]);
        assert_eq!(self_reachable_set(3, &[(0, 1), (1, 2)], &acc), vec![false, false, false]);
        // accepting vertex feeding a cycle through a non-accepting one
        let acc = [true, true, false];
        assert_eq!(
            self_reachable_set(3, &[(0, 1), (1, 2), (2, 1)], &acc),
            vec![true, true, false]
        );
    }

    #[test]
    fn chain_distances() {
        let edges = [(0usize, 1usize, 2.0), (1, 2, 3.0)];
        let sources = [false, false, true];
        let f = |v: usize, out: &mut Vec<(usize, f64)>| {
            out.extend(edges.iter().filter(|e| e.1 == v).map(|e| (e.0, e.2)));
        };
        assert_eq!(distances_to(3, &f, &sources), vec![5.0, 3.0, 0.0]);
        let none = [false; 3];
        assert!(distances_to(3, &f, &none).iter().all(|d| d.is_infinite()));
    }

    fn running(width: usize, height: usize) -> Rpa {
        let a = Alphabet::new(["obs", "g", "p"]).unwrap();
        let f = parse("hard: G !obs ; soft: G !g & F[0,10) p", &a).unwrap();
        let tba = RelaxedTba::build_pruned(&f).unwrap();
        let p = a.set_of(["p"]).unwrap();
        let wts = Wts::from_grid(width, height, &[(Cell::new(width - 1, height - 1), p)], Cell::new(0, 0), 1.0).unwrap();
        build_product(wts, tba).unwrap()
    }

    #[test]
    fn energy_basics() {
        let r = running(3, 3);
        let fstar = largest_self_reachable(&r);
        let t = compute_energy(&r, &fstar, &EnergyConfig::default());
        for p in 0..r.len() {
            assert_eq!(t.j[p] == 0.0, fstar[p], "state {p}");
        }
        // four clean moves to the p cell, cost 1 each
        assert_eq!(t.j[r.initial_states()[0]], 4.0);
        let lit = compute_energy(&r, &fstar, &EnergyConfig { alpha: 0.8, edge_cost: EdgeCost::Literal });
        assert_eq!(lit.j[r.initial_states()[0]], 0.0);
    }

    #[test]
    fn update_noop_and_obstacle() {
        let mut r = running(3, 3);
        let cfg = EnergyConfig::default();
        let fstar = largest_self_reachable(&r);
        let t0 = compute_energy(&r, &fstar, &cfg);
        let same = automaton_update(&mut r, &[], &t0, &cfg);
        assert_eq!(same, t0);
        let obs = r.tba().alphabet.set_of(["obs"]).unwrap();
        let t1 = automaton_update(&mut r, &[(1, obs), (3, obs)], &t0, &cfg);
        assert_eq!(t1.version, 1);
        assert!(t1.j[r.initial_states()[0]].is_infinite());
        assert_eq!(largest_self_reachable(&r), fstar);
        let t2 = automaton_update(&mut r, &[(1, AtomSet::EMPTY), (3, AtomSet::EMPTY)], &t1, &cfg);
        assert_eq!(t2.j, t0.j);
    }

    #[test]
    fn csv_header_and_rows() {
        let r = running(2, 1);
        let fstar = largest_self_reachable(&r);
        let t = compute_energy(&r, &fstar, &EnergyConfig::default());
        let csv = energy_csv(&r, &t);
        assert!(csv.starts_with("state,x,y,tba_state,energy\n"));
        assert!(csv.contains(",inf\n"));
    }
}
