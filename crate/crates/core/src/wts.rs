//! Weighted transition system abstracted from a rectangular grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mitl::AtomSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
    pub fn chebyshev(self, other: Cell) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WtsError {
    #[error("grid dimensions must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("cell ({x},{y}) is outside the {width}x{height} grid")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("transition weight must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("states {0} and {1} are not connected")]
    NotAdjacent(usize, usize),
}

/// Grid WTS. States are cells numbered row-major (`y * width + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct Wts {
    width: usize,
    height: usize,
    q0: usize,
    labels: Vec<AtomSet>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Wts {
    /// Four-connected grid with uniform weights. `labels` lists static label
    /// placements; cells not mentioned are unlabeled.
    pub fn from_grid(
        width: usize,
        height: usize,
        labels: &[(Cell, AtomSet)],
        q0: Cell,
        unit_weight: f64,
    ) -> Result<Self, WtsError> {
        Self::from_grid_with(width, height, labels, q0, unit_weight, false)
    }

    /// As [`Wts::from_grid`], optionally adding a "stay" self-loop per cell.
    pub fn from_grid_with(
        width: usize,
        height: usize,
        labels: &[(Cell, AtomSet)],
        q0: Cell,
        unit_weight: f64,
        self_loops: bool,
    ) -> Result<Self, WtsError> {
        if width == 0 || height == 0 {
            return Err(WtsError::EmptyGrid { width, height });
        }
        if !(unit_weight > 0.0 && unit_weight.is_finite()) {
            return Err(WtsError::BadWeight(unit_weight));
        }
        let mut w = Wts {
            width,
            height,
            q0: 0,
            labels: vec![AtomSet::EMPTY; width * height],
            adj: vec![Vec::new(); width * height],
        };
        w.q0 = w.index(q0)?;
        for (c, l) in labels {
            let i = w.index(*c)?;
            w.labels[i] = w.labels[i].union(*l);
        }
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let mut n = Vec::with_capacity(5);
                if self_loops {
                    n.push((i, unit_weight));
                }
                if y + 1 < height {
                    n.push((i + width, unit_weight));
                }
                if y > 0 {
                    n.push((i - width, unit_weight));
                }
                if x + 1 < width {
                    n.push((i + 1, unit_weight));
                }
                if x > 0 {
                    n.push((i - 1, unit_weight));
                }
                w.adj[i] = n;
            }
        }
        Ok(w)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn q0(&self) -> usize {
        self.q0
    }

    pub fn index(&self, c: Cell) -> Result<usize, WtsError> {
        if c.x >= self.width || c.y >= self.height {
            return Err(WtsError::OutOfBounds {
                x: c.x,
                y: c.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(c.y * self.width + c.x)
    }
    pub fn cell(&self, q: usize) -> Cell {
        Cell::new(q % self.width, q / self.width)
    }

    /// Successors with transition weights.
    pub fn successors(&self, q: usize) -> &[(usize, f64)] {
        &self.adj[q]
    }
    pub fn weight(&self, q: usize, q2: usize) -> Option<f64> {
        self.adj[q].iter().find(|(t, _)| *t == q2).map(|(_, w)| *w)
    }
    pub fn transition_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn label(&self, q: usize) -> AtomSet {
        self.labels[q]
    }
    pub fn set_label(&mut self, q: usize, l: AtomSet) {
        self.labels[q] = l;
    }
    pub fn labels(&self) -> &[AtomSet] {
        &self.labels
    }

    /// Timed run of a state sequence starting at time 0.
    pub fn timed_run(&self, states: &[usize]) -> Result<TimedRun, WtsError> {
        let mut steps = Vec::with_capacity(states.len());
        let mut t = 0.0;
        for (i, &q) in states.iter().enumerate() {
            if i > 0 {
                let prev = states[i - 1];
                t += self.weight(prev, q).ok_or(WtsError::NotAdjacent(prev, q))?;
            }
            steps.push((q, t));
        }
        Ok(TimedRun { steps })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedRun {
    /// `(state, timestamp)` pairs.
    pub steps: Vec<(usize, f64)>,
}

/// Time-varying reward `R_k(q)`.
pub trait RewardField {
    fn reward(&self, k: usize, q: usize) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroReward;

impl RewardField for ZeroReward {
    fn reward(&self, _: usize, _: usize) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantReward(pub f64);

impl RewardField for ConstantReward {
    fn reward(&self, _: usize, _: usize) -> f64 {
        self.0
    }
}

/// Static per-state rewards, independent of `k`.
#[derive(Debug, Clone)]
pub struct TableReward(pub Vec<f64>);

impl RewardField for TableReward {
    fn reward(&self, _: usize, q: usize) -> f64 {
        self.0[q]
    }
}

/// Sum of `R_k(q_i)` over the predicted states `q_1..q_N`.
pub fn accumulate_reward(predicted: &[usize], field: &dyn RewardField, k: usize) -> f64 {
    predicted.iter().map(|&q| field.reward(k, q)).sum()
}
