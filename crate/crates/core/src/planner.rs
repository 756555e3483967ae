//! Receding-horizon planning over the relaxed product automaton.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{automaton_update, EdgeCost, EnergyConfig, EnergyTable};
use crate::product::Rpa;
use crate::sim::{sense, Environment, SensorModel};
use crate::tba::SCHEMA_VERSION;
use crate::wts::{RewardField, TableReward};

const UTILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub edge_cost: EdgeCost,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 4,
            alpha: 0.8,
            beta: 10.0,
            edge_cost: EdgeCost::Positive,
        }
    }
}

impl PlannerConfig {
    pub fn energy(&self) -> EnergyConfig {
        EnergyConfig {
            alpha: self.alpha,
            edge_cost: self.edge_cost,
        }
    }

    pub fn validate(&self, sensor: &SensorModel) -> Result<(), PlanError> {
        if self.horizon == 0 {
            return Err(PlanError::BadConfig("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(PlanError::BadConfig(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(PlanError::BadConfig(format!("beta {} must be non-negative", self.beta)));
        }
        if self.horizon > sensor.range {
            return Err(PlanError::BadConfig(format!(
                "horizon {} exceeds sensing range {}",
                self.horizon, sensor.range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintCase {
    Initial,
    C1,
    C2,
    C3,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("there does not exist an accepting run from the initial states")]
    NoAcceptingRun,
    #[error("no horizon path satisfies constraint {case:?} at step {k}")]
    Infeasible { k: usize, case: ConstraintCase },
    #[error("no admissible move from the current state at step {k}")]
    NoMoves { k: usize },
    #[error("invalid planner configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanStep {
    pub k: usize,
    /// State the agent moves to.
    pub chosen: usize,
    pub predicted: Vec<usize>,
    pub utility: f64,
    pub case: ConstraintCase,
    /// The constraint had no solution and the minimum-terminal-energy path was used.
    pub fallback: bool,
}

/// All horizon-`n` paths from `p` under the timed automaton semantics, given
/// the clock valuation at `p`. Moves into the sink or along blocked
/// transitions are pruned.
pub fn enumerate_paths(rpa: &Rpa, p: usize, clocks: &[f64], n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(n);
    dfs(rpa, p, clocks, n, &mut path, &mut out);
    out
}

fn dfs(rpa: &Rpa, p: usize, clocks: &[f64], n: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if path.len() == n {
        out.push(path.clone());
        return;
    }
    let wts = rpa.wts();
    let tba = rpa.tba();
    let s = rpa.tba_state_of(p);
    for &(q2, w) in wts.successors(rpa.cell_of(p)) {
        let mut c = clocks.to_vec();
        let Some(s2) = tba.step(s, &mut c, w, wts.label(q2)) else {
            continue;
        };
        if s2 == tba.sink {
            continue;
        }
        let p2 = rpa.id(q2, s2);
        if rpa.transition(p, p2).is_none_or(|t| t.blocked) {
            continue;
        }
        path.push(p2);
        dfs(rpa, p2, &c, n, path, out);
        path.pop();
    }
}

/// `Σ R_k(q_i) − β·W` for the path `start, path[0], ...`.
pub fn utility(rpa: &Rpa, start: usize, path: &[usize], rewards: &dyn RewardField, k: usize, alpha: f64, beta: f64) -> f64 {
    let cells: Vec<usize> = path.iter().map(|&p| rpa.cell_of(p)).collect();
    let reward = crate::wts::accumulate_reward(&cells, rewards, k);
    let mut full = Vec::with_capacity(path.len() + 1);
    full.push(start);
    full.extend_from_slice(path);
    let w = rpa.path_weight(&full, alpha).unwrap_or(f64::INFINITY);
    if w == 0.0 {
        reward
    } else {
        reward - beta * w
    }
}

struct Scored {
    path: Vec<usize>,
    utility: f64,
    terminal: f64,
}

fn better(a: &Scored, b: &Scored) -> bool {
    if (a.utility - b.utility).abs() > UTILITY_EPS {
        return a.utility > b.utility;
    }
    match a.terminal.total_cmp(&b.terminal) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.path < b.path,
    }
}

fn score(rpa: &Rpa, table: &EnergyTable, start: usize, paths: Vec<Vec<usize>>, rewards: &dyn RewardField, k: usize, cfg: &PlannerConfig) -> Vec<Scored> {
    paths
        .into_iter()
        .map(|path| Scored {
            utility: utility(rpa, start, &path, rewards, k, cfg.alpha, cfg.beta),
            terminal: table.j[*path.last().expect("non-empty path")],
            path,
        })
        .collect()
}

fn argmax<'a>(it: impl Iterator<Item = &'a Scored>) -> Option<&'a Scored> {
    it.fold(None, |best: Option<&Scored>, c| match best {
        Some(b) if !better(c, b) => Some(b),
        _ => Some(c),
    })
}

/// Plan from the initial state. The chosen state is the first move of the
/// best path.
pub fn initial_plan(
    rpa: &Rpa,
    table: &EnergyTable,
    clocks: &[f64],
    rewards: &dyn RewardField,
    cfg: &PlannerConfig,
) -> Result<PlanStep, PlanError> {
    let p0 = rpa
        .initial_states()
        .into_iter()
        .find(|&p| table.j[p].is_finite())
        .ok_or(PlanError::NoAcceptingRun)?;
    let scored = score(rpa, table, p0, enumerate_paths(rpa, p0, clocks, cfg.horizon), rewards, 0, cfg);
    let best = argmax(scored.iter()).ok_or(PlanError::NoMoves { k: 0 })?;
    Ok(PlanStep {
        k: 0,
        chosen: best.path[0],
        predicted: best.path.clone(),
        utility: best.utility,
        case: ConstraintCase::Initial,
        fallback: false,
    })
}

/// Constraint case and its admissibility test, from the energy of the current
/// state and of the previous optimal path.
pub fn active_case(table: &EnergyTable, current: usize, prev_opt: &[usize]) -> (ConstraintCase, Option<usize>) {
    if table.j[current] == 0.0 {
        return (ConstraintCase::C3, None);
    }
    match prev_opt.iter().position(|&p| table.j[p] == 0.0) {
        // 1-based i0 = i + 1; required zero at i0 - 1, at least 1
        Some(i) => (ConstraintCase::C2, Some(i.max(1))),
        None => (ConstraintCase::C1, None),
    }
}

fn admissible(table: &EnergyTable, case: ConstraintCase, zero_at: Option<usize>, prev_terminal: f64, path: &[usize]) -> bool {
    let terminal = table.j[*path.last().unwrap()];
    match case {
        ConstraintCase::C1 => terminal < prev_terminal,
        ConstraintCase::C2 => zero_at.is_some_and(|i| path.get(i - 1).is_some_and(|&p| table.j[p] == 0.0)),
        ConstraintCase::C3 => terminal.is_finite(),
        ConstraintCase::Initial => true,
    }
}

/// One receding-horizon step from `prev.chosen`. On an empty admissible set
/// returns [`PlanError::Infeasible`].
pub fn rhc_step(
    rpa: &Rpa,
    table: &EnergyTable,
    prev: &PlanStep,
    clocks: &[f64],
    rewards: &dyn RewardField,
    k: usize,
    cfg: &PlannerConfig,
) -> Result<PlanStep, PlanError> {
    plan_from(rpa, table, prev, clocks, rewards, k, cfg, false)
}

#[allow(clippy::too_many_arguments)]
fn plan_from(
    rpa: &Rpa,
    table: &EnergyTable,
    prev: &PlanStep,
    clocks: &[f64],
    rewards: &dyn RewardField,
    k: usize,
    cfg: &PlannerConfig,
    allow_fallback: bool,
) -> Result<PlanStep, PlanError> {
    let start = prev.chosen;
    let (case, zero_at) = active_case(table, start, &prev.predicted);
    let prev_terminal = table.j[*prev.predicted.last().expect("non-empty prediction")];
    let scored = score(rpa, table, start, enumerate_paths(rpa, start, clocks, cfg.horizon), rewards, k, cfg);
    if scored.is_empty() {
        return Err(PlanError::NoMoves { k });
    }
    if let Some(best) = argmax(scored.iter().filter(|s| admissible(table, case, zero_at, prev_terminal, &s.path))) {
        return Ok(PlanStep {
            k,
            chosen: best.path[0],
            predicted: best.path.clone(),
            utility: best.utility,
            case,
            fallback: false,
        });
    }
    if !allow_fallback {
        return Err(PlanError::Infeasible { k, case });
    }
    let best = scored
        .iter()
        .min_by(|a, b| {
            a.terminal
                .total_cmp(&b.terminal)
                .then_with(|| b.utility.total_cmp(&a.utility))
                .then_with(|| a.path.cmp(&b.path))
        })
        .expect("non-empty");
    Ok(PlanStep {
        k,
        chosen: best.path[0],
        predicted: best.path.clone(),
        utility: best.utility,
        case,
        fallback: true,
    })
}

/// One executed step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub x: usize,
    pub y: usize,
    pub tba_state: usize,
    pub state: usize,
    pub energy: f64,
    pub case: ConstraintCase,
    pub fallback: bool,
    pub utility: f64,
    pub predicted: Vec<usize>,
    /// Energy of the last predicted state.
    pub terminal_energy: f64,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub cumulative_vc: f64,
    pub cumulative_vd: f64,
    pub sensed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub formula: String,
    pub width: usize,
    pub height: usize,
    pub tba_states: usize,
    pub product_states: usize,
    pub config: PlannerConfig,
    pub sense_range: usize,
    pub seed: u64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub table: EnergyTable,
}

/// Runs `steps` sense–update–plan–move iterations. With zero steps only the
/// initial plan is computed.
pub fn run_loop(
    rpa: &mut Rpa,
    table: EnergyTable,
    env: &mut Environment,
    sensor: &SensorModel,
    cfg: &PlannerConfig,
    steps: usize,
) -> Result<Trace, PlanError> {
    let ecfg = cfg.energy();
    let mut table = table;
    let mut clocks = vec![0.0; rpa.tba().clock_count()];
    let mut current = *rpa.initial_states().first().ok_or(PlanError::NoAcceptingRun)?;
    env.set_agent(rpa.cell_of(current));
    let mut prev: Option<PlanStep> = None;
    let mut records = Vec::with_capacity(steps);
    let (mut cum_r, mut cum_c, mut cum_d) = (0.0, 0.0, 0.0);

    for k in 0..steps.max(1) {
        let here = rpa.cell_of(current);
        let info = sense(env, rpa.wts().labels(), here, sensor);
        table = automaton_update(rpa, &info, &table, &ecfg);
        let observed = TableReward(env.observed_rewards(here, sensor));
        let plan = match &prev {
            None => initial_plan(rpa, &table, &clocks, &observed, cfg)?,
            Some(p) => {
                let mut p = p.clone();
                p.chosen = current;
                plan_from(rpa, &table, &p, &clocks, &observed, k, cfg, true)?
            }
        };
        if steps == 0 {
            break;
        }
        let next = plan.chosen;
        let q2 = rpa.cell_of(next);
        let w = rpa.transition(current, next).expect("planned move is a transition").weight;
        let s2 = rpa
            .tba()
            .step(rpa.tba_state_of(current), &mut clocks, w, rpa.wts().label(q2))
            .expect("automaton is deadlock-free");
        debug_assert_eq!(s2, rpa.tba_state_of(next));
        let (c, d) = rpa.run_violation_costs(&[current, next]).unwrap_or((f64::INFINITY, f64::INFINITY));
        cum_c += c;
        cum_d += d;
        current = next;
        env.set_agent(q2);
        let reward = env.collect(q2);
        cum_r += reward;
        let cell = rpa.wts().cell(q2);
        records.push(TraceRecord {
            k,
            x: cell.x,
            y: cell.y,
            tba_state: s2,
            state: next,
            energy: table.j[next],
            case: plan.case,
            fallback: plan.fallback,
            utility: plan.utility,
            terminal_energy: table.j[*plan.predicted.last().unwrap()],
            predicted: plan.predicted.clone(),
            reward,
            cumulative_reward: cum_r,
            cumulative_vc: cum_c,
            cumulative_vd: cum_d,
            sensed: info.len(),
        });
        prev = Some(plan);
        env.step();
    }
    Ok(Trace { records, table })
}

fn num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::json!("inf")
    }
}

/// JSON-lines trace: one header line, then one line per step.
pub fn trace_jsonl(header: &TraceHeader, records: &[TraceRecord]) -> String {
    let mut s = serde_json::to_string(header).expect("header serializes");
    s.push('\n');
    for r in records {
        let mut v = serde_json::to_value(r).expect("record serializes");
        v["energy"] = num(r.energy);
        v["terminal_energy"] = num(r.terminal_energy);
        v["utility"] = num(r.utility);
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

/// CSV series `k,energy,cumulative_reward,cumulative_vc,cumulative_vd`.
pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut s = String::from("k,energy,cumulative_reward,cumulative_vc,cumulative_vd\n");
    for r in records {
        let e = if r.energy.is_finite() { r.energy.to_string() } else { "inf".into() };
        let _ = writeln!(s, "{},{},{},{},{}", r.k, e, r.cumulative_reward, r.cumulative_vc, r.cumulative_vd);
    }
    s
}

pub fn schema_version() -> u32 {
    SCHEMA_VERSION
}
