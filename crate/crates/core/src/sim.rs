//! Dynamic grid environment: mobile obstacles, random rewards and local sensing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mitl::{Alphabet, Atom, AtomSet, ParseError};
use crate::wts::{Cell, RewardField, Wts, WtsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Manhattan,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorModel {
    pub range: usize,
    #[serde(default)]
    pub norm: Norm,
}

impl SensorModel {
    pub fn in_range(&self, a: Cell, b: Cell) -> bool {
        let d = match self.norm {
            Norm::Manhattan => a.manhattan(b),
            Norm::Chebyshev => a.chebyshev(b),
        };
        d <= self.range
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPlacement {
    pub cell: Cell,
    pub props: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleParams {
    /// Proposition carried by obstacle cells.
    #[serde(default = "default_obstacle_prop")]
    pub prop: String,
    #[serde(default)]
    pub count: usize,
    /// Probability that an obstacle attempts a move each step.
    #[serde(default = "default_p_move")]
    pub p_move: f64,
    /// Explicit starting cells; sampled when absent.
    #[serde(default)]
    pub positions: Option<Vec<Cell>>,
}

fn default_obstacle_prop() -> String {
    "obstacle".into()
}
fn default_p_move() -> f64 {
    0.5
}

impl Default for ObstacleParams {
    fn default() -> Self {
        ObstacleParams {
            prop: default_obstacle_prop(),
            count: 0,
            p_move: default_p_move(),
            positions: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub r_max: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { r_max: 1.0 }
    }
}

/// Grid scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub initial: Cell,
    #[serde(default)]
    pub labels: Vec<LabelPlacement>,
    #[serde(default)]
    pub obstacles: ObstacleParams,
    #[serde(default)]
    pub rewards: RewardParams,
    pub sensor: SensorModel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] WtsError),
    #[error(transparent)]
    Alphabet(#[from] ParseError),
    #[error("proposition `{0}` is not in the alphabet")]
    UnknownProp(String),
    #[error("cannot place {count} obstacles on the free cells of the grid")]
    TooManyObstacles { count: usize },
    #[error("obstacle at ({x},{y}) overlaps the agent or a labeled cell")]
    BadObstacle { x: usize, y: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

impl Scenario {
    /// Atom names used by the scenario's labels and obstacles.
    pub fn propositions(&self) -> Vec<String> {
        let mut v: Vec<String> = self.labels.iter().flat_map(|l| l.props.iter().cloned()).collect();
        v.push(self.obstacles.prop.clone());
        v
    }

    /// Static label placements as atom sets over `alphabet`.
    pub fn static_labels(&self, alphabet: &Alphabet) -> Result<Vec<(Cell, AtomSet)>, SimError> {
        self.labels
            .iter()
            .map(|l| {
                let mut s = AtomSet::EMPTY;
                for p in &l.props {
                    s.insert(alphabet.atom(p).ok_or_else(|| SimError::UnknownProp(p.clone()))?);
                }
                Ok((l.cell, s))
            })
            .collect()
    }

    /// The agent's initial knowledge: static labels only.
    pub fn knowledge_wts(&self, alphabet: &Alphabet) -> Result<Wts, SimError> {
        Ok(Wts::from_grid(self.width, self.height, &self.static_labels(alphabet)?, self.initial, 1.0)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Ground truth of the workspace over time.
#[derive(Debug, Clone)]
pub struct Environment {
    width: usize,
    height: usize,
    static_labels: Vec<AtomSet>,
    obstacle: Atom,
    obstacles: Vec<usize>,
    p_move: f64,
    r_max: f64,
    seed: u64,
    k: usize,
    rng: ChaCha8Rng,
    agent: usize,
    rewards: Vec<f64>,
}

fn mix(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reward vector of step `k`: i.i.d. uniform on `[0, r_max]`.
pub fn sample_rewards(seed: u64, k: usize, cells: usize, r_max: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, k as u64));
    (0..cells)
        .map(|_| if r_max > 0.0 { rng.gen_range(0.0..=r_max) } else { 0.0 })
        .collect()
}

impl Environment {
    pub fn new(scenario: &Scenario, alphabet: &Alphabet) -> Result<Self, SimError> {
        let s = scenario;
        if !(0.0..=1.0).contains(&s.obstacles.p_move) {
            return Err(SimError::BadParam(format!("p_move = {}", s.obstacles.p_move)));
        }
        if !(s.rewards.r_max >= 0.0 && s.rewards.r_max.is_finite()) {
            return Err(SimError::BadParam(format!("r_max = {}", s.rewards.r_max)));
        }
        let grid = Wts::from_grid(s.width, s.height, &s.static_labels(alphabet)?, s.initial, 1.0)?;
        let obstacle = alphabet
            .atom(&s.obstacles.prop)
            .ok_or_else(|| SimError::UnknownProp(s.obstacles.prop.clone()))?;
        let mut env = Environment {
            width: s.width,
            height: s.height,
            static_labels: grid.labels().to_vec(),
            obstacle,
            obstacles: Vec::new(),
            p_move: s.obstacles.p_move,
            r_max: s.rewards.r_max,
            seed: s.seed,
            k: 0,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            agent: grid.q0(),
            rewards: sample_rewards(s.seed, 0, s.width * s.height, s.rewards.r_max),
        };
        match &s.obstacles.positions {
            Some(cells) => {
                for c in cells {
                    let q = grid.index(*c)?;
                    if !env.free_for_obstacle(q) {
                        return Err(SimError::BadObstacle { x: c.x, y: c.y });
                    }
                    env.obstacles.push(q);
                }
            }
            None => {
                let free = (0..env.cells()).filter(|&q| env.free_for_obstacle(q)).count();
                if free < s.obstacles.count {
                    return Err(SimError::TooManyObstacles { count: s.obstacles.count });
                }
                while env.obstacles.len() < s.obstacles.count {
                    let q = env.rng.gen_range(0..env.cells());
                    if env.free_for_obstacle(q) {
                        env.obstacles.push(q);
                    }
                }
            }
        }
        Ok(env)
    }

    fn cells(&self) -> usize {
        self.width * self.height
    }

    fn free_for_obstacle(&self, q: usize) -> bool {
        q != self.agent && self.static_labels[q].is_empty() && !self.obstacles.contains(&q)
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn agent(&self) -> usize {
        self.agent
    }
    pub fn set_agent(&mut self, q: usize) {
        self.agent = q;
    }
    pub fn obstacles(&self) -> &[usize] {
        &self.obstacles
    }
    pub fn cell(&self, q: usize) -> Cell {
        Cell::new(q % self.width, q / self.width)
    }

    /// True label of `q` at the current step.
    pub fn true_label(&self, q: usize) -> AtomSet {
        let mut l = self.static_labels[q];
        if self.obstacles.contains(&q) {
            l.insert(self.obstacle);
        }
        l
    }

    /// Current reward at `q`.
    pub fn reward_at(&self, q: usize) -> f64 {
        self.rewards[q]
    }

    /// Collects and zeroes the reward at `q` for the current step.
    pub fn collect(&mut self, q: usize) -> f64 {
        std::mem::take(&mut self.rewards[q])
    }

    /// Rewards visible from `from`; zero outside the sensing range.
    pub fn observed_rewards(&self, from: usize, sensor: &SensorModel) -> Vec<f64> {
        let c = self.cell(from);
        (0..self.cells())
            .map(|q| if sensor.in_range(c, self.cell(q)) { self.rewards[q] } else { 0.0 })
            .collect()
    }

    /// Advances obstacles and resamples rewards for the next step.
    pub fn step(&mut self) {
        for i in 0..self.obstacles.len() {
            if !self.rng.gen_bool(self.p_move) {
                continue;
            }
            let q = self.obstacles[i];
            let (x, y) = (q % self.width, q / self.width);
            let dir = self.rng.gen_range(0..4);
            let next = match dir {
                0 if y + 1 < self.height => Some(q + self.width),
                1 if y > 0 => Some(q - self.width),
                2 if x + 1 < self.width => Some(q + 1),
                3 if x > 0 => Some(q - 1),
                _ => None,
            };
            if let Some(n) = next {
                if self.free_for_obstacle(n) {
                    self.obstacles[i] = n;
                }
            }
        }
        self.k += 1;
        self.rewards = sample_rewards(self.seed, self.k, self.cells(), self.r_max);
    }
}

impl RewardField for Environment {
    fn reward(&self, k: usize, q: usize) -> f64 {
        if k == self.k {
            self.rewards[q]
        } else {
            sample_rewards(self.seed, k, self.cells(), self.r_max)[q]
        }
    }
}

/// Cells within range of `from` whose true labels differ from `knowledge`.
pub fn sense(env: &Environment, knowledge: &[AtomSet], from: usize, sensor: &SensorModel) -> Vec<(usize, AtomSet)> {
    let c = env.cell(from);
    (0..knowledge.len())
        .filter(|&q| sensor.in_range(c, env.cell(q)))
        .filter_map(|q| {
            let t = env.true_label(q);
            (t != knowledge[q]).then_some((q, t))
        })
        .collect()
}

pub const CASE_STUDY_FORMULA: &str =
    "hard: G !obstacle ; soft: G !grass & G F[0,10) cherry & G (cherry -> F[0,20) pear)";

/// The 10x10 fruit-collecting scenario with mobile obstacles.
pub fn case_study_scenario() -> Scenario {
    let place = |x, y, p: &str| LabelPlacement {
        cell: Cell::new(x, y),
        props: vec![p.to_string()],
    };
    Scenario {
        schema_version: 1,
        width: 10,
        height: 10,
        initial: Cell::new(0, 0),
        labels: vec![
            place(9, 9, "cherry"),
            place(7, 0, "cherry"),
            place(4, 5, "pear"),
            place(2, 1, "grass"),
            place(2, 2, "grass"),
            place(3, 2, "grass"),
            place(6, 3, "grass"),
            place(6, 4, "grass"),
            place(5, 7, "grass"),
            place(6, 7, "grass"),
        ],
        obstacles: ObstacleParams {
            prop: "obstacle".into(),
            count: 4,
            p_move: 0.5,
            positions: None,
        },
        rewards: RewardParams { r_max: 1.0 },
        sensor: SensorModel {
            range: 4,
            norm: Norm::Manhattan,
        },
        seed: 7,
    }
}
