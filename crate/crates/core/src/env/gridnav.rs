//! 4-connected grid navigation with obstacles.
//!
//! Every move costs [`STEP_REWARD`]; the move that lands on the goal also earns
//! [`GOAL_REWARD`] and terminates. An expert trajectory therefore returns
//! `GOAL_REWARD + STEP_REWARD * shortest_path`.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fnv1a, ActionSet, EnvError, Environment, StateKey, Transition};
use crate::policy::Features;
use crate::scalar::Scalar;

pub const STEP_REWARD: f64 = -0.01;
pub const GOAL_REWARD: f64 = 1.0;
pub const FEATURE_VERSION: u32 = 1;
pub const NUM_ACTIONS: usize = 4;
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// Action indices, in tie-break order.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub agent: Cell,
}

#[derive(Debug, Clone)]
pub struct GridInstance {
    width: usize,
    height: usize,
    obstacles: Vec<bool>,
    start: Cell,
    goal: Cell,
    seed: u64,
    id: u64,
    obstacle_idx: Vec<usize>,
    goal_dist: Vec<Option<u32>>,
}

/// Rejection-sampling parameters for [`generate_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGenParams {
    pub width: usize,
    pub height: usize,
    pub obstacle_prob: f64,
    pub min_shortest: usize,
    pub min_manhattan: usize,
    pub max_attempts: usize,
}

impl GridGenParams {
    pub fn new(
        width: usize,
        height: usize,
        obstacle_prob: f64,
        min_shortest: usize,
        min_manhattan: usize,
    ) -> Self {
        Self {
            width,
            height,
            obstacle_prob,
            min_shortest,
            min_manhattan,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Samples maps and start/goal pairs until the shortest path and Manhattan
/// constraints both hold. Pure function of `seed`.
pub fn generate_instance(params: &GridGenParams, seed: u64) -> Result<GridInstance, EnvError> {
    let GridGenParams {
        width,
        height,
        obstacle_prob,
        min_shortest,
        min_manhattan,
        max_attempts,
    } = *params;
    if !(0.0..1.0).contains(&obstacle_prob) {
        return Err(EnvError::InvalidParameter(format!(
            "obstacle_prob {obstacle_prob} outside [0, 1)"
        )));
    }
    if min_manhattan < 1 || min_shortest < min_manhattan {
        return Err(EnvError::InvalidParameter(
            "need min_shortest >= min_manhattan >= 1".into(),
        ));
    }
    if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(EnvError::InvalidParameter("bad grid size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts {
        let obstacles: Vec<bool> = (0..width * height)
            .map(|_| rng.gen::<f64>() < obstacle_prob)
            .collect();
        let free: Vec<usize> = (0..width * height).filter(|&i| !obstacles[i]).collect();
        if free.len() < 2 {
            continue;
        }
        let si = rng.gen_range(0..free.len());
        let mut gi = rng.gen_range(0..free.len() - 1);
        if gi >= si {
            gi += 1;
        }
        let (s, g) = (free[si], free[gi]);
        let start = Cell::new(s / width, s % width);
        let goal = Cell::new(g / width, g % width);
        if start.manhattan(goal) < min_manhattan {
            continue;
        }
        let inst = GridInstance::new(width, height, obstacles, start, goal, seed)?;
        match inst.shortest_path() {
            Some(d) if d >= min_shortest => return Ok(inst),
            _ => continue,
        }
    }
    Err(EnvError::GenerationExhausted {
        attempts: max_attempts,
    })
}

/// JSON-lines record: `{"w","h","obstacles","start","goal","seed"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRecord {
    pub w: usize,
    pub h: usize,
    pub obstacles: Vec<u8>,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    pub seed: u64,
}

impl GridInstance {
    pub fn new(
        width: usize,
        height: usize,
        obstacles: Vec<bool>,
        start: Cell,
        goal: Cell,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if obstacles.len() != width * height {
            return Err(EnvError::Malformed(format!(
                "obstacle map has {} cells, expected {}",
                obstacles.len(),
                width * height
            )));
        }
        for (name, c) in [("start", start), ("goal", goal)] {
            if c.row >= height || c.col >= width {
                return Err(EnvError::Malformed(format!("{name} out of bounds")));
            }
            if obstacles[c.row * width + c.col] {
                return Err(EnvError::Malformed(format!("{name} is an obstacle")));
            }
        }
        if start == goal {
            return Err(EnvError::Malformed("start equals goal".into()));
        }
        let map_bytes: Vec<u8> = obstacles.iter().map(|&o| u8::from(o)).collect();
        let id = fnv1a(&[
            b"gridnav",
            &(width as u64).to_le_bytes(),
            &(height as u64).to_le_bytes(),
            &map_bytes,
            &(start.row as u64).to_le_bytes(),
            &(start.col as u64).to_le_bytes(),
            &(goal.row as u64).to_le_bytes(),
            &(goal.col as u64).to_le_bytes(),
        ]);
        let obstacle_idx = (0..width * height).filter(|&i| obstacles[i]).collect();
        let mut inst = Self {
            width,
            height,
            obstacles,
            start,
            goal,
            seed,
            id,
            obstacle_idx,
            goal_dist: Vec::new(),
        };
        inst.goal_dist = inst.bfs_from(goal);
        Ok(inst)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacles[cell.row * self.width + cell.col]
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacle_idx.len()
    }

    fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    /// Neighbour reached by `action`, if it is in bounds and free.
    pub fn neighbor(&self, cell: Cell, action: usize) -> Option<Cell> {
        let next = match action {
            UP if cell.row > 0 => Cell::new(cell.row - 1, cell.col),
            DOWN if cell.row + 1 < self.height => Cell::new(cell.row + 1, cell.col),
            LEFT if cell.col > 0 => Cell::new(cell.row, cell.col - 1),
            RIGHT if cell.col + 1 < self.width => Cell::new(cell.row, cell.col + 1),
            _ => return None,
        };
        (!self.is_obstacle(next)).then_some(next)
    }

    fn bfs_from(&self, source: Cell) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.width * self.height];
        let mut queue = VecDeque::new();
        dist[self.index(source)] = Some(0);
        queue.push_back(source);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].expect("queued cells have a distance");
            for a in 0..NUM_ACTIONS {
                if let Some(next) = self.neighbor(cell, a) {
                    let i = self.index(next);
                    if dist[i].is_none() {
                        dist[i] = Some(d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        dist
    }

    /// Exact BFS distance from `cell` to the goal; `None` if unreachable.
    pub fn distance_to_goal(&self, cell: Cell) -> Option<usize> {
        self.goal_dist[self.index(cell)].map(|d| d as usize)
    }

    /// Exact BFS distance start → goal; `None` means unreachable.
    pub fn shortest_path(&self) -> Option<usize> {
        self.distance_to_goal(self.start)
    }

    /// First action, in index order, that lies on a shortest path.
    pub fn expert_action(&self, state: &GridState) -> Result<usize, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::TerminalState);
        }
        let d = self
            .distance_to_goal(state.agent)
            .ok_or(EnvError::Unreachable)?;
        (0..NUM_ACTIONS)
            .find(|&a| {
                self.neighbor(state.agent, a)
                    .and_then(|n| self.distance_to_goal(n))
                    == Some(d - 1)
            })
            .ok_or(EnvError::Unreachable)
    }

    /// Number of distinct free cells reachable from the start.
    pub fn reachable_cells(&self) -> usize {
        self.bfs_from(self.start)
            .iter()
            .filter(|d| d.is_some())
            .count()
    }

    pub fn decode(&self, key: &StateKey) -> Option<GridState> {
        let (id, fields) = key.fields()?;
        if id != self.id || fields.len() != 1 || fields[0].len() != 4 {
            return None;
        }
        let f = fields[0];
        let row = u16::from_le_bytes([f[0], f[1]]) as usize;
        let col = u16::from_le_bytes([f[2], f[3]]) as usize;
        (row < self.height && col < self.width).then_some(GridState {
            agent: Cell::new(row, col),
        })
    }

    pub fn feature_len(&self) -> usize {
        3 * self.width * self.height + 4
    }

    pub fn to_record(&self) -> GridRecord {
        GridRecord {
            w: self.width,
            h: self.height,
            obstacles: self.obstacles.iter().map(|&o| u8::from(o)).collect(),
            start: [self.start.row, self.start.col],
            goal: [self.goal.row, self.goal.col],
            seed: self.seed,
        }
    }

    pub fn from_record(rec: &GridRecord) -> Result<Self, EnvError> {
        if rec.obstacles.iter().any(|&o| o > 1) {
            return Err(EnvError::Malformed(
                "obstacle entries must be 0 or 1".into(),
            ));
        }
        Self::new(
            rec.w,
            rec.h,
            rec.obstacles.iter().map(|&o| o == 1).collect(),
            Cell::new(rec.start[0], rec.start[1]),
            Cell::new(rec.goal[0], rec.goal[1]),
            rec.seed,
        )
    }
}

impl Environment for GridInstance {
    type State = GridState;

    fn tag(&self) -> &'static str {
        "gridnav"
    }

    fn feature_version(&self) -> u32 {
        FEATURE_VERSION
    }

    fn instance_id(&self) -> u64 {
        self.id
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn initial_state(&self) -> GridState {
        GridState { agent: self.start }
    }

    fn is_terminal(&self, state: &GridState) -> bool {
        state.agent == self.goal
    }

    fn is_success(&self, state: &GridState) -> bool {
        state.agent == self.goal
    }

    fn legal_actions(&self, state: &GridState) -> Result<ActionSet, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::TerminalState);
        }
        Ok(ActionSet::from_mask(
            (0..NUM_ACTIONS)
                .map(|a| self.neighbor(state.agent, a).is_some())
                .collect(),
        ))
    }

    fn step(&self, state: &GridState, action: usize) -> Result<Transition<GridState>, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::TerminalState);
        }
        let next = self
            .neighbor(state.agent, action)
            .ok_or(EnvError::IllegalAction { action })?;
        let terminal = next == self.goal;
        let reward = if terminal {
            GOAL_REWARD + STEP_REWARD
        } else {
            STEP_REWARD
        };
        Ok(Transition {
            next_state: GridState { agent: next },
            reward,
            terminal,
        })
    }

    fn encode(&self, state: &GridState) -> StateKey {
        let mut field = [0u8; 4];
        field[..2].copy_from_slice(&(state.agent.row as u16).to_le_bytes());
        field[2..].copy_from_slice(&(state.agent.col as u16).to_le_bytes());
        StateKey::builder(self.id).field(&field).finish()
    }

    /// Obstacle plane, goal one-hot plane, agent one-hot plane, then
    /// `Δrow/height, Δcol/width, sign Δrow, sign Δcol` with `Δ = goal − agent`.
    fn features<S: Scalar>(&self, state: &GridState) -> Features<S> {
        let cells = self.width * self.height;
        let mut entries = Vec::with_capacity(self.obstacle_idx.len() + 6);
        entries.extend(self.obstacle_idx.iter().map(|&i| (i, S::one())));
        entries.push((cells + self.index(self.goal), S::one()));
        entries.push((2 * cells + self.index(state.agent), S::one()));
        let dr = self.goal.row as f64 - state.agent.row as f64;
        let dc = self.goal.col as f64 - state.agent.col as f64;
        let tail = [
            dr / self.height as f64,
            dc / self.width as f64,
            sign(dr),
            sign(dc),
        ];
        for (k, v) in tail.into_iter().enumerate() {
            if v != 0.0 {
                entries.push((3 * cells + k, S::lit(v)));
            }
        }
        Features::Shared {
            len: self.feature_len(),
            entries,
        }
    }

    fn heuristic_value(&self, state: &GridState) -> f64 {
        GOAL_REWARD + STEP_REWARD * state.agent.manhattan(self.goal) as f64
    }

    fn default_horizon(&self) -> usize {
        4 * (self.width + self.height)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
