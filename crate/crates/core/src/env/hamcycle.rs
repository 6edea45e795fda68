//! Hamiltonian-cycle search on sparse undirected graphs with a planted cycle.
//!
//! The walk starts at node 0. Action `i` moves to the `i`-th neighbour (in
//! ascending node order) of the current node, which must be unvisited. Once
//! every node is visited the only legal action is the closing edge back to the
//! start, worth `+1`. A walk with no legal action is a dead end and terminates
//! with reward 0.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fnv1a, ActionSet, EnvError, Environment, StateKey, Transition};
use crate::policy::Features;
use crate::scalar::Scalar;

pub const CLOSE_REWARD: f64 = 1.0;
pub const FEATURE_VERSION: u32 = 1;
/// Features per candidate neighbour.
pub const FEATURES_PER_ACTION: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CycleState {
    pub start: usize,
    pub current: usize,
    pub visited: Vec<bool>,
    pub path_len: usize,
    pub closed: bool,
}

#[derive(Debug, Clone)]
pub struct GraphInstance {
    n: usize,
    adj: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
    planted: Vec<usize>,
    seed: u64,
    id: u64,
    max_degree: usize,
}

/// JSON-lines record: `{"n","edges","planted","seed"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub planted: Vec<usize>,
    pub seed: u64,
}

/// Probability of each non-cycle pair becoming an edge so that the expected
/// total edge count is `sparsity * n(n-1)/2`.
pub fn extra_edge_probability(n: usize, sparsity: f64) -> f64 {
    let pairs = (n * (n - 1) / 2) as f64;
    let spare = pairs - n as f64;
    if spare <= 0.0 {
        return 0.0;
    }
    ((sparsity * pairs - n as f64) / spare).clamp(0.0, 1.0)
}

/// Random permutation closed into a cycle, plus random extra edges. Pure
/// function of `seed`.
pub fn generate_graph(n: usize, sparsity: f64, seed: u64) -> Result<GraphInstance, EnvError> {
    if n < 3 || n > u16::MAX as usize {
        return Err(EnvError::InvalidParameter(format!(
            "node count {n} out of range"
        )));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    if !(sparsity > 0.0 && sparsity <= 1.0) || sparsity * pairs < n as f64 {
        return Err(EnvError::InvalidSparsity { n, sparsity });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted: Vec<usize> = (0..n).collect();
    planted.shuffle(&mut rng);
    let mut adj = vec![false; n * n];
    for i in 0..n {
        let (u, v) = (planted[i], planted[(i + 1) % n]);
        adj[u * n + v] = true;
        adj[v * n + u] = true;
    }
    let p = extra_edge_probability(n, sparsity);
    for u in 0..n {
        for v in u + 1..n {
            if !adj[u * n + v] && rng.gen::<f64>() < p {
                adj[u * n + v] = true;
                adj[v * n + u] = true;
            }
        }
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if adj[u * n + v] {
                edges.push([u, v]);
            }
        }
    }
    GraphInstance::new(n, &edges, planted, seed)
}

impl GraphInstance {
    pub fn new(
        n: usize,
        edges: &[[usize; 2]],
        planted: Vec<usize>,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if n < 3 || n > u16::MAX as usize {
            return Err(EnvError::Malformed(format!("node count {n} out of range")));
        }
        let mut adj = vec![false; n * n];
        for &[u, v] in edges {
            if u >= n || v >= n || u == v {
                return Err(EnvError::Malformed(format!("bad edge [{u}, {v}]")));
            }
            adj[u * n + v] = true;
            adj[v * n + u] = true;
        }
        let mut seen = vec![false; n];
        if planted.len() != n
            || planted
                .iter()
                .any(|&v| v >= n || std::mem::replace(&mut seen[v], true))
        {
            return Err(EnvError::Malformed(
                "planted cycle is not a permutation".into(),
            ));
        }
        for i in 0..n {
            if !adj[planted[i] * n + planted[(i + 1) % n]] {
                return Err(EnvError::Malformed(
                    "planted cycle uses a missing edge".into(),
                ));
            }
        }
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|u| (0..n).filter(|&v| adj[u * n + v]).collect())
            .collect();
        let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let adj_bytes: Vec<u8> = adj.iter().map(|&b| u8::from(b)).collect();
        let id = fnv1a(&[b"hamcycle", &(n as u64).to_le_bytes(), &adj_bytes]);
        Ok(Self {
            n,
            adj,
            neighbors,
            planted,
            seed,
            id,
            max_degree,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn planted(&self) -> &[usize] {
        &self.planted
    }

    pub fn is_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u * self.n + v]
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn to_record(&self) -> GraphRecord {
        let mut edges = Vec::with_capacity(self.edge_count());
        for u in 0..self.n {
            for &v in &self.neighbors[u] {
                if u < v {
                    edges.push([u, v]);
                }
            }
        }
        GraphRecord {
            n: self.n,
            edges,
            planted: self.planted.clone(),
            seed: self.seed,
        }
    }

    pub fn from_record(rec: &GraphRecord) -> Result<Self, EnvError> {
        Self::new(rec.n, &rec.edges, rec.planted.clone(), rec.seed)
    }

    fn legal_mask(&self, state: &CycleState) -> Vec<bool> {
        let mut mask = vec![false; self.max_degree];
        if state.closed {
            return mask;
        }
        for (i, &v) in self.neighbors[state.current].iter().enumerate() {
            mask[i] = if state.path_len == self.n {
                v == state.start
            } else {
                !state.visited[v]
            };
        }
        mask
    }

    /// Next node of the planted cycle, in its stored orientation.
    pub fn expert_action(&self, state: &CycleState) -> Result<usize, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::TerminalState);
        }
        let offset = self
            .planted
            .iter()
            .position(|&v| v == state.start)
            .expect("start is a node");
        let along = |k: usize| self.planted[(offset + k) % self.n];
        if state.path_len == 0 || along(state.path_len - 1) != state.current {
            return Err(EnvError::OffCycle);
        }
        let prefix_ok = (0..self.n).all(|k| state.visited[along(k)] == (k < state.path_len));
        if !prefix_ok {
            return Err(EnvError::OffCycle);
        }
        let next = along(state.path_len);
        self.neighbors[state.current]
            .iter()
            .position(|&v| v == next)
            .ok_or(EnvError::OffCycle)
    }
}

impl Environment for GraphInstance {
    type State = CycleState;

    fn tag(&self) -> &'static str {
        "hamcycle"
    }

    fn feature_version(&self) -> u32 {
        FEATURE_VERSION
    }

    fn instance_id(&self) -> u64 {
        self.id
    }

    fn num_actions(&self) -> usize {
        self.max_degree
    }

    fn initial_state(&self) -> CycleState {
        let mut visited = vec![false; self.n];
        visited[0] = true;
        CycleState {
            start: 0,
            current: 0,
            visited,
            path_len: 1,
            closed: false,
        }
    }

    fn is_terminal(&self, state: &CycleState) -> bool {
        state.closed || !self.legal_mask(state).contains(&true)
    }

    fn is_success(&self, state: &CycleState) -> bool {
        state.closed
    }

    fn legal_actions(&self, state: &CycleState) -> Result<ActionSet, EnvError> {
        let mask = self.legal_mask(state);
        if state.closed || !mask.contains(&true) {
            return Err(EnvError::TerminalState);
        }
        Ok(ActionSet::from_mask(mask))
    }

    fn step(&self, state: &CycleState, action: usize) -> Result<Transition<CycleState>, EnvError> {
        let mask = self.legal_mask(state);
        if state.closed || !mask.contains(&true) {
            return Err(EnvError::TerminalState);
        }
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(EnvError::IllegalAction { action });
        }
        let next = self.neighbors[state.current][action];
        let mut succ = state.clone();
        if next == state.start {
            succ.current = next;
            succ.closed = true;
            return Ok(Transition {
                next_state: succ,
                reward: CLOSE_REWARD,
                terminal: true,
            });
        }
        succ.current = next;
        succ.visited[next] = true;
        succ.path_len += 1;
        let terminal = self.is_terminal(&succ);
        Ok(Transition {
            next_state: succ,
            reward: 0.0,
            terminal,
        })
    }

    fn encode(&self, state: &CycleState) -> StateKey {
        let mut head = [0u8; 5];
        head[..2].copy_from_slice(&(state.start as u16).to_le_bytes());
        head[2..4].copy_from_slice(&(state.current as u16).to_le_bytes());
        head[4] = u8::from(state.closed);
        let mut bits = vec![0u8; self.n.div_ceil(8)];
        for (i, &v) in state.visited.iter().enumerate() {
            if v {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        StateKey::builder(self.id)
            .field(&head)
            .field(&bits)
            .finish()
    }

    /// Per candidate neighbour: `degree/n`, fraction of its neighbours still
    /// unvisited, adjacency to the start node, `remaining/n`, `path_len/n`, 1.
    /// Illegal slots are zero.
    fn features<S: Scalar>(&self, state: &CycleState) -> Features<S> {
        let k = FEATURES_PER_ACTION;
        let mut values = vec![S::zero(); self.max_degree * k];
        let n = self.n as f64;
        let mask = self.legal_mask(state);
        for (i, &c) in self.neighbors[state.current].iter().enumerate() {
            if !mask[i] {
                continue;
            }
            let deg = self.degree(c);
            let unvisited = self.neighbors[c]
                .iter()
                .filter(|&&v| !state.visited[v])
                .count();
            let row = [
                deg as f64 / n,
                unvisited as f64 / deg as f64,
                if self.is_edge(c, state.start) {
                    1.0
                } else {
                    0.0
                },
                (self.n - state.path_len) as f64 / n,
                state.path_len as f64 / n,
                1.0,
            ];
            for (j, v) in row.into_iter().enumerate() {
                values[i * k + j] = S::lit(v);
            }
        }
        Features::per_action(k, values)
    }

    fn heuristic_value(&self, state: &CycleState) -> f64 {
        state.path_len as f64 / self.n as f64
    }

    fn default_horizon(&self) -> usize {
        self.n
    }
}
