//! Explicit finite deterministic MDPs: bandits, small hand-built chains and
//! randomly generated layered problems used to check the engines against exact
//! solutions.

use super::{fnv1a, ActionSet, EnvError, Environment, StateKey, Transition};
use crate::policy::Features;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct TabularMdp {
    num_actions: usize,
    transitions: Vec<Vec<Option<(usize, f64)>>>,
    terminal: Vec<bool>,
    features: Vec<Vec<f64>>,
    values: Vec<f64>,
    root: usize,
    horizon: usize,
    id: u64,
}

impl TabularMdp {
    /// `transitions[s][a] = Some((next, reward))` for legal actions. Terminal
    /// states must have no legal action. Every state needs a feature vector of
    /// the same length.
    pub fn new(
        num_actions: usize,
        transitions: Vec<Vec<Option<(usize, f64)>>>,
        terminal: Vec<bool>,
        features: Vec<Vec<f64>>,
        root: usize,
    ) -> Result<Self, EnvError> {
        let n = transitions.len();
        if n == 0 || terminal.len() != n || features.len() != n || root >= n {
            return Err(EnvError::Malformed("inconsistent table sizes".into()));
        }
        let width = features[0].len();
        if features.iter().any(|f| f.len() != width) {
            return Err(EnvError::Malformed("ragged feature table".into()));
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != num_actions {
                return Err(EnvError::Malformed(format!(
                    "state {s} has wrong action count"
                )));
            }
            if terminal[s] && row.iter().any(Option::is_some) {
                return Err(EnvError::Malformed(format!(
                    "terminal state {s} has actions"
                )));
            }
            if row
                .iter()
                .flatten()
                .any(|&(next, r)| next >= n || !r.is_finite())
            {
                return Err(EnvError::Malformed(format!(
                    "state {s} has a bad transition"
                )));
            }
        }
        let mut bytes = Vec::new();
        for row in &transitions {
            for t in row {
                match t {
                    Some((next, r)) => {
                        bytes.extend_from_slice(&(*next as u64).to_le_bytes());
                        bytes.extend_from_slice(&r.to_le_bytes());
                    }
                    None => bytes.push(0xff),
                }
            }
        }
        let id = fnv1a(&[b"tabular", &(root as u64).to_le_bytes(), &bytes]);
        Ok(Self {
            num_actions,
            transitions,
            terminal,
            values: vec![0.0; n],
            features,
            root,
            horizon: n,
            id,
        })
    }

    /// One decision at the root; action `i` terminates with `rewards[i]`.
    pub fn bandit(rewards: &[f64]) -> Self {
        let k = rewards.len();
        let mut transitions = vec![vec![None; k]; k + 1];
        for (a, &r) in rewards.iter().enumerate() {
            transitions[0][a] = Some((a + 1, r));
        }
        let mut terminal = vec![true; k + 1];
        terminal[0] = false;
        let features = vec![vec![1.0]; k + 1];
        Self::new(k, transitions, terminal, features, 0).expect("bandit is well formed")
    }

    /// Per-state values returned by `heuristic_value`.
    pub fn with_values(mut self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.transitions.len());
        self.values = values;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_root(mut self, root: usize) -> Self {
        assert!(root < self.transitions.len());
        self.root = root;
        self
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn transition(&self, state: usize, action: usize) -> Option<(usize, f64)> {
        self.transitions[state][action]
    }

    pub fn state_features(&self, state: usize) -> &[f64] {
        &self.features[state]
    }
}

impl Environment for TabularMdp {
    type State = usize;

    fn tag(&self) -> &'static str {
        "tabular"
    }

    fn feature_version(&self) -> u32 {
        1
    }

    fn instance_id(&self) -> u64 {
        self.id
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn initial_state(&self) -> usize {
        self.root
    }

    fn is_terminal(&self, state: &usize) -> bool {
        self.terminal[*state]
    }

    fn is_success(&self, state: &usize) -> bool {
        self.terminal[*state]
    }

    fn legal_actions(&self, state: &usize) -> Result<ActionSet, EnvError> {
        if self.terminal[*state] {
            return Err(EnvError::TerminalState);
        }
        Ok(ActionSet::from_mask(
            self.transitions[*state]
                .iter()
                .map(Option::is_some)
                .collect(),
        ))
    }

    fn step(&self, state: &usize, action: usize) -> Result<Transition<usize>, EnvError> {
        if self.terminal[*state] {
            return Err(EnvError::TerminalState);
        }
        let (next, reward) = self.transitions[*state]
            .get(action)
            .copied()
            .flatten()
            .ok_or(EnvError::IllegalAction { action })?;
        Ok(Transition {
            next_state: next,
            reward,
            terminal: self.terminal[next],
        })
    }

    fn encode(&self, state: &usize) -> StateKey {
        StateKey::builder(self.id)
            .field(&(*state as u32).to_le_bytes())
            .finish()
    }

    fn features<S: Scalar>(&self, state: &usize) -> Features<S> {
        let dense: Vec<S> = self.features[*state].iter().map(|&v| S::lit(v)).collect();
        Features::dense(&dense)
    }

    fn heuristic_value(&self, state: &usize) -> f64 {
        self.values[*state]
    }

    fn default_horizon(&self) -> usize {
        self.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandit_steps_terminate() {
        let m = TabularMdp::bandit(&[0.0, 1.0]);
        let t = m.step(&0, 1).unwrap();
        assert_eq!(t.next_state, 2);
        assert_eq!(t.reward, 1.0);
        assert!(t.terminal);
        assert_eq!(m.step(&2, 0), Err(EnvError::TerminalState));
        assert_eq!(m.legal_actions(&0).unwrap().actions(), &[0, 1]);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let bad = TabularMdp::new(1, vec![vec![Some((5, 0.0))]], vec![false], vec![vec![]], 0);
        assert!(bad.is_err());
        let bad = TabularMdp::new(1, vec![vec![Some((0, 0.0))]], vec![true], vec![vec![]], 0);
        assert!(bad.is_err());
    }

    #[test]
    fn repeated_steps_are_identical() {
        let m = TabularMdp::bandit(&[0.25, -1.0, 3.0]);
        let first = m.step(&0, 2).unwrap();
        for _ in 0..1000 {
            assert_eq!(m.step(&0, 2).unwrap(), first);
        }
    }
}
