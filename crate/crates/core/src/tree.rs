//! Search statistics keyed by [`StateKey`]: visit counts, Monte-Carlo action
//! values and max-Bellman tree values.
//!
//! Nodes live in a flat map, so a state reached along different paths (or in
//! different iterations) shares one entry. Recorded transitions form a graph;
//! each node remembers its parents so value improvements can be pushed upward.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::env::StateKey;
use crate::scalar::{argmax_by, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ChildEdge<S> {
    pub key: StateKey,
    pub reward: S,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats<S> {
    /// N(s).
    pub n_state: u64,
    /// N(s, a).
    pub n_action: Vec<u64>,
    pub q_sum: Vec<S>,
    pub q_count: Vec<u64>,
    /// Action values used before an action has any Monte-Carlo sample.
    pub q_init: Vec<S>,
    pub v_tree: Option<S>,
    /// Best bootstrap seen when a trajectory was truncated at this state.
    pub leaf_value: Option<S>,
    pub children: Vec<Option<ChildEdge<S>>>,
    /// Legal mask, set once the node is expanded by a tree policy.
    pub legal: Option<Vec<bool>>,
    parents: Vec<(StateKey, usize)>,
}

impl<S: Scalar> Default for NodeStats<S> {
    fn default() -> Self {
        Self {
            n_state: 0,
            n_action: Vec::new(),
            q_sum: Vec::new(),
            q_count: Vec::new(),
            q_init: Vec::new(),
            v_tree: None,
            leaf_value: None,
            children: Vec::new(),
            legal: None,
            parents: Vec::new(),
        }
    }
}

impl<S: Scalar> NodeStats<S> {
    fn ensure(&mut self, action: usize) {
        let len = action + 1;
        if self.n_action.len() < len {
            self.n_action.resize(len, 0);
            self.q_sum.resize(len, S::zero());
            self.q_count.resize(len, 0);
            self.q_init.resize(len, S::zero());
            self.children.resize(len, None);
        }
    }

    pub fn visits(&self, action: usize) -> u64 {
        self.n_action.get(action).copied().unwrap_or(0)
    }

    /// Monte-Carlo mean, `None` before the first sample.
    pub fn q(&self, action: usize) -> Option<S> {
        match self.q_count.get(action) {
            Some(&c) if c > 0 => Some(self.q_sum[action] / S::lit(c as f64)),
            _ => None,
        }
    }

    /// Monte-Carlo mean, falling back to the initial value.
    pub fn q_or_init(&self, action: usize) -> S {
        self.q(action)
            .unwrap_or_else(|| self.q_init.get(action).copied().unwrap_or_else(S::zero))
    }

    pub fn is_expanded(&self) -> bool {
        self.legal.is_some()
    }

    /// Marks the node expanded with its legal mask and initial action values.
    pub fn expand(&mut self, legal: Vec<bool>, q_init: Vec<S>) {
        assert_eq!(legal.len(), q_init.len());
        if !legal.is_empty() {
            self.ensure(legal.len() - 1);
        }
        self.q_init[..q_init.len()].copy_from_slice(&q_init);
        self.legal = Some(legal);
    }

    pub fn child(&self, action: usize) -> Option<&ChildEdge<S>> {
        self.children.get(action).and_then(Option::as_ref)
    }

    pub fn parents(&self) -> &[(StateKey, usize)] {
        &self.parents
    }

    /// Legal action with the highest value (Monte-Carlo mean or initial
    /// value), lowest index on ties.
    pub fn best_action(&self) -> Option<usize> {
        let legal = self.legal.as_ref()?;
        argmax_by((0..legal.len()).map(|a| self.q_or_init(a)), |a| legal[a])
    }
}

#[derive(Debug, Clone)]
pub struct StatsTable<S> {
    nodes: HashMap<StateKey, NodeStats<S>>,
}

impl<S: Scalar> Default for StatsTable<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> StatsTable<S> {
    pub fn new() -> Self {
        Self {
            nodes: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, key: &StateKey) -> Option<&NodeStats<S>> {
        self.nodes.get(key)
    }

    pub fn node_mut(&mut self, key: &StateKey) -> &mut NodeStats<S> {
        if !self.nodes.contains_key(key) {
            self.nodes.insert(key.clone(), NodeStats::default());
        }
        self.nodes.get_mut(key).expect("inserted above")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &NodeStats<S>)> {
        self.nodes.iter()
    }

    /// N(s, a); absent entries read as zero.
    pub fn visits(&self, key: &StateKey, action: usize) -> u64 {
        self.nodes.get(key).map_or(0, |n| n.visits(action))
    }

    /// Increments N(s, a) and N(s). Returns the new N(s, a).
    pub fn record_visit(&mut self, key: &StateKey, action: usize) -> u64 {
        let node = self.node_mut(key);
        node.ensure(action);
        node.n_action[action] += 1;
        node.n_state += 1;
        node.n_action[action]
    }

    /// Adds `value` to the Monte-Carlo accumulator of every `(s, a)` on `path`.
    pub fn mc_backup(&mut self, path: &[(StateKey, usize)], value: S) {
        for (key, action) in path {
            let node = self.node_mut(key);
            node.ensure(*action);
            node.q_sum[*action] += value;
            node.q_count[*action] += 1;
        }
    }

    pub fn q(&self, key: &StateKey, action: usize) -> Option<S> {
        self.nodes.get(key).and_then(|n| n.q(action))
    }

    /// Records the observed transition `(s, a) -> child`. Transitions are
    /// deterministic, so the first registration wins.
    pub fn register_child(
        &mut self,
        key: &StateKey,
        action: usize,
        child: &StateKey,
        reward: S,
        terminal: bool,
    ) {
        let node = self.node_mut(key);
        node.ensure(action);
        if node.children[action].is_some() {
            return;
        }
        node.children[action] = Some(ChildEdge {
            key: child.clone(),
            reward,
            terminal,
        });
        self.node_mut(child).parents.push((key.clone(), action));
    }

    /// Records that a trajectory stopped at `key` (horizon or dead end) with
    /// the given bootstrap value.
    pub fn mark_leaf(&mut self, key: &StateKey, bootstrap: S) {
        let node = self.node_mut(key);
        node.leaf_value = Some(match node.leaf_value {
            Some(v) => v.max(bootstrap),
            None => bootstrap,
        });
    }

    fn backed_up_value(&self, key: &StateKey, gamma: S) -> Option<S> {
        let node = self.nodes.get(key)?;
        let mut best = node.leaf_value;
        for edge in node.children.iter().flatten() {
            let downstream = if edge.terminal {
                S::zero()
            } else {
                // Children without a value yet contribute nothing.
                match self
                    .nodes
                    .get(&edge.key)
                    .and_then(|c| c.v_tree.or(c.leaf_value))
                {
                    Some(v) => v,
                    None => continue,
                }
            };
            let v = edge.reward + gamma * downstream;
            best = Some(best.map_or(v, |b| b.max(v)));
        }
        best
    }

    /// Applies `V(s) = max(leaf bootstrap, max_a [r(s,a) + γ V(s')])` to the
    /// trajectory states from leaf to root, then keeps pushing changed values
    /// to recorded parents until nothing changes. `states` runs root first and
    /// includes the final state.
    pub fn bellman_backup(&mut self, states: &[StateKey], gamma: S) {
        let mut queue: VecDeque<StateKey> = VecDeque::new();
        let mut queued: HashSet<StateKey> = HashSet::new();
        for key in states.iter().rev() {
            if queued.insert(key.clone()) {
                queue.push_back(key.clone());
            }
        }
        // Guards against reward-positive cycles with γ = 1, where the max
        // never settles.
        let mut budget = 64 * (self.nodes.len() + states.len() + 1);
        while let Some(key) = queue.pop_front() {
            queued.remove(&key);
            if budget == 0 {
                break;
            }
            budget -= 1;
            let Some(v) = self.backed_up_value(&key, gamma) else {
                continue;
            };
            let node = self.nodes.get_mut(&key).expect("value implies node");
            if node.v_tree == Some(v) {
                continue;
            }
            node.v_tree = Some(v);
            for (parent, _) in &node.parents {
                if queued.insert(parent.clone()) {
                    queue.push_back(parent.clone());
                }
            }
        }
    }

    pub fn tree_value(&self, key: &StateKey) -> Option<S> {
        self.nodes.get(key).and_then(|n| n.v_tree)
    }

    /// V_tree(s) if set, otherwise `fallback()`.
    pub fn tree_value_or(&self, key: &StateKey, fallback: impl FnOnce() -> S) -> S {
        self.tree_value(key).unwrap_or_else(fallback)
    }

    /// Σ_{s,a} N(s, a).
    pub fn total_action_visits(&self) -> u64 {
        self.nodes
            .values()
            .map(|n| n.n_action.iter().sum::<u64>())
            .sum()
    }

    /// Deterministic (key-sorted) debug dump.
    pub fn dump(&self, visited: &[StateKey]) -> StatsDump {
        let mut nodes: Vec<NodeDump> = self
            .nodes
            .iter()
            .map(|(key, n)| NodeDump {
                key: key.to_hex(),
                n: n.n_state,
                n_action: n.n_action.clone(),
                q: (0..n.q_count.len())
                    .map(|a| n.q(a).map(Scalar::as_f64))
                    .collect(),
                v_tree: n.v_tree.map(Scalar::as_f64),
            })
            .collect();
        nodes.sort_by(|a, b| a.key.cmp(&b.key));
        let mut visited: Vec<String> = visited.iter().map(StateKey::to_hex).collect();
        visited.sort();
        visited.dedup();
        StatsDump { nodes, visited }
    }
}

/// JSON form of a statistics table plus every state touched by the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsDump {
    pub nodes: Vec<NodeDump>,
    pub visited: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub key: String,
    pub n: u64,
    pub n_action: Vec<u64>,
    pub q: Vec<Option<f64>>,
    pub v_tree: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(i: u32) -> StateKey {
        StateKey::builder(7).field(&i.to_le_bytes()).finish()
    }

    #[test]
    fn visits_are_counted_per_action() {
        let mut t = StatsTable::<f64>::new();
        assert_eq!(t.record_visit(&key(0), 1), 1);
        t.record_visit(&key(0), 1);
        assert_eq!(t.record_visit(&key(0), 1), 3);
        assert_eq!(t.record_visit(&key(0), 0), 1);
        assert_eq!(t.get(&key(0)).unwrap().n_state, 4);
        assert_eq!(t.visits(&key(5), 0), 0);
        assert_eq!(t.total_action_visits(), 4);
    }

    #[test]
    fn mc_backup_averages() {
        let mut t = StatsTable::<f64>::new();
        t.mc_backup(&[(key(0), 0)], 1.0);
        assert_eq!(t.q(&key(0), 0), Some(1.0));
        t.mc_backup(&[(key(0), 0)], 0.0);
        assert_eq!(t.q(&key(0), 0), Some(0.5));
        let values = [0.3, -1.2, 4.5, 0.0, 2.25, 7.0, -3.5, 0.125, 9.0, 1.0];
        for v in values {
            t.mc_backup(&[(key(1), 2), (key(2), 0)], v);
        }
        let mean = values.iter().sum::<f64>() / 10.0;
        assert!((t.q(&key(1), 2).unwrap() - mean).abs() < 1e-12);
        assert!((t.q(&key(2), 0).unwrap() - mean).abs() < 1e-12);
        assert_eq!(t.q(&key(1), 0), None);
    }

    #[test]
    fn chain_backup() {
        let mut t = StatsTable::<f64>::new();
        t.register_child(&key(0), 0, &key(1), -0.01, false);
        t.register_child(&key(1), 0, &key(2), 1.0, true);
        t.bellman_backup(&[key(0), key(1), key(2)], 1.0);
        assert_eq!(t.tree_value(&key(1)), Some(1.0));
        assert!((t.tree_value(&key(0)).unwrap() - 0.99).abs() < 1e-15);
        assert_eq!(t.tree_value(&key(2)), None);
    }

    #[test]
    fn backup_takes_max_over_children() {
        let mut t = StatsTable::<f64>::new();
        t.register_child(&key(0), 0, &key(1), 0.3, true);
        t.register_child(&key(0), 1, &key(2), 0.0, false);
        t.register_child(&key(2), 0, &key(3), 0.7, true);
        t.bellman_backup(&[key(0), key(2), key(3)], 1.0);
        assert_eq!(t.tree_value(&key(0)), Some(0.7));
    }

    #[test]
    fn zero_discount_keeps_immediate_rewards() {
        let mut t = StatsTable::<f64>::new();
        t.register_child(&key(0), 0, &key(1), 0.2, false);
        t.register_child(&key(0), 1, &key(2), 0.4, false);
        t.register_child(&key(1), 0, &key(3), 5.0, true);
        t.bellman_backup(&[key(0), key(1), key(3)], 0.0);
        t.mark_leaf(&key(2), 9.0);
        t.bellman_backup(&[key(0), key(2)], 0.0);
        assert_eq!(t.tree_value(&key(0)), Some(0.4));
    }

    #[test]
    fn improvements_reach_parents_off_the_trajectory() {
        // 0 -> 1 -> 2 (truncated), then 3 -> 2 -> goal. Node 1 should see it.
        let mut t = StatsTable::<f64>::new();
        t.register_child(&key(0), 0, &key(1), -0.01, false);
        t.register_child(&key(1), 0, &key(2), -0.01, false);
        t.mark_leaf(&key(2), 0.0);
        t.bellman_backup(&[key(0), key(1), key(2)], 1.0);
        assert!((t.tree_value(&key(0)).unwrap() + 0.02).abs() < 1e-15);
        t.register_child(&key(3), 0, &key(2), -0.01, false);
        t.register_child(&key(2), 1, &key(4), 1.0, true);
        t.bellman_backup(&[key(3), key(2), key(4)], 1.0);
        assert_eq!(t.tree_value(&key(2)), Some(1.0));
        assert!((t.tree_value(&key(0)).unwrap() - 0.98).abs() < 1e-15);
    }

    #[test]
    fn negative_cycles_settle() {
        let mut t = StatsTable::<f64>::new();
        t.register_child(&key(0), 0, &key(1), -0.01, false);
        t.register_child(&key(1), 0, &key(0), -0.01, false);
        t.register_child(&key(1), 1, &key(2), 1.0, true);
        t.bellman_backup(&[key(0), key(1), key(0), key(1), key(2)], 1.0);
        assert_eq!(t.tree_value(&key(1)), Some(1.0));
        assert_eq!(t.tree_value(&key(0)), Some(0.99));
    }

    #[test]
    fn tree_value_fallback() {
        let mut t = StatsTable::<f64>::new();
        assert_eq!(t.tree_value_or(&key(0), || 0.0), 0.0);
        assert_eq!(t.tree_value_or(&key(0), || 0.42), 0.42);
        t.register_child(&key(0), 0, &key(1), 0.5, true);
        t.bellman_backup(&[key(0), key(1)], 1.0);
        assert_eq!(t.tree_value_or(&key(0), || 0.42), 0.5);
    }

    #[test]
    fn dump_is_sorted_and_serialisable() {
        let mut t = StatsTable::<f64>::new();
        for i in [3, 1, 2] {
            t.record_visit(&key(i), 0);
        }
        let d = t.dump(&[key(2), key(2), key(9)]);
        assert!(d.nodes.windows(2).all(|w| w[0].key < w[1].key));
        assert_eq!(d.visited.len(), 2);
        let json = serde_json::to_string(&d).unwrap();
        let back: StatsDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    fn random_trajectories() -> impl Strategy<Value = Vec<Vec<(u32, usize, i32)>>> {
        // Each step: (state, action, reward in hundredths). Next state is the
        // following entry; the last state's successor is terminal. Only the
        // terminal edge may pay a positive reward, so no cycle gains value.
        prop::collection::vec(
            prop::collection::vec((0u32..12, 0usize..3, -5i32..5), 1..8),
            1..6,
        )
    }

    fn replay(t: &mut StatsTable<f64>, traj: &[(u32, usize, i32)]) -> (Vec<StateKey>, bool) {
        let mut states = vec![key(100)];
        let mut prev = key(100);
        for (i, &(s, a, r)) in traj.iter().enumerate() {
            let terminal = i + 1 == traj.len();
            let next = if terminal { key(1000 + s) } else { key(s) };
            // Keep transitions deterministic: reuse the first recorded child.
            let child = t
                .get(&prev)
                .and_then(|n| n.child(a))
                .map(|c| (c.key.clone(), c.terminal));
            let (next, terminal) = child.unwrap_or((next, terminal));
            let reward = if terminal {
                f64::from(r)
            } else {
                -f64::from(r.abs())
            } / 100.0;
            t.register_child(&prev, a, &next, reward, terminal);
            states.push(next.clone());
            if terminal {
                return (states, true);
            }
            prev = next;
        }
        (states, false)
    }

    proptest! {
        #[test]
        fn backup_is_idempotent_and_monotone(trajs in random_trajectories()) {
            let mut t = StatsTable::<f64>::new();
            let mut last_root: Option<f64> = None;
            for traj in &trajs {
                let (states, ended) = replay(&mut t, traj);
                if !ended {
                    // Non-terminal ends are truncations, as in the engines.
                    t.mark_leaf(states.last().unwrap(), 0.0);
                }
                let before: Vec<(StateKey, Option<f64>)> =
                    t.iter().map(|(k, n)| (k.clone(), n.v_tree)).collect();
                t.bellman_backup(&states, 1.0);
                for (k, v) in &before {
                    if let (Some(old), Some(new)) = (v, t.tree_value(k)) {
                        prop_assert!(new >= *old);
                    }
                }
                let snapshot: Vec<(StateKey, Option<f64>)> =
                    t.iter().map(|(k, n)| (k.clone(), n.v_tree)).collect();
                t.bellman_backup(&states, 1.0);
                for (k, v) in snapshot {
                    prop_assert_eq!(t.tree_value(&k), v);
                }
                let root = t.tree_value(&key(100));
                if let (Some(a), Some(b)) = (last_root, root) {
                    prop_assert!(b >= a);
                }
                last_root = root;
            }
        }
    }
}
