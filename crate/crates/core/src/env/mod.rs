//! Deterministic simulator contract consumed by every search engine.
//!
//! Environments are immutable after construction. `step` is a pure function of
//! `(state, action)`, so an instance can be shared read-only between searches.

pub mod gridnav;
pub mod hamcycle;
pub mod tabular;

use std::fmt;

use thiserror::Error;

use crate::policy::{Features, Observation};
use crate::scalar::Scalar;

pub use gridnav::{GridInstance, GridState};
pub use hamcycle::{CycleState, GraphInstance};
pub use tabular::TabularMdp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action {action} is not legal in this state")]
    IllegalAction { action: usize },
    #[error("state is terminal")]
    TerminalState,
    #[error("goal is unreachable from the current state")]
    Unreachable,
    #[error("state is not a prefix of the planted cycle")]
    OffCycle,
    #[error("instance generation exhausted {attempts} rejection attempts")]
    GenerationExhausted { attempts: usize },
    #[error("invalid sparsity {sparsity} for {n} nodes")]
    InvalidSparsity { n: usize, sparsity: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed instance: {0}")]
    Malformed(String),
}

/// Canonical byte encoding of a state: a length-prefixed instance id followed by
/// length-prefixed state fields. Keys every count and value table.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(Vec<u8>);

impl StateKey {
    pub fn builder(instance_id: u64) -> StateKeyBuilder {
        let mut bytes = Vec::with_capacity(32);
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(&instance_id.to_le_bytes());
        StateKeyBuilder { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        if !hex.len().is_multiple_of(2) {
            return None;
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(hex.get(i..i + 2)?, 16).ok())
            .collect::<Option<Vec<u8>>>()?;
        let key = StateKey(bytes);
        let valid = key.fields().is_some();
        valid.then_some(key)
    }

    /// Splits the key into `(instance_id, fields)`. `None` if the bytes are not
    /// a well-formed key.
    pub fn fields(&self) -> Option<(u64, Vec<&[u8]>)> {
        let mut parts = Vec::new();
        let mut rest = self.0.as_slice();
        while !rest.is_empty() {
            if rest.len() < 2 {
                return None;
            }
            let len = u16::from_le_bytes([rest[0], rest[1]]) as usize;
            rest = &rest[2..];
            if rest.len() < len {
                return None;
            }
            parts.push(&rest[..len]);
            rest = &rest[len..];
        }
        let (head, tail) = parts.split_first()?;
        let id = u64::from_le_bytes((*head).try_into().ok()?);
        Some((id, tail.to_vec()))
    }

    pub fn instance_id(&self) -> Option<u64> {
        self.fields().map(|(id, _)| id)
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey({})", self.to_hex())
    }
}

pub struct StateKeyBuilder {
    bytes: Vec<u8>,
}

impl StateKeyBuilder {
    pub fn field(mut self, data: &[u8]) -> Self {
        let len = u16::try_from(data.len()).expect("state field longer than u16::MAX");
        self.bytes.extend_from_slice(&len.to_le_bytes());
        self.bytes.extend_from_slice(data);
        self
    }

    pub fn finish(self) -> StateKey {
        StateKey(self.bytes)
    }
}

/// Result of applying an action. Rewards are in task units.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<St> {
    pub next_state: St,
    pub reward: f64,
    pub terminal: bool,
}

/// Legal actions of a state, in ascending index order, plus the equivalent mask
/// over `0..num_actions`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    actions: Vec<usize>,
    mask: Vec<bool>,
}

impl ActionSet {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let actions = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Self { actions, mask }
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn into_mask(self) -> Vec<bool> {
        self.mask
    }

    pub fn contains(&self, action: usize) -> bool {
        self.mask.get(action).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A deterministic, fully observable planning problem instance.
///
/// Actions are indices in `0..num_actions()`; legality is a per-state mask.
/// A non-terminal state with an empty action set is a dead end: engines treat
/// it like a terminal state with no further reward.
pub trait Environment: Sync {
    type State: Clone + fmt::Debug + PartialEq + Send + Sync;

    /// Short environment tag, e.g. `"gridnav"`.
    fn tag(&self) -> &'static str;

    /// Version of the feature layout produced by [`Environment::features`].
    fn feature_version(&self) -> u32;

    fn instance_id(&self) -> u64;

    /// Fixed width of the action head for this instance.
    fn num_actions(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Whether `state` solves the task (goal reached, cycle closed).
    fn is_success(&self, state: &Self::State) -> bool;

    fn legal_actions(&self, state: &Self::State) -> Result<ActionSet, EnvError>;

    fn step(&self, state: &Self::State, action: usize)
        -> Result<Transition<Self::State>, EnvError>;

    fn encode(&self, state: &Self::State) -> StateKey;

    fn features<S: Scalar>(&self, state: &Self::State) -> Features<S>;

    /// Cheap hand-written value estimate, used as a prior value and baseline.
    fn heuristic_value(&self, state: &Self::State) -> f64;

    /// Default simulation horizon in steps.
    fn default_horizon(&self) -> usize;

    /// Features and legal mask of a non-terminal state.
    fn observe<S: Scalar>(&self, state: &Self::State) -> Result<Observation<S>, EnvError> {
        let legal = self.legal_actions(state)?;
        Ok(Observation::new(self.features(state), legal.into_mask()))
    }
}

/// 64-bit FNV-1a, used for instance ids so keys are stable across builds.
pub fn fnv1a(chunks: &[&[u8]]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for chunk in chunks {
        for &b in *chunk {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_fields_round_trip() {
        let key = StateKey::builder(42)
            .field(&[1, 2])
            .field(&[])
            .field(&[9])
            .finish();
        let (id, fields) = key.fields().unwrap();
        assert_eq!(id, 42);
        assert_eq!(fields, vec![&[1u8, 2][..], &[][..], &[9][..]]);
        assert_eq!(StateKey::from_hex(&key.to_hex()), Some(key));
    }

    #[test]
    fn malformed_hex_is_rejected() {
        assert_eq!(StateKey::from_hex("0"), None);
        assert_eq!(StateKey::from_hex("zz"), None);
        assert_eq!(StateKey::from_hex("0800"), None);
    }

    #[test]
    fn action_set_from_mask() {
        let set = ActionSet::from_mask(vec![false, true, false, true]);
        assert_eq!(set.actions(), &[1, 3]);
        assert!(set.contains(3));
        assert!(!set.contains(0));
        assert!(!set.contains(7));
        assert_eq!(set.len(), 2);
    }
}
