//! Online policy-gradient and tree search over deterministic planning
//! environments.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the environments and the benchmark
//! harness use.

pub mod env;
pub mod policy;
pub mod scalar;
pub mod search;
pub mod tree;

pub use env::{EnvError, Environment, StateKey, Transition};
pub use policy::{ActionDistribution, Features, Observation, PolicyError, ValueEstimator};
pub use scalar::Scalar;
pub use search::{search, EngineKind, SearchError, SearchReport};

pub type Params = policy::PolicyParams<f64>;
pub type Stats = tree::StatsTable<f64>;
pub type Config = search::SearchConfig<f64>;
pub type Traj = search::Trajectory<f64>;
