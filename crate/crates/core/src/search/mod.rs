//! Online search engines: PUCT/UCT tree search, policy-gradient search (PGS)
//! and exploratory policy-gradient search (ExPoSe).
//!
//! Every engine takes a prior [`PolicyParams`] by reference, works on a
//! private copy, and returns a [`SearchReport`] with the chosen root action.

mod expose;
mod pgs;
mod puct;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::env::{EnvError, Environment, StateKey};
use crate::policy::{
    accumulate_entropy_grad, accumulate_grad_log_prob, policy, value_estimate, ActionDistribution,
    Observation, PolicyError, PolicyParams, ValueEstimator,
};
use crate::scalar::Scalar;
use crate::tree::StatsTable;

pub use expose::{
    expose_gradient, expose_search, expose_update, returns_and_weights, simulate,
    simulation_distribution, ExposeSearch, GradientEstimate,
};
pub use pgs::{pgs_search, pgs_update, PgsSearch};
pub use puct::{puct_search, puct_select, uct_search, uct_select};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("search root is terminal")]
    TerminalRoot,
    #[error("search root has no legal action")]
    DeadEndRoot,
    #[error("node has not been expanded")]
    UnexpandedNode,
    #[error("simulation policy gave the taken action zero probability at step {step}")]
    ZeroProbability { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EngineKind {
    /// No search: act greedily with respect to the prior.
    Prior,
    Puct,
    Uct,
    Pgs,
    #[default]
    Expose,
}

impl EngineKind {
    pub const ALL: [EngineKind; 5] = [
        EngineKind::Prior,
        EngineKind::Puct,
        EngineKind::Uct,
        EngineKind::Pgs,
        EngineKind::Expose,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EngineKind::Prior => "prior",
            EngineKind::Puct => "puct",
            EngineKind::Uct => "uct",
            EngineKind::Pgs => "pgs",
            EngineKind::Expose => "expose",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EngineKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown engine {s:?}"))
    }
}

/// Switches for the ExPoSe ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    /// Every importance weight is 1.
    pub no_importance_sampling: bool,
    /// Baseline is 0.
    pub no_baseline: bool,
    /// Baseline is the value estimator instead of the tree value.
    pub value_net_baseline: bool,
    /// One trajectory-level ratio product scales the whole gradient and the
    /// baseline is the mean reward-to-go of the trajectory.
    pub algorithm1_mode: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig<S> {
    pub engine: EngineKind,
    pub iterations: usize,
    /// Simulation depth; `None` uses the environment's default horizon.
    pub horizon: Option<usize>,
    pub c_explore: S,
    pub alpha: S,
    pub entropy_coef: S,
    pub l2_coef: S,
    pub gamma: S,
    pub seed: u64,
    pub ablation: Ablation,
    /// Upper bound on importance weights; `None` disables clipping.
    pub weight_clip: Option<S>,
    pub value_estimator: ValueEstimator,
    /// Add the truncation bootstrap to every Q̂_t.
    pub bootstrap_returns: bool,
}

impl<S: Scalar> Default for SearchConfig<S> {
    fn default() -> Self {
        Self {
            engine: EngineKind::Expose,
            iterations: 100,
            horizon: None,
            c_explore: S::one(),
            alpha: S::lit(0.1),
            entropy_coef: S::zero(),
            l2_coef: S::zero(),
            gamma: S::one(),
            seed: 0,
            ablation: Ablation::default(),
            weight_clip: Some(S::lit(10.0)),
            value_estimator: ValueEstimator::Heuristic,
            bootstrap_returns: false,
        }
    }
}

impl<S: Scalar> SearchConfig<S> {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: &str| Err(SearchError::InvalidConfig(msg.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be at least 1");
        }
        let finite_nonneg = |v: S| v.is_finite() && v >= S::zero();
        if !finite_nonneg(self.c_explore) {
            return bad("c_explore must be finite and non-negative");
        }
        if !finite_nonneg(self.alpha) {
            return bad("alpha must be finite and non-negative");
        }
        if !self.entropy_coef.is_finite() || !self.l2_coef.is_finite() {
            return bad("regulariser coefficients must be finite");
        }
        if !finite_nonneg(self.gamma) || self.gamma > S::one() {
            return bad("gamma must lie in [0, 1]");
        }
        if let Some(clip) = self.weight_clip {
            if clip.is_nan() || clip <= S::zero() {
                return bad("weight_clip must be positive");
            }
        }
        let ab = self.ablation;
        if ab.value_net_baseline && (ab.no_baseline || ab.algorithm1_mode) {
            return bad("value_net_baseline excludes no_baseline and algorithm1_mode");
        }
        Ok(())
    }

    pub fn horizon_for<E: Environment>(&self, env: &E) -> usize {
        self.horizon.unwrap_or_else(|| env.default_horizon())
    }
}

/// One sampled transition of a simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep<S> {
    pub key: StateKey,
    pub obs: Observation<S>,
    pub action: usize,
    pub reward: S,
    /// Distribution the action was drawn from, as it was at sampling time.
    pub pi_sim: ActionDistribution<S>,
    /// Value estimator output for this state.
    pub value_hint: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub steps: Vec<TrajectoryStep<S>>,
    pub final_key: StateKey,
    /// The last transition ended the episode.
    pub terminal: bool,
    pub success: bool,
    /// Value attached to the final state: 0 for terminals and dead ends,
    /// the value estimator at horizon truncation.
    pub bootstrap: S,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> S {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Discounted return including the bootstrap at the final state.
    pub fn bootstrapped_return(&self, gamma: S) -> S {
        let mut g = self.bootstrap;
        for step in self.steps.iter().rev() {
            g = step.reward + gamma * g;
        }
        g
    }

    /// Keys of every state on the trajectory, root first, final state last.
    pub fn state_keys(&self) -> Vec<StateKey> {
        self.steps
            .iter()
            .map(|s| s.key.clone())
            .chain(std::iter::once(self.final_key.clone()))
            .collect()
    }

    /// Q̂_t: undiscounted reward-to-go from each step.
    pub fn rewards_to_go(&self) -> Vec<S> {
        self.returns(false)
    }

    /// Q̂_t, optionally starting from the bootstrap instead of 0.
    pub fn returns(&self, bootstrap: bool) -> Vec<S> {
        let mut out = vec![S::zero(); self.steps.len()];
        let mut acc = if bootstrap { self.bootstrap } else { S::zero() };
        for (t, step) in self.steps.iter().enumerate().rev() {
            acc += step.reward;
            out[t] = acc;
        }
        out
    }
}

/// Result of one search from a root state.
#[derive(Debug, Clone)]
pub struct SearchReport<S> {
    pub action: usize,
    pub stats: StatsTable<S>,
    /// Every distinct state the search touched, sorted.
    pub visited: Vec<StateKey>,
    /// Final policy parameters (the prior itself for tree search).
    pub params: PolicyParams<S>,
    /// Number of environment steps taken by simulations.
    pub simulated_steps: u64,
}

/// Runs the engine named in `config`.
pub fn search<E, S, R>(
    env: &E,
    root: &E::State,
    params: &PolicyParams<S>,
    config: &SearchConfig<S>,
    rng: &mut R,
) -> Result<SearchReport<S>, SearchError>
where
    E: Environment,
    S: Scalar,
    R: Rng + ?Sized,
{
    match config.engine {
        EngineKind::Prior => prior_action(env, root, params),
        EngineKind::Puct => puct_search(env, root, params, config, rng),
        EngineKind::Uct => uct_search(env, root, params, config, rng),
        EngineKind::Pgs => pgs_search(env, root, params, config, rng),
        EngineKind::Expose => expose_search(env, root, params, config, rng),
    }
}

/// Greedy action of the prior with no search.
pub fn prior_action<E: Environment, S: Scalar>(
    env: &E,
    root: &E::State,
    params: &PolicyParams<S>,
) -> Result<SearchReport<S>, SearchError> {
    let obs = root_observation(env, root)?;
    let action = policy(params, &obs)?.argmax();
    Ok(SearchReport {
        action,
        stats: StatsTable::new(),
        visited: vec![env.encode(root)],
        params: params.clone(),
        simulated_steps: 0,
    })
}

pub(crate) fn root_observation<E: Environment, S: Scalar>(
    env: &E,
    root: &E::State,
) -> Result<Observation<S>, SearchError> {
    if env.is_terminal(root) {
        return Err(SearchError::TerminalRoot);
    }
    let obs = env.observe(root)?;
    if !obs.legal.iter().any(|&l| l) {
        return Err(SearchError::DeadEndRoot);
    }
    Ok(obs)
}

/// Observation of a non-terminal state, or `None` for terminals and dead ends.
pub(crate) fn observe_live<E: Environment, S: Scalar>(
    env: &E,
    state: &E::State,
) -> Result<Option<Observation<S>>, SearchError> {
    if env.is_terminal(state) {
        return Ok(None);
    }
    let obs: Observation<S> = env.observe(state)?;
    Ok(obs.legal.iter().any(|&l| l).then_some(obs))
}

/// Samples one trajectory from `root`. `pick` chooses the sampling
/// distribution and action at step `t`; with `record` set every step is
/// counted in `stats` and its transition registered.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rollout<E, S, R, F>(
    env: &E,
    root: &E::State,
    horizon: usize,
    estimator: ValueEstimator,
    stats: &mut StatsTable<S>,
    record: bool,
    rng: &mut R,
    mut pick: F,
) -> Result<Trajectory<S>, SearchError>
where
    E: Environment,
    S: Scalar,
    R: Rng + ?Sized,
    F: FnMut(
        usize,
        &StateKey,
        &Observation<S>,
        &StatsTable<S>,
        &mut R,
    ) -> Result<(ActionDistribution<S>, usize), SearchError>,
{
    let mut state = root.clone();
    let mut key = env.encode(&state);
    let mut steps = Vec::new();
    let mut terminal = env.is_terminal(&state);
    let mut dead_end = false;
    while !terminal && steps.len() < horizon {
        let Some(obs) = observe_live::<E, S>(env, &state)? else {
            dead_end = true;
            break;
        };
        let (pi_sim, action) = pick(steps.len(), &key, &obs, stats, rng)?;
        let tr = env.step(&state, action)?;
        let next_key = env.encode(&tr.next_state);
        let reward = S::lit(tr.reward);
        if record {
            stats.record_visit(&key, action);
            stats.register_child(&key, action, &next_key, reward, tr.terminal);
        }
        steps.push(TrajectoryStep {
            key,
            obs,
            action,
            reward,
            pi_sim,
            value_hint: value_estimate(estimator, env, &state),
        });
        terminal = tr.terminal;
        state = tr.next_state;
        key = next_key;
    }
    let bootstrap = if terminal || dead_end {
        S::zero()
    } else {
        value_estimate(estimator, env, &state)
    };
    Ok(Trajectory {
        steps,
        final_key: key,
        terminal,
        success: env.is_success(&state),
        bootstrap,
    })
}

/// Policy-gradient step shared by PGS and ExPoSe:
/// `Σ_t coeff_t ∇log π(a_t|s_t) + Σ_t (entropy_coef ∇H(s_t) − 2 l2_coef θ)`,
/// with π evaluated at the current parameters (`pis`).
pub(crate) fn policy_gradient<S: Scalar>(
    params: &PolicyParams<S>,
    steps: &[TrajectoryStep<S>],
    pis: &[ActionDistribution<S>],
    coeffs: &[S],
    entropy_coef: S,
    l2_coef: S,
) -> Result<PolicyParams<S>, SearchError> {
    let (rows, cols) = params.shape();
    let mut grad = PolicyParams::zeros(rows, cols);
    for ((step, pi), &coeff) in steps.iter().zip(pis).zip(coeffs) {
        accumulate_grad_log_prob(pi, &step.obs, step.action, coeff, &mut grad)?;
        if !entropy_coef.is_zero() {
            accumulate_entropy_grad(pi, &step.obs, entropy_coef, &mut grad);
        }
    }
    if !l2_coef.is_zero() {
        let per_step = S::lit(-2.0) * l2_coef * S::lit(steps.len() as f64);
        grad.add_scaled(params, per_step);
    }
    Ok(grad)
}

/// `r(s,a) + γ V̂(s')` for each legal action, 0 elsewhere. Terminal successors
/// contribute no future value.
pub(crate) fn initial_action_values<E: Environment, S: Scalar>(
    env: &E,
    state: &E::State,
    legal: &[bool],
    config: &SearchConfig<S>,
) -> Result<Vec<S>, SearchError> {
    let mut q = vec![S::zero(); legal.len()];
    for (a, _) in legal.iter().enumerate().filter(|(_, &l)| l) {
        let tr = env.step(state, a)?;
        let v: S = if tr.terminal {
            S::zero()
        } else {
            value_estimate(config.value_estimator, env, &tr.next_state)
        };
        q[a] = S::lit(tr.reward) + config.gamma * v;
    }
    Ok(q)
}

pub(crate) fn current_policies<S: Scalar>(
    params: &PolicyParams<S>,
    steps: &[TrajectoryStep<S>],
) -> Result<Vec<ActionDistribution<S>>, SearchError> {
    steps
        .iter()
        .map(|s| policy(params, &s.obs).map_err(SearchError::from))
        .collect()
}

pub(crate) fn sorted_keys(set: HashSet<StateKey>) -> Vec<StateKey> {
    let mut keys: Vec<StateKey> = set.into_iter().collect();
    keys.sort();
    keys
}
