//! Exploratory policy-gradient search.
//!
//! Each iteration samples one trajectory from the count-bonused simulation
//! policy, backs tree values up along it, and takes an importance-weighted
//! policy-gradient step on the prior's parameters.

use std::collections::HashSet;

use rand::Rng;

use super::{
    current_policies, policy_gradient, rollout, root_observation, sorted_keys, SearchConfig,
    SearchError, SearchReport, Trajectory,
};
use crate::env::{Environment, StateKey};
use crate::policy::{logits, policy, softmax, ActionDistribution, Observation, PolicyParams};
use crate::scalar::Scalar;
use crate::tree::StatsTable;

/// `softmax(φ_θ(s,·) + c / (1 + N(s,·)))` over legal actions.
pub fn simulation_distribution<S: Scalar>(
    params: &PolicyParams<S>,
    stats: &StatsTable<S>,
    key: &StateKey,
    obs: &Observation<S>,
    c: S,
) -> Result<ActionDistribution<S>, SearchError> {
    let mut l = logits(params, obs)?;
    let node = stats.get(key);
    for (a, logit) in l.iter_mut().enumerate() {
        if obs.legal[a] {
            let n = node.map_or(0, |n| n.visits(a));
            *logit += c / (S::one() + S::lit(n as f64));
        }
    }
    Ok(softmax(&l)?)
}

/// Samples a trajectory from the simulation policy until a terminal state,
/// a dead end or the horizon. Each step's distribution is captured before its
/// own visit is counted; visits and transitions are recorded in `stats`.
pub fn simulate<E, S, R>(
    env: &E,
    root: &E::State,
    params: &PolicyParams<S>,
    stats: &mut StatsTable<S>,
    config: &SearchConfig<S>,
    rng: &mut R,
) -> Result<Trajectory<S>, SearchError>
where
    E: Environment,
    S: Scalar,
    R: Rng + ?Sized,
{
    rollout(
        env,
        root,
        config.horizon_for(env),
        config.value_estimator,
        stats,
        true,
        rng,
        |_, key, obs, stats, rng| {
            let dist = simulation_distribution(params, stats, key, obs, config.c_explore)?;
            let action = dist.sample(rng);
            Ok((dist, action))
        },
    )
}

/// Per-step quantities of the importance-sampled gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<S> {
    /// π_θ(a_t|s_t) / π_sim(a_t|s_t).
    pub ratios: Vec<S>,
    /// w_t: running product of the ratios up to and including t, clipped.
    pub weights: Vec<S>,
    /// Q̂_t: undiscounted reward-to-go.
    pub returns: Vec<S>,
    /// π_θ(·|s_t) at the current parameters.
    pub pi_theta: Vec<ActionDistribution<S>>,
}

/// Fills Q̂_t backwards and w_t forwards, with π_θ recomputed from `params`.
pub fn returns_and_weights<S: Scalar>(
    trajectory: &Trajectory<S>,
    params: &PolicyParams<S>,
    config: &SearchConfig<S>,
) -> Result<GradientEstimate<S>, SearchError> {
    let pi_theta = current_policies(params, &trajectory.steps)?;
    let mut ratios = Vec::with_capacity(trajectory.len());
    let mut weights = Vec::with_capacity(trajectory.len());
    let mut running = S::one();
    for (t, (step, pi)) in trajectory.steps.iter().zip(&pi_theta).enumerate() {
        let q = step.pi_sim.prob(step.action);
        if q <= S::zero() {
            return Err(SearchError::ZeroProbability { step: t });
        }
        let ratio = pi.prob(step.action) / q;
        ratios.push(ratio);
        running *= ratio;
        weights.push(clip(running, config.weight_clip));
    }
    Ok(GradientEstimate {
        ratios,
        weights,
        returns: trajectory.returns(config.bootstrap_returns),
        pi_theta,
    })
}

fn clip<S: Scalar>(w: S, bound: Option<S>) -> S {
    match bound {
        Some(b) => w.min(b),
        None => w,
    }
}

/// Baseline b_t for every step, as selected by the ablation flags.
pub fn baselines<S: Scalar>(
    trajectory: &Trajectory<S>,
    returns: &[S],
    stats: &StatsTable<S>,
    config: &SearchConfig<S>,
) -> Vec<S> {
    let ab = config.ablation;
    let n = trajectory.len();
    if ab.no_baseline {
        vec![S::zero(); n]
    } else if ab.algorithm1_mode {
        let mean = returns.iter().copied().sum::<S>() / S::lit(n.max(1) as f64);
        vec![mean; n]
    } else if ab.value_net_baseline {
        trajectory.steps.iter().map(|s| s.value_hint).collect()
    } else {
        trajectory
            .steps
            .iter()
            .map(|s| stats.tree_value_or(&s.key, || s.value_hint))
            .collect()
    }
}

/// Full ascent direction for one trajectory (before the learning rate):
/// `Σ_t w_t (Q̂_t − b_t) ∇log π_θ(a_t|s_t)` plus the regularisers. In
/// `algorithm1_mode` the per-step weights are replaced by one trajectory ratio.
pub fn expose_gradient<S: Scalar>(
    params: &PolicyParams<S>,
    trajectory: &Trajectory<S>,
    estimate: &GradientEstimate<S>,
    stats: &StatsTable<S>,
    config: &SearchConfig<S>,
) -> Result<PolicyParams<S>, SearchError> {
    let ab = config.ablation;
    let b = baselines(trajectory, &estimate.returns, stats, config);
    let rho = if ab.no_importance_sampling {
        S::one()
    } else {
        clip(
            estimate
                .ratios
                .iter()
                .copied()
                .fold(S::one(), |acc, r| acc * r),
            config.weight_clip,
        )
    };
    let coeffs: Vec<S> = (0..trajectory.len())
        .map(|t| {
            let advantage = estimate.returns[t] - b[t];
            if ab.no_importance_sampling {
                advantage
            } else if ab.algorithm1_mode {
                rho * advantage
            } else {
                estimate.weights[t] * advantage
            }
        })
        .collect();
    policy_gradient(
        params,
        &trajectory.steps,
        &estimate.pi_theta,
        &coeffs,
        config.entropy_coef,
        config.l2_coef,
    )
}

/// One ExPoSe parameter step from a trajectory whose transitions are already
/// backed up in `stats`. Returns the estimate used.
pub fn expose_update<S: Scalar>(
    params: &mut PolicyParams<S>,
    trajectory: &Trajectory<S>,
    stats: &StatsTable<S>,
    config: &SearchConfig<S>,
) -> Result<GradientEstimate<S>, SearchError> {
    let estimate = returns_and_weights(trajectory, params, config)?;
    let grad = expose_gradient(params, trajectory, &estimate, stats, config)?;
    params.add_scaled(&grad, config.alpha);
    Ok(estimate)
}

/// Incremental ExPoSe search owning its parameter copy and statistics.
pub struct ExposeSearch<'a, E: Environment, S> {
    env: &'a E,
    root: E::State,
    root_obs: Observation<S>,
    config: SearchConfig<S>,
    params: PolicyParams<S>,
    stats: StatsTable<S>,
    visited: HashSet<StateKey>,
    simulated_steps: u64,
}

impl<'a, E: Environment, S: Scalar> ExposeSearch<'a, E, S> {
    pub fn new(
        env: &'a E,
        root: &E::State,
        prior: &PolicyParams<S>,
        config: &SearchConfig<S>,
    ) -> Result<Self, SearchError> {
        config.validate()?;
        let root_obs = root_observation(env, root)?;
        policy(prior, &root_obs)?;
        Ok(Self {
            env,
            root: root.clone(),
            root_obs,
            config: config.clone(),
            params: prior.clone(),
            stats: StatsTable::new(),
            visited: HashSet::from([env.encode(root)]),
            simulated_steps: 0,
        })
    }

    /// simulate → Bellman backup → importance-weighted update.
    pub fn iterate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Trajectory<S>, SearchError> {
        let trajectory = simulate(
            self.env,
            &self.root,
            &self.params,
            &mut self.stats,
            &self.config,
            rng,
        )?;
        if !trajectory.terminal {
            self.stats
                .mark_leaf(&trajectory.final_key, trajectory.bootstrap);
        }
        let keys = trajectory.state_keys();
        self.stats.bellman_backup(&keys, self.config.gamma);
        self.simulated_steps += trajectory.len() as u64;
        self.visited.extend(keys);
        expose_update(&mut self.params, &trajectory, &self.stats, &self.config)?;
        Ok(trajectory)
    }

    pub fn params(&self) -> &PolicyParams<S> {
        &self.params
    }

    pub fn stats(&self) -> &StatsTable<S> {
        &self.stats
    }

    pub fn simulated_steps(&self) -> u64 {
        self.simulated_steps
    }

    /// `argmax_a π_θ(a|root)` at the current parameters.
    pub fn best_action(&self) -> Result<usize, SearchError> {
        Ok(policy(&self.params, &self.root_obs)?.argmax())
    }

    pub fn into_report(self) -> Result<SearchReport<S>, SearchError> {
        Ok(SearchReport {
            action: self.best_action()?,
            stats: self.stats,
            visited: sorted_keys(self.visited),
            params: self.params,
            simulated_steps: self.simulated_steps,
        })
    }
}

pub fn expose_search<E, S, R>(
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
    let mut search = ExposeSearch::new(env, root, params, config)?;
    for _ in 0..config.iterations {
        search.iterate(rng)?;
    }
    search.into_report()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Features;

    fn obs2() -> Observation<f64> {
        Observation::new(Features::dense(&[1.0]), vec![true, true])
    }

    fn key() -> StateKey {
        StateKey::builder(1).field(&[0]).finish()
    }

    #[test]
    fn zero_bonus_matches_policy() {
        let params = PolicyParams::from_vec(2, 1, vec![0.3, -0.8]);
        let stats = StatsTable::new();
        let d = simulation_distribution(&params, &stats, &key(), &obs2(), 0.0).unwrap();
        assert_eq!(d, policy(&params, &obs2()).unwrap());
    }

    #[test]
    fn bonus_uses_counts() {
        let params = PolicyParams::zeros(2, 1);
        let mut stats = StatsTable::new();
        for _ in 0..3 {
            stats.record_visit(&key(), 1);
        }
        let d = simulation_distribution(&params, &stats, &key(), &obs2(), 1.0).unwrap();
        let e = softmax(&[1.0, 0.25]).unwrap();
        assert!((d.probs[0] - e.probs[0]).abs() < 1e-15);
        assert!((d.probs[1] - e.probs[1]).abs() < 1e-15);
    }

    #[test]
    fn bonus_vanishes_with_counts() {
        let params = PolicyParams::from_vec(2, 1, vec![0.5, -0.5]);
        let mut stats = StatsTable::new();
        let n = 10_000_000u64;
        let node = stats.node_mut(&key());
        node.expand(vec![true, true], vec![0.0, 0.0]);
        node.n_action[0] = n;
        node.n_action[1] = n;
        let d = simulation_distribution(&params, &stats, &key(), &obs2(), 1.0).unwrap();
        let p = policy(&params, &obs2()).unwrap();
        assert!((d.probs[0] - p.probs[0]).abs() < 1e-6);
    }
}
