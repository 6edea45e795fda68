//! Policy-gradient search: REINFORCE on the simulation policy, with a PUCT
//! rule choosing the first action of every simulation.

use std::collections::HashSet;

use rand::Rng;

use super::{
    current_policies, initial_action_values, policy_gradient, puct_select, rollout,
    root_observation, sorted_keys, SearchConfig, SearchError, SearchReport, Trajectory,
};
use crate::env::{Environment, StateKey};
use crate::policy::{policy, Observation, PolicyParams};
use crate::scalar::Scalar;
use crate::tree::{NodeStats, StatsTable};

/// REINFORCE step on one trajectory:
/// `θ += α [Σ_t Q̂_t ∇log π_θ(a_t|s_t) + Σ_t (entropy_coef ∇H(s_t) − 2 l2_coef θ)]`.
pub fn pgs_update<S: Scalar>(
    params: &mut PolicyParams<S>,
    trajectory: &Trajectory<S>,
    config: &SearchConfig<S>,
) -> Result<(), SearchError> {
    let pis = current_policies(params, &trajectory.steps)?;
    let q_hat = trajectory.returns(config.bootstrap_returns);
    let grad = policy_gradient(
        params,
        &trajectory.steps,
        &pis,
        &q_hat,
        config.entropy_coef,
        config.l2_coef,
    )?;
    params.add_scaled(&grad, config.alpha);
    Ok(())
}

/// Incremental PGS. Statistics are kept for the root only.
pub struct PgsSearch<'a, E: Environment, S> {
    env: &'a E,
    root: E::State,
    root_key: StateKey,
    root_obs: Observation<S>,
    config: SearchConfig<S>,
    horizon: usize,
    params: PolicyParams<S>,
    stats: StatsTable<S>,
    visited: HashSet<StateKey>,
    simulated_steps: u64,
}

impl<'a, E: Environment, S: Scalar> PgsSearch<'a, E, S> {
    pub fn new(
        env: &'a E,
        root: &E::State,
        prior: &PolicyParams<S>,
        config: &SearchConfig<S>,
    ) -> Result<Self, SearchError> {
        config.validate()?;
        let root_obs = root_observation(env, root)?;
        // Surface shape errors before the first iteration.
        policy(prior, &root_obs)?;
        let root_key = env.encode(root);
        let q_init = initial_action_values(env, root, &root_obs.legal, config)?;
        let mut stats = StatsTable::new();
        stats
            .node_mut(&root_key)
            .expand(root_obs.legal.clone(), q_init);
        Ok(Self {
            env,
            root: root.clone(),
            root_key: root_key.clone(),
            root_obs,
            horizon: config.horizon_for(env),
            config: config.clone(),
            params: prior.clone(),
            stats,
            visited: HashSet::from([root_key]),
            simulated_steps: 0,
        })
    }

    /// One simulation and one parameter update. Returns the trajectory.
    pub fn iterate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Trajectory<S>, SearchError> {
        let root_prior = policy(&self.params, &self.root_obs)?;
        let root_action = {
            let node = self.stats.get(&self.root_key).expect("root is expanded");
            puct_select(node, &root_prior.probs, self.config.c_explore)?
        };
        let params = &self.params;
        let mut root_prior = Some(root_prior);
        let trajectory = rollout(
            self.env,
            &self.root,
            self.horizon,
            self.config.value_estimator,
            &mut self.stats,
            false,
            rng,
            |t, _, obs, _, rng| {
                if t == 0 {
                    let dist = root_prior.take().expect("root step happens once");
                    return Ok((dist, root_action));
                }
                let dist = policy(params, obs)?;
                let action = dist.sample(rng);
                Ok((dist, action))
            },
        )?;
        self.simulated_steps += trajectory.len() as u64;
        self.visited.extend(trajectory.state_keys());
        let value = trajectory.bootstrapped_return(self.config.gamma);
        self.stats.record_visit(&self.root_key, root_action);
        self.stats
            .mc_backup(&[(self.root_key.clone(), root_action)], value);
        pgs_update(&mut self.params, &trajectory, &self.config)?;
        Ok(trajectory)
    }

    pub fn params(&self) -> &PolicyParams<S> {
        &self.params
    }

    pub fn stats(&self) -> &StatsTable<S> {
        &self.stats
    }

    /// `argmax_a Q(root, a)`, lowest index on ties.
    pub fn best_action(&self) -> usize {
        self.stats
            .get(&self.root_key)
            .and_then(NodeStats::best_action)
            .expect("root is expanded with a legal action")
    }

    pub fn into_report(self) -> SearchReport<S> {
        SearchReport {
            action: self.best_action(),
            stats: self.stats,
            visited: sorted_keys(self.visited),
            params: self.params,
            simulated_steps: self.simulated_steps,
        }
    }
}

pub fn pgs_search<E, S, R>(
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
    let mut search = PgsSearch::new(env, root, params, config)?;
    for _ in 0..config.iterations {
        search.iterate(rng)?;
    }
    Ok(search.into_report())
}
