//! Monte-Carlo tree search with PUCT or UCB1 selection.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use super::{
    initial_action_values, observe_live, root_observation, sorted_keys, SearchConfig, SearchError,
    SearchReport,
};
use crate::env::{Environment, StateKey};
use crate::policy::{policy, value_estimate, PolicyParams};
use crate::scalar::{argmax_by, Scalar};
use crate::tree::{NodeStats, StatsTable};

/// `argmax_a Q(s,a) + c π(a|s) √N(s) / (1 + N(s,a))` over legal actions.
/// Unvisited actions read their initial value. Ties go to the lowest index.
pub fn puct_select<S: Scalar>(
    node: &NodeStats<S>,
    prior: &[S],
    c: S,
) -> Result<usize, SearchError> {
    let legal = node.legal.as_ref().ok_or(SearchError::UnexpandedNode)?;
    let sqrt_n = S::lit(node.n_state as f64).sqrt();
    let scores = (0..legal.len()).map(|a| {
        let u = c * prior[a] * sqrt_n / (S::one() + S::lit(node.visits(a) as f64));
        node.q_or_init(a) + u
    });
    argmax_by(scores, |a| legal[a]).ok_or(SearchError::UnexpandedNode)
}

/// UCB1: unvisited legal actions first in index order, then
/// `argmax_a Q(s,a) + c √(ln N(s) / N(s,a))`.
pub fn uct_select<S: Scalar>(node: &NodeStats<S>, c: S) -> Result<usize, SearchError> {
    let legal = node.legal.as_ref().ok_or(SearchError::UnexpandedNode)?;
    if let Some(a) = (0..legal.len()).find(|&a| legal[a] && node.visits(a) == 0) {
        return Ok(a);
    }
    let ln_n = S::lit(node.n_state as f64).ln();
    let scores = (0..legal.len()).map(|a| {
        let n = S::lit(node.visits(a) as f64);
        node.q_or_init(a) + c * (ln_n / n).sqrt()
    });
    argmax_by(scores, |a| legal[a]).ok_or(SearchError::UnexpandedNode)
}

#[derive(Clone, Copy, PartialEq)]
enum Rule {
    Puct,
    Uct,
}

/// PUCT search: select with [`puct_select`], expand one node per iteration
/// (children initialised with `r + γ V̂(s')`), roll out with π_θ to the horizon
/// and back up each edge's discounted return. Returns `argmax_a Q(root, a)`.
pub fn puct_search<E, S, R>(
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
    tree_search(env, root, params, config, rng, Rule::Puct)
}

/// UCT search: as [`puct_search`] with UCB1 selection and zero-initialised
/// action values.
pub fn uct_search<E, S, R>(
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
    tree_search(env, root, params, config, rng, Rule::Uct)
}

struct Edge<S> {
    key: StateKey,
    action: usize,
    reward: S,
}

fn tree_search<E, S, R>(
    env: &E,
    root: &E::State,
    params: &PolicyParams<S>,
    config: &SearchConfig<S>,
    rng: &mut R,
    rule: Rule,
) -> Result<SearchReport<S>, SearchError>
where
    E: Environment,
    S: Scalar,
    R: Rng + ?Sized,
{
    config.validate()?;
    root_observation::<E, S>(env, root)?;
    let horizon = config.horizon_for(env);
    let gamma = config.gamma;
    let root_key = env.encode(root);
    let mut stats = StatsTable::new();
    let mut priors: HashMap<StateKey, Vec<S>> = HashMap::new();
    let mut visited = HashSet::from([root_key.clone()]);
    let mut simulated_steps = 0u64;

    for _ in 0..config.iterations {
        let mut state = root.clone();
        let mut key = root_key.clone();
        let mut path: Vec<Edge<S>> = Vec::new();
        let mut leaf_value = S::zero();
        let mut terminal = false;

        // Selection through expanded nodes; the first unexpanded node is
        // expanded and the loop falls through to the rollout.
        while path.len() < horizon {
            let expanded = stats.get(&key).is_some_and(NodeStats::is_expanded);
            if !expanded {
                match expand(env, &state, &key, params, config, &mut stats, rule)? {
                    Some(prior) => {
                        priors.insert(key.clone(), prior);
                    }
                    None => break,
                }
            }
            let node = stats.get(&key).expect("expanded above");
            let action = match rule {
                Rule::Puct => puct_select(node, &priors[&key], config.c_explore)?,
                Rule::Uct => uct_select(node, config.c_explore)?,
            };
            let tr = env.step(&state, action)?;
            simulated_steps += 1;
            let next_key = env.encode(&tr.next_state);
            let reward = S::lit(tr.reward);
            stats.record_visit(&key, action);
            stats.register_child(&key, action, &next_key, reward, tr.terminal);
            visited.insert(next_key.clone());
            path.push(Edge {
                key: std::mem::replace(&mut key, next_key),
                action,
                reward,
            });
            state = tr.next_state;
            if tr.terminal {
                terminal = true;
                break;
            }
            if !expanded {
                break;
            }
        }

        if !terminal {
            let (value, steps) =
                rollout_value(env, &state, horizon - path.len(), params, config, rng)?;
            simulated_steps += steps;
            leaf_value = value;
        }

        let mut g = leaf_value;
        for edge in path.iter().rev() {
            g = edge.reward + gamma * g;
            stats.mc_backup(&[(edge.key.clone(), edge.action)], g);
        }
    }

    let action = stats
        .get(&root_key)
        .and_then(NodeStats::best_action)
        .ok_or(SearchError::UnexpandedNode)?;
    Ok(SearchReport {
        action,
        stats,
        visited: sorted_keys(visited),
        params: params.clone(),
        simulated_steps,
    })
}

/// Expands `key` and returns its prior, or `None` for terminals and dead ends.
fn expand<E, S>(
    env: &E,
    state: &E::State,
    key: &StateKey,
    params: &PolicyParams<S>,
    config: &SearchConfig<S>,
    stats: &mut StatsTable<S>,
    rule: Rule,
) -> Result<Option<Vec<S>>, SearchError>
where
    E: Environment,
    S: Scalar,
{
    let Some(obs) = observe_live::<E, S>(env, state)? else {
        return Ok(None);
    };
    let prior = policy(params, &obs)?.probs;
    let q_init = match rule {
        Rule::Puct => initial_action_values(env, state, &obs.legal, config)?,
        Rule::Uct => vec![S::zero(); obs.legal.len()],
    };
    stats.node_mut(key).expand(obs.legal, q_init);
    Ok(Some(prior))
}

/// Discounted return of a π_θ rollout of at most `depth` steps from `state`,
/// bootstrapped with the value estimator if truncated.
fn rollout_value<E, S, R>(
    env: &E,
    state: &E::State,
    depth: usize,
    params: &PolicyParams<S>,
    config: &SearchConfig<S>,
    rng: &mut R,
) -> Result<(S, u64), SearchError>
where
    E: Environment,
    S: Scalar,
    R: Rng + ?Sized,
{
    let mut state = state.clone();
    let mut rewards = Vec::new();
    let mut tail = S::zero();
    while let Some(obs) = observe_live::<E, S>(env, &state)? {
        if rewards.len() == depth {
            tail = value_estimate(config.value_estimator, env, &state);
            break;
        }
        let action = policy(params, &obs)?.sample(rng);
        let tr = env.step(&state, action)?;
        rewards.push(S::lit(tr.reward));
        state = tr.next_state;
        if tr.terminal {
            break;
        }
    }
    let mut g = tail;
    for r in rewards.iter().rev() {
        g = *r + config.gamma * g;
    }
    Ok((g, rewards.len() as u64))
}
