//! Expert demonstrations and behaviour cloning of the prior.

use expose_core::env::gridnav::{Cell, GridState};
use expose_core::env::hamcycle::CycleState;
use expose_core::env::{GraphInstance, GridInstance};
use expose_core::policy::{BehaviorCloning, Sample};
use expose_core::{EnvError, Environment, Params};
use rand::seq::SliceRandom;
use rand::Rng;

/// An environment with a demonstrator for behaviour cloning.
pub trait Expert: Environment {
    fn expert(&self, state: &Self::State) -> Result<usize, EnvError>;

    /// Extra start states for demonstrations besides the initial state.
    fn demo_starts<R: Rng + ?Sized>(&self, _count: usize, _rng: &mut R) -> Vec<Self::State> {
        Vec::new()
    }
}

impl Expert for GridInstance {
    fn expert(&self, state: &GridState) -> Result<usize, EnvError> {
        self.expert_action(state)
    }

    fn demo_starts<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<GridState> {
        let cells: Vec<Cell> = (0..self.height())
            .flat_map(|r| (0..self.width()).map(move |c| Cell::new(r, c)))
            .filter(|&c| c != self.goal() && self.distance_to_goal(c).is_some())
            .collect();
        cells
            .choose_multiple(rng, count)
            .map(|&agent| GridState { agent })
            .collect()
    }
}

impl Expert for GraphInstance {
    fn expert(&self, state: &CycleState) -> Result<usize, EnvError> {
        self.expert_action(state)
    }
}

/// Follows the expert from `state` to the end of the episode.
pub fn demonstrate<E: Expert>(
    env: &E,
    mut state: E::State,
    out: &mut Vec<Sample<f64>>,
) -> Result<(), EnvError> {
    for _ in 0..env.default_horizon() {
        if env.is_terminal(&state) {
            break;
        }
        let action = env.expert(&state)?;
        out.push(Sample {
            obs: env.observe(&state)?,
            action,
        });
        state = env.step(&state, action)?.next_state;
    }
    Ok(())
}

/// Demonstrations from the initial state plus `extra_starts` random starts
/// per instance.
pub fn expert_samples<E: Expert, R: Rng + ?Sized>(
    envs: &[E],
    extra_starts: usize,
    rng: &mut R,
) -> Result<Vec<Sample<f64>>, EnvError> {
    let mut out = Vec::new();
    for env in envs {
        demonstrate(env, env.initial_state(), &mut out)?;
        for start in env.demo_starts(extra_starts, rng) {
            demonstrate(env, start, &mut out)?;
        }
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub params: Params,
    pub samples: usize,
    pub loss: Vec<f64>,
}

pub fn train_prior<E: Expert, R: Rng + ?Sized>(
    envs: &[E],
    extra_starts: usize,
    trainer: &BehaviorCloning<f64>,
    rng: &mut R,
) -> anyhow::Result<TrainOutcome> {
    let data = expert_samples(envs, extra_starts, rng)?;
    let first = data
        .first()
        .ok_or_else(|| anyhow::anyhow!("no expert samples in dataset"))?;
    let (rows, cols) = first.obs.param_shape();
    if let Some(bad) = data.iter().find(|s| s.obs.param_shape() != (rows, cols)) {
        anyhow::bail!(
            "instances disagree on the parameter shape: {:?} vs {:?}",
            (rows, cols),
            bad.obs.param_shape()
        );
    }
    let (params, loss) = trainer.train(&data, Params::zeros(rows, cols), rng)?;
    Ok(TrainOutcome {
        params,
        samples: data.len(),
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_graphs, generate_grids};
    use expose_core::env::gridnav::GridGenParams;
    use expose_core::policy::policy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_demonstrations_follow_shortest_paths() {
        let grids = generate_grids(&GridGenParams::new(8, 8, 0.2, 5, 3), 3, 4).unwrap();
        let mut out = Vec::new();
        demonstrate(&grids[0], grids[0].initial_state(), &mut out).unwrap();
        assert_eq!(out.len(), grids[0].shortest_path().unwrap());
    }

    #[test]
    fn cloned_prior_agrees_with_expert_on_training_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let graphs = generate_graphs(10, 0.5, 20, 1).unwrap();
        let trainer = BehaviorCloning {
            epochs: 10,
            ..Default::default()
        };
        let outcome = train_prior(&graphs, 0, &trainer, &mut rng).unwrap();
        assert!(outcome.loss.last().unwrap() < &outcome.loss[0]);
        let data = expert_samples(&graphs, 0, &mut rng).unwrap();
        let agree = data
            .iter()
            .filter(|s| policy(&outcome.params, &s.obs).unwrap().argmax() == s.action)
            .count();
        assert!(agree * 3 > data.len(), "{agree}/{}", data.len());
    }
}
