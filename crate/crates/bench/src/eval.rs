//! Episode evaluation and result aggregation.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use expose_core::tree::StatsDump;
use expose_core::{search, Environment, Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::derive_seed;

pub const CSV_HEADER: &str =
    "env,engine,iterations,instances,successes,success_rate,stderr,seed,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub index: usize,
    pub success: bool,
    pub steps: usize,
    pub reward: f64,
    pub simulated_steps: u64,
    pub actions: Vec<usize>,
}

/// Plays one episode, searching afresh from every visited state.
pub fn run_episode<E: Environment>(
    env: &E,
    params: &Params,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let cap = cfg.step_cap.unwrap_or_else(|| env.default_horizon());
    if cap == 0 {
        bail!("step cap must be at least 1");
    }
    let mut state = env.initial_state();
    let mut episode = Episode {
        index: 0,
        success: false,
        steps: 0,
        reward: 0.0,
        simulated_steps: 0,
        actions: Vec::new(),
    };
    while episode.steps < cap && !env.is_terminal(&state) {
        let report = search(env, &state, params, &cfg.search, rng)?;
        let tr = env.step(&state, report.action)?;
        episode.steps += 1;
        episode.reward += tr.reward;
        episode.simulated_steps += report.simulated_steps;
        episode.actions.push(report.action);
        state = tr.next_state;
    }
    episode.success = env.is_success(&state);
    Ok(episode)
}

/// Statistics dump of a single search from the initial state.
pub fn dump_root_search<E: Environment>(
    env: &E,
    params: &Params,
    cfg: &RunConfig,
    seed: u64,
) -> Result<StatsDump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = search(env, &env.initial_state(), params, &cfg.search, &mut rng)?;
    Ok(report.stats.dump(&report.visited))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub env: String,
    pub engine: String,
    pub config: RunConfig,
    pub instances: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Standard error of the success proportion.
    pub stderr: f64,
    pub seed: u64,
    pub wall_ms: u128,
}

impl ExperimentResult {
    pub fn from_episodes(
        env: &str,
        engine: &str,
        config: &RunConfig,
        episodes: &[Episode],
        wall_ms: u128,
    ) -> Self {
        let n = episodes.len();
        let successes = episodes.iter().filter(|e| e.success).count();
        let p = if n == 0 {
            0.0
        } else {
            successes as f64 / n as f64
        };
        let stderr = if n == 0 {
            0.0
        } else {
            (p * (1.0 - p) / n as f64).sqrt()
        };
        Self {
            env: env.to_string(),
            engine: engine.to_string(),
            config: config.clone(),
            instances: n,
            successes,
            success_rate: p,
            stderr,
            seed: config.search.seed,
            wall_ms,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{},{}",
            self.env,
            self.engine,
            self.config.search.iterations,
            self.instances,
            self.successes,
            self.success_rate,
            self.stderr,
            self.seed,
            self.wall_ms
        )
    }
}

pub fn to_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in results {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Episodes over every instance, in instance order. Instance `i` draws from
/// its own stream seeded by `(config seed, i)`, so the worker count has no
/// effect on the result.
pub fn run_all<E: Environment>(
    envs: &[E],
    params: &Params,
    cfg: &RunConfig,
) -> Result<Vec<Episode>> {
    if envs.is_empty() {
        bail!("empty dataset");
    }
    cfg.search.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .context("building worker pool")?;
    let master = cfg.search.seed;
    pool.install(|| {
        envs.par_iter()
            .enumerate()
            .map(|(i, env)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, i as u64));
                run_episode(env, params, cfg, &mut rng)
                    .map(|ep| Episode { index: i, ..ep })
                    .with_context(|| format!("instance {i}"))
            })
            .collect()
    })
}

/// Runs every instance and aggregates. With `deterministic` the wall time is
/// reported as 0 so repeated runs produce identical rows.
pub fn evaluate<E: Environment>(
    envs: &[E],
    params: &Params,
    cfg: &RunConfig,
    engine_label: &str,
    deterministic: bool,
) -> Result<(ExperimentResult, Vec<Episode>)> {
    let start = Instant::now();
    let episodes = run_all(envs, params, cfg)?;
    let wall_ms = if deterministic {
        0
    } else {
        start.elapsed().as_millis()
    };
    let tag = envs[0].tag();
    let result = ExperimentResult::from_episodes(tag, engine_label, cfg, &episodes, wall_ms);
    Ok((result, episodes))
}
