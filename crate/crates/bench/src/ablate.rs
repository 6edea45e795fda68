//! Ablation sweeps and the `{c, alpha}` grid search.

use anyhow::{bail, Result};
use expose_core::search::Ablation;
use expose_core::{EngineKind, Environment, Params};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::eval::{evaluate, ExperimentResult};

pub const C_GRID: &[f64] = &[0.1, 0.3, 1.0, 3.0, 10.0];
pub const ALPHA_GRID: &[f64] = &[0.01, 0.03, 0.1, 0.3, 1.0];

/// Full ExPoSe followed by each single-switch variant.
pub fn variants() -> Vec<(&'static str, Ablation)> {
    let full = Ablation::default();
    vec![
        ("expose", full),
        (
            "expose-no-is",
            Ablation {
                no_importance_sampling: true,
                ..full
            },
        ),
        (
            "expose-no-baseline",
            Ablation {
                no_baseline: true,
                ..full
            },
        ),
        (
            "expose-value-baseline",
            Ablation {
                value_net_baseline: true,
                ..full
            },
        ),
        (
            "expose-algorithm1",
            Ablation {
                algorithm1_mode: true,
                ..full
            },
        ),
    ]
}

pub fn run_ablations<E: Environment>(
    envs: &[E],
    params: &Params,
    base: &RunConfig,
    deterministic: bool,
) -> Result<Vec<ExperimentResult>> {
    variants()
        .into_iter()
        .map(|(label, ablation)| {
            let mut cfg = base.clone();
            cfg.search.engine = EngineKind::Expose;
            cfg.search.ablation = ablation;
            evaluate(envs, params, &cfg, label, deterministic).map(|(r, _)| r)
        })
        .collect()
}

/// Instance indices split into (validation, test); validation is 10% of the
/// data, at least one instance.
pub fn validation_split(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let v = count.div_ceil(10).min(count);
    let mut val = idx[..v].to_vec();
    let mut test = idx[v..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    (val, test)
}

pub struct GridSearch {
    pub best_c: f64,
    pub best_alpha: f64,
    /// One row per grid point, on the validation split.
    pub validation: Vec<ExperimentResult>,
    /// The best point on the held-out instances.
    pub test: ExperimentResult,
}

pub fn grid_label(c: f64, alpha: f64) -> String {
    format!("expose[c={c};alpha={alpha}]")
}

/// Picks `(c, alpha)` by validation success rate (first grid point wins
/// ties) and reports it on the remaining instances.
pub fn grid_search<E: Environment + Clone>(
    envs: &[E],
    params: &Params,
    base: &RunConfig,
    cs: &[f64],
    alphas: &[f64],
    deterministic: bool,
) -> Result<GridSearch> {
    if envs.len() < 2 {
        bail!("grid search needs at least two instances");
    }
    if cs.is_empty() || alphas.is_empty() {
        bail!("empty hyperparameter grid");
    }
    let (val_idx, test_idx) = validation_split(envs.len(), base.search.seed);
    let val: Vec<E> = val_idx.iter().map(|&i| envs[i].clone()).collect();
    let test: Vec<E> = test_idx.iter().map(|&i| envs[i].clone()).collect();
    let mut validation = Vec::new();
    let mut best: Option<(usize, f64, f64)> = None;
    for &c in cs {
        for &alpha in alphas {
            let mut cfg = base.clone();
            cfg.search.engine = EngineKind::Expose;
            cfg.search.c_explore = c;
            cfg.search.alpha = alpha;
            let (r, _) = evaluate(&val, params, &cfg, &grid_label(c, alpha), deterministic)?;
            if best.is_none_or(|(s, _, _)| r.successes > s) {
                best = Some((r.successes, c, alpha));
            }
            validation.push(r);
        }
    }
    let (_, best_c, best_alpha) = best.expect("non-empty grid");
    let mut cfg = base.clone();
    cfg.search.engine = EngineKind::Expose;
    cfg.search.c_explore = best_c;
    cfg.search.alpha = best_alpha;
    let (test, _) = evaluate(
        &test,
        params,
        &cfg,
        &grid_label(best_c, best_alpha),
        deterministic,
    )?;
    Ok(GridSearch {
        best_c,
        best_alpha,
        validation,
        test,
    })
}
