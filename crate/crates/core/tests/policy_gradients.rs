use expose_core::policy::{
    entropy_grad, grad_log_prob, l2_grad, logits, policy, softmax, PolicyParams,
};
use expose_core::{Features, Observation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random observation in either layout with at least one legal action.
fn draw(rng: &mut ChaCha8Rng) -> (PolicyParams<f64>, Observation<f64>, usize) {
    let actions = rng.gen_range(2..6);
    let mut legal: Vec<bool> = (0..actions).map(|_| rng.gen_bool(0.7)).collect();
    let forced = rng.gen_range(0..actions);
    legal[forced] = true;
    let features = if rng.gen_bool(0.5) {
        let dense: Vec<f64> = (0..rng.gen_range(1..7))
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        Features::dense(&dense)
    } else {
        let width = rng.gen_range(1..5);
        Features::per_action(
            width,
            (0..width * actions)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
    };
    let obs = Observation::new(features, legal);
    let (rows, cols) = obs.param_shape();
    let weights = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let legal_actions: Vec<usize> = (0..actions).filter(|&a| obs.legal[a]).collect();
    let action = legal_actions[rng.gen_range(0..legal_actions.len())];
    (PolicyParams::from_vec(rows, cols, weights), obs, action)
}

fn log_prob(params: &PolicyParams<f64>, obs: &Observation<f64>, action: usize) -> f64 {
    policy(params, obs).unwrap().probs[action].ln()
}

fn entropy(params: &PolicyParams<f64>, obs: &Observation<f64>) -> f64 {
    policy(params, obs).unwrap().entropy()
}

fn neg_sq_norm(params: &PolicyParams<f64>) -> f64 {
    -params.as_slice().iter().map(|w| w * w).sum::<f64>()
}

/// Central differences of `f` with step `h` at every parameter.
fn finite_diff(
    params: &PolicyParams<f64>,
    h: f64,
    f: impl Fn(&PolicyParams<f64>) -> f64,
) -> Vec<f64> {
    (0..params.as_slice().len())
        .map(|i| {
            let mut plus = params.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = numeric
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-3);
    diff / scale
}

#[test]
fn closed_form_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (params, obs, action) = draw(&mut rng);
        let g = grad_log_prob(&params, &obs, action).unwrap();
        let fd = finite_diff(&params, 1e-5, |p| log_prob(p, &obs, action));
        assert!(rel_err(g.as_slice(), &fd) <= 1e-6);

        let g = entropy_grad(&params, &obs).unwrap();
        let fd = finite_diff(&params, 1e-5, |p| entropy(p, &obs));
        assert!(rel_err(g.as_slice(), &fd) <= 1e-6);

        let g = l2_grad(&params);
        let fd = finite_diff(&params, 1e-5, neg_sq_norm);
        assert!(rel_err(g.as_slice(), &fd) <= 1e-6);
    }
}

#[test]
fn score_function_has_zero_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (params, obs, _) = draw(&mut rng);
        let pi = policy(&params, &obs).unwrap();
        let mut total = vec![0.0; params.as_slice().len()];
        for a in (0..obs.legal.len()).filter(|&a| obs.legal[a]) {
            let g = grad_log_prob(&params, &obs, a).unwrap();
            for (t, v) in total.iter_mut().zip(g.as_slice()) {
                *t += pi.probs[a] * v;
            }
        }
        assert!(total.iter().all(|v| v.abs() <= 1e-12), "{total:?}");
    }
}

#[test]
fn zero_weights_have_zero_l2_gradient() {
    let g = l2_grad(&PolicyParams::<f64>::zeros(3, 4));
    assert!(g.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn f32_and_f64_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let (params, obs, action) = draw(&mut rng);
        let g64 = grad_log_prob(&params, &obs, action).unwrap();
        let obs32 = Observation::new(
            match &obs.features {
                Features::Shared { .. } => {
                    let dense: Vec<f32> =
                        obs.features.to_dense().iter().map(|&v| v as f32).collect();
                    Features::dense(&dense)
                }
                Features::PerAction { width, values } => {
                    Features::per_action(*width, values.iter().map(|&v| v as f32).collect())
                }
            },
            obs.legal.clone(),
        );
        let g32 = grad_log_prob(&params.cast::<f32>(), &obs32, action).unwrap();
        for (a, b) in g64.as_slice().iter().zip(g32.as_slice()) {
            assert!((a - f64::from(*b)).abs() < 1e-4);
        }
    }
}

proptest! {
    #[test]
    fn softmax_is_normalised_and_shift_invariant(
        raw in prop::collection::vec(prop::option::weighted(0.8, -30.0f64..30.0), 1..8),
        shift in -100.0f64..100.0,
    ) {
        prop_assume!(raw.iter().any(Option::is_some));
        let l: Vec<f64> = raw.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let shifted: Vec<f64> = l.iter().map(|v| v + shift).collect();
        let p = softmax(&l).unwrap();
        let q = softmax(&shifted).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (i, v) in raw.iter().enumerate() {
            prop_assert!(p.probs[i] >= 0.0);
            if v.is_none() {
                prop_assert_eq!(p.probs[i], 0.0);
            }
            prop_assert!((p.probs[i] - q.probs[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn argmax_survives_feature_rescaling(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (params, obs, _) = draw(&mut rng);
        let scaled_features = match &obs.features {
            Features::Shared { .. } => {
                let dense: Vec<f64> = obs.features.to_dense().iter().map(|v| v * scale).collect();
                Features::dense(&dense)
            }
            Features::PerAction { width, values } => {
                Features::per_action(*width, values.iter().map(|v| v * scale).collect())
            }
        };
        let scaled_obs = Observation::new(scaled_features, obs.legal.clone());
        let compensated = params.scaled(1.0 / scale);
        let before = policy(&params, &obs).unwrap().argmax();
        let after = policy(&compensated, &scaled_obs).unwrap().argmax();
        let l = logits(&params, &obs).unwrap();
        let top = l[before];
        // Only compare when the maximum is not a numerical near-tie.
        prop_assume!(l.iter().enumerate().all(|(a, v)| a == before || *v < top - 1e-9));
        prop_assert_eq!(before, after);
    }
}
