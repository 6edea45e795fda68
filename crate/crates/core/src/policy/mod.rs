//! Linear-softmax policy over hand-specified features.
//!
//! The learnable part is a single weight matrix. Two feature layouts exist:
//!
//! * [`Features::Shared`]: one state feature vector `f`; the matrix has one row
//!   per action and `logit[a] = W[a] · f`.
//! * [`Features::PerAction`]: one width-`k` block per action slot; the matrix is
//!   a single shared row and `logit[a] = W[0] · f_a`.
//!
//! Illegal actions get a logit of `-inf` and probability exactly zero.

mod checkpoint;
mod clone;

use rand::Rng;
use thiserror::Error;

use crate::env::Environment;
use crate::scalar::{argmax_by, Scalar};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use clone::{behavior_clone, cross_entropy, BehaviorCloning, Sample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no legal action")]
    AllIllegal,
    #[error("action {action} is not legal")]
    IllegalAction { action: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features<S> {
    /// Sparse state features: `(index, value)` pairs, indices strictly increasing.
    Shared {
        len: usize,
        entries: Vec<(usize, S)>,
    },
    /// Dense per-action blocks, `values.len() == width * num_actions`.
    PerAction { width: usize, values: Vec<S> },
}

impl<S: Scalar> Features<S> {
    pub fn dense(values: &[S]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, &v)| (i, v))
            .collect();
        Features::Shared {
            len: values.len(),
            entries,
        }
    }

    pub fn per_action(width: usize, values: Vec<S>) -> Self {
        assert!(width > 0 && values.len().is_multiple_of(width));
        Features::PerAction { width, values }
    }

    /// Weight-matrix shape `(rows, cols)` these features need for `num_actions`.
    pub fn param_shape(&self, num_actions: usize) -> (usize, usize) {
        match self {
            Features::Shared { len, .. } => (num_actions, *len),
            Features::PerAction { width, .. } => (1, *width),
        }
    }

    /// Flat dense view (shared vector, or concatenated per-action blocks).
    pub fn to_dense(&self) -> Vec<S> {
        match self {
            Features::Shared { len, entries } => {
                let mut out = vec![S::zero(); *len];
                for &(i, v) in entries {
                    out[i] = v;
                }
                out
            }
            Features::PerAction { values, .. } => values.clone(),
        }
    }

    fn logit(&self, params: &PolicyParams<S>, action: usize) -> S {
        match self {
            Features::Shared { entries, .. } => {
                let row = params.row(action);
                entries.iter().map(|&(i, v)| row[i] * v).sum()
            }
            Features::PerAction { width, values } => {
                let block = &values[action * width..(action + 1) * width];
                params.row(0).iter().zip(block).map(|(&w, &f)| w * f).sum()
            }
        }
    }

    /// `out += scale * Σ_a coeff[a] · ∂logit[a]/∂W`.
    fn accumulate(&self, coeff: &[S], scale: S, out: &mut PolicyParams<S>) {
        match self {
            Features::Shared { entries, .. } => {
                for (a, &c) in coeff.iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    let k = scale * c;
                    let row = out.row_mut(a);
                    for &(i, v) in entries {
                        row[i] += k * v;
                    }
                }
            }
            Features::PerAction { width, values } => {
                let row = out.row_mut(0);
                for (a, &c) in coeff.iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    let k = scale * c;
                    let block = &values[a * width..(a + 1) * width];
                    for (w, &f) in row.iter_mut().zip(block) {
                        *w += k * f;
                    }
                }
            }
        }
    }
}

/// Features of a state together with its legal-action mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<S> {
    pub features: Features<S>,
    pub legal: Vec<bool>,
}

impl<S: Scalar> Observation<S> {
    pub fn new(features: Features<S>, legal: Vec<bool>) -> Self {
        Self { features, legal }
    }

    pub fn num_actions(&self) -> usize {
        self.legal.len()
    }

    pub fn param_shape(&self) -> (usize, usize) {
        self.features.param_shape(self.legal.len())
    }
}

/// Row-major weight matrix. Gradients share the same type and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<S> {
    rows: usize,
    cols: usize,
    weights: Vec<S>,
}

impl<S: Scalar> PolicyParams<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, weights: Vec<S>) -> Self {
        assert_eq!(
            weights.len(),
            rows * cols,
            "weight count does not match shape"
        );
        Self {
            rows,
            cols,
            weights,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.weights[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: S) {
        self.weights[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[S] {
        &self.weights[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [S] {
        &mut self.weights[row * self.cols..(row + 1) * self.cols]
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: S) {
        assert_eq!(self.shape(), other.shape());
        for (w, &g) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * g;
        }
    }

    pub fn scaled(&self, scale: S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            weights: self.weights.iter().map(|&w| w * scale).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn norm(&self) -> S {
        self.weights.iter().map(|&w| w * w).sum::<S>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!(self.shape(), other.shape());
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
    }

    pub fn cast<T: Scalar>(&self) -> PolicyParams<T> {
        PolicyParams {
            rows: self.rows,
            cols: self.cols,
            weights: self.weights.iter().map(|w| T::lit(w.as_f64())).collect(),
        }
    }

    fn check_shape(&self, obs: &Observation<S>) -> Result<(), PolicyError> {
        let expected = obs.param_shape();
        if self.shape() != expected {
            return Err(PolicyError::ShapeMismatch {
                expected,
                got: self.shape(),
            });
        }
        Ok(())
    }
}

/// Probabilities over the fixed action head; illegal entries are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution<S> {
    pub probs: Vec<S>,
    pub mask: Vec<bool>,
}

impl<S: Scalar> ActionDistribution<S> {
    pub fn prob(&self, action: usize) -> S {
        self.probs.get(action).copied().unwrap_or_else(S::zero)
    }

    /// Most probable legal action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax_by(self.probs.iter().copied(), |i| self.mask[i])
            .expect("distribution has a legal action")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for (a, &p) in self.probs.iter().enumerate() {
            if !self.mask[a] || p.is_zero() {
                continue;
            }
            acc += p.as_f64();
            last = Some(a);
            if u < acc {
                return a;
            }
        }
        last.expect("distribution has a legal action")
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> S {
        -self
            .probs
            .iter()
            .filter(|p| **p > S::zero())
            .map(|&p| p * p.ln())
            .sum::<S>()
    }
}

/// `W · features` with illegal entries set to `-inf`.
pub fn logits<S: Scalar>(
    params: &PolicyParams<S>,
    obs: &Observation<S>,
) -> Result<Vec<S>, PolicyError> {
    params.check_shape(obs)?;
    Ok(obs
        .legal
        .iter()
        .enumerate()
        .map(|(a, &legal)| {
            if legal {
                obs.features.logit(params, a)
            } else {
                S::neg_infinity()
            }
        })
        .collect())
}

/// Max-subtracted softmax. Entries equal to `-inf` are treated as illegal.
pub fn softmax<S: Scalar>(logits: &[S]) -> Result<ActionDistribution<S>, PolicyError> {
    let mask: Vec<bool> = logits.iter().map(|l| *l != S::neg_infinity()).collect();
    let max = logits
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return Err(PolicyError::AllIllegal);
    }
    let mut probs: Vec<S> = logits
        .iter()
        .zip(&mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { S::zero() })
        .collect();
    let total: S = probs.iter().copied().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(ActionDistribution { probs, mask })
}

/// π_W(·|s).
pub fn policy<S: Scalar>(
    params: &PolicyParams<S>,
    obs: &Observation<S>,
) -> Result<ActionDistribution<S>, PolicyError> {
    softmax(&logits(params, obs)?)
}

/// Closed-form `∇_W log π(action|s)`: the logit gradient `e_action − π` pushed
/// through the feature map. Illegal rows stay zero.
pub fn grad_log_prob<S: Scalar>(
    params: &PolicyParams<S>,
    obs: &Observation<S>,
    action: usize,
) -> Result<PolicyParams<S>, PolicyError> {
    let dist = policy(params, obs)?;
    grad_log_prob_with(&dist, obs, action, params.shape())
}

pub(crate) fn grad_log_prob_with<S: Scalar>(
    dist: &ActionDistribution<S>,
    obs: &Observation<S>,
    action: usize,
    shape: (usize, usize),
) -> Result<PolicyParams<S>, PolicyError> {
    let mut grad = PolicyParams::zeros(shape.0, shape.1);
    accumulate_grad_log_prob(dist, obs, action, S::one(), &mut grad)?;
    Ok(grad)
}

/// `out += scale · ∇_W log π(action|s)` given the already computed π.
pub(crate) fn accumulate_grad_log_prob<S: Scalar>(
    dist: &ActionDistribution<S>,
    obs: &Observation<S>,
    action: usize,
    scale: S,
    out: &mut PolicyParams<S>,
) -> Result<(), PolicyError> {
    if !obs.legal.get(action).copied().unwrap_or(false) {
        return Err(PolicyError::IllegalAction { action });
    }
    let coeff: Vec<S> = dist
        .probs
        .iter()
        .enumerate()
        .map(|(a, &p)| if a == action { S::one() - p } else { -p })
        .collect();
    obs.features.accumulate(&coeff, scale, out);
    Ok(())
}

/// `∇_W H(π(·|s))` with `H = −Σ π log π`. Per logit: `−π_b (log π_b + H)`.
pub fn entropy_grad<S: Scalar>(
    params: &PolicyParams<S>,
    obs: &Observation<S>,
) -> Result<PolicyParams<S>, PolicyError> {
    let dist = policy(params, obs)?;
    let mut grad = PolicyParams::zeros(params.rows, params.cols);
    accumulate_entropy_grad(&dist, obs, S::one(), &mut grad);
    Ok(grad)
}

pub(crate) fn accumulate_entropy_grad<S: Scalar>(
    dist: &ActionDistribution<S>,
    obs: &Observation<S>,
    scale: S,
    out: &mut PolicyParams<S>,
) {
    let h = dist.entropy();
    let coeff: Vec<S> = dist
        .probs
        .iter()
        .map(|&p| {
            if p > S::zero() {
                -p * (p.ln() + h)
            } else {
                S::zero()
            }
        })
        .collect();
    obs.features.accumulate(&coeff, scale, out);
}

/// Gradient of `−‖W‖²`, i.e. `−2W`.
pub fn l2_grad<S: Scalar>(params: &PolicyParams<S>) -> PolicyParams<S> {
    params.scaled(S::lit(-2.0))
}

/// Value function used to initialise priors and as an external baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueEstimator {
    /// Constant zero.
    Zero,
    /// The environment's hand-written estimate (e.g. `1 − 0.01·manhattan` on grids).
    #[default]
    Heuristic,
}

impl ValueEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            ValueEstimator::Zero => "zero",
            ValueEstimator::Heuristic => "heuristic",
        }
    }
}

impl std::str::FromStr for ValueEstimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(ValueEstimator::Zero),
            "heuristic" => Ok(ValueEstimator::Heuristic),
            other => Err(format!("unknown value estimator {other:?}")),
        }
    }
}

pub fn value_estimate<E: Environment, S: Scalar>(
    estimator: ValueEstimator,
    env: &E,
    state: &E::State,
) -> S {
    match estimator {
        ValueEstimator::Zero => S::zero(),
        ValueEstimator::Heuristic => S::lit(env.heuristic_value(state)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(features: Vec<f64>, legal: Vec<bool>) -> Observation<f64> {
        Observation::new(Features::dense(&features), legal)
    }

    #[test]
    fn zero_weights_give_zero_logits_on_legal_entries() {
        let o = obs(vec![1.0, -2.0, 0.5], vec![true, false, true]);
        let l = logits(&PolicyParams::zeros(3, 3), &o).unwrap();
        assert_eq!(l[0], 0.0);
        assert_eq!(l[1], f64::NEG_INFINITY);
        assert_eq!(l[2], 0.0);
    }

    #[test]
    fn one_hot_feature_selects_a_weight_column() {
        let mut w = PolicyParams::zeros(2, 3);
        w.set(0, 1, 0.7);
        w.set(1, 1, -0.2);
        w.set(1, 2, 9.0);
        let l = logits(&w, &obs(vec![0.0, 1.0, 0.0], vec![true, true])).unwrap();
        assert_eq!(l, vec![0.7, -0.2]);
    }

    #[test]
    fn per_action_logits_share_one_row() {
        let w = PolicyParams::from_vec(1, 2, vec![1.0, -1.0]);
        let o = Observation::new(
            Features::per_action(2, vec![1.0, 0.0, 0.0, 1.0, 3.0, 3.0]),
            vec![true, true, false],
        );
        let l = logits(&w, &o).unwrap();
        assert_eq!(&l[..2], &[1.0, -1.0]);
        assert_eq!(l[2], f64::NEG_INFINITY);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let err = logits(
            &PolicyParams::zeros(2, 2),
            &obs(vec![1.0], vec![true, true]),
        );
        assert!(matches!(err, Err(PolicyError::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_basic_cases() {
        let d = softmax(&[0.0f64, 0.0]).unwrap();
        assert_eq!(d.probs, vec![0.5, 0.5]);
        let d = softmax(&[1000.0f64, 0.0]).unwrap();
        assert!((d.probs[0] - 1.0).abs() < 1e-12 && d.probs[1] >= 0.0 && d.probs[1] < 1e-300);
        let a = softmax(&[0.3f64, -1.1]).unwrap();
        let b = softmax(&[12.3f64, 10.9]).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(
            softmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(PolicyError::AllIllegal)
        );
        let d = softmax(&[f64::NEG_INFINITY, 2.0]).unwrap();
        assert_eq!(d.probs, vec![0.0, 1.0]);
        assert!(!d.mask[0]);
    }

    #[test]
    fn uniform_two_action_gradient_is_half() {
        let o = obs(vec![0.0, 1.0], vec![true, true]);
        let g = grad_log_prob(&PolicyParams::zeros(2, 2), &o, 0).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.5, 0.0, -0.5]);
    }

    #[test]
    fn saturated_softmax_has_vanishing_gradient() {
        let w = PolicyParams::from_vec(2, 1, vec![60.0, -60.0]);
        let g = grad_log_prob(&w, &obs(vec![1.0], vec![true, true]), 0).unwrap();
        assert!(g.norm() < 1e-40);
    }

    #[test]
    fn illegal_action_gradient_is_an_error() {
        let o = obs(vec![1.0], vec![true, false]);
        assert_eq!(
            grad_log_prob(&PolicyParams::zeros(2, 1), &o, 1),
            Err(PolicyError::IllegalAction { action: 1 })
        );
    }

    #[test]
    fn entropy_gradient_vanishes_at_uniform() {
        let o = obs(vec![1.0, 0.5], vec![true, true, true]);
        let g = entropy_grad(&PolicyParams::zeros(3, 2), &o).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn l2_gradient_of_zero_is_zero() {
        let g = l2_grad(&PolicyParams::<f64>::zeros(2, 3));
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
        let g = l2_grad(&PolicyParams::from_vec(1, 2, vec![1.5, -0.5]));
        assert_eq!(g.as_slice(), &[-3.0, 1.0]);
    }

    #[test]
    fn sampling_never_returns_illegal_actions() {
        let d = softmax(&[0.0f64, f64::NEG_INFINITY, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [0usize; 3];
        for _ in 0..2000 {
            seen[d.sample(&mut rng)] += 1;
        }
        assert_eq!(seen[1], 0);
        assert!(seen[0] > 800 && seen[2] > 800);
    }

    #[test]
    fn f32_policy_matches_f64() {
        let w64 = PolicyParams::from_vec(2, 2, vec![0.3, -0.1, 0.2, 0.4]);
        let o64 = obs(vec![1.0, 2.0], vec![true, true]);
        let o32 = Observation::new(Features::dense(&[1.0f32, 2.0]), vec![true, true]);
        let p64 = policy(&w64, &o64).unwrap();
        let p32 = policy(&w64.cast::<f32>(), &o32).unwrap();
        assert!((p64.probs[0] - f64::from(p32.probs[0])).abs() < 1e-6);
    }
}
