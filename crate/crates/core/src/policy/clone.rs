//! Supervised training of the prior policy on expert `(state, action)` pairs.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{accumulate_grad_log_prob, policy, Observation, PolicyError, PolicyParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub obs: Observation<S>,
    pub action: usize,
}

/// Mini-batch gradient ascent on the expert log-likelihood with an L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorCloning<S> {
    pub epochs: usize,
    pub lr: S,
    pub l2: S,
    pub batch_size: usize,
}

impl<S: Scalar> Default for BehaviorCloning<S> {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: S::lit(0.1),
            l2: S::lit(1e-4),
            batch_size: 32,
        }
    }
}

impl<S: Scalar> BehaviorCloning<S> {
    /// Trains from `init`. Returns the final weights and the regularised loss
    /// before the first epoch followed by the loss after each epoch.
    pub fn train<R: Rng + ?Sized>(
        &self,
        data: &[Sample<S>],
        init: PolicyParams<S>,
        rng: &mut R,
    ) -> Result<(PolicyParams<S>, Vec<S>), PolicyError> {
        if data.is_empty() {
            return Err(PolicyError::EmptyDataset);
        }
        let mut params = init;
        let (rows, cols) = params.shape();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = vec![self.objective(&params, data)?];
        let batch = self.batch_size.max(1);
        for _ in 0..self.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch) {
                let mut grad = PolicyParams::zeros(rows, cols);
                let scale = S::one() / S::lit(chunk.len() as f64);
                for &i in chunk {
                    let sample = &data[i];
                    let dist = policy(&params, &sample.obs)?;
                    accumulate_grad_log_prob(&dist, &sample.obs, sample.action, scale, &mut grad)?;
                }
                grad.add_scaled(&params, S::lit(-2.0) * self.l2);
                params.add_scaled(&grad, self.lr);
            }
            history.push(self.objective(&params, data)?);
        }
        Ok((params, history))
    }

    fn objective(&self, params: &PolicyParams<S>, data: &[Sample<S>]) -> Result<S, PolicyError> {
        let penalty = params.as_slice().iter().map(|&w| w * w).sum::<S>();
        Ok(cross_entropy(params, data)? + self.l2 * penalty)
    }
}

/// Trains from zero weights shaped after the first sample.
pub fn behavior_clone<S: Scalar, R: Rng + ?Sized>(
    data: &[Sample<S>],
    config: &BehaviorCloning<S>,
    rng: &mut R,
) -> Result<PolicyParams<S>, PolicyError> {
    let first = data.first().ok_or(PolicyError::EmptyDataset)?;
    let (rows, cols) = first.obs.param_shape();
    config
        .train(data, PolicyParams::zeros(rows, cols), rng)
        .map(|(params, _)| params)
}

/// Mean negative log-likelihood of the expert actions.
pub fn cross_entropy<S: Scalar>(
    params: &PolicyParams<S>,
    data: &[Sample<S>],
) -> Result<S, PolicyError> {
    if data.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut total = S::zero();
    for sample in data {
        let dist = policy(params, &sample.obs)?;
        if !dist.mask.get(sample.action).copied().unwrap_or(false) {
            return Err(PolicyError::IllegalAction {
                action: sample.action,
            });
        }
        total -= dist.prob(sample.action).ln();
    }
    Ok(total / S::lit(data.len() as f64))
}
