//! Shared mini-batch loop for the sequence regressors.

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::nn::{AdamState, Tensor};
use crate::seed::rng_for;

pub(crate) trait Objective {
    fn len(&self) -> usize;
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    /// Mean loss over `batch` and its gradient, in parameter order.
    fn batch_loss_grad(&self, batch: &[usize]) -> Result<(f64, Vec<Tensor>)>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FitSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Runs `epochs` passes of shuffled mini-batch Adam. Returns the mean training
/// loss of each epoch.
pub(crate) fn fit<O: Objective>(objective: &mut O, adam: &mut AdamState, settings: &FitSettings) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..objective.len()).collect();
    let mut rng = rng_for(settings.seed, "series.shuffle");
    let mut history = Vec::with_capacity(settings.epochs);
    for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(settings.batch_size) {
            let (loss, grads) = objective.batch_loss_grad(batch)?;
            total += loss * batch.len() as f64;
            adam.step(&mut objective.parameters_mut(), &grads)?;
        }
        history.push(total / order.len() as f64);
    }
    Ok(history)
}
