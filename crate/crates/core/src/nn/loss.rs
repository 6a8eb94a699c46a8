use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_FLOOR, 1]` before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &Tensor) -> Tensor {
    let z = logits.data();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs = exps.into_iter().map(|e| e / total).collect();
    Tensor::from_vec(logits.shape(), probs).expect("softmax preserves shape")
}

/// Index of the hot entry, or `NotOneHot`.
pub fn one_hot_index(target: &Tensor) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in target.data().iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::NotOneHot);
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::NotOneHot);
        }
    }
    hot.ok_or(Error::NotOneHot)
}

pub fn one_hot(class: usize, classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[classes]);
    t.data_mut()[class] = 1.0;
    t
}

/// `-log p[true class]`, with `p` clipped to `[PROB_FLOOR, 1]`.
pub fn cross_entropy_loss(probs: &Tensor, target: &Tensor) -> Result<f64> {
    probs.check_same_shape(target)?;
    let class = one_hot_index(target)?;
    Ok(-probs.data()[class].clamp(PROB_FLOOR, 1.0).ln())
}

/// Mean cross-entropy over a batch.
pub fn batch_cross_entropy(probs: &[Tensor], targets: &[Tensor]) -> Result<f64> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in probs.iter().zip(targets) {
        total += cross_entropy_loss(p, t)?;
    }
    Ok(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(values: &[f64]) -> Tensor {
        Tensor::from_vec(&[values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn uniform_softmax() {
        let p = softmax(&t(&[0.0; 4]));
        assert!(p.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&t(&[1000.0, 0.0]));
        assert!(p.all_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-12);
        assert!(p.data()[1] < 1e-300 || p.data()[1] == 0.0);
    }

    #[test]
    fn cross_entropy_values() {
        let perfect = cross_entropy_loss(&t(&[0.0, 1.0, 0.0]), &t(&[0.0, 1.0, 0.0])).unwrap();
        assert!(perfect <= 1e-9);
        let uniform = cross_entropy_loss(&t(&[0.25; 4]), &one_hot(2, 4)).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-12);
        // clipping keeps a zero probability finite
        let clipped = cross_entropy_loss(&t(&[1.0, 0.0]), &one_hot(1, 2)).unwrap();
        assert!((clipped - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn batch_loss_is_mean() {
        let probs = vec![t(&[0.5, 0.5]), t(&[0.9, 0.1])];
        let targets = vec![one_hot(0, 2), one_hot(1, 2)];
        let expected = (-(0.5f64).ln() - (0.1f64).ln()) / 2.0;
        assert!((batch_cross_entropy(&probs, &targets).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn not_one_hot_rejected() {
        let p = t(&[0.5, 0.5]);
        assert!(matches!(cross_entropy_loss(&p, &t(&[0.5, 0.5])), Err(Error::NotOneHot)));
        assert!(matches!(cross_entropy_loss(&p, &t(&[1.0, 1.0])), Err(Error::NotOneHot)));
        assert!(matches!(cross_entropy_loss(&p, &t(&[0.0, 0.0])), Err(Error::NotOneHot)));
    }
}
