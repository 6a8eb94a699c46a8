//! Central finite-difference check of analytic gradients.

use super::tensor::Tensor;
use crate::error::Result;

/// Perturbation used by [`finite_diff_check`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// A scalar objective over a list of parameter tensors with an analytic gradient.
pub trait Differentiable {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    fn loss(&mut self) -> Result<f64>;
    /// Gradients in the order of [`Differentiable::parameters_mut`].
    fn gradients(&mut self) -> Result<Vec<Tensor>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.rel_error < self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(move |e| e.rel_error >= self.tolerance)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

pub fn finite_diff_check<D: Differentiable + ?Sized>(model: &mut D, tolerance: f64) -> Result<GradCheckReport> {
    finite_diff_check_with_step(model, DEFAULT_STEP, tolerance)
}

/// Perturbs every parameter by `±step` and compares the central difference
/// against the analytic gradient.
pub fn finite_diff_check_with_step<D: Differentiable + ?Sized>(
    model: &mut D,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = model.gradients()?;
    let sizes: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
    let mut entries = Vec::new();
    for (ti, &size) in sizes.iter().enumerate() {
        for idx in 0..size {
            let original = model.parameters_mut()[ti].data()[idx];
            model.parameters_mut()[ti].data_mut()[idx] = original + step;
            let plus = model.loss()?;
            model.parameters_mut()[ti].data_mut()[idx] = original - step;
            let minus = model.loss()?;
            model.parameters_mut()[ti].data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti].data()[idx];
            entries.push(GradCheckEntry {
                tensor: ti,
                index: idx,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    Ok(GradCheckReport { tolerance, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = sum x_i^3, optionally with a wrong gradient.
    struct Cubic {
        x: Tensor,
        corrupt: bool,
    }

    impl Differentiable for Cubic {
        fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.x]
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(self.x.data().iter().map(|v| v * v * v).sum())
        }
        fn gradients(&mut self) -> Result<Vec<Tensor>> {
            let scale = if self.corrupt { 2.9 } else { 3.0 };
            let g = self.x.data().iter().map(|v| scale * v * v).collect();
            Ok(vec![Tensor::from_vec(self.x.shape(), g)?])
        }
    }

    struct Empty;

    impl Differentiable for Empty {
        fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
            Vec::new()
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(1.0)
        }
        fn gradients(&mut self) -> Result<Vec<Tensor>> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn empty_model_passes_trivially() {
        let report = finite_diff_check(&mut Empty, 1e-5).unwrap();
        assert!(report.entries.is_empty());
        assert!(report.passed());
    }

    #[test]
    fn correct_gradient_passes_and_corrupt_fails() {
        let x = Tensor::from_vec(&[3], vec![0.5, -1.2, 2.0]).unwrap();
        let mut good = Cubic { x: x.clone(), corrupt: false };
        let report = finite_diff_check(&mut good, 1e-6).unwrap();
        assert!(report.passed(), "max error {}", report.max_error());
        assert_eq!(good.x, x, "parameters restored after the check");

        let mut bad = Cubic { x, corrupt: true };
        let report = finite_diff_check(&mut bad, 1e-5).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().count(), 3);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 0.9) - 0.1).abs() < 1e-15);
    }
}
