use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{DenseNet, Gradients};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// RMSProp with per-parameter running mean of squared gradients.
///
/// `acc ← ρ·acc + (1−ρ)·g²`, then `p ← p − α·g / (√acc + ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    accumulators: Vec<Vec<f64>>,
}

impl RmsProp {
    /// Zero accumulators shaped like `net`'s parameters.
    pub fn new(net: &DenseNet, learning_rate: f64, decay: f64, epsilon: f64) -> Result<Self> {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::for_shapes(&shapes, learning_rate, decay, epsilon)
    }

    pub fn for_shapes(
        shapes: &[usize],
        learning_rate: f64,
        decay: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Invalid(format!(
                "decay must lie in (0, 1), got {decay}"
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Invalid(format!(
                "epsilon must be nonnegative, got {epsilon}"
            )));
        }
        Ok(Self {
            learning_rate,
            decay,
            epsilon,
            accumulators: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn with_defaults(net: &DenseNet, learning_rate: f64) -> Result<Self> {
        Self::new(net, learning_rate, DEFAULT_DECAY, DEFAULT_EPSILON)
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    /// Applies one update to `net`. A non-finite gradient leaves both the
    /// network and the optimizer state untouched.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        let g = grads.slices();
        let mut p = net.param_slices_mut();
        self.step_slices(&mut p, &g)
    }

    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.accumulators.len() || grads.len() != self.accumulators.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.accumulators.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), acc) in params.iter().zip(grads).zip(&self.accumulators) {
            if p.len() != acc.len() || g.len() != acc.len() {
                return Err(Error::Dimension {
                    expected: acc.len(),
                    got: if p.len() != acc.len() { p.len() } else { g.len() },
                });
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let (rho, alpha, eps) = (self.decay, self.learning_rate, self.epsilon);
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            for ((pi, &gi), ai) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                *ai = rho * *ai + (1.0 - rho) * gi * gi;
                if gi != 0.0 {
                    *pi -= alpha * gi / (ai.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(state: &mut RmsProp, p: &mut f64, g: f64) {
        let mut ps = [std::slice::from_mut(p)];
        state.step_slices(&mut ps, &[&[g]]).unwrap();
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = RmsProp::for_shapes(&[1], 0.1, 0.9, 0.0).unwrap();
        let mut p = 3.25;
        one(&mut s, &mut p, 0.0);
        assert_eq!(p, 3.25);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // acc = 0.1·1², step = 1/√0.1
        let mut s = RmsProp::for_shapes(&[1], 1.0, 0.9, 0.0).unwrap();
        let mut p = 0.0;
        one(&mut s, &mut p, 1.0);
        let expected = -1.0 / 0.1f64.sqrt();
        assert!((p - expected).abs() < 1e-12, "{p} vs {expected}");
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let alpha = 0.01;
        let mut s = RmsProp::for_shapes(&[1], alpha, 0.9, 0.0).unwrap();
        let mut p = 0.0;
        let mut last = 0.0;
        for _ in 0..400 {
            let before = p;
            one(&mut s, &mut p, 2.5);
            last = before - p;
        }
        // acc → g², so the step → α·g/|g| = α.
        assert!((last - alpha).abs() < 1e-12, "{last}");
    }

    #[test]
    fn nonfinite_gradient_rejected_without_side_effects() {
        let mut s = RmsProp::for_shapes(&[2], 0.1, 0.9, 1e-8).unwrap();
        let mut p = [1.0, 2.0];
        let mut ps = [&mut p[..]];
        let err = s.step_slices(&mut ps, &[&[0.5, f64::INFINITY]]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, [1.0, 2.0]);
        assert!(s.accumulators()[0].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(RmsProp::for_shapes(&[1], 0.0, 0.9, 0.0).is_err());
        assert!(RmsProp::for_shapes(&[1], 0.1, 1.0, 0.0).is_err());
        assert!(RmsProp::for_shapes(&[1], 0.1, 0.5, -1.0).is_err());
    }
}
