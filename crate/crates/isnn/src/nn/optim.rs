use crate::error::{IsnnError, Result};
use crate::nn::tensor::check_finite;

/// SGD with classical momentum:
/// `v <- momentum*v + g; theta <- theta - lr*v`.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, momentum: f64, num_params: usize) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(IsnnError::InvalidArgument(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(IsnnError::InvalidArgument(format!(
                "momentum must be in [0,1), got {momentum}"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            momentum,
            velocity: vec![0.0; num_params],
        })
    }

    /// One update step. Fails loudly when the step would introduce NaN/Inf.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.len() != params.len() || self.velocity.len() != params.len() {
            return Err(IsnnError::ShapeMismatch {
                expected: vec![params.len()],
                actual: vec![grads.len()],
            });
        }
        for ((p, v), g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(grads) {
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * *v;
        }
        check_finite(params, "parameters after sgd step")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let mut opt = OptimizerState::new(0.1, 0.0, 1).unwrap();
        let mut params = vec![1.0];
        opt.step(&mut params, &[1.0]).unwrap();
        assert!((params[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_zero_velocity_is_noop() {
        let mut opt = OptimizerState::new(0.1, 0.9, 3).unwrap();
        let mut params = vec![1.0, -2.0, 0.5];
        opt.step(&mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn momentum_matches_manual_recurrence() {
        let (lr, mu) = (0.05, 0.9);
        let mut opt = OptimizerState::new(lr, mu, 1).unwrap();
        let mut params = vec![2.0];
        let g = [0.7, -0.3];
        opt.step(&mut params, &[g[0]]).unwrap();
        opt.step(&mut params, &[g[1]]).unwrap();

        // Unrolled: v1 = g0; p1 = p0 - lr*v1; v2 = mu*v1 + g1; p2 = p1 - lr*v2.
        let v1 = g[0];
        let p1 = 2.0 - lr * v1;
        let v2 = mu * v1 + g[1];
        let p2 = p1 - lr * v2;
        assert!((params[0] - p2).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut opt = OptimizerState::new(0.1, 0.0, 2).unwrap();
        let mut params = vec![0.0; 2];
        assert!(opt.step(&mut params, &[1.0]).is_err());
    }

    #[test]
    fn nan_grad_aborts() {
        let mut opt = OptimizerState::new(0.1, 0.0, 1).unwrap();
        let mut params = vec![0.0];
        assert!(opt.step(&mut params, &[f64::NAN]).is_err());
    }
}
