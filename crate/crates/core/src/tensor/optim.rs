//! RMSProp.

use serde::{Deserialize, Serialize};

use super::{Element, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    /// Smoothing constant of the squared-gradient average.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// RMSProp hyperparameters plus the running second moment of every
/// parameter, allocated lazily on the first step.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: RmsPropConfig,
    second_moment: Vec<Vec<T>>,
}

impl<T: Element> OptimizerState<T> {
    pub fn new(config: RmsPropConfig) -> Self {
        Self {
            config,
            second_moment: Vec::new(),
        }
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.second_moment
    }

    /// One update of every parameter from its accumulated gradient:
    /// `v = decay * v + (1 - decay) * g^2`, `p -= lr * g / (sqrt(v) + eps)`.
    /// Gradients are cleared afterwards. Fails before touching anything if a
    /// parameter has no gradient.
    pub fn rmsprop_step(&mut self, params: &[Tensor<T>]) -> Result<()> {
        let grads = params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.grad()
                    .ok_or_else(|| TensorError::MissingGrad(format!("#{i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.second_moment.len() != params.len() {
            self.second_moment = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        }
        let lr = T::from_f64_lossy(self.config.learning_rate);
        let decay = T::from_f64_lossy(self.config.decay);
        let eps = T::from_f64_lossy(self.config.epsilon);
        for ((p, g), v) in params.iter().zip(&grads).zip(&mut self.second_moment) {
            p.update_data(|data| {
                for ((theta, &gi), vi) in data.iter_mut().zip(g).zip(v.iter_mut()) {
                    *vi = decay * *vi + (T::one() - decay) * gi * gi;
                    *theta = *theta - lr * gi / (vi.sqrt() + eps);
                }
            });
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor<f64> {
        let p = Tensor::parameter(&[1], vec![v]).unwrap();
        p.accumulate_grad(&[g]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let p = param(1.5, 0.0);
        let mut opt = OptimizerState::new(RmsPropConfig::default());
        opt.rmsprop_step(std::slice::from_ref(&p)).unwrap();
        assert_eq!(p.to_vec(), vec![1.5]);
        assert!(p.grad().is_none());
    }

    #[test]
    fn first_step_closed_form() {
        let p = param(0.0, 1.0);
        let mut opt = OptimizerState::new(RmsPropConfig::default());
        opt.rmsprop_step(std::slice::from_ref(&p)).unwrap();
        let expected = -0.001 / (0.1 + 1e-8);
        assert!((p.to_vec()[0] - expected).abs() < 1e-12);
        assert!((p.to_vec()[0] + 0.009_999_999_0).abs() < 1e-9);
    }

    #[test]
    fn identical_steps_shrink() {
        let p = param(0.0, 1.0);
        let mut opt = OptimizerState::new(RmsPropConfig::default());
        opt.rmsprop_step(std::slice::from_ref(&p)).unwrap();
        let d1 = p.to_vec()[0];
        p.accumulate_grad(&[1.0]).unwrap();
        opt.rmsprop_step(std::slice::from_ref(&p)).unwrap();
        let d2 = p.to_vec()[0] - d1;
        // v1 = 0.01, v2 = 0.99 * 0.01 + 0.01 = 0.0199
        let expected = -0.001 / (0.0199f64.sqrt() + 1e-8);
        assert!((d2 - expected).abs() < 1e-12);
        assert!(d2.abs() < d1.abs());
        assert!(opt.second_moment()[0][0] >= 0.0);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let p = Tensor::<f64>::parameter(&[1], vec![0.0]).unwrap();
        let mut opt = OptimizerState::new(RmsPropConfig::default());
        assert_eq!(
            opt.rmsprop_step(&[p]),
            Err(TensorError::MissingGrad("#0".into()))
        );
    }
}
