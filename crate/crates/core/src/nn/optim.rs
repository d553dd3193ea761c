use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{Gradients, NeuralNet};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Adaptive moment estimation with bias correction.
///
/// Moment buffers mirror the parameter layout of the network the optimizer
/// was created for. Layers that are not trainable are skipped entirely.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    config: AdamConfig,
    steps: u64,
    first: Vec<Vec<Vec<S>>>,
    second: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(net: &NeuralNet<S>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<Vec<S>>> = (0..net.num_layers())
            .map(|i| {
                net.layer_params(i)
                    .iter()
                    .map(|p| vec![S::zero(); p.len()])
                    .collect()
            })
            .collect();
        Adam {
            config,
            steps: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. `batch` only labels the error when a gradient is
    /// not finite; in that case nothing is modified.
    pub fn step(&mut self, net: &mut NeuralNet<S>, grads: &Gradients<S>, batch: usize) -> Result<()> {
        if grads.num_layers() != net.num_layers() || self.first.len() != net.num_layers() {
            return Err(Error::arg("gradient layout does not match the network"));
        }
        for i in 0..net.num_layers() {
            let params = net.layer_params(i);
            let g = grads.layer(i);
            if g.len() != params.len() || g.iter().zip(params).any(|(g, p)| g.len() != p.len()) {
                return Err(Error::arg(format!("gradient shape mismatch in layer {i}")));
            }
        }
        if !grads.all_finite() {
            return Err(Error::Training {
                batch,
                detail: "non-finite gradient".into(),
            });
        }
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let step_size =
            S::of(c.learning_rate * Float::sqrt(1.0 - Float::powi(c.beta2, t)) / (1.0 - Float::powi(c.beta1, t)));
        let (b1, b2, eps) = (S::of(c.beta1), S::of(c.beta2), S::of(c.epsilon));
        let one = S::one();
        for i in 0..net.num_layers() {
            if !net.is_trainable(i) {
                continue;
            }
            for (p, tensor) in net.layer_params_mut(i).iter_mut().enumerate() {
                let g = &grads.layer(i)[p];
                let m = &mut self.first[i][p];
                let v = &mut self.second[i][p];
                for (((w, &gk), mk), vk) in tensor
                    .data_mut()
                    .iter_mut()
                    .zip(g)
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *mk = b1 * *mk + (one - b1) * gk;
                    *vk = b2 * *vk + (one - b2) * gk * gk;
                    *w -= step_size * *mk / (vk.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Mode, Tensor};

    /// Scalar model w -> w (single dense unit, zero input bias path) with loss w^2.
    fn scalar_net(w: f64) -> NeuralNet<f64> {
        let mut net = NeuralNet::new(&[1], &[LayerSpec::Dense { units: 1 }], 0).unwrap();
        net.layer_params_mut(0)[0].data_mut()[0] = w;
        net
    }

    fn square_loss_grads(net: &mut NeuralNet<f64>) -> Gradients<f64> {
        let out = net.forward(&Tensor::from_vec(vec![1.0]), Mode::Eval).unwrap();
        let g = 2.0 * out.data()[0];
        net.backward(&Tensor::from_vec(vec![g])).unwrap().params
    }

    #[test]
    fn descends_on_a_convex_scalar() {
        let mut net = scalar_net(1.0);
        net.set_layer_trainable(0, true);
        let mut adam = Adam::new(&net, AdamConfig::with_learning_rate(0.1));
        let grads = square_loss_grads(&mut net);
        adam.step(&mut net, &grads, 0).unwrap();
        let w = net.layer_params(0)[0].data()[0];
        assert!(w.abs() < 1.0, "w = {w}");
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut net = scalar_net(0.7);
        let before = net.clone();
        let mut adam = Adam::new(&net, AdamConfig::default());
        let grads = Gradients::zeros_for(&net);
        adam.step(&mut net, &grads, 0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn frozen_layers_are_skipped() {
        let mut net = scalar_net(0.7);
        net.set_trainable(false);
        let before = net.clone();
        let mut adam = Adam::new(&net, AdamConfig::default());
        let grads = square_loss_grads(&mut net);
        adam.step(&mut net, &grads, 0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn non_finite_gradient_is_reported_with_batch() {
        let mut net = scalar_net(0.7);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let mut grads = square_loss_grads(&mut net);
        grads.scale(f64::NAN);
        let before = net.clone();
        let err = adam.step(&mut net, &grads, 17).unwrap_err();
        assert!(matches!(err, Error::Training { batch: 17, .. }));
        assert_eq!(net, before);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let run = || {
            let mut net = scalar_net(1.3);
            let mut adam = Adam::new(&net, AdamConfig::with_learning_rate(0.05));
            for b in 0..100 {
                let grads = square_loss_grads(&mut net);
                adam.step(&mut net, &grads, b).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }
}
