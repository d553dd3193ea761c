use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{self, LayerSpec};
use super::Tensor;
use crate::{Error, Result, Scalar};

/// Forward-pass mode. Training mode carries the randomness used by dropout.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

#[derive(Debug, Clone, PartialEq)]
struct Layer<S> {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    params: Vec<Tensor<S>>,
    trainable: bool,
}

/// Sequential network of [`LayerSpec`]s with owned parameters.
#[derive(Debug, Clone)]
pub struct NeuralNet<S> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<S>>,
    seed: u64,
    cache: Option<Trace<S>>,
}

impl<S: PartialEq> PartialEq for NeuralNet<S> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
enum Aux<S> {
    None,
    Mask(Vec<S>),
    Argmax(Vec<usize>),
}

/// Activations recorded by a forward pass, consumed by [`NeuralNet::backprop`].
#[derive(Debug, Clone)]
pub struct Trace<S> {
    // acts[i] is the input of layer i; the last entry is the network output.
    acts: Vec<Vec<S>>,
    aux: Vec<Aux<S>>,
}

impl<S: Scalar> Trace<S> {
    pub fn output(&self) -> &[S] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Per-layer parameter gradients, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    layers: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_for(net: &NeuralNet<S>) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| l.params.iter().map(|p| vec![S::zero(); p.len()]).collect())
                .collect(),
        }
    }

    pub fn layer(&self, index: usize) -> &[Vec<S>] {
        &self.layers[index]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.layers.iter().flatten().flatten()
    }

    pub fn fill_zero(&mut self) {
        self.layers
            .iter_mut()
            .flatten()
            .for_each(|g| g.fill(S::zero()));
    }

    pub fn scale(&mut self, factor: S) {
        self.layers
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|g| *g *= factor);
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

/// Result of [`NeuralNet::backward`].
#[derive(Debug, Clone)]
pub struct Backward<S> {
    pub params: Gradients<S>,
    pub input: Tensor<S>,
}

impl<S: Scalar> NeuralNet<S> {
    /// Builds the network and draws He-uniform weights from `seed`; biases start at zero.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::arg(format!("invalid input shape {input_shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let out = spec.output_shape(i, &shape)?;
            let params = spec
                .param_shapes(&shape)
                .into_iter()
                .enumerate()
                .map(|(p, pshape)| {
                    let len: usize = pshape.iter().product();
                    let data = if p == 0 {
                        let limit = Float::sqrt(6.0 / spec.fan_in(&shape) as f64);
                        (0..len)
                            .map(|_| S::of(rng.random_range(-limit..limit)))
                            .collect()
                    } else {
                        vec![S::zero(); len]
                    };
                    Tensor::new(pshape, data)
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                spec: *spec,
                input_shape: shape,
                output_shape: out.clone(),
                params,
                trainable: true,
            });
            shape = out;
        }
        Ok(NeuralNet {
            input_shape: input_shape.to_vec(),
            layers,
            seed,
            cache: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.output_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn specs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().map(|l| &l.spec)
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.layers.iter().map(|l| l.output_shape.as_slice())
    }

    pub fn layer_params(&self, index: usize) -> &[Tensor<S>] {
        &self.layers[index].params
    }

    pub fn layer_params_mut(&mut self, index: usize) -> &mut [Tensor<S>] {
        &mut self.layers[index].params
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.layers[index].trainable
    }

    pub fn set_layer_trainable(&mut self, index: usize, trainable: bool) {
        self.layers[index].trainable = trainable;
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.layers.iter_mut().for_each(|l| l.trainable = trainable);
    }

    /// True when no parameterised layer is trainable.
    pub fn is_frozen(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.params.is_empty() || !l.trainable)
    }

    /// Runs the network and keeps the activations for a later [`backward`](Self::backward).
    pub fn forward(&mut self, input: &Tensor<S>, mode: Mode<'_>) -> Result<Tensor<S>> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::shape(
                "input",
                format!(
                    "expected {:?}, got {:?}",
                    self.input_shape,
                    input.shape()
                ),
            ));
        }
        let trace = self.trace(input.data(), mode)?;
        let out = Tensor::new(self.output_shape().to_vec(), trace.output().to_vec())?;
        self.cache = Some(trace);
        Ok(out)
    }

    /// Backpropagates `grad_output` through the activations of the last
    /// [`forward`](Self::forward) call. Frozen layers contribute zero
    /// parameter gradients but still pass the input gradient through.
    pub fn backward(&mut self, grad_output: &Tensor<S>) -> Result<Backward<S>> {
        let trace = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward".to_string()))?;
        let mut params = Gradients::zeros_for(self);
        let input = self.backprop(&trace, grad_output.data(), Some(&mut params))?;
        Ok(Backward {
            params,
            input: Tensor::new(self.input_shape.clone(), input)?,
        })
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, input: &[S]) -> Result<Vec<S>> {
        let mut trace = self.trace(input, Mode::Eval)?;
        Ok(trace.acts.pop().unwrap_or_default())
    }

    /// Stateless forward pass returning every intermediate activation.
    pub fn trace(&self, input: &[S], mode: Mode<'_>) -> Result<Trace<S>> {
        let expected: usize = self.input_shape.iter().product();
        if input.len() != expected {
            return Err(Error::shape(
                "input",
                format!("expected {expected} values, got {}", input.len()),
            ));
        }
        let mut rng = match mode {
            Mode::Train(rng) => Some(rng),
            Mode::Eval => None,
        };
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for layer in &self.layers {
            let x = acts.last().expect("input pushed");
            let out_len: usize = layer.output_shape.iter().product();
            let mut out = vec![S::zero(); out_len];
            let mut extra = Aux::None;
            match layer.spec {
                LayerSpec::Conv1D { kernel, .. } => layer::conv1d_forward(
                    x,
                    &layer.input_shape,
                    layer.params[0].data(),
                    layer.params[1].data(),
                    kernel,
                    &mut out,
                ),
                LayerSpec::Dense { .. } => layer::dense_forward(
                    x,
                    layer.params[0].data(),
                    layer.params[1].data(),
                    &mut out,
                ),
                LayerSpec::PositionwiseDense { .. } => layer::positionwise_forward(
                    x,
                    &layer.input_shape,
                    layer.params[0].data(),
                    layer.params[1].data(),
                    &mut out,
                ),
                LayerSpec::MaxPool1D { pool } => {
                    let mut idx = vec![0usize; out_len];
                    layer::maxpool_forward(x, &layer.input_shape, pool, &mut out, &mut idx);
                    extra = Aux::Argmax(idx);
                }
                LayerSpec::Dropout { rate } => match rng.as_mut() {
                    Some(rng) if rate > 0.0 => {
                        let keep = S::of(1.0 / (1.0 - rate));
                        let mask: Vec<S> = (0..out_len)
                            .map(|_| {
                                if rng.random::<f64>() >= rate {
                                    keep
                                } else {
                                    S::zero()
                                }
                            })
                            .collect();
                        for ((o, &xi), &m) in out.iter_mut().zip(x).zip(&mask) {
                            *o = xi * m;
                        }
                        extra = Aux::Mask(mask);
                    }
                    _ => out.copy_from_slice(x),
                },
                LayerSpec::Flatten => out.copy_from_slice(x),
                LayerSpec::ReLU => {
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = if xi > S::zero() { xi } else { S::zero() };
                    }
                }
                LayerSpec::Softmax => layer::softmax(x, &mut out),
                LayerSpec::Sigmoid => {
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = layer::sigmoid(xi);
                    }
                }
            }
            acts.push(out);
            aux.push(extra);
        }
        Ok(Trace { acts, aux })
    }

    /// Backpropagates through `trace`, accumulating parameter gradients of
    /// trainable layers into `grads` (when given) and returning the gradient
    /// with respect to the network input.
    pub fn backprop(
        &self,
        trace: &Trace<S>,
        grad_output: &[S],
        mut grads: Option<&mut Gradients<S>>,
    ) -> Result<Vec<S>> {
        if trace.acts.len() != self.layers.len() + 1 {
            return Err(Error::State("trace does not belong to this network".to_string()));
        }
        if grad_output.len() != trace.output().len() {
            return Err(Error::shape(
                "output",
                format!(
                    "gradient has {} values, output has {}",
                    grad_output.len(),
                    trace.output().len()
                ),
            ));
        }
        let mut grad = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[i];
            let y = &trace.acts[i + 1];
            let mut gin = vec![S::zero(); x.len()];
            let pg = match grads.as_mut() {
                Some(g) if layer.trainable && !layer.params.is_empty() => {
                    let (w, b) = g.layers[i].split_at_mut(1);
                    Some((w[0].as_mut_slice(), b[0].as_mut_slice()))
                }
                _ => None,
            };
            match layer.spec {
                LayerSpec::Conv1D { kernel, .. } => layer::conv1d_backward(
                    x,
                    &layer.input_shape,
                    layer.params[0].data(),
                    kernel,
                    &grad,
                    &mut gin,
                    pg,
                ),
                LayerSpec::Dense { .. } => {
                    layer::dense_backward(x, layer.params[0].data(), &grad, &mut gin, pg)
                }
                LayerSpec::PositionwiseDense { .. } => layer::positionwise_backward(
                    x,
                    &layer.input_shape,
                    layer.params[0].data(),
                    &grad,
                    &mut gin,
                    pg,
                ),
                LayerSpec::MaxPool1D { .. } => {
                    let Aux::Argmax(idx) = &trace.aux[i] else {
                        return Err(Error::State("missing pooling indices".to_string()));
                    };
                    for (&src, &g) in idx.iter().zip(&grad) {
                        gin[src] += g;
                    }
                }
                LayerSpec::Dropout { .. } => match &trace.aux[i] {
                    Aux::Mask(mask) => {
                        for ((gi, &g), &m) in gin.iter_mut().zip(&grad).zip(mask) {
                            *gi = g * m;
                        }
                    }
                    _ => gin.copy_from_slice(&grad),
                },
                LayerSpec::Flatten => gin.copy_from_slice(&grad),
                LayerSpec::ReLU => {
                    for ((gi, &g), &xi) in gin.iter_mut().zip(&grad).zip(x) {
                        *gi = if xi > S::zero() { g } else { S::zero() };
                    }
                }
                LayerSpec::Softmax => {
                    let inner: S = grad.iter().zip(y).map(|(&g, &yi)| g * yi).sum();
                    for ((gi, &g), &yi) in gin.iter_mut().zip(&grad).zip(y) {
                        *gi = yi * (g - inner);
                    }
                }
                LayerSpec::Sigmoid => {
                    // from the pre-activation, so the slope stays nonzero where y rounds to 1
                    for ((gi, &g), &xi) in gin.iter_mut().zip(&grad).zip(x) {
                        *gi = g * layer::sigmoid_slope(xi);
                    }
                }
            }
            grad = gin;
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec::*;
    use alloc::vec::Vec;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Loss used by the gradient checks: a fixed random projection of the output.
    fn probe_loss(out: &[f64], coef: &[f64]) -> f64 {
        out.iter().zip(coef).map(|(o, c)| o * c).sum()
    }

    fn random_vec(len: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    /// Central differences against `backprop` for parameters and input.
    fn check_gradients(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut net = NeuralNet::<f64>::new(input_shape, specs, seed).unwrap();
        // non-zero biases so every path is exercised
        for i in 0..net.num_layers() {
            if let Some(b) = net.layer_params_mut(i).get_mut(1) {
                for v in b.data_mut() {
                    *v = r.random_range(-0.3..0.3);
                }
            }
        }
        let n_in: usize = input_shape.iter().product();
        let input = random_vec(n_in, &mut r);
        let out_len: usize = net.output_shape().iter().product();
        let coef = random_vec(out_len, &mut r);

        // training mode with a replayed rng so dropout masks stay fixed
        let run = |net: &NeuralNet<f64>, x: &[f64]| {
            net.trace(x, Mode::Train(&mut rng(seed ^ 0xd0))).unwrap()
        };
        let trace = run(&net, &input);
        let mut grads = Gradients::zeros_for(&net);
        let gin = net.backprop(&trace, &coef, Some(&mut grads)).unwrap();

        let h = 1e-6;
        let f = |net: &NeuralNet<f64>, x: &[f64]| probe_loss(run(net, x).output(), &coef);
        let mut worst: f64 = 0.0;
        let mut rel = |analytic: f64, numeric: f64| {
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(err);
        };
        for i in 0..n_in {
            let mut xp = input.clone();
            let mut xm = input.clone();
            xp[i] += h;
            xm[i] -= h;
            rel(gin[i], (f(&net, &xp) - f(&net, &xm)) / (2.0 * h));
        }
        for l in 0..net.num_layers() {
            for p in 0..net.layer_params(l).len() {
                for k in 0..net.layer_params(l)[p].len() {
                    let orig = net.layer_params(l)[p].data()[k];
                    net.layer_params_mut(l)[p].data_mut()[k] = orig + h;
                    let fp = f(&net, &input);
                    net.layer_params_mut(l)[p].data_mut()[k] = orig - h;
                    let fm = f(&net, &input);
                    net.layer_params_mut(l)[p].data_mut()[k] = orig;
                    rel(grads.layer(l)[p][k], (fp - fm) / (2.0 * h));
                }
            }
        }
        worst
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let cases: Vec<(Vec<usize>, Vec<LayerSpec>)> = vec![
            (vec![3, 9], vec![Conv1D { filters: 4, kernel: 3 }]),
            (vec![7], vec![Dense { units: 5 }]),
            (vec![3, 6], vec![PositionwiseDense { units: 4 }]),
            (vec![2, 7], vec![MaxPool1D { pool: 3 }]),
            (vec![2, 4], vec![Flatten, Dense { units: 3 }]),
            (vec![6], vec![ReLU]),
            (vec![5], vec![Softmax]),
            (vec![5], vec![Sigmoid]),
            (vec![6], vec![Dropout { rate: 0.3 }]),
        ];
        for seed in 0..10 {
            for (shape, specs) in &cases {
                let err = check_gradients(shape, specs, seed);
                assert!(err <= 1e-4, "{specs:?} seed {seed}: rel err {err}");
            }
        }
    }

    #[test]
    fn stacked_layers_match_finite_differences() {
        let specs = [
            Conv1D { filters: 3, kernel: 2 },
            ReLU,
            PositionwiseDense { units: 4 },
            MaxPool1D { pool: 2 },
            Flatten,
            Dense { units: 3 },
            Softmax,
        ];
        for seed in 0..3 {
            let err = check_gradients(&[2, 9], &specs, seed);
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = NeuralNet::<f64>::new(&[4], &[Softmax], 0).unwrap();
        let out = net.predict(&[0.0; 4]).unwrap();
        for p in out {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let net = NeuralNet::<f64>::new(&[1], &[Sigmoid], 0).unwrap();
        assert_eq!(net.predict(&[0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn softmax_is_a_distribution() {
        let net = NeuralNet::<f32>::new(&[6], &[Softmax], 0).unwrap();
        let mut r = rng(3);
        for _ in 0..200 {
            let x: Vec<f32> = (0..6).map(|_| r.random_range(-30.0..30.0)).collect();
            let p = net.predict(&x).unwrap();
            let sum: f32 = p.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_train_preserves_expectation() {
        let net = NeuralNet::<f64>::new(&[10_000], &[Dropout { rate: 0.4 }], 0).unwrap();
        let x = vec![1.5; 10_000];
        assert_eq!(net.predict(&x).unwrap(), x);
        let mut r = rng(11);
        let trace = net.trace(&x, Mode::Train(&mut r)).unwrap();
        let mean: f64 = trace.output().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.5).abs() / 1.5 < 0.02, "mean {mean}");
        assert!(trace.output().iter().any(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut net = NeuralNet::<f64>::new(&[3], &[Dense { units: 2 }], 0).unwrap();
        let g = Tensor::from_vec(vec![1.0, 1.0]);
        assert!(matches!(net.backward(&g), Err(Error::State(_))));
        net.forward(&Tensor::from_vec(vec![1.0, 2.0, 3.0]), Mode::Eval)
            .unwrap();
        assert!(net.backward(&g).is_ok());
        assert!(matches!(net.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_parameter_gradients() {
        let mut net = NeuralNet::<f64>::new(
            &[2, 8],
            &[Conv1D { filters: 3, kernel: 3 }, ReLU, Flatten, Dense { units: 2 }],
            5,
        )
        .unwrap();
        let x = Tensor::new(vec![2, 8], (0..16).map(|i| i as f64 * 0.1).collect()).unwrap();
        net.forward(&x, Mode::Eval).unwrap();
        let back = net.backward(&Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        assert!(back.params.iter().all(|&g| g == 0.0));
        assert!(back.input.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn frozen_layer_keeps_buffers_untouched_but_passes_input_gradient() {
        let mut net = NeuralNet::<f64>::new(&[4], &[Dense { units: 3 }, Sigmoid], 9).unwrap();
        net.set_trainable(false);
        assert!(net.is_frozen());
        let x = vec![0.3, -0.2, 0.9, 0.1];
        let coef = vec![1.0, -2.0, 0.5];
        let trace = net.trace(&x, Mode::Eval).unwrap();
        let mut grads = Gradients::zeros_for(&net);
        let gin = net.backprop(&trace, &coef, Some(&mut grads)).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let num = (probe_loss(&net.predict(&xp).unwrap(), &coef)
                - probe_loss(&net.predict(&xm).unwrap(), &coef))
                / (2.0 * h);
            assert!((num - gin[i]).abs() <= 1e-4 * num.abs().max(1e-6));
        }
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let err = NeuralNet::<f32>::new(&[2, 4], &[Conv1D { filters: 1, kernel: 5 }], 0)
            .unwrap_err();
        assert!(matches!(err, Error::Shape { ref layer, .. } if layer.contains("Conv1D")));
        let err = NeuralNet::<f32>::new(&[2, 4], &[Dense { units: 3 }], 0).unwrap_err();
        assert!(matches!(err, Error::Shape { ref layer, .. } if layer.contains("Dense")));
        assert!(NeuralNet::<f32>::new(&[4], &[Dropout { rate: 1.0 }], 0).is_err());
    }

    #[test]
    fn maxpool_truncates_remainder() {
        let net = NeuralNet::<f64>::new(&[1, 7], &[MaxPool1D { pool: 3 }], 0).unwrap();
        assert_eq!(net.output_shape(), &[1, 2]);
        let out = net.predict(&[1.0, 5.0, 2.0, 0.0, -1.0, 4.0, 99.0]).unwrap();
        assert_eq!(out, vec![5.0, 4.0]);
    }

    #[test]
    fn same_seed_same_weights() {
        let specs = [Conv1D { filters: 4, kernel: 3 }, Flatten, Dense { units: 2 }];
        let a = NeuralNet::<f32>::new(&[3, 10], &specs, 42).unwrap();
        let b = NeuralNet::<f32>::new(&[3, 10], &specs, 42).unwrap();
        let c = NeuralNet::<f32>::new(&[3, 10], &specs, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
