//! Multi-task ConvNet that recognises activity (softmax head) and gender
//! (sigmoid head) from one sensor window.
//!
//! Both heads hang off a shared trunk. The trunk is the convolutional stack
//! followed by `Dense(400)` and dropout; each head is a single dense layer
//! with its output activation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{Activity, Gender, NormalizationStats, Window, NUM_ACTIVITIES};
use crate::nn::{
    binary_cross_entropy, categorical_cross_entropy, Adam, AdamConfig, Gradients, LayerSpec, Mode,
    NeuralNet,
};
use crate::train::{epoch_batches, mean};
use crate::{Error, Result, Scalar};

const DROPOUT_SEED_SALT: u64 = 0x5eed_d209;

/// Shared layers of the estimator for windows of `channels x d`.
pub fn trunk_specs() -> Vec<LayerSpec> {
    use LayerSpec::*;
    vec![
        Conv1D { filters: 50, kernel: 5 },
        ReLU,
        Conv1D { filters: 50, kernel: 3 },
        ReLU,
        PositionwiseDense { units: 50 },
        ReLU,
        MaxPool1D { pool: 2 },
        Dropout { rate: 0.2 },
        Conv1D { filters: 40, kernel: 5 },
        ReLU,
        PositionwiseDense { units: 40 },
        ReLU,
        MaxPool1D { pool: 3 },
        Dropout { rate: 0.2 },
        Conv1D { filters: 20, kernel: 3 },
        ReLU,
        Dropout { rate: 0.2 },
        Flatten,
        Dense { units: 400 },
        ReLU,
        Dropout { rate: 0.4 },
    ]
}

pub fn activity_head_specs() -> Vec<LayerSpec> {
    vec![LayerSpec::Dense { units: NUM_ACTIVITIES }, LayerSpec::Softmax]
}

pub fn gender_head_specs() -> Vec<LayerSpec> {
    vec![LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid]
}

/// Smallest window length the trunk accepts.
pub fn min_window_len() -> usize {
    (2..4096)
        .find(|&d| NeuralNet::<f32>::new(&[1, d], &trunk_specs(), 0).is_ok())
        .expect("trunk accepts some window length")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorModel<S> {
    pub trunk: NeuralNet<S>,
    pub activity_head: NeuralNet<S>,
    pub gender_head: NeuralNet<S>,
    /// `(m, d)`: channels and window length.
    pub input_shape: (usize, usize),
    pub normalization: Option<NormalizationStats>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub activity_weight: f64,
    pub gender_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            activity_weight: 1.0,
            gender_weight: 1.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::arg("batch size and learning rate must be positive"));
        }
        if !(self.activity_weight > 0.0 && self.gender_weight > 0.0) {
            return Err(Error::arg("task loss weights must be positive"));
        }
        Ok(())
    }
}

/// Training curves, one entry per epoch. Train accuracies are measured on the
/// fly with dropout active; validation accuracies use evaluation mode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub activity_accuracy: f64,
    pub gender_accuracy: f64,
    pub val_activity_accuracy: Option<f64>,
    pub val_gender_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Window-level accuracies in percent. `confusion[true][predicted]` counts activities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub activity_accuracy: f64,
    pub gender_accuracy: f64,
    pub confusion: [[usize; NUM_ACTIVITIES]; NUM_ACTIVITIES],
    pub n_windows: usize,
}

/// Builds the estimator for `m` channels and windows of length `d`.
pub fn build_mtcnn<S: Scalar>(m: usize, d: usize, seed: u64) -> Result<EstimatorModel<S>> {
    let trunk = NeuralNet::new(&[m, d], &trunk_specs(), seed).map_err(|e| match e {
        Error::Shape { layer, detail } => Error::Shape {
            layer,
            detail: format!(
                "{detail}; window length {d} is too short, the minimum is {}",
                min_window_len()
            ),
        },
        other => other,
    })?;
    let features = trunk.output_shape().to_vec();
    let activity_head = NeuralNet::new(&features, &activity_head_specs(), seed.wrapping_add(1))?;
    let gender_head = NeuralNet::new(&features, &gender_head_specs(), seed.wrapping_add(2))?;
    Ok(EstimatorModel {
        trunk,
        activity_head,
        gender_head,
        input_shape: (m, d),
        normalization: None,
    })
}

struct SampleGrads<S> {
    trunk: Gradients<S>,
    activity: Gradients<S>,
    gender: Gradients<S>,
}

impl<S: Scalar> SampleGrads<S> {
    fn zeros_for(model: &EstimatorModel<S>) -> Self {
        SampleGrads {
            trunk: Gradients::zeros_for(&model.trunk),
            activity: Gradients::zeros_for(&model.activity_head),
            gender: Gradients::zeros_for(&model.gender_head),
        }
    }

    fn fill_zero(&mut self) {
        self.trunk.fill_zero();
        self.activity.fill_zero();
        self.gender.fill_zero();
    }

    fn scale(&mut self, f: S) {
        self.trunk.scale(f);
        self.activity.scale(f);
        self.gender.scale(f);
    }
}

pub(crate) fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Gender decision rule: posterior >= 0.5 is Male.
pub fn gender_decision<S: Scalar>(posterior: S) -> Gender {
    if posterior >= S::of(0.5) {
        Gender::Male
    } else {
        Gender::Female
    }
}

impl<S: Scalar> EstimatorModel<S> {
    fn check_window(&self, data: &[S]) -> Result<()> {
        let (m, d) = self.input_shape;
        if data.len() != m * d {
            return Err(Error::arg(format!(
                "window has {} values, estimator expects {m}x{d}",
                data.len()
            )));
        }
        Ok(())
    }

    /// Activity posterior and gender posterior for one window.
    pub fn predict(&self, data: &[S]) -> Result<(Vec<S>, S)> {
        self.check_window(data)?;
        let features = self.trunk.predict(data)?;
        let activity = self.activity_head.predict(&features)?;
        let gender = self.gender_head.predict(&features)?[0];
        Ok((activity, gender))
    }

    pub fn freeze(&mut self) {
        self.trunk.set_trainable(false);
        self.activity_head.set_trainable(false);
        self.gender_head.set_trainable(false);
    }

    pub fn is_frozen(&self) -> bool {
        self.trunk.is_frozen() && self.activity_head.is_frozen() && self.gender_head.is_frozen()
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.activity_head.param_count() + self.gender_head.param_count()
    }

    /// Evaluation-mode forward and backward pass through all three networks
    /// without touching parameter gradients.
    ///
    /// `loss` receives the activity and gender posteriors and returns the loss
    /// value with its gradients with respect to both posteriors. Returns the
    /// loss, the posteriors and the gradient with respect to the input window.
    pub fn input_gradient<F>(&self, data: &[S], loss: F) -> Result<(S, Vec<S>, S, Vec<S>)>
    where
        F: FnOnce(&[S], S) -> Result<(S, Vec<S>, S)>,
    {
        self.check_window(data)?;
        let trunk = self.trunk.trace(data, Mode::Eval)?;
        let act = self.activity_head.trace(trunk.output(), Mode::Eval)?;
        let gen = self.gender_head.trace(trunk.output(), Mode::Eval)?;
        let gender = gen.output()[0];
        let (value, d_act, d_gen) = loss(act.output(), gender)?;
        let mut g = self.activity_head.backprop(&act, &d_act, None)?;
        let g2 = self.gender_head.backprop(&gen, &[d_gen], None)?;
        for (a, b) in g.iter_mut().zip(&g2) {
            *a += *b;
        }
        let input = self.trunk.backprop(&trunk, &g, None)?;
        Ok((value, act.output().to_vec(), gender, input))
    }

    /// One training sample: forward in training mode, weighted multi-task
    /// loss, gradients accumulated into `grads`. Returns (loss, activity hit, gender hit).
    fn accumulate(
        &self,
        window: &Window<S>,
        config: &TrainConfig,
        rng: &mut ChaCha8Rng,
        grads: &mut SampleGrads<S>,
    ) -> Result<(f64, bool, bool)> {
        let trunk = self.trunk.trace(&window.data, Mode::Train(rng))?;
        let act = self.activity_head.trace(trunk.output(), Mode::Train(rng))?;
        let gen = self.gender_head.trace(trunk.output(), Mode::Train(rng))?;
        let (l_act, mut d_act) = categorical_cross_entropy(act.output(), &window.activity_one_hot())?;
        let (l_gen, d_gen) = binary_cross_entropy(gen.output()[0], window.gender_target())?;
        let (wa, wg) = (S::of(config.activity_weight), S::of(config.gender_weight));
        d_act.iter_mut().for_each(|g| *g *= wa);
        let mut g = self.activity_head.backprop(&act, &d_act, Some(&mut grads.activity))?;
        let g2 = self.gender_head.backprop(&gen, &[d_gen * wg], Some(&mut grads.gender))?;
        for (a, b) in g.iter_mut().zip(&g2) {
            *a += *b;
        }
        self.trunk.backprop(&trunk, &g, Some(&mut grads.trunk))?;
        let loss = (wa * l_act + wg * l_gen).as_f64();
        let act_hit = argmax(act.output()) == window.activity.index();
        let gen_hit = gender_decision(gen.output()[0]) == window.gender;
        Ok((loss, act_hit, gen_hit))
    }
}

/// Trains on `train` with the weighted sum of activity cross-entropy and
/// gender binary cross-entropy. See [`fit`] for validation curves.
pub fn train_estimator<S: Scalar>(
    model: &mut EstimatorModel<S>,
    train: &[Window<S>],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    fit(model, train, None, config)
}

/// Like [`train_estimator`], also evaluating `validation` after every epoch.
pub fn fit<S: Scalar>(
    model: &mut EstimatorModel<S>,
    train: &[Window<S>],
    validation: Option<&[Window<S>]>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::arg("no training windows"));
    }
    let males = train.iter().filter(|w| w.gender == Gender::Male).count();
    if males == 0 || males == train.len() {
        return Err(Error::Training {
            batch: 0,
            detail: "training windows contain a single gender; the gender head cannot be learned"
                .into(),
        });
    }
    for w in train {
        model.check_window(&w.data)?;
    }
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut opt_trunk = Adam::new(&model.trunk, adam);
    let mut opt_act = Adam::new(&model.activity_head, adam);
    let mut opt_gen = Adam::new(&model.gender_head, adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_SEED_SALT);
    let mut grads = SampleGrads::zeros_for(model);
    let mut history = TrainHistory::default();
    let mut batch_id = 0;

    for epoch in 0..config.epochs {
        let mut losses = Vec::with_capacity(train.len());
        let (mut act_hits, mut gen_hits) = (0usize, 0usize);
        for batch in epoch_batches(train.len(), config.batch_size, &mut shuffle_rng) {
            grads.fill_zero();
            for &i in &batch {
                let (loss, a, g) = model.accumulate(&train[i], config, &mut dropout_rng, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        batch: batch_id,
                        detail: "non-finite loss".into(),
                    });
                }
                losses.push(loss);
                act_hits += a as usize;
                gen_hits += g as usize;
            }
            grads.scale(S::one() / S::of(batch.len() as f64));
            opt_trunk.step(&mut model.trunk, &grads.trunk, batch_id)?;
            opt_act.step(&mut model.activity_head, &grads.activity, batch_id)?;
            opt_gen.step(&mut model.gender_head, &grads.gender, batch_id)?;
            batch_id += 1;
        }
        let n = train.len() as f64;
        let val = match validation {
            Some(v) if !v.is_empty() => Some(evaluate(model, v)?),
            _ => None,
        };
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            loss: mean(&losses),
            activity_accuracy: 100.0 * act_hits as f64 / n,
            gender_accuracy: 100.0 * gen_hits as f64 / n,
            val_activity_accuracy: val.as_ref().map(|r| r.activity_accuracy),
            val_gender_accuracy: val.as_ref().map(|r| r.gender_accuracy),
        });
    }
    Ok(history)
}

/// Window-level accuracy of both heads; activity is the softmax argmax and
/// gender is Male when the posterior is at least 0.5.
pub fn evaluate<S: Scalar>(model: &EstimatorModel<S>, windows: &[Window<S>]) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::arg("cannot evaluate on zero windows"));
    }
    let mut confusion = [[0usize; NUM_ACTIVITIES]; NUM_ACTIVITIES];
    let mut gender_hits = 0usize;
    for w in windows {
        let (act, gen) = model.predict(&w.data)?;
        confusion[w.activity.index()][argmax(&act)] += 1;
        gender_hits += (gender_decision(gen) == w.gender) as usize;
    }
    let activity_hits: usize = (0..NUM_ACTIVITIES).map(|i| confusion[i][i]).sum();
    let n = windows.len() as f64;
    Ok(EvalReport {
        activity_accuracy: 100.0 * activity_hits as f64 / n,
        gender_accuracy: 100.0 * gender_hits as f64 / n,
        confusion,
        n_windows: windows.len(),
    })
}

impl EvalReport {
    /// Number of windows whose true activity is `activity`.
    pub fn class_count(&self, activity: Activity) -> usize {
        self.confusion[activity.index()].iter().sum()
    }
}
