//! Autoencoder guardian and the neutralizer training loop.
//!
//! The guardian maps a flattened window to a window of the same size. It is
//! trained against a frozen [`EstimatorModel`] so that the gender posterior
//! of its output sits at the target confidence while the activity posterior
//! stays on the true class. Only guardian weights change.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{NormalizationStats, Window};
use crate::estimator::EstimatorModel;
use crate::nn::{categorical_cross_entropy, loss::check_one_hot, Adam, AdamConfig, Gradients, LayerSpec, Mode, NeuralNet};
use crate::train::{epoch_batches, mean};
use crate::{Error, Result, Scalar};

/// Dense ReLU stack `|x| -> |x|/2 -> |x|/4 -> |x|/8 -> |x|/4 -> |x|/2 -> |x|`.
pub fn autoencoder_specs(input_len: usize) -> Result<Vec<LayerSpec>> {
    if input_len / 8 == 0 {
        return Err(Error::arg(format!(
            "autoencoder input of {input_len} values leaves an empty bottleneck"
        )));
    }
    let widths = [
        input_len / 2,
        input_len / 4,
        input_len / 8,
        input_len / 4,
        input_len / 2,
        input_len,
    ];
    Ok(widths
        .iter()
        .flat_map(|&units| [LayerSpec::Dense { units }, LayerSpec::ReLU])
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardianModel<S> {
    pub autoencoder: NeuralNet<S>,
    /// `(m, d)` of the windows it transforms.
    pub input_shape: (usize, usize),
    pub normalization: Option<NormalizationStats>,
}

pub fn build_guardian<S: Scalar>(m: usize, d: usize, seed: u64) -> Result<GuardianModel<S>> {
    let len = m * d;
    let autoencoder = NeuralNet::new(&[len], &autoencoder_specs(len)?, seed)?;
    Ok(GuardianModel {
        autoencoder,
        input_shape: (m, d),
        normalization: None,
    })
}

/// How the cross-entropy term enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CrossEntropySign {
    /// `|t - Y_g| + CCE`: keep the activity recognisable.
    Add,
    /// `|t - Y_g| - CCE`, the literal printed form. Maximises activity error;
    /// kept only for auditing.
    Subtract,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeutralizerConfig {
    pub target_confidence: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub cross_entropy_sign: CrossEntropySign,
    /// Epochs of plain reconstruction (mean squared error against the input)
    /// before the neutralizer objective. A randomly initialised autoencoder
    /// produces inputs on which the frozen estimator's sigmoid is saturated,
    /// so the gender term has no gradient until the output resembles data.
    pub warmup_epochs: usize,
}

impl Default for NeutralizerConfig {
    fn default() -> Self {
        NeutralizerConfig {
            target_confidence: 0.5,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            cross_entropy_sign: CrossEntropySign::Add,
            warmup_epochs: 5,
        }
    }
}

/// Value and gradients of the neutralizer objective for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralizerLoss<S> {
    pub value: S,
    pub d_gender: S,
    pub d_activity: Vec<S>,
}

/// `|target - Y_g| + CCE(true activity, predicted activity)`.
///
/// The absolute value has subgradient 0 at the kink. Probabilities inside the
/// cross-entropy are clamped to `[1e-7, 1 - 1e-7]`.
pub fn neutralizer_loss<S: Scalar>(
    gender_posterior: S,
    activity_posterior: &[S],
    activity_true: &[S],
    target_confidence: S,
    sign: CrossEntropySign,
) -> Result<NeutralizerLoss<S>> {
    check_one_hot(activity_true, activity_posterior.len())?;
    let diff = gender_posterior - target_confidence;
    let d_gender = if diff > S::zero() {
        S::one()
    } else if diff < S::zero() {
        -S::one()
    } else {
        S::zero()
    };
    let (ce, mut d_activity) = categorical_cross_entropy(activity_posterior, activity_true)?;
    let value = match sign {
        CrossEntropySign::Add => diff.abs() + ce,
        CrossEntropySign::Subtract => {
            d_activity.iter_mut().for_each(|g| *g = -*g);
            diff.abs() - ce
        }
    };
    Ok(NeutralizerLoss {
        value,
        d_gender,
        d_activity,
    })
}

/// Per-epoch curves of the neutralizer loss and of the mean distance of the
/// gender posterior from the target.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenEpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub gender_deviation: f64,
    pub activity_accuracy: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenHistory {
    /// Loss on the training windows (and validation, when given) before the
    /// first update.
    pub initial_loss: f64,
    pub initial_val_loss: Option<f64>,
    /// Mean reconstruction error per warm-up epoch.
    pub warmup_losses: Vec<f64>,
    pub epochs: Vec<GenEpochStats>,
}

/// Mean neutralizer loss, mean `|target - Y_g|` and activity accuracy of the
/// guardian+estimator chain on `windows`.
pub fn neutralizer_metrics<S: Scalar>(
    guardian: &GuardianModel<S>,
    estimator: &EstimatorModel<S>,
    windows: &[Window<S>],
    config: &NeutralizerConfig,
) -> Result<(f64, f64, f64)> {
    let target = S::of(config.target_confidence);
    let (mut loss, mut dev, mut hits) = (0.0, 0.0, 0usize);
    for w in windows {
        let out = guardian.autoencoder.predict(&w.data)?;
        let (act, gen) = estimator.predict(&out)?;
        let l = neutralizer_loss(gen, &act, &w.activity_one_hot(), target, config.cross_entropy_sign)?;
        loss += l.value.as_f64();
        dev += (gen - target).abs().as_f64();
        hits += (crate::estimator::argmax(&act) == w.activity.index()) as usize;
    }
    let n = windows.len().max(1) as f64;
    Ok((loss / n, dev / n, 100.0 * hits as f64 / n))
}

impl<S: Scalar> GuardianModel<S> {
    fn check(&self, estimator: &EstimatorModel<S>) -> Result<()> {
        if self.input_shape != estimator.input_shape {
            return Err(Error::arg(format!(
                "guardian shape {:?} does not match estimator shape {:?}",
                self.input_shape, estimator.input_shape
            )));
        }
        Ok(())
    }

    /// Loss and parameter gradient contribution of one window, through the
    /// autoencoder and the frozen estimator.
    fn accumulate(
        &self,
        estimator: &EstimatorModel<S>,
        window: &Window<S>,
        config: &NeutralizerConfig,
        rng: &mut ChaCha8Rng,
        grads: &mut Gradients<S>,
    ) -> Result<(S, S, bool)> {
        let target = S::of(config.target_confidence);
        let trace = self.autoencoder.trace(&window.data, Mode::Train(rng))?;
        let one_hot = window.activity_one_hot();
        let (value, act, gen, d_out) = estimator.input_gradient(trace.output(), |act, gen| {
            let l = neutralizer_loss(gen, act, &one_hot, target, config.cross_entropy_sign)?;
            Ok((l.value, l.d_activity, l.d_gender))
        })?;
        self.autoencoder.backprop(&trace, &d_out, Some(grads))?;
        let hit = crate::estimator::argmax(&act) == window.activity.index();
        Ok((value, (gen - target).abs(), hit))
    }
}

/// Trains the guardian against the frozen estimator. The estimator is never
/// modified; an estimator that is not frozen is refused.
pub fn train_gen<S: Scalar>(
    guardian: &mut GuardianModel<S>,
    estimator: &EstimatorModel<S>,
    train: &[Window<S>],
    validation: Option<&[Window<S>]>,
    config: &NeutralizerConfig,
) -> Result<GenHistory> {
    if !estimator.is_frozen() {
        return Err(Error::Precondition(
            "the estimator must be frozen before guardian training".into(),
        ));
    }
    if !(config.target_confidence > 0.0 && config.target_confidence < 1.0) {
        return Err(Error::arg("target confidence must lie in (0, 1)"));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::arg("batch size and learning rate must be positive"));
    }
    if train.is_empty() {
        return Err(Error::arg("no training windows"));
    }
    guardian.check(estimator)?;
    let val = validation.filter(|v| !v.is_empty());
    let mut history = GenHistory {
        initial_loss: neutralizer_metrics(guardian, estimator, train, config)?.0,
        initial_val_loss: val
            .map(|v| neutralizer_metrics(guardian, estimator, v, config).map(|m| m.0))
            .transpose()?,
        warmup_losses: Vec::new(),
        epochs: Vec::new(),
    };
    let mut batch_id = 0;
    if config.warmup_epochs > 0 {
        let mut opt = Adam::new(&guardian.autoencoder, AdamConfig::with_learning_rate(config.learning_rate));
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7761_726d);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7761_726e);
        let mut grads = Gradients::zeros_for(&guardian.autoencoder);
        for _ in 0..config.warmup_epochs {
            let mut losses = Vec::with_capacity(train.len());
            for batch in epoch_batches(train.len(), config.batch_size, &mut shuffle_rng) {
                grads.fill_zero();
                for &i in &batch {
                    let x = &train[i].data;
                    let trace = guardian.autoencoder.trace(x, Mode::Train(&mut dropout_rng))?;
                    let n = S::of(x.len() as f64);
                    let diff: Vec<S> = trace.output().iter().zip(x).map(|(&o, &t)| o - t).collect();
                    let loss = diff.iter().fold(S::zero(), |acc, &v| acc + v * v) / n;
                    if !loss.is_finite() {
                        return Err(Error::Training {
                            batch: batch_id,
                            detail: "non-finite reconstruction loss".into(),
                        });
                    }
                    let two = S::of(2.0);
                    let grad: Vec<S> = diff.iter().map(|&v| two * v / n).collect();
                    guardian.autoencoder.backprop(&trace, &grad, Some(&mut grads))?;
                    losses.push(loss.as_f64());
                }
                grads.scale(S::one() / S::of(batch.len() as f64));
                opt.step(&mut guardian.autoencoder, &grads, batch_id)?;
                batch_id += 1;
            }
            history.warmup_losses.push(mean(&losses));
        }
    }
    let mut opt = Adam::new(&guardian.autoencoder, AdamConfig::with_learning_rate(config.learning_rate));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e75_7472);
    let mut grads = Gradients::zeros_for(&guardian.autoencoder);
    for epoch in 0..config.epochs {
        let (mut losses, mut devs) = (Vec::with_capacity(train.len()), Vec::with_capacity(train.len()));
        let mut hits = 0usize;
        for batch in epoch_batches(train.len(), config.batch_size, &mut shuffle_rng) {
            grads.fill_zero();
            for &i in &batch {
                let (loss, dev, hit) =
                    guardian.accumulate(estimator, &train[i], config, &mut dropout_rng, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        batch: batch_id,
                        detail: "non-finite neutralizer loss".into(),
                    });
                }
                losses.push(loss.as_f64());
                devs.push(dev.as_f64());
                hits += hit as usize;
            }
            grads.scale(S::one() / S::of(batch.len() as f64));
            opt.step(&mut guardian.autoencoder, &grads, batch_id)?;
            batch_id += 1;
        }
        history.epochs.push(GenEpochStats {
            epoch: epoch + 1,
            loss: mean(&losses),
            gender_deviation: mean(&devs),
            activity_accuracy: 100.0 * hits as f64 / train.len() as f64,
            val_loss: val
                .map(|v| neutralizer_metrics(guardian, estimator, v, config).map(|m| m.0))
                .transpose()?,
        });
    }
    Ok(history)
}

/// Replaces each window's data with the guardian output; labels are kept.
pub fn transform<S: Scalar>(guardian: &GuardianModel<S>, windows: &[Window<S>]) -> Result<Vec<Window<S>>> {
    let (m, d) = guardian.input_shape;
    windows
        .iter()
        .map(|w| {
            if w.channels != m || w.data.len() != m * d {
                return Err(Error::arg(format!(
                    "window of {}x{} does not match guardian shape {m}x{d}",
                    w.channels,
                    w.len()
                )));
            }
            Ok(Window {
                data: guardian.autoencoder.predict(&w.data)?,
                ..w.clone()
            })
        })
        .collect()
}

/// A stitched time series covering the windows of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedSeries<S> {
    pub subject_id: u32,
    pub trial_id: u32,
    pub activity: crate::dataio::Activity,
    /// Time index of the first reconstructed sample in the source recording.
    pub start: usize,
    pub channels: usize,
    /// Channel-major samples.
    pub samples: Vec<S>,
}

impl<S: Scalar> ReconstructedSeries<S> {
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Stitches windows of one recording back into a continuous series,
/// averaging samples covered by more than one window.
pub fn reconstruct_series<S: Scalar>(windows: &[Window<S>], stride: usize) -> Result<ReconstructedSeries<S>> {
    let first = windows.first().ok_or_else(|| Error::arg("no windows to reconstruct"))?;
    let (m, d) = (first.channels, first.len());
    let same_source = |w: &Window<S>| {
        w.subject_id == first.subject_id
            && w.trial_id == first.trial_id
            && w.activity == first.activity
            && w.channels == m
            && w.len() == d
    };
    if !windows.iter().all(same_source) {
        return Err(Error::arg("windows come from different recordings or differ in shape"));
    }
    if stride == 0 || stride > d {
        return Err(Error::arg(format!("stride must lie in [1, {d}], got {stride}")));
    }
    let starts: BTreeSet<usize> = windows.iter().map(|w| w.start).collect();
    if starts.len() != windows.len() {
        return Err(Error::arg("duplicate window start"));
    }
    let origin = *starts.first().expect("non-empty");
    if starts.iter().any(|s| (s - origin) % stride != 0) {
        return Err(Error::arg("window starts are not aligned to the stride"));
    }
    let end = starts.last().expect("non-empty") + d;
    let len = end - origin;
    let mut sum = vec![S::zero(); m * len];
    let mut count = vec![0u32; len];
    for w in windows {
        let off = w.start - origin;
        for t in 0..d {
            count[off + t] += 1;
        }
        for c in 0..m {
            for t in 0..d {
                sum[c * len + off + t] += w.data[c * d + t];
            }
        }
    }
    if count.iter().any(|&c| c == 0) {
        return Err(Error::arg("windows leave a gap in the series"));
    }
    for c in 0..m {
        for t in 0..len {
            sum[c * len + t] /= S::of(count[t] as f64);
        }
    }
    Ok(ReconstructedSeries {
        subject_id: first.subject_id,
        trial_id: first.trial_id,
        activity: first.activity,
        start: origin,
        channels: m,
        samples: sum,
    })
}
