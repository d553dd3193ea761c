use alloc::vec::Vec;

use crate::dataio::Window;
use crate::estimator::{build_mtcnn, evaluate, fit, TrainConfig};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeEpoch {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_activity: f64,
    pub train_gender: f64,
    pub val_activity: f64,
    pub val_gender: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeResult {
    pub epochs: Vec<ProbeEpoch>,
}

impl ProbeResult {
    pub fn max_val_gender(&self) -> f64 {
        self.epochs.iter().map(|e| e.val_gender).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_epoch(&self) -> Option<&ProbeEpoch> {
        self.epochs.last()
    }
}

/// Trains a freshly initialised estimator on `train` and records accuracy
/// on both sets after every epoch. Training accuracy is measured with
/// dropout active, as it accumulates during the epoch.
pub fn supervised_probe<S: Scalar>(
    train: &[Window<S>],
    validation: &[Window<S>],
    config: &TrainConfig,
) -> Result<ProbeResult> {
    let first = train.first().ok_or_else(|| Error::arg("no training windows"))?;
    if validation.is_empty() {
        return Err(Error::arg("no validation windows"));
    }
    let mut model = build_mtcnn::<S>(first.channels, first.len(), config.seed)?;
    let t0 = evaluate(&model, train)?;
    let v0 = evaluate(&model, validation)?;
    let mut result = ProbeResult {
        epochs: alloc::vec![ProbeEpoch {
            epoch: 0,
            train_activity: t0.activity_accuracy,
            train_gender: t0.gender_accuracy,
            val_activity: v0.activity_accuracy,
            val_gender: v0.gender_accuracy,
        }],
    };
    let history = fit(&mut model, train, Some(validation), config)?;
    for e in history.epochs {
        result.epochs.push(ProbeEpoch {
            epoch: e.epoch,
            train_activity: e.activity_accuracy,
            train_gender: e.gender_accuracy,
            val_activity: e.val_activity_accuracy.unwrap_or(f64::NAN),
            val_gender: e.val_gender_accuracy.unwrap_or(f64::NAN),
        });
    }
    Ok(result)
}
