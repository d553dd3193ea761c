//! Run configuration: a flat `key=value` file whose keys can each be
//! overridden by a `--key` flag (underscores become hyphens).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use genshield_core::audit::DtwConfig;
use genshield_core::dataio::{DatasetDescriptor, SplitMode, SynthConfig};
use genshield_core::estimator::TrainConfig;
use genshield_core::guardian::{CrossEntropySign, NeutralizerConfig};

use crate::dataset::parse_key_values;
use crate::error::{Error, Result};

/// Every recognised key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("out", "out", "output directory"),
    ("data", "", "raw dataset directory [default: <out>/synthetic]"),
    ("transformed", "", "transformed dataset directory [default: <out>/transformed]"),
    ("estimator", "", "estimator model file [default: <out>/estimator.gmodel]"),
    ("guardian", "", "guardian model file [default: <out>/guardian.gmodel]"),
    ("model", "", "model file for inspect-model"),
    ("seed", "0", "master seed"),
    ("synth_subjects", "8", "synthetic subjects"),
    ("synth_trials", "3", "synthetic trials per activity"),
    ("synth_samples", "1000", "samples per synthetic trial"),
    ("synth_strength", "1", "synthetic gender fingerprint strength in [0,1]"),
    ("synth_dataset", "motionsense", "synthetic channel layout: motionsense | mobiact"),
    ("d", "128", "window length"),
    ("stride", "64", "window stride"),
    ("split", "trial", "train/test split: trial | subject"),
    ("fold", "0", "subject-split fold in 0..4"),
    ("est_epochs", "30", "estimator epochs"),
    ("est_batch", "64", "estimator batch size"),
    ("est_lr", "0.001", "estimator learning rate"),
    ("est_activity_weight", "1", "activity loss weight"),
    ("est_gender_weight", "1", "gender loss weight"),
    ("gen_epochs", "30", "guardian epochs"),
    ("gen_batch", "64", "guardian batch size"),
    ("gen_lr", "0.001", "guardian learning rate"),
    ("gen_warmup", "10", "guardian reconstruction warm-up epochs"),
    ("gen_target", "0.5", "target gender confidence"),
    ("gen_sign", "add", "cross-entropy sign in the guardian loss: add | subtract"),
    ("probe_epochs", "30", "supervised probe epochs"),
    ("k", "0", "k-NN neighbours, 0 for n-1"),
    ("radius", "10", "FastDTW radius"),
    ("exact_max_len", "512", "series up to this length use exact DTW"),
    ("max_len", "2000", "longer series are averaged down to this length"),
    ("threshold_cm", "172", "height threshold for the gender baseline"),
];

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let kv = parse_key_values(&text, path).map_err(|e| Error::Config(e.to_string()))?;
            for (k, v) in kv {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown config key '{key}'"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key is listed in KEYS")
    }

    pub fn snapshot(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
    }

    fn positive(&self, key: &str) -> Result<usize> {
        let v: usize = self.parse(key)?;
        if v == 0 {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        Ok(v)
    }

    fn path_or(&self, key: &str, default: &str) -> PathBuf {
        match self.get(key) {
            "" => self.out().join(default),
            p => PathBuf::from(p),
        }
    }

    pub fn out(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.path_or("data", "synthetic")
    }

    pub fn transformed_dir(&self) -> PathBuf {
        self.path_or("transformed", "transformed")
    }

    pub fn estimator_path(&self) -> PathBuf {
        self.path_or("estimator", "estimator.gmodel")
    }

    pub fn guardian_path(&self) -> PathBuf {
        self.path_or("guardian", "guardian.gmodel")
    }

    pub fn model_path(&self) -> Result<PathBuf> {
        match self.get("model") {
            "" => Err(Error::Config("inspect-model needs --model <file>".into())),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn window(&self) -> Result<(usize, usize)> {
        let d = self.positive("d")?;
        let stride = self.positive("stride")?;
        if stride > d {
            return Err(Error::Config(format!("stride {stride} exceeds d {d}")));
        }
        Ok((d, stride))
    }

    pub fn split(&self) -> Result<(SplitMode, usize)> {
        let mode = match self.get("split") {
            "trial" => SplitMode::Trial,
            "subject" => SplitMode::Subject,
            other => return Err(Error::Config(format!("split must be trial or subject, got '{other}'"))),
        };
        Ok((mode, self.parse("fold")?))
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let descriptor = match self.get("synth_dataset") {
            "motionsense" => DatasetDescriptor::motion_sense(),
            "mobiact" => DatasetDescriptor::mobi_act(),
            other => {
                return Err(Error::Config(format!(
                    "synth_dataset must be motionsense or mobiact, got '{other}'"
                )))
            }
        };
        Ok(SynthConfig {
            n_subjects: self.parse("synth_subjects")?,
            trials_per_activity: self.parse("synth_trials")?,
            samples_per_trial: self.parse("synth_samples")?,
            seed: self.seed()?,
            fingerprint_strength: self.parse("synth_strength")?,
            descriptor,
        })
    }

    pub fn estimator_training(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.parse("est_epochs")?,
            batch_size: self.positive("est_batch")?,
            learning_rate: self.parse("est_lr")?,
            seed: self.seed()?,
            activity_weight: self.parse("est_activity_weight")?,
            gender_weight: self.parse("est_gender_weight")?,
        })
    }

    pub fn guardian_training(&self) -> Result<NeutralizerConfig> {
        let sign = match self.get("gen_sign") {
            "add" => CrossEntropySign::Add,
            "subtract" => CrossEntropySign::Subtract,
            other => return Err(Error::Config(format!("gen_sign must be add or subtract, got '{other}'"))),
        };
        Ok(NeutralizerConfig {
            target_confidence: self.parse("gen_target")?,
            epochs: self.parse("gen_epochs")?,
            batch_size: self.positive("gen_batch")?,
            learning_rate: self.parse("gen_lr")?,
            seed: self.seed()?.wrapping_add(1),
            cross_entropy_sign: sign,
            warmup_epochs: self.parse("gen_warmup")?,
        })
    }

    /// Estimator settings for the attacker, with its own seed.
    pub fn probe_training(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.parse("probe_epochs")?,
            seed: self.seed()?.wrapping_add(2),
            ..self.estimator_training()?
        })
    }

    pub fn dtw(&self) -> Result<DtwConfig> {
        Ok(DtwConfig {
            radius: self.parse("radius")?,
            exact_max_len: self.parse("exact_max_len")?,
            max_len: self.positive("max_len")?,
        })
    }

    /// `None` means `n - 1`.
    pub fn k(&self) -> Result<Option<usize>> {
        let k: usize = self.parse("k")?;
        Ok((k > 0).then_some(k))
    }
}
