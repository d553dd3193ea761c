use alloc::format;
use alloc::vec::Vec;

use super::SensorRecording;
use crate::{Error, Result};

/// Per-channel min/max of the training partition.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Min/max per channel over every sample of `recordings`.
pub fn fit_normalizer(recordings: &[SensorRecording]) -> Result<NormalizationStats> {
    let first = recordings
        .first()
        .ok_or_else(|| Error::arg("cannot fit a normalizer on zero recordings"))?;
    let m = first.channels;
    let mut min = alloc::vec![f64::INFINITY; m];
    let mut max = alloc::vec![f64::NEG_INFINITY; m];
    for rec in recordings {
        if rec.channels != m {
            return Err(Error::arg(format!(
                "recording sub{} trial{} has {} channels, expected {m}",
                rec.subject_id, rec.trial_id, rec.channels
            )));
        }
        for c in 0..m {
            for &v in rec.channel(c) {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
    }
    NormalizationStats::new(min, max)
}

impl NormalizationStats {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::arg("min and max must be non-empty and equally long"));
        }
        if min.iter().zip(&max).any(|(lo, hi)| !(hi >= lo)) {
            return Err(Error::arg("max must not be below min"));
        }
        Ok(NormalizationStats { min, max })
    }

    pub fn num_channels(&self) -> usize {
        self.min.len()
    }

    /// `max - min`, or 1 for a constant channel.
    pub fn span(&self, channel: usize) -> f64 {
        let s = self.max[channel] - self.min[channel];
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    fn check(&self, rec: &SensorRecording) -> Result<()> {
        if rec.channels != self.num_channels() {
            return Err(Error::arg(format!(
                "recording has {} channels, normalizer has {}",
                rec.channels,
                self.num_channels()
            )));
        }
        Ok(())
    }

    fn map(&self, rec: &SensorRecording, f: impl Fn(f64, f64, f64) -> f64) -> SensorRecording {
        let len = rec.len();
        let mut out = rec.clone();
        for c in 0..rec.channels {
            let (lo, span) = (self.min[c], self.span(c));
            for v in &mut out.samples[c * len..(c + 1) * len] {
                *v = f(*v, lo, span);
            }
        }
        out
    }

    /// `(x - min) / span`, clamped to `[0, 1]`.
    pub fn normalize(&self, rec: &SensorRecording) -> Result<SensorRecording> {
        self.check(rec)?;
        Ok(self.map(rec, |x, lo, span| ((x - lo) / span).clamp(0.0, 1.0)))
    }

    /// Like [`normalize`](Self::normalize) without the clamp. Used for data
    /// already produced by a guardian, whose output is not bounded above.
    pub fn normalize_unclamped(&self, rec: &SensorRecording) -> Result<SensorRecording> {
        self.check(rec)?;
        Ok(self.map(rec, |x, lo, span| (x - lo) / span))
    }

    pub fn denormalize(&self, rec: &SensorRecording) -> Result<SensorRecording> {
        self.check(rec)?;
        Ok(self.map(rec, |x, lo, span| x * span + lo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Activity;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(channels: usize, samples: Vec<f64>) -> SensorRecording {
        SensorRecording::new(1, 1, Activity::Walking, channels, samples, 50.0).unwrap()
    }

    #[test]
    fn min_max_of_single_channel() {
        let s = fit_normalizer(&[rec(1, vec![-2.0, 0.0, 2.0])]).unwrap();
        assert_eq!((s.min[0], s.max[0]), (-2.0, 2.0));
        let n = s.normalize(&rec(1, vec![-2.0, 2.0, 0.0])).unwrap();
        assert_eq!(n.samples, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn constant_channel_has_unit_span() {
        let s = fit_normalizer(&[rec(1, vec![5.0, 5.0, 5.0])]).unwrap();
        assert_eq!((s.min[0], s.max[0], s.span(0)), (5.0, 5.0, 1.0));
        assert_eq!(s.normalize(&rec(1, vec![5.0])).unwrap().samples, vec![0.0]);
    }

    #[test]
    fn stats_of_two_recordings_equal_stats_of_concatenation() {
        let a = rec(2, vec![1.0, 4.0, -3.0, 0.5]);
        let b = rec(2, vec![7.0, -1.0, 2.0, 9.0]);
        let joined = rec(2, vec![1.0, 4.0, 7.0, -1.0, -3.0, 0.5, 2.0, 9.0]);
        assert_eq!(
            fit_normalizer(&[a, b]).unwrap(),
            fit_normalizer(&[joined]).unwrap()
        );
    }

    #[test]
    fn out_of_range_test_values_are_clamped() {
        let s = fit_normalizer(&[rec(1, vec![0.0, 10.0])]).unwrap();
        let n = s.normalize(&rec(1, vec![12.0, -4.0])).unwrap();
        assert_eq!(n.samples, vec![1.0, 0.0]);
        let u = s.normalize_unclamped(&rec(1, vec![12.0])).unwrap();
        assert!((u.samples[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(fit_normalizer(&[]).is_err());
        let s = fit_normalizer(&[rec(2, vec![0.0, 1.0])]).unwrap();
        assert!(s.normalize(&rec(1, vec![0.0])).is_err());
        assert!(s.denormalize(&rec(1, vec![0.0])).is_err());
    }

    proptest! {
        #[test]
        fn training_data_maps_into_unit_interval_and_round_trips(
            data in proptest::collection::vec(-1e3f64..1e3, 3..60)
        ) {
            let channels = 3;
            let n = data.len() / channels * channels;
            let r = rec(channels, data[..n].to_vec());
            let s = fit_normalizer(core::slice::from_ref(&r)).unwrap();
            let norm = s.normalize(&r).unwrap();
            prop_assert!(norm.samples.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = s.denormalize(&norm).unwrap();
            for (a, b) in back.samples.iter().zip(&r.samples) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
