use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{Activity, Gender, SensorRecording, SubjectProfile, NUM_ACTIVITIES};
use crate::{Error, Result, Scalar};

/// An `m x d` section of a recording, channel-major, with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<S> {
    pub data: Vec<S>,
    pub channels: usize,
    pub activity: Activity,
    pub gender: Gender,
    pub subject_id: u32,
    pub trial_id: u32,
    /// Zero-based time index of the first sample in the source recording.
    pub start: usize,
}

impl<S: Scalar> Window<S> {
    /// Window length `d`.
    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn activity_one_hot(&self) -> [S; NUM_ACTIVITIES] {
        let mut v = [S::zero(); NUM_ACTIVITIES];
        v[self.activity.index()] = S::one();
        v
    }

    pub fn gender_target(&self) -> S {
        S::of(self.gender.label() as f64)
    }
}

/// Zero-based start indices of the windows of a recording of length `len`.
pub(crate) fn window_starts(len: usize, d: usize, stride: usize) -> impl Iterator<Item = usize> {
    let count = if len >= d { (len - d) / stride + 1 } else { 0 };
    (0..count).map(move |w| w * stride)
}

/// Cuts every recording into windows of length `d` starting at `0, stride, 2*stride, ...`.
///
/// A recording of length `T >= d` yields `(T - d) / stride + 1` windows;
/// shorter recordings yield none.
pub fn make_windows<S: Scalar>(
    recordings: &[SensorRecording],
    profiles: &[SubjectProfile],
    d: usize,
    stride: usize,
) -> Result<Vec<Window<S>>> {
    if d < 2 {
        return Err(Error::arg(format!("window length must be at least 2, got {d}")));
    }
    if stride == 0 || stride > d {
        return Err(Error::arg(format!("stride must lie in [1, {d}], got {stride}")));
    }
    let genders: BTreeMap<u32, Gender> =
        profiles.iter().map(|p| (p.subject_id, p.gender)).collect();
    let mut out = Vec::new();
    for rec in recordings {
        let gender = *genders.get(&rec.subject_id).ok_or_else(|| {
            Error::arg(format!("no profile for subject {}", rec.subject_id))
        })?;
        for start in window_starts(rec.len(), d, stride) {
            let mut data = Vec::with_capacity(rec.channels * d);
            for c in 0..rec.channels {
                data.extend(rec.channel(c)[start..start + d].iter().map(|&v| S::of(v)));
            }
            out.push(Window {
                data,
                channels: rec.channels,
                activity: rec.activity,
                gender,
                subject_id: rec.subject_id,
                trial_id: rec.trial_id,
                start,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn profile() -> SubjectProfile {
        SubjectProfile {
            subject_id: 1,
            gender: Gender::Male,
            age: 30.0,
            weight: 70.0,
            height: 175.0,
        }
    }

    fn ramp(len: usize) -> SensorRecording {
        let samples = (0..2 * len).map(|i| i as f64).collect();
        SensorRecording::new(1, 3, Activity::Jogging, 2, samples, 50.0).unwrap()
    }

    fn starts(len: usize, d: usize, stride: usize) -> Vec<usize> {
        make_windows::<f64>(&[ramp(len)], &[profile()], d, stride)
            .unwrap()
            .iter()
            .map(|w| w.start)
            .collect()
    }

    #[test]
    fn window_counts() {
        // one-based starts 1, 26, 51
        assert_eq!(starts(100, 50, 25), vec![0, 25, 50]);
        assert_eq!(starts(10, 10, 5).len(), 1);
        assert!(starts(9, 10, 5).is_empty());
    }

    #[test]
    fn count_formula_holds_on_small_domain() {
        for len in 1..=120 {
            for d in 2..=40 {
                for stride in 1..=d {
                    let expected = if len >= d { (len - d) / stride + 1 } else { 0 };
                    assert_eq!(starts(len, d, stride).len(), expected, "{len} {d} {stride}");
                }
            }
        }
    }

    #[test]
    fn start_enumeration_matches_running_window_definition() {
        // one-based running window t..t+d-1 must fit inside 1..=len
        let brute = |len: usize, d: usize, stride: usize| {
            let mut n = 0;
            let mut t = 1;
            while t + d - 1 <= len {
                n += 1;
                t += stride;
            }
            n
        };
        for len in 1..=1000 {
            for d in 2..=1000 {
                for stride in [d, (d / 2).max(1), (d / 3).max(1)] {
                    assert_eq!(window_starts(len, d, stride).count(), brute(len, d, stride));
                }
                if len <= 150 {
                    assert_eq!(window_starts(len, d, 1).count(), brute(len, d, 1));
                }
            }
        }
    }

    #[test]
    fn windows_carry_data_and_labels() {
        let w = &make_windows::<f32>(&[ramp(6)], &[profile()], 3, 2).unwrap()[1];
        assert_eq!(w.data, vec![2.0, 3.0, 4.0, 8.0, 9.0, 10.0]);
        assert_eq!((w.len(), w.trial_id, w.gender), (3, 3, Gender::Male));
        assert_eq!(w.activity_one_hot(), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(w.activity_one_hot().iter().sum::<f32>(), 1.0);
    }

    #[test]
    fn rejects_bad_parameters_and_missing_profiles() {
        assert!(make_windows::<f64>(&[ramp(6)], &[profile()], 1, 1).is_err());
        assert!(make_windows::<f64>(&[ramp(6)], &[profile()], 4, 5).is_err());
        assert!(make_windows::<f64>(&[ramp(6)], &[profile()], 4, 0).is_err());
        assert!(make_windows::<f64>(&[ramp(6)], &[], 4, 2).is_err());
    }
}
