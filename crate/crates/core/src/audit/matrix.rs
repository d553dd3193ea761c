use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::dtw::{dtw_exact, fastdtw, Series};
use crate::dataio::{Activity, SensorRecording, NUM_ACTIVITIES};
use crate::{Error, Result};

/// Square subject-by-subject distance matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistanceMatrix {
    pub values: Vec<f64>,
    pub subject_ids: Vec<u32>,
    /// `None` for the activity-averaged matrix.
    pub activity: Option<Activity>,
}

impl DistanceMatrix {
    pub fn new(values: Vec<f64>, subject_ids: Vec<u32>, activity: Option<Activity>) -> Result<Self> {
        let n = subject_ids.len();
        if values.len() != n * n {
            return Err(Error::arg(format!(
                "{} values do not form a {n}x{n} matrix",
                values.len()
            )));
        }
        Ok(DistanceMatrix {
            values,
            subject_ids,
            activity,
        })
    }

    pub fn n(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DistanceMatrix {
        DistanceMatrix {
            values: self.values.iter().map(|v| v * factor).collect(),
            subject_ids: self.subject_ids.clone(),
            activity: self.activity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DtwConfig {
    pub radius: usize,
    /// Pairs where both series are at most this long use exact DTW.
    pub exact_max_len: usize,
    /// Longer series are block-averaged down to this many frames.
    pub max_len: usize,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            radius: 10,
            exact_max_len: 512,
            max_len: 2000,
        }
    }
}

impl DtwConfig {
    pub fn distance(&self, a: &Series, b: &Series) -> Result<f64> {
        if a.len() <= self.exact_max_len && b.len() <= self.exact_max_len {
            dtw_exact(a, b)
        } else {
            fastdtw(a, b, self.radius)
        }
    }
}

/// One subject's series, one slot per activity.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSeries {
    pub subject_id: u32,
    pub per_activity: [Option<Series>; NUM_ACTIVITIES],
}

impl SubjectSeries {
    /// Concatenates each subject's trials per activity in trial order.
    /// Subjects come out sorted by id.
    pub fn from_recordings(recordings: &[SensorRecording]) -> Result<Vec<SubjectSeries>> {
        let mut sorted: Vec<&SensorRecording> = recordings.iter().collect();
        sorted.sort_by_key(|r| (r.subject_id, r.activity, r.trial_id));
        let mut out: BTreeMap<u32, SubjectSeries> = BTreeMap::new();
        for rec in sorted {
            let entry = out.entry(rec.subject_id).or_insert_with(|| SubjectSeries {
                subject_id: rec.subject_id,
                per_activity: Default::default(),
            });
            let series = Series::from_recording(rec);
            match &mut entry.per_activity[rec.activity.index()] {
                Some(existing) => existing.extend(&series)?,
                slot @ None => *slot = Some(series),
            }
        }
        Ok(out.into_values().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrices {
    /// One matrix per activity, in [`Activity::ALL`] order. Entries where
    /// either subject lacks the activity are NaN.
    pub per_activity: Vec<DistanceMatrix>,
    pub averaged: DistanceMatrix,
    pub warnings: Vec<String>,
}

/// Builds per-activity DTW matrices and their element-wise average.
///
/// A pair missing some activity is averaged over the activities both
/// subjects have; a pair sharing none is an error.
pub fn build_distance_matrices(subjects: &[SubjectSeries], config: &DtwConfig) -> Result<DistanceMatrices> {
    let n = subjects.len();
    if n < 2 {
        return Err(Error::arg("distance matrices need at least two subjects"));
    }
    let ids: Vec<u32> = subjects.iter().map(|s| s.subject_id).collect();
    let mut warnings = Vec::new();
    for s in subjects {
        for a in Activity::ALL {
            if s.per_activity[a.index()].is_none() {
                warnings.push(format!(
                    "subject {} has no {a} series; its distances average the remaining activities",
                    s.subject_id
                ));
            }
        }
    }
    let decimated: Vec<[Option<Series>; NUM_ACTIVITIES]> = subjects
        .iter()
        .map(|s| s.per_activity.clone().map(|o| o.map(|x| x.decimate(config.max_len))))
        .collect();

    let mut per_activity = Vec::with_capacity(NUM_ACTIVITIES);
    for a in Activity::ALL {
        let mut values = vec![f64::NAN; n * n];
        for i in 0..n {
            let Some(si) = &decimated[i][a.index()] else { continue };
            values[i * n + i] = 0.0;
            for j in i + 1..n {
                if let Some(sj) = &decimated[j][a.index()] {
                    let d = config.distance(si, sj)?;
                    values[i * n + j] = d;
                    values[j * n + i] = d;
                }
            }
        }
        per_activity.push(DistanceMatrix::new(values, ids.clone(), Some(a))?);
    }

    let mut avg = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let present: Vec<f64> = per_activity
                .iter()
                .map(|m| m.get(i, j))
                .filter(|v| !v.is_nan())
                .collect();
            if present.is_empty() {
                return Err(Error::arg(format!(
                    "subjects {} and {} share no activity",
                    ids[i], ids[j]
                )));
            }
            let d = present.iter().sum::<f64>() / present.len() as f64;
            avg[i * n + j] = d;
            avg[j * n + i] = d;
        }
    }
    Ok(DistanceMatrices {
        per_activity,
        averaged: DistanceMatrix::new(avg, ids, None)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> Series {
        Series::univariate(v.to_vec()).unwrap()
    }

    fn subject(id: u32, offsets: [Option<f64>; 4]) -> SubjectSeries {
        SubjectSeries {
            subject_id: id,
            per_activity: offsets.map(|o| o.map(|x| series(&[x, x]))),
        }
    }

    #[test]
    fn average_of_activity_distances() {
        // per-activity distances 2*|x_i - x_j|: 1,2,3,4 -> 2.5
        let s = [
            subject(1, [Some(0.0), Some(0.0), Some(0.0), Some(0.0)]),
            subject(2, [Some(0.5), Some(1.0), Some(1.5), Some(2.0)]),
        ];
        let m = build_distance_matrices(&s, &DtwConfig::default()).unwrap();
        let got: Vec<f64> = m.per_activity.iter().map(|d| d.get(0, 1)).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.averaged.get(0, 1), 2.5);
        assert_eq!(m.averaged.get(1, 0), 2.5);
        assert_eq!(m.averaged.get(0, 0), 0.0);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn missing_activity_renormalises() {
        let s = [
            subject(1, [Some(0.0), Some(0.0), None, Some(0.0)]),
            subject(2, [Some(0.5), Some(1.0), Some(1.5), Some(2.0)]),
        ];
        let m = build_distance_matrices(&s, &DtwConfig::default()).unwrap();
        assert!((m.averaged.get(0, 1) - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.warnings.len(), 1);
        let disjoint = [
            subject(1, [Some(0.0), None, None, None]),
            subject(2, [None, Some(1.0), None, None]),
        ];
        assert!(build_distance_matrices(&disjoint, &DtwConfig::default()).is_err());
        assert!(build_distance_matrices(&s[..1], &DtwConfig::default()).is_err());
    }

    #[test]
    fn permutation_and_identity() {
        let s = [
            subject(1, [Some(0.0); 4]),
            subject(2, [Some(1.0); 4]),
            subject(3, [Some(3.0); 4]),
        ];
        let m = build_distance_matrices(&s, &DtwConfig::default()).unwrap();
        let p = [s[2].clone(), s[0].clone(), s[1].clone()];
        let mp = build_distance_matrices(&p, &DtwConfig::default()).unwrap();
        let perm = [2usize, 0, 1];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(mp.averaged.get(i, j), m.averaged.get(perm[i], perm[j]));
            }
        }
        let same = [subject(1, [Some(2.0); 4]), subject(2, [Some(2.0); 4])];
        let z = build_distance_matrices(&same, &DtwConfig::default()).unwrap();
        assert!(z.averaged.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recordings_concatenate_in_trial_order() {
        let r = |trial, v: f64| {
            SensorRecording::new(4, trial, Activity::Jogging, 1, vec![v, v], 50.0).unwrap()
        };
        let subs = SubjectSeries::from_recordings(&[r(2, 9.0), r(1, 1.0)]).unwrap();
        assert_eq!(subs.len(), 1);
        let jog = subs[0].per_activity[Activity::Jogging.index()].as_ref().unwrap();
        assert_eq!(jog.frames(), &[1.0, 1.0, 9.0, 9.0]);
        assert!(subs[0].per_activity[0].is_none());
    }
}
