use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Activity, SensorRecording};
use crate::{Error, Result};

pub const SUBJECT_FOLDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SplitMode {
    /// Per subject and activity, the first two thirds of the trials train.
    Trial,
    /// Whole subjects held out, four contiguous folds over sorted ids.
    Subject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordingKey {
    pub subject_id: u32,
    pub activity: Activity,
    pub trial_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub fold_index: usize,
    pub train: BTreeSet<RecordingKey>,
    pub test: BTreeSet<RecordingKey>,
    pub warnings: Vec<String>,
}

impl SplitPlan {
    pub fn is_train(&self, rec: &SensorRecording) -> bool {
        self.train.contains(&rec.key())
    }

    pub fn is_test(&self, rec: &SensorRecording) -> bool {
        self.test.contains(&rec.key())
    }

    /// Clones the recordings into (train, test) partitions.
    pub fn partition(&self, recordings: &[SensorRecording]) -> (Vec<SensorRecording>, Vec<SensorRecording>) {
        let train = recordings.iter().filter(|r| self.is_train(r)).cloned().collect();
        let test = recordings.iter().filter(|r| self.is_test(r)).cloned().collect();
        (train, test)
    }

    pub fn test_subjects(&self) -> BTreeSet<u32> {
        self.test.iter().map(|k| k.subject_id).collect()
    }
}

/// Partitions recordings for training and testing. Windowing happens after
/// this, so no window can straddle the two sets.
pub fn make_split(recordings: &[SensorRecording], mode: SplitMode, fold_index: usize) -> Result<SplitPlan> {
    let mut plan = SplitPlan {
        mode,
        fold_index,
        train: BTreeSet::new(),
        test: BTreeSet::new(),
        warnings: Vec::new(),
    };
    match mode {
        SplitMode::Trial => {
            let mut groups: BTreeMap<(u32, Activity), BTreeSet<u32>> = BTreeMap::new();
            for r in recordings {
                groups
                    .entry((r.subject_id, r.activity))
                    .or_default()
                    .insert(r.trial_id);
            }
            for ((subject_id, activity), trials) in groups {
                let k = trials.len();
                let n_train = (2 * k).div_ceil(3);
                if n_train == k {
                    plan.warnings.push(format!(
                        "subject {subject_id} has {k} {activity} trial(s); all assigned to train"
                    ));
                }
                for (i, trial_id) in trials.into_iter().enumerate() {
                    let key = RecordingKey {
                        subject_id,
                        activity,
                        trial_id,
                    };
                    if i < n_train {
                        plan.train.insert(key);
                    } else {
                        plan.test.insert(key);
                    }
                }
            }
        }
        SplitMode::Subject => {
            if fold_index >= SUBJECT_FOLDS {
                return Err(Error::arg(format!(
                    "fold index must be below {SUBJECT_FOLDS}, got {fold_index}"
                )));
            }
            let subjects: Vec<u32> = recordings
                .iter()
                .map(|r| r.subject_id)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let n = subjects.len();
            if n < SUBJECT_FOLDS {
                return Err(Error::arg(format!(
                    "subject split needs at least {SUBJECT_FOLDS} subjects, got {n}"
                )));
            }
            let lo = fold_index * n / SUBJECT_FOLDS;
            let hi = (fold_index + 1) * n / SUBJECT_FOLDS;
            let test_subjects: BTreeSet<u32> = subjects[lo..hi].iter().copied().collect();
            for r in recordings {
                if test_subjects.contains(&r.subject_id) {
                    plan.test.insert(r.key());
                } else {
                    plan.train.insert(r.key());
                }
            }
        }
    }
    Ok(plan)
}
