//! Sensor recordings, subject profiles, normalisation, windowing and
//! train/test splits.

mod normalize;
mod split;
mod synth;
mod window;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use normalize::{fit_normalizer, NormalizationStats};
pub use split::{make_split, RecordingKey, SplitMode, SplitPlan};
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};
pub use window::{make_windows, Window};

use crate::{Error, Result};

pub const NUM_ACTIVITIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activity {
    Downstairs,
    Upstairs,
    Walking,
    Jogging,
}

impl Activity {
    pub const ALL: [Activity; NUM_ACTIVITIES] = [
        Activity::Downstairs,
        Activity::Upstairs,
        Activity::Walking,
        Activity::Jogging,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Activity> {
        Activity::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activity::Downstairs => "downstairs",
            Activity::Upstairs => "upstairs",
            Activity::Walking => "walking",
            Activity::Jogging => "jogging",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = Error;

    /// Accepts the canonical names and the short MotionSense codes.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "downstairs" | "dws" => Ok(Activity::Downstairs),
            "upstairs" | "ups" => Ok(Activity::Upstairs),
            "walking" | "wlk" => Ok(Activity::Walking),
            "jogging" | "jog" => Ok(Activity::Jogging),
            other => Err(Error::arg(format!("unknown activity '{other}'"))),
        }
    }
}

/// Female = 0, Male = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Gender {
    Female = 0,
    Male = 1,
}

impl Gender {
    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Gender> {
        match label {
            0 => Some(Gender::Female),
            1 => Some(Gender::Male),
            _ => None,
        }
    }

    pub fn code(self) -> char {
        match self {
            Gender::Female => 'F',
            Gender::Male => 'M',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectProfile {
    pub subject_id: u32,
    pub gender: Gender,
    pub age: f64,
    pub weight: f64,
    pub height: f64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.age > 0.0 && self.weight > 0.0 && self.height > 0.0) {
            return Err(Error::arg(format!(
                "subject {} must have positive age, weight and height",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// Channel layout and sampling rate of a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetDescriptor {
    pub name: String,
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
}

impl DatasetDescriptor {
    /// Attitude, gravity, rotation rate and user acceleration at 50 Hz.
    pub fn motion_sense() -> Self {
        let channels = [
            "attitude.roll",
            "attitude.pitch",
            "attitude.yaw",
            "gravity.x",
            "gravity.y",
            "gravity.z",
            "rotationRate.x",
            "rotationRate.y",
            "rotationRate.z",
            "userAcceleration.x",
            "userAcceleration.y",
            "userAcceleration.z",
        ];
        DatasetDescriptor {
            name: "motionsense".to_string(),
            channels: channels.iter().map(|c| c.to_string()).collect(),
            sample_rate_hz: 50.0,
        }
    }

    /// Accelerometer, gyroscope and orientation at 20 Hz.
    pub fn mobi_act() -> Self {
        let channels = [
            "acc.x", "acc.y", "acc.z", "gyro.x", "gyro.y", "gyro.z", "azimuth", "pitch", "roll",
        ];
        DatasetDescriptor {
            name: "mobiact".to_string(),
            channels: channels.iter().map(|c| c.to_string()).collect(),
            sample_rate_hz: 20.0,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

/// One subject/trial/activity recording.
///
/// `samples` is channel-major: channel `c` occupies `samples[c * len .. (c + 1) * len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecording {
    pub subject_id: u32,
    pub trial_id: u32,
    pub activity: Activity,
    pub channels: usize,
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl SensorRecording {
    pub fn new(
        subject_id: u32,
        trial_id: u32,
        activity: Activity,
        channels: usize,
        samples: Vec<f64>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if channels == 0 || samples.is_empty() || samples.len() % channels != 0 {
            return Err(Error::arg(format!(
                "recording sub{subject_id} trial{trial_id}: {} samples cannot form {channels} equal channels",
                samples.len()
            )));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::arg("sample rate must be positive"));
        }
        Ok(SensorRecording {
            subject_id,
            trial_id,
            activity,
            channels,
            samples,
            sample_rate_hz,
        })
    }

    /// Builds a recording from time-major rows (one row per time step).
    pub fn from_rows(
        subject_id: u32,
        trial_id: u32,
        activity: Activity,
        rows: &[Vec<f64>],
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::arg("rows have differing channel counts"));
        }
        let len = rows.len();
        let mut samples = alloc::vec![0.0; channels * len];
        for (t, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                samples[c * len + t] = v;
            }
        }
        SensorRecording::new(subject_id, trial_id, activity, channels, samples, sample_rate_hz)
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let len = self.len();
        &self.samples[c * len..(c + 1) * len]
    }

    pub fn key(&self) -> RecordingKey {
        RecordingKey {
            subject_id: self.subject_id,
            activity: self.activity,
            trial_id: self.trial_id,
        }
    }

    /// Time-major copy of the samples (row `t` holds every channel at time `t`).
    pub fn to_frames(&self) -> Vec<f64> {
        let len = self.len();
        let mut frames = alloc::vec![0.0; self.samples.len()];
        for c in 0..self.channels {
            for t in 0..len {
                frames[t * self.channels + c] = self.samples[c * len + t];
            }
        }
        frames
    }
}
