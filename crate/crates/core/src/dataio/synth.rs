use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Activity, DatasetDescriptor, Gender, SensorRecording, SubjectProfile, NUM_ACTIVITIES};
use crate::{Error, Result};

// Fundamental step frequency (Hz) and amplitude per activity.
const BASE_FREQ: [f64; NUM_ACTIVITIES] = [1.7, 1.5, 1.9, 2.6];
const BASE_AMP: [f64; NUM_ACTIVITIES] = [0.8, 0.7, 1.0, 1.8];
// Share of the activity-specific second harmonic.
const SHAPE_HARMONIC: [f64; NUM_ACTIVITIES] = [0.45, 0.25, 0.15, 0.35];
const GENDER_AMP_SHIFT: f64 = 0.2;
const GENDER_HARMONIC: f64 = 0.3;
const NOISE_STD: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_activity: usize,
    pub samples_per_trial: usize,
    pub seed: u64,
    /// 0 removes every gender cue from the signals, 1 is the strongest setting.
    pub fingerprint_strength: f64,
    pub descriptor: DatasetDescriptor,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 8,
            trials_per_activity: 3,
            samples_per_trial: 1000,
            seed: 0,
            fingerprint_strength: 1.0,
            descriptor: DatasetDescriptor::motion_sense(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub recordings: Vec<SensorRecording>,
    pub profiles: Vec<SubjectProfile>,
    pub descriptor: DatasetDescriptor,
}

struct ChannelShape {
    gain: f64,
    phase: f64,
    harmonic_phase: f64,
}

/// Generates gait-like recordings in which each activity has its own
/// waveform and the subject's gender scales the amplitude and adds a signed
/// third harmonic, both in proportion to `fingerprint_strength`.
///
/// Subjects alternate Female/Male by index (ids start at 1). Height, weight
/// and age are drawn with gender-dependent means. Output is a pure function
/// of the config.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticDataset> {
    if config.n_subjects < 4 {
        return Err(Error::arg(format!(
            "synthetic data needs at least 4 subjects, got {}",
            config.n_subjects
        )));
    }
    if !(0.0..=1.0).contains(&config.fingerprint_strength) {
        return Err(Error::arg("fingerprint strength must lie in [0, 1]"));
    }
    if config.trials_per_activity == 0 || config.samples_per_trial < 2 {
        return Err(Error::arg("need at least one trial of two samples per activity"));
    }
    let m = config.descriptor.num_channels();
    if m == 0 {
        return Err(Error::arg("descriptor declares no channels"));
    }
    let fs = config.descriptor.sample_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let offsets: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
    let shapes: Vec<Vec<ChannelShape>> = (0..NUM_ACTIVITIES)
        .map(|_| {
            (0..m)
                .map(|_| ChannelShape {
                    gain: rng.random_range(0.3..1.0),
                    phase: rng.random_range(0.0..2.0 * PI),
                    harmonic_phase: rng.random_range(0.0..2.0 * PI),
                })
                .collect()
        })
        .collect();

    let mut profiles = Vec::with_capacity(config.n_subjects);
    for i in 0..config.n_subjects {
        let gender = if i % 2 == 0 { Gender::Female } else { Gender::Male };
        let (h, w, a) = match gender {
            Gender::Female => (165.0, 62.0, 29.0),
            Gender::Male => (178.0, 78.0, 31.0),
        };
        let draw = |rng: &mut ChaCha8Rng, mean: f64, sd: f64, floor: f64| {
            Normal::new(mean, sd)
                .expect("positive sd")
                .sample(rng)
                .max(floor)
        };
        profiles.push(SubjectProfile {
            subject_id: i as u32 + 1,
            gender,
            height: draw(&mut rng, h, 6.0, 140.0),
            weight: draw(&mut rng, w, 8.0, 40.0),
            age: draw(&mut rng, a, 6.0, 18.0),
        });
    }

    let s = config.fingerprint_strength;
    let len = config.samples_per_trial;
    let mut recordings = Vec::new();
    for profile in &profiles {
        let sign = match profile.gender {
            Gender::Male => 1.0,
            Gender::Female => -1.0,
        };
        let amp_factor = 1.0 + s * GENDER_AMP_SHIFT * sign;
        let harmonic = s * GENDER_HARMONIC * sign;
        for activity in Activity::ALL {
            let a = activity.index();
            for trial in 1..=config.trials_per_activity {
                let tempo = rng.random_range(0.93..1.07);
                let jitter = rng.random_range(0.9..1.1);
                let phase0 = rng.random_range(0.0..2.0 * PI);
                let mut samples = Vec::with_capacity(m * len);
                for (c, shape) in shapes[a].iter().enumerate() {
                    let scale = BASE_AMP[a] * shape.gain * jitter;
                    for t in 0..len {
                        let theta = 2.0 * PI * BASE_FREQ[a] * tempo * t as f64 / fs + phase0;
                        let wave = amp_factor * Float::sin(theta + shape.phase)
                            + SHAPE_HARMONIC[a] * Float::sin(2.0 * theta + shape.harmonic_phase)
                            + harmonic * Float::sin(3.0 * theta + shape.phase);
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        samples.push(offsets[c] + scale * wave + NOISE_STD * noise);
                    }
                }
                recordings.push(SensorRecording::new(
                    profile.subject_id,
                    trial as u32,
                    activity,
                    m,
                    samples,
                    fs,
                )?);
            }
        }
    }
    Ok(SyntheticDataset {
        recordings,
        profiles,
        descriptor: config.descriptor.clone(),
    })
}
