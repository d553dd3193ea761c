use crate::dataio::{Gender, SubjectProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdResult {
    pub threshold_cm: f64,
    /// Percent of subjects classified correctly at `threshold_cm`.
    pub accuracy: f64,
    /// Best threshold among the observed heights (lowest on ties).
    pub best_threshold_cm: f64,
    pub best_accuracy: f64,
}

fn accuracy_at(profiles: &[SubjectProfile], threshold: f64) -> f64 {
    let hits = profiles
        .iter()
        .filter(|p| (p.height >= threshold) == (p.gender == Gender::Male))
        .count();
    100.0 * hits as f64 / profiles.len() as f64
}

/// Accuracy of the rule "height at or above the threshold means Male".
pub fn threshold_gender_accuracy(profiles: &[SubjectProfile], threshold_cm: f64) -> Result<ThresholdResult> {
    if profiles.is_empty() {
        return Err(Error::arg("threshold accuracy needs at least one profile"));
    }
    let accuracy = accuracy_at(profiles, threshold_cm);
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for p in profiles {
        let acc = accuracy_at(profiles, p.height);
        if acc > best.1 || (acc == best.1 && p.height < best.0) {
            best = (p.height, acc);
        }
    }
    // a threshold above every height calls everyone Female
    let above = accuracy_at(profiles, f64::INFINITY);
    if above > best.1 {
        best = (f64::INFINITY, above);
    }
    Ok(ThresholdResult {
        threshold_cm,
        accuracy,
        best_threshold_cm: best.0,
        best_accuracy: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn p(id: u32, gender: Gender, height: f64) -> SubjectProfile {
        SubjectProfile { subject_id: id, gender, age: 30.0, weight: 70.0, height }
    }

    #[test]
    fn hand_cases() {
        let males: Vec<_> = (0..5).map(|i| p(i, Gender::Male, 170.0 + i as f64)).collect();
        assert_eq!(threshold_gender_accuracy(&males, 150.0).unwrap().accuracy, 100.0);
        let mixed = [p(1, Gender::Female, 160.0), p(2, Gender::Female, 175.0), p(3, Gender::Male, 180.0)];
        let r = threshold_gender_accuracy(&mixed, 172.0).unwrap();
        assert!((r.accuracy - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!((r.best_threshold_cm, r.best_accuracy), (180.0, 100.0));
        let females = [p(1, Gender::Female, 160.0)];
        assert_eq!(threshold_gender_accuracy(&females, 100.0).unwrap().best_accuracy, 100.0);
        assert!(threshold_gender_accuracy(&[], 172.0).is_err());
    }

    proptest! {
        #[test]
        fn scan_is_optimal(
            subjects in proptest::collection::vec((any::<bool>(), 150.0f64..200.0), 1..30),
            t in 140.0f64..210.0,
        ) {
            let profiles: Vec<_> = subjects.iter().enumerate()
                .map(|(i, &(m, h))| p(i as u32, if m { Gender::Male } else { Gender::Female }, h))
                .collect();
            let r = threshold_gender_accuracy(&profiles, t).unwrap();
            prop_assert!(r.best_accuracy >= r.accuracy);
            prop_assert!((0.0..=100.0).contains(&r.accuracy));
        }
    }
}
