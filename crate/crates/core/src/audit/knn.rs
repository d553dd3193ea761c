use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};

use super::matrix::DistanceMatrix;
use crate::dataio::{Gender, SubjectProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Attribute {
    Gender,
    Age,
    Weight,
    Height,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Gender,
        Attribute::Age,
        Attribute::Weight,
        Attribute::Height,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Age => "age",
            Attribute::Weight => "weight",
            Attribute::Height => "height",
        }
    }

    /// Gender as its 0/1 label, the others in their own units.
    pub fn value(self, p: &SubjectProfile) -> f64 {
        match self {
            Attribute::Gender => p.gender.label() as f64,
            Attribute::Age => p.age,
            Attribute::Weight => p.weight,
            Attribute::Height => p.height,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttributeEstimate {
    pub attribute: Attribute,
    pub subject_ids: Vec<u32>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    /// Classification error for gender, mean absolute error otherwise.
    pub error: f64,
    /// Error of the random estimator on the same subjects.
    pub baseline: f64,
    pub normalized_error: f64,
}

fn lookup<'a>(profiles: &'a [SubjectProfile], ids: &[u32]) -> Result<Vec<&'a SubjectProfile>> {
    ids.iter()
        .map(|id| {
            profiles
                .iter()
                .find(|p| p.subject_id == *id)
                .ok_or_else(|| Error::arg(format!("no profile for subject {id}")))
        })
        .collect()
}

/// Random-estimator error: the minority gender fraction for gender, half
/// the observed range for continuous attributes.
pub fn random_baseline(profiles: &[&SubjectProfile], attribute: Attribute) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::arg("random baseline needs at least one profile"));
    }
    let n = profiles.len() as f64;
    Ok(match attribute {
        Attribute::Gender => {
            let female = profiles.iter().filter(|p| p.gender == Gender::Female).count() as f64;
            female.min(n - female) / n
        }
        _ => {
            let (lo, hi) = profiles.iter().map(|p| attribute.value(p)).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            );
            (hi - lo) / 2.0
        }
    })
}

/// Scores per-subject predictions against the profiles.
pub fn score_predictions(
    attribute: Attribute,
    subject_ids: &[u32],
    predicted: Vec<f64>,
    profiles: &[SubjectProfile],
) -> Result<AttributeEstimate> {
    if predicted.len() != subject_ids.len() {
        return Err(Error::arg("one prediction per subject is required"));
    }
    let subjects = lookup(profiles, subject_ids)?;
    let actual: Vec<f64> = subjects.iter().map(|p| attribute.value(p)).collect();
    let n = actual.len() as f64;
    let error = match attribute {
        Attribute::Gender => {
            predicted.iter().zip(&actual).filter(|(p, a)| p != a).count() as f64 / n
        }
        _ => predicted.iter().zip(&actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / n,
    };
    let baseline = random_baseline(&subjects, attribute)?;
    if !(baseline > 0.0) {
        return Err(Error::arg(format!(
            "random baseline for {attribute} is zero; the subjects do not vary in it"
        )));
    }
    Ok(AttributeEstimate {
        attribute,
        subject_ids: subject_ids.to_vec(),
        predicted,
        actual,
        error,
        baseline,
        normalized_error: error / baseline,
    })
}

/// Leave-one-subject-out distance-weighted k-NN with weights `1/d^2`.
///
/// Neighbours at distance zero take precedence: when any are among the
/// k nearest, only they vote, with equal weight. Gender ties go to Male.
pub fn knn_estimate(
    d: &DistanceMatrix,
    profiles: &[SubjectProfile],
    attribute: Attribute,
    k: usize,
) -> Result<AttributeEstimate> {
    let n = d.n();
    if n < 2 {
        return Err(Error::arg("k-NN needs at least two subjects"));
    }
    if k == 0 || k > n - 1 {
        return Err(Error::arg(format!("k must be in [1, {}], got {k}", n - 1)));
    }
    let subjects = lookup(profiles, &d.subject_ids)?;
    let values: Vec<f64> = subjects.iter().map(|p| attribute.value(p)).collect();
    let mut predicted = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (d.get(i, j), j)).collect();
        if others.iter().any(|(v, _)| !(*v >= 0.0)) {
            return Err(Error::arg(format!(
                "distance row for subject {} has a negative or undefined entry",
                d.subject_ids[i]
            )));
        }
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.truncate(k);
        let exact: Vec<usize> = others.iter().filter(|(v, _)| *v == 0.0).map(|&(_, j)| j).collect();
        let weighted: Vec<(f64, f64)> = if exact.is_empty() {
            others.iter().map(|&(v, j)| (1.0 / (v * v), values[j])).collect()
        } else {
            exact.iter().map(|&j| (1.0, values[j])).collect()
        };
        predicted.push(match attribute {
            Attribute::Gender => {
                let male: f64 = weighted.iter().filter(|(_, v)| *v == 1.0).map(|(w, _)| w).sum();
                let female: f64 = weighted.iter().filter(|(_, v)| *v == 0.0).map(|(w, _)| w).sum();
                if male >= female {
                    1.0
                } else {
                    0.0
                }
            }
            _ if weighted.len() == 1 => weighted[0].1,
            _ => {
                let total: f64 = weighted.iter().map(|(w, _)| w).sum();
                weighted.iter().map(|(w, v)| w * v).sum::<f64>() / total
            }
        });
    }
    score_predictions(attribute, &d.subject_ids, predicted, profiles)
}

/// Predictions of a deliberately uninformed estimator: a fair coin for
/// gender, a uniform pick between the observed minimum and maximum
/// otherwise. Its expected normalised error is 1 for continuous
/// attributes and for gender when the genders are balanced.
pub fn random_predictions(profiles: &[SubjectProfile], attribute: Attribute, rng: &mut dyn RngCore) -> Vec<f64> {
    let (lo, hi) = profiles.iter().map(|p| attribute.value(p)).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), v| (lo.min(v), hi.max(v)),
    );
    profiles
        .iter()
        .map(|_| match attribute {
            Attribute::Gender => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => {
                if rng.random_bool(0.5) {
                    hi
                } else {
                    lo
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile(id: u32, gender: Gender, height: f64) -> SubjectProfile {
        SubjectProfile {
            subject_id: id,
            gender,
            age: 20.0 + id as f64,
            weight: 60.0 + 2.0 * id as f64,
            height,
        }
    }

    fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    v[i * n + j] = f(i.min(j), i.max(j));
                }
            }
        }
        DistanceMatrix::new(v, (1..=n as u32).collect(), None).unwrap()
    }

    #[test]
    fn weighted_vote_hand_case() {
        // subject 1's neighbours: 2 (d=1, M), 3 (d=2, F), 4 (d=2, F) -> weights 1, .25, .25 -> M
        let d = matrix(4, |i, j| match (i, j) {
            (0, 1) => 1.0,
            (0, _) => 2.0,
            _ => 5.0,
        });
        let profiles = vec![
            profile(1, Gender::Female, 165.0),
            profile(2, Gender::Male, 180.0),
            profile(3, Gender::Female, 160.0),
            profile(4, Gender::Female, 162.0),
        ];
        let est = knn_estimate(&d, &profiles, Attribute::Gender, 3).unwrap();
        assert_eq!(est.predicted[0], 1.0);
        let h = knn_estimate(&d, &profiles, Attribute::Height, 3).unwrap();
        let expect = (180.0 + 0.25 * 160.0 + 0.25 * 162.0) / 1.5;
        assert!((h.predicted[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn zero_distance_neighbour_is_copied() {
        let d = matrix(3, |i, j| if (i, j) == (0, 1) { 0.0 } else { 1.0 });
        let profiles = vec![
            profile(1, Gender::Female, 150.0),
            profile(2, Gender::Female, 170.0),
            profile(3, Gender::Male, 190.0),
        ];
        let h = knn_estimate(&d, &profiles, Attribute::Height, 2).unwrap();
        assert_eq!(h.predicted[0], 170.0);
        assert_eq!(h.predicted[1], 150.0);
    }

    #[test]
    fn baselines() {
        let mut profiles: Vec<SubjectProfile> = (0..24)
            .map(|i| profile(i, if i < 10 { Gender::Female } else { Gender::Male }, 170.0))
            .collect();
        profiles[0].height = 161.0;
        profiles[5].height = 190.0;
        let refs: Vec<&SubjectProfile> = profiles.iter().collect();
        assert!((random_baseline(&refs, Attribute::Gender).unwrap() - 10.0 / 24.0).abs() < 1e-12);
        assert_eq!(random_baseline(&refs, Attribute::Height).unwrap(), 14.5);
    }

    #[test]
    fn argument_errors() {
        let profiles = vec![profile(1, Gender::Female, 150.0), profile(2, Gender::Male, 170.0)];
        let one = DistanceMatrix::new(vec![0.0], vec![1], None).unwrap();
        assert!(knn_estimate(&one, &profiles, Attribute::Gender, 1).is_err());
        let two = matrix(2, |_, _| 1.0);
        assert!(knn_estimate(&two, &profiles, Attribute::Gender, 0).is_err());
        assert!(knn_estimate(&two, &profiles, Attribute::Gender, 2).is_err());
        assert!(knn_estimate(&two, &profiles[..1], Attribute::Gender, 1).is_err());
    }

    #[test]
    fn random_predictor_is_calibrated() {
        let profiles: Vec<SubjectProfile> = (1..=8)
            .map(|i| profile(i, if i % 2 == 0 { Gender::Male } else { Gender::Female }, 150.0 + 5.0 * i as f64))
            .collect();
        let ids: Vec<u32> = profiles.iter().map(|p| p.subject_id).collect();
        for attribute in Attribute::ALL {
            let mean = (0..100u64)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let pred = random_predictions(&profiles, attribute, &mut rng);
                    score_predictions(attribute, &ids, pred, &profiles).unwrap().normalized_error
                })
                .sum::<f64>()
                / 100.0;
            assert!((mean - 1.0).abs() <= 0.15, "{attribute}: {mean}");
        }
    }

    fn setup() -> impl Strategy<Value = (usize, Vec<f64>, Vec<(bool, f64)>)> {
        (3usize..9).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(0.01f64..10.0, n * (n - 1) / 2),
                proptest::collection::vec((any::<bool>(), 140.0f64..200.0), n),
            )
        })
    }

    fn build(n: usize, upper: &[f64], traits: &[(bool, f64)]) -> (DistanceMatrix, Vec<SubjectProfile>) {
        let mut idx = 0;
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                v[i * n + j] = upper[idx];
                v[j * n + i] = upper[idx];
                idx += 1;
            }
        }
        let mut profiles: Vec<SubjectProfile> = traits
            .iter()
            .enumerate()
            .map(|(i, &(m, h))| profile(i as u32 + 1, if m { Gender::Male } else { Gender::Female }, h))
            .collect();
        // keep both genders present so the baseline is defined
        profiles[0].gender = Gender::Female;
        profiles[1].gender = Gender::Male;
        (DistanceMatrix::new(v, (1..=n as u32).collect(), None).unwrap(), profiles)
    }

    proptest! {
        #[test]
        fn one_nn_copies_nearest((n, upper, traits) in setup()) {
            let (d, profiles) = build(n, &upper, &traits);
            let est = knn_estimate(&d, &profiles, Attribute::Height, 1).unwrap();
            for i in 0..n {
                let j = (0..n).filter(|&j| j != i)
                    .min_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b))).unwrap();
                prop_assert_eq!(est.predicted[i], profiles[j].height);
            }
        }

        #[test]
        fn scale_invariant((n, upper, traits) in setup(), factor in 0.01f64..100.0, k in 1usize..8) {
            let (d, profiles) = build(n, &upper, &traits);
            let k = k.min(n - 1);
            for attribute in [Attribute::Gender, Attribute::Height] {
                let a = knn_estimate(&d, &profiles, attribute, k).unwrap();
                let b = knn_estimate(&d.scaled(factor), &profiles, attribute, k).unwrap();
                for (x, y) in a.predicted.iter().zip(&b.predicted) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                }
                prop_assert!(a.normalized_error >= 0.0);
            }
        }
    }
}
