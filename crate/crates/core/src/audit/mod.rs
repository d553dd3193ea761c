//! Measures the attribute information left in (transformed) sensor data:
//! DTW distance matrices between subjects, distance-weighted k-NN attribute
//! estimation scored against a random estimator, a height-threshold gender
//! rule, and a supervised probe that retrains the estimator from scratch.

mod dtw;
mod knn;
mod matrix;
mod probe;
mod threshold;

pub use dtw::{dtw_distance, dtw_exact, fastdtw, Series};
pub use knn::{knn_estimate, random_baseline, random_predictions, score_predictions, Attribute, AttributeEstimate};
pub use matrix::{build_distance_matrices, DistanceMatrices, DistanceMatrix, DtwConfig, SubjectSeries};
pub use probe::{supervised_probe, ProbeEpoch, ProbeResult};
pub use threshold::{threshold_gender_accuracy, ThresholdResult};
