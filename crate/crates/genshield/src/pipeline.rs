//! The subcommands. Each reads its inputs from files, writes its artifacts
//! and a JSON report under the output directory, and returns the report.

use std::path::{Path, PathBuf};

use genshield_core::audit::{
    build_distance_matrices, knn_estimate, supervised_probe, threshold_gender_accuracy, Attribute,
    DistanceMatrix, ProbeResult, SubjectSeries,
};
use genshield_core::dataio::{
    fit_normalizer, generate_synthetic, make_split, make_windows, NormalizationStats, SensorRecording,
    SubjectProfile, Window,
};
use genshield_core::estimator::{build_mtcnn, evaluate, fit, EstimatorModel, EvalReport};
use genshield_core::guardian::{build_guardian, neutralizer_metrics, reconstruct_series, train_gen, transform};
use genshield_core::modelstore::StoredModel;
use genshield_core::Scalar;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::dataset::{check_channels, load_dataset, write_dataset, Dataset, TransformMeta};
use crate::error::{DataError, Error, Result};
use crate::report::{write_csv, Report};
use crate::store;

pub const COMMANDS: &[(&str, &str)] = &[
    ("synth", "generate a synthetic dataset"),
    ("train-estimator", "train the activity/gender estimator"),
    ("train-gen", "train the guardian against the frozen estimator"),
    ("transform", "rewrite a dataset through the guardian"),
    ("eval", "estimator accuracy on raw and transformed test data"),
    ("audit-dtw", "DTW k-NN attribute inference on raw and transformed data"),
    ("audit-probe", "train a fresh estimator on transformed data"),
    ("inspect-model", "print a model file's digest and layer manifest"),
];

pub const PRECISION_VAR: &str = "GENSHIELD_PRECISION";

/// Reads the precision selector; unset means f32.
pub fn precision_from_env() -> Result<String> {
    match std::env::var(PRECISION_VAR) {
        Err(_) => Ok("f32".into()),
        Ok(v) if v == "f32" || v == "f64" => Ok(v),
        Ok(v) => Err(Error::Config(format!("{PRECISION_VAR} must be f32 or f64, got '{v}'"))),
    }
}

/// Runs one subcommand and writes its report. Returns the report and its path.
pub fn run(command: &str, cfg: &RunConfig, precision: &str) -> Result<(Report, PathBuf)> {
    let mut report = Report::new(command, cfg, precision)?;
    let results = match precision {
        "f32" => dispatch::<f32>(command, cfg, &mut report)?,
        "f64" => dispatch::<f64>(command, cfg, &mut report)?,
        other => return Err(Error::Config(format!("unsupported precision '{other}'"))),
    };
    report.results = results;
    let path = report.write(&cfg.out())?;
    Ok((report, path))
}

fn dispatch<S: Scalar>(command: &str, cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    match command {
        "synth" => synth(cfg, report),
        "train-estimator" => train_estimator::<S>(cfg, report),
        "train-gen" => train_guardian::<S>(cfg, report),
        "transform" => transform_data::<S>(cfg, report),
        "eval" => eval::<S>(cfg, report),
        "audit-dtw" => audit_dtw(cfg, report),
        "audit-probe" => audit_probe::<S>(cfg, report),
        "inspect-model" => inspect_model(cfg, report),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn synth(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let sc = cfg.synth()?;
    let data = generate_synthetic(&sc)?;
    let dir = cfg.data_dir();
    write_dataset(
        &dir,
        &Dataset {
            descriptor: data.descriptor.clone(),
            recordings: data.recordings.clone(),
            profiles: data.profiles.clone(),
            transform: None,
        },
    )?;
    report.output(&cfg.out(), &dir)?;
    Ok(json!({
        "dataset": data.descriptor.name,
        "channels": data.descriptor.num_channels(),
        "subjects": data.profiles.len(),
        "recordings": data.recordings.len(),
        "profiles": data.profiles,
    }))
}

/// Loads a dataset that an earlier command (`producer`) is expected to have written.
fn load_required(dir: &Path, producer: &str, cfg_key_set: bool) -> Result<Dataset> {
    if !dir.exists() && !cfg_key_set {
        return Err(Error::Dependency(format!(
            "dataset {} not found; run {producer} first",
            dir.display()
        )));
    }
    let data = load_dataset(dir)?;
    if data.recordings.is_empty() {
        return Err(DataError::Invalid(format!("{} holds no recordings", dir.display())).into());
    }
    Ok(data)
}

fn load_raw(cfg: &RunConfig, report: &mut Report) -> Result<Dataset> {
    let dir = cfg.data_dir();
    let data = load_required(&dir, "synth", !cfg.get("data").is_empty())?;
    report.input(&cfg.out(), &dir)?;
    Ok(data)
}

fn load_transformed(cfg: &RunConfig, report: &mut Report) -> Result<Dataset> {
    let dir = cfg.transformed_dir();
    let data = load_required(&dir, "transform", false)?;
    report.input(&cfg.out(), &dir)?;
    Ok(data)
}

/// Train and test recordings under the configured split.
fn partition(cfg: &RunConfig, data: &Dataset, report: &mut Report) -> Result<(Vec<SensorRecording>, Vec<SensorRecording>)> {
    let (mode, fold) = cfg.split()?;
    let plan = make_split(&data.recordings, mode, fold)?;
    report.warnings.extend(plan.warnings.iter().cloned());
    Ok(plan.partition(&data.recordings))
}

fn windows<S: Scalar>(
    recordings: &[SensorRecording],
    profiles: &[SubjectProfile],
    stats: &NormalizationStats,
    clamp: bool,
    d: usize,
    stride: usize,
) -> Result<Vec<Window<S>>> {
    let normalized = recordings
        .iter()
        .map(|r| if clamp { stats.normalize(r) } else { stats.normalize_unclamped(r) })
        .collect::<genshield_core::Result<Vec<_>>>()?;
    Ok(make_windows(&normalized, profiles, d, stride)?)
}

fn non_empty<S>(ws: &[Window<S>], what: &str) -> Result<()> {
    if ws.is_empty() {
        return Err(DataError::Invalid(format!("no {what} windows; recordings are shorter than the window length")).into());
    }
    Ok(())
}

fn eval_json(r: &EvalReport) -> Value {
    serde_json::to_value(r).expect("serializable")
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn train_estimator<S: Scalar>(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let out = cfg.out();
    let data = load_raw(cfg, report)?;
    let (d, stride) = cfg.window()?;
    let tc = cfg.estimator_training()?;
    let (train, test) = partition(cfg, &data, report)?;
    let stats = fit_normalizer(&train)?;
    let train_w = windows::<S>(&train, &data.profiles, &stats, true, d, stride)?;
    let test_w = windows::<S>(&test, &data.profiles, &stats, true, d, stride)?;
    non_empty(&train_w, "training")?;
    let mut model = build_mtcnn::<S>(data.descriptor.num_channels(), d, tc.seed)?;
    model.normalization = Some(stats);
    let validation = (!test_w.is_empty()).then_some(&test_w[..]);
    let history = fit(&mut model, &train_w, validation, &tc)?;
    let test_eval = validation.map(|v| evaluate(&model, v)).transpose()?;

    let path = cfg.estimator_path();
    store::save(&path, &StoredModel::Estimator(model))?;
    report.output(&out, &path)?;
    let plot = out.join("plots").join("train-estimator.csv");
    let rows: Vec<Vec<String>> = history
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                fmt(e.loss),
                fmt(e.activity_accuracy),
                fmt(e.gender_accuracy),
                opt(e.val_activity_accuracy),
                opt(e.val_gender_accuracy),
            ]
        })
        .collect();
    write_csv(
        &plot,
        &["epoch", "loss", "train_activity", "train_gender", "val_activity", "val_gender"],
        &rows,
    )?;
    report.output(&out, &plot)?;
    Ok(json!({
        "window": {"d": d, "stride": stride},
        "train_windows": train_w.len(),
        "test_windows": test_w.len(),
        "history": history,
        "test": test_eval.as_ref().map(eval_json),
    }))
}

fn frozen_estimator<S: Scalar>(cfg: &RunConfig, report: &mut Report) -> Result<(EstimatorModel<S>, NormalizationStats)> {
    let path = cfg.estimator_path();
    let mut est = store::load_estimator::<S>(&path)?;
    report.input(&cfg.out(), &path)?;
    est.freeze();
    let stats = est
        .normalization
        .clone()
        .ok_or_else(|| Error::Config(format!("{} carries no normalization statistics", path.display())))?;
    Ok((est, stats))
}

fn mean_deviation<S: Scalar>(est: &EstimatorModel<S>, ws: &[Window<S>], target: f64) -> Result<f64> {
    let mut sum = 0.0;
    for w in ws {
        sum += (est.predict(&w.data)?.1.as_f64() - target).abs();
    }
    Ok(sum / ws.len().max(1) as f64)
}

fn train_guardian<S: Scalar>(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let out = cfg.out();
    let (est, stats) = frozen_estimator::<S>(cfg, report)?;
    let (m, d) = est.input_shape;
    let data = load_raw(cfg, report)?;
    check_channels(&data, m)?;
    let (_, stride) = cfg.window()?;
    if stride > d {
        return Err(Error::Config(format!("stride {stride} exceeds the estimator window {d}")));
    }
    let nc = cfg.guardian_training()?;
    let (train, test) = partition(cfg, &data, report)?;
    let train_w = windows::<S>(&train, &data.profiles, &stats, true, d, stride)?;
    let test_w = windows::<S>(&test, &data.profiles, &stats, true, d, stride)?;
    non_empty(&train_w, "training")?;
    let mut guardian = build_guardian::<S>(m, d, nc.seed)?;
    guardian.normalization = Some(stats);
    let validation = (!test_w.is_empty()).then_some(&test_w[..]);
    let history = train_gen(&mut guardian, &est, &train_w, validation, &nc)?;

    let test_summary = match validation {
        Some(v) => {
            let raw = evaluate(&est, v)?;
            let transformed = evaluate(&est, &transform(&guardian, v)?)?;
            let (loss, dev, _) = neutralizer_metrics(&guardian, &est, v, &nc)?;
            json!({
                "raw": eval_json(&raw),
                "transformed": eval_json(&transformed),
                "raw_gender_deviation": mean_deviation(&est, v, nc.target_confidence)?,
                "transformed_gender_deviation": dev,
                "transformed_loss": loss,
            })
        }
        None => Value::Null,
    };
    let path = cfg.guardian_path();
    store::save(&path, &StoredModel::Guardian(guardian))?;
    report.output(&out, &path)?;
    let plot = out.join("plots").join("train-gen.csv");
    let rows: Vec<Vec<String>> = history
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                fmt(e.loss),
                fmt(e.gender_deviation),
                fmt(e.activity_accuracy),
                opt(e.val_loss),
            ]
        })
        .collect();
    write_csv(&plot, &["epoch", "loss", "gender_deviation", "activity", "val_loss"], &rows)?;
    report.output(&out, &plot)?;
    Ok(json!({
        "window": {"d": d, "stride": stride},
        "train_windows": train_w.len(),
        "test_windows": test_w.len(),
        "history": history,
        "test": test_summary,
    }))
}

fn transform_data<S: Scalar>(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let out = cfg.out();
    let path = cfg.guardian_path();
    let guardian = store::load_guardian::<S>(&path)?;
    report.input(&out, &path)?;
    let stats = guardian
        .normalization
        .clone()
        .ok_or_else(|| Error::Config(format!("{} carries no normalization statistics", path.display())))?;
    let (m, d) = guardian.input_shape;
    let data = load_raw(cfg, report)?;
    check_channels(&data, m)?;
    let target = cfg.transformed_dir();
    if target == cfg.data_dir() {
        return Err(Error::Config("the transformed directory must differ from the raw one".into()));
    }
    let mut recordings = Vec::new();
    let mut dropped_samples = 0usize;
    for rec in &data.recordings {
        let ws = make_windows::<S>(&[stats.normalize(rec)?], &data.profiles, d, d)?;
        if ws.is_empty() {
            report.warnings.push(format!(
                "sub{} {} trial{}: {} samples are shorter than one window; skipped",
                rec.subject_id,
                rec.activity,
                rec.trial_id,
                rec.len()
            ));
            dropped_samples += rec.len();
            continue;
        }
        let series = reconstruct_series(&transform(&guardian, &ws)?, d)?;
        dropped_samples += rec.len() - series.len();
        let samples = series.samples.iter().map(|v| v.as_f64()).collect();
        let normalized = SensorRecording::new(rec.subject_id, rec.trial_id, rec.activity, m, samples, rec.sample_rate_hz)?;
        recordings.push(stats.denormalize(&normalized)?);
    }
    let written = recordings.len();
    write_dataset(
        &target,
        &Dataset {
            descriptor: data.descriptor.clone(),
            recordings,
            profiles: data.profiles.clone(),
            transform: Some(TransformMeta { d, stride: d }),
        },
    )?;
    report.output(&out, &target)?;
    Ok(json!({
        "window": {"d": d, "stride": d},
        "recordings_in": data.recordings.len(),
        "recordings_out": written,
        "trailing_samples_dropped": dropped_samples,
    }))
}

fn eval<S: Scalar>(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let out = cfg.out();
    let (est, stats) = frozen_estimator::<S>(cfg, report)?;
    let (m, d) = est.input_shape;
    let stride: usize = cfg.parse("stride")?;
    if stride == 0 || stride > d {
        return Err(Error::Config(format!("stride must lie in [1, {d}], got {stride}")));
    }
    let mut cells = serde_json::Map::new();
    let mut table = [[None::<f64>; 2]; 2];
    if cfg.data_dir().exists() {
        let data = load_raw(cfg, report)?;
        check_channels(&data, m)?;
        let (_, test) = partition(cfg, &data, report)?;
        let ws = windows::<S>(&test, &data.profiles, &stats, true, d, stride)?;
        non_empty(&ws, "raw test")?;
        let r = evaluate(&est, &ws)?;
        table[0][0] = Some(r.activity_accuracy);
        table[1][0] = Some(r.gender_accuracy);
        cells.insert("raw".into(), eval_json(&r));
    }
    if cfg.transformed_dir().exists() {
        let data = load_transformed(cfg, report)?;
        check_channels(&data, m)?;
        let (_, test) = partition(cfg, &data, report)?;
        // Windows aligned with the ones the guardian produced.
        let t_stride = data.transform.as_ref().map_or(stride, |t| t.d.min(d));
        let ws = windows::<S>(&test, &data.profiles, &stats, false, d, t_stride)?;
        non_empty(&ws, "transformed test")?;
        let r = evaluate(&est, &ws)?;
        table[0][1] = Some(r.activity_accuracy);
        table[1][1] = Some(r.gender_accuracy);
        cells.insert("transformed".into(), eval_json(&r));
    }
    if cells.is_empty() {
        return Err(Error::Dependency(format!(
            "neither {} nor {} exists; run synth (and transform) first",
            cfg.data_dir().display(),
            cfg.transformed_dir().display()
        )));
    }
    let csv = out.join("eval_table.csv");
    let rows = ["activity", "gender"]
        .iter()
        .zip(&table)
        .map(|(name, row)| vec![name.to_string(), opt(row[0]), opt(row[1])])
        .collect::<Vec<_>>();
    write_csv(&csv, &["inference", "raw", "transformed"], &rows)?;
    report.output(&out, &csv)?;
    Ok(json!({
        "table": {
            "activity": {"raw": table[0][0], "transformed": table[0][1]},
            "gender": {"raw": table[1][0], "transformed": table[1][1]},
        },
        "details": cells,
    }))
}

fn matrix_rows(m: &DistanceMatrix) -> Vec<Vec<String>> {
    (0..m.n())
        .map(|i| {
            std::iter::once(m.subject_ids[i].to_string())
                .chain((0..m.n()).map(|j| fmt(m.get(i, j))))
                .collect()
        })
        .collect()
}

fn write_matrix(path: &Path, m: &DistanceMatrix) -> Result<()> {
    let header: Vec<String> = std::iter::once("subject_id".to_string())
        .chain(m.subject_ids.iter().map(|id| format!("sub{id}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &matrix_rows(m))
}

fn audit_dtw(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let out = cfg.out();
    let dtw = cfg.dtw()?;
    let threshold_cm: f64 = cfg.parse("threshold_cm")?;
    let mut sets = vec![("raw", load_raw(cfg, report)?)];
    if cfg.transformed_dir().exists() {
        sets.push(("transformed", load_transformed(cfg, report)?));
    }
    let mut results = serde_json::Map::new();
    let mut summary = Vec::new();
    let mut test_profiles = Vec::new();
    for (label, data) in &sets {
        let (_, test) = partition(cfg, data, report)?;
        let subjects = SubjectSeries::from_recordings(&test)?;
        let matrices = build_distance_matrices(&subjects, &dtw)?;
        report.warnings.extend(matrices.warnings.iter().map(|w| format!("{label}: {w}")));
        let n = subjects.len();
        let k = cfg.k()?.unwrap_or(n - 1);
        let dir = out.join("audit");
        let avg = dir.join(format!("{label}_average.csv"));
        write_matrix(&avg, &matrices.averaged)?;
        report.output(&out, &avg)?;
        for m in &matrices.per_activity {
            let activity = m.activity.expect("per-activity matrix");
            let p = dir.join(format!("{label}_{activity}.csv"));
            write_matrix(&p, m)?;
            report.output(&out, &p)?;
        }
        let mut estimates = Vec::new();
        for a in Attribute::ALL {
            let e = knn_estimate(&matrices.averaged, &data.profiles, a, k)?;
            summary.push(vec![
                label.to_string(),
                a.name().to_string(),
                fmt(e.error),
                fmt(e.baseline),
                fmt(e.normalized_error),
            ]);
            estimates.push(e);
        }
        if test_profiles.is_empty() {
            test_profiles = data
                .profiles
                .iter()
                .filter(|p| subjects.iter().any(|s| s.subject_id == p.subject_id))
                .cloned()
                .collect();
        }
        results.insert(label.to_string(), json!({"subjects": n, "k": k, "estimates": estimates}));
    }
    let csv = out.join("audit").join("knn_summary.csv");
    write_csv(&csv, &["data", "attribute", "error", "baseline", "normalized_error"], &summary)?;
    report.output(&out, &csv)?;
    let threshold = threshold_gender_accuracy(&test_profiles, threshold_cm)?;
    results.insert("height_threshold".into(), serde_json::to_value(threshold).expect("serializable"));
    Ok(Value::Object(results))
}

fn probe<S: Scalar>(cfg: &RunConfig, data: &Dataset, report: &mut Report) -> Result<(ProbeResult, usize, usize)> {
    let (d, stride) = cfg.window()?;
    let (train, test) = partition(cfg, data, report)?;
    // The attacker normalizes with statistics of the data it was given.
    let stats = fit_normalizer(&train)?;
    let train_w = windows::<S>(&train, &data.profiles, &stats, true, d, stride)?;
    let test_w = windows::<S>(&test, &data.profiles, &stats, true, d, stride)?;
    non_empty(&train_w, "training")?;
    non_empty(&test_w, "validation")?;
    let result = supervised_probe(&train_w, &test_w, &cfg.probe_training()?)?;
    Ok((result, train_w.len(), test_w.len()))
}

fn audit_probe<S: Scalar>(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let out = cfg.out();
    let mut sets = vec![("transformed", load_transformed(cfg, report)?)];
    if cfg.data_dir().exists() {
        sets.push(("raw", load_raw(cfg, report)?));
    }
    let mut results = serde_json::Map::new();
    let mut rows = Vec::new();
    for (label, data) in &sets {
        let (result, n_train, n_val) = probe::<S>(cfg, data, report)?;
        for e in &result.epochs {
            rows.push(vec![
                label.to_string(),
                e.epoch.to_string(),
                fmt(e.train_activity),
                fmt(e.train_gender),
                fmt(e.val_activity),
                fmt(e.val_gender),
            ]);
        }
        results.insert(
            label.to_string(),
            json!({
                "train_windows": n_train,
                "validation_windows": n_val,
                "max_val_gender": result.max_val_gender(),
                "final": result.final_epoch(),
                "epochs": result.epochs,
            }),
        );
    }
    let csv = out.join("plots").join("audit-probe.csv");
    write_csv(
        &csv,
        &["data", "epoch", "train_activity", "train_gender", "val_activity", "val_gender"],
        &rows,
    )?;
    report.output(&out, &csv)?;
    Ok(Value::Object(results))
}

fn inspect_model(cfg: &RunConfig, report: &mut Report) -> Result<Value> {
    let path = cfg.model_path()?;
    let fp = store::fingerprint_file(&path)?;
    report.input(&cfg.out(), &path)?;
    Ok(serde_json::to_value(fp).expect("serializable"))
}
