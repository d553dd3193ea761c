//! Canonical on-disk dataset layout.
//!
//! A dataset directory holds
//!
//! - `descriptor.txt`: `key=value` lines `name`, `m`, `sample_rate_hz` and
//!   `channels` (comma separated names, optional);
//! - `subjects.csv`: `subject_id,gender,age,weight,height` with gender `F`/`M`;
//! - one `sub<ID>_<activity>_trial<K>.csv` per recording with header
//!   `t,ch0,...,ch{m-1}`;
//! - for guardian output only, `transform.txt` with `transformed=true`, `d`
//!   and `stride`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use genshield_core::dataio::{Activity, DatasetDescriptor, Gender, SensorRecording, SubjectProfile};

use crate::error::{io_err, DataError, Error, Result};

pub const DESCRIPTOR_FILE: &str = "descriptor.txt";
pub const SUBJECTS_FILE: &str = "subjects.csv";
pub const TRANSFORM_FILE: &str = "transform.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct TransformMeta {
    pub d: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub recordings: Vec<SensorRecording>,
    pub profiles: Vec<SubjectProfile>,
    /// Present when the data was written by `transform`.
    pub transform: Option<TransformMeta>,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, file: &Path) -> Result<BTreeMap<String, String>, DataError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| DataError::Parse {
            file: file.to_path_buf(),
            line: i as u64 + 1,
            detail: format!("expected key=value, found '{line}'"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_descriptor(path: &Path) -> Result<DatasetDescriptor> {
    let kv = parse_key_values(&read_text(path)?, path)?;
    let get = |key: &str| {
        kv.get(key).ok_or_else(|| DataError::Schema {
            file: path.to_path_buf(),
            column: key.to_string(),
        })
    };
    let bad = |key: &str, v: &str| DataError::Parse {
        file: path.to_path_buf(),
        line: 0,
        detail: format!("invalid {key} '{v}'"),
    };
    let m_text = get("m")?;
    let m: usize = m_text.parse().map_err(|_| bad("m", m_text))?;
    let rate_text = get("sample_rate_hz")?;
    let sample_rate_hz: f64 = rate_text.parse().map_err(|_| bad("sample_rate_hz", rate_text))?;
    let channels: Vec<String> = match kv.get("channels") {
        Some(list) => list.split(',').map(|c| c.trim().to_string()).collect(),
        None => (0..m).map(|c| format!("ch{c}")).collect(),
    };
    if channels.len() != m || m == 0 {
        return Err(DataError::Invalid(format!(
            "{}: m={m} but {} channel names",
            path.display(),
            channels.len()
        ))
        .into());
    }
    if !(sample_rate_hz > 0.0) {
        return Err(bad("sample_rate_hz", rate_text).into());
    }
    Ok(DatasetDescriptor {
        name: kv.get("name").cloned().unwrap_or_else(|| "dataset".into()),
        channels,
        sample_rate_hz,
    })
}

pub fn descriptor_text(d: &DatasetDescriptor) -> String {
    format!(
        "name={}\nm={}\nsample_rate_hz={}\nchannels={}\n",
        d.name,
        d.num_channels(),
        d.sample_rate_hz,
        d.channels.join(",")
    )
}

/// Splits `sub<ID>_<activity>_trial<K>.csv` into its parts. Other names give `None`.
fn parse_trial_name(name: &str) -> Option<(&str, &str, &str)> {
    let stem = name.strip_suffix(".csv")?.strip_prefix("sub")?;
    let (id, rest) = stem.split_once('_')?;
    let (activity, trial) = rest.rsplit_once("_trial")?;
    Some((id, activity, trial))
}

pub fn trial_file_name(rec: &SensorRecording) -> String {
    format!("sub{}_{}_trial{}.csv", rec.subject_id, rec.activity.name(), rec.trial_id)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse {
        file: path.to_path_buf(),
        line,
        detail: e.to_string(),
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, DataError> {
    headers.iter().position(|h| h == name).ok_or_else(|| DataError::Schema {
        file: path.to_path_buf(),
        column: name.to_string(),
    })
}

fn parse_cell<T: std::str::FromStr>(value: &str, path: &Path, line: u64, column: &str) -> Result<T, DataError> {
    value.parse().map_err(|_| DataError::Parse {
        file: path.to_path_buf(),
        line,
        detail: format!("column '{column}': '{value}' is not a number"),
    })
}

fn read_trial(path: &Path, name: &str, descriptor: &DatasetDescriptor) -> Result<SensorRecording> {
    let (id, activity, trial) = parse_trial_name(name).expect("caller checked the name");
    let label = |detail: String| DataError::Label {
        file: path.to_path_buf(),
        detail,
    };
    let subject_id: u32 = id.parse().map_err(|_| label(format!("invalid subject id '{id}'")))?;
    let trial_id: u32 = trial.parse().map_err(|_| label(format!("invalid trial number '{trial}'")))?;
    let activity: Activity = activity
        .parse()
        .map_err(|_| label(format!("unknown activity '{activity}'")))?;
    let m = descriptor.num_channels();
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<String> = (0..m).map(|c| format!("ch{c}")).collect();
    let cols = names
        .iter()
        .map(|n| column_index(&headers, n, path))
        .collect::<Result<Vec<_>, _>>()?;
    let t_col = column_index(&headers, "t", path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        parse_cell::<f64>(&record[t_col], path, line, "t")?;
        let row = cols
            .iter()
            .zip(&names)
            .map(|(&c, n)| parse_cell::<f64>(&record[c], path, line, n))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Invalid(format!("{}: no samples", path.display())).into());
    }
    Ok(SensorRecording::from_rows(
        subject_id,
        trial_id,
        activity,
        &rows,
        descriptor.sample_rate_hz,
    )?)
}

pub fn read_profiles(path: &Path) -> Result<Vec<SubjectProfile>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = ["subject_id", "gender", "age", "weight", "height"]
        .iter()
        .map(|c| column_index(&headers, c, path))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let gender = match &record[cols[1]] {
            "F" | "f" | "0" => Gender::Female,
            "M" | "m" | "1" => Gender::Male,
            other => {
                return Err(DataError::Label {
                    file: path.to_path_buf(),
                    detail: format!("line {line}: gender must be F or M, found '{other}'"),
                }
                .into())
            }
        };
        let profile = SubjectProfile {
            subject_id: parse_cell(&record[cols[0]], path, line, "subject_id")?,
            gender,
            age: parse_cell(&record[cols[2]], path, line, "age")?,
            weight: parse_cell(&record[cols[3]], path, line, "weight")?,
            height: parse_cell(&record[cols[4]], path, line, "height")?,
        };
        profile.validate().map_err(|e| DataError::Label {
            file: path.to_path_buf(),
            detail: format!("line {line}: {e}"),
        })?;
        out.push(profile);
    }
    Ok(out)
}

/// Reads every trial file of `dir` with the given channel layout, plus
/// `subjects.csv` when present. Recordings come back sorted by
/// (subject, activity, trial). An empty directory gives empty lists.
pub fn load_recordings(
    dir: &Path,
    descriptor: &DatasetDescriptor,
) -> Result<(Vec<SensorRecording>, Vec<SubjectProfile>)> {
    let mut names: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .filter(|(n, _)| parse_trial_name(n).is_some())
        .collect();
    names.sort();
    let mut recordings = names
        .iter()
        .map(|(n, p)| read_trial(p, n, descriptor))
        .collect::<Result<Vec<_>>>()?;
    recordings.sort_by_key(|r| r.key());
    for pair in recordings.windows(2) {
        if pair[0].key() == pair[1].key() {
            return Err(DataError::Invalid(format!(
                "{}: two files for subject {} {} trial {}",
                dir.display(),
                pair[0].subject_id,
                pair[0].activity,
                pair[0].trial_id
            ))
            .into());
        }
    }
    let subjects = dir.join(SUBJECTS_FILE);
    let profiles = if subjects.exists() {
        read_profiles(&subjects)?
    } else {
        Vec::new()
    };
    for rec in &recordings {
        if !profiles.iter().any(|p| p.subject_id == rec.subject_id) {
            return Err(DataError::Label {
                file: subjects.clone(),
                detail: format!("no profile for subject {}", rec.subject_id),
            }
            .into());
        }
    }
    Ok((recordings, profiles))
}

/// Loads a dataset directory including its descriptor and transform metadata.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(DataError::Invalid(format!("dataset directory {} does not exist", dir.display())).into());
    }
    let descriptor = read_descriptor(&dir.join(DESCRIPTOR_FILE))?;
    let (recordings, profiles) = load_recordings(dir, &descriptor)?;
    let meta_path = dir.join(TRANSFORM_FILE);
    let transform = if meta_path.exists() {
        let kv = parse_key_values(&read_text(&meta_path)?, &meta_path)?;
        let num = |key: &str| -> Result<usize> {
            kv.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| {
                    DataError::Schema {
                        file: meta_path.clone(),
                        column: key.to_string(),
                    }
                    .into()
                })
        };
        match kv.get("transformed").map(String::as_str) {
            Some("true") => Some(TransformMeta {
                d: num("d")?,
                stride: num("stride")?,
            }),
            _ => None,
        }
    } else {
        None
    };
    Ok(Dataset {
        descriptor,
        recordings,
        profiles,
        transform,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes a dataset in the canonical layout, replacing earlier trial files in `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for entry in fs::read_dir(dir).map_err(io_err(dir))?.filter_map(|e| e.ok()) {
        let name = entry.file_name().to_string_lossy().into_owned();
        if parse_trial_name(&name).is_some() || name == TRANSFORM_FILE {
            fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
        }
    }
    write_file(&dir.join(DESCRIPTOR_FILE), &descriptor_text(&data.descriptor))?;
    let mut subjects = String::from("subject_id,gender,age,weight,height\n");
    for p in &data.profiles {
        subjects.push_str(&format!(
            "{},{},{},{},{}\n",
            p.subject_id,
            p.gender.code(),
            p.age,
            p.weight,
            p.height
        ));
    }
    write_file(&dir.join(SUBJECTS_FILE), &subjects)?;
    for rec in &data.recordings {
        let mut text = String::from("t");
        for c in 0..rec.channels {
            text.push_str(&format!(",ch{c}"));
        }
        text.push('\n');
        let frames = rec.to_frames();
        for (t, frame) in frames.chunks_exact(rec.channels).enumerate() {
            text.push_str(&t.to_string());
            for v in frame {
                text.push(',');
                text.push_str(&v.to_string());
            }
            text.push('\n');
        }
        write_file(&dir.join(trial_file_name(rec)), &text)?;
    }
    if let Some(meta) = &data.transform {
        write_file(
            &dir.join(TRANSFORM_FILE),
            &format!("transformed=true\nd={}\nstride={}\n", meta.d, meta.stride),
        )?;
    }
    Ok(())
}

/// Restricts recordings to the given subjects' profiles; checks the channel count.
pub fn check_channels(data: &Dataset, expected: usize) -> Result<()> {
    if data.descriptor.num_channels() != expected {
        return Err(Error::Config(format!(
            "dataset has {} channels but the model expects {expected}",
            data.descriptor.num_channels()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_names() {
        assert_eq!(parse_trial_name("sub12_walking_trial3.csv"), Some(("12", "walking", "3")));
        assert_eq!(parse_trial_name("subjects.csv"), None);
        assert_eq!(parse_trial_name("descriptor.txt"), None);
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\nm = 3\n\nname=x\n", Path::new("f")).unwrap();
        assert_eq!(kv["m"], "3");
        assert!(parse_key_values("novalue\n", Path::new("f")).is_err());
    }
}
