//! Model files on disk.

use std::fs;
use std::path::Path;

use genshield_core::estimator::EstimatorModel;
use genshield_core::guardian::GuardianModel;
use genshield_core::modelstore::{self, Fingerprint, StoredModel};
use genshield_core::Scalar;

use crate::error::{io_err, Error, Result};

pub fn save<S: Scalar>(path: &Path, model: &StoredModel<S>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, modelstore::encode(model)).map_err(io_err(path))
}

/// Reads a model file; a missing file is a dependency error naming `producer`.
fn read(path: &Path, producer: &str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "model file {} not found; run {producer} first",
            path.display()
        )));
    }
    fs::read(path).map_err(io_err(path))
}

pub fn load_estimator<S: Scalar>(path: &Path) -> Result<EstimatorModel<S>> {
    Ok(modelstore::decode::<S>(&read(path, "train-estimator")?)?.into_estimator()?)
}

pub fn load_guardian<S: Scalar>(path: &Path) -> Result<GuardianModel<S>> {
    Ok(modelstore::decode::<S>(&read(path, "train-gen")?)?.into_guardian()?)
}

pub fn fingerprint_file(path: &Path) -> Result<Fingerprint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(modelstore::fingerprint(&bytes)?)
}
