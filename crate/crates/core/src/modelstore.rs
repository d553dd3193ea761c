//! Versioned binary model files.
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! "GENMODEL" | version | kind (0 estimator, 1 guardian) | m | d
//! | n_channels, min[f64; n], max[f64; n]      (n_channels = 0: no normalisation)
//! | n_networks
//! | per network: rank, dims[rank], n_layers,
//! |     per layer: code, a, b, n_params, per param: rank, dims[rank]
//! | every parameter as f32, network by network, layer by layer
//! | CRC-32 of everything above
//! ```
//!
//! Layer codes: 1 Conv1D (filters, kernel), 2 Dense (units), 3
//! PositionwiseDense (units), 4 MaxPool1D (pool), 5 Dropout (rate as f64
//! bits, low word in `a`), 6 Flatten, 7 ReLU, 8 Softmax, 9 Sigmoid.
//!
//! Parameters are stored in 32-bit precision. Trainability is not stored:
//! every loaded network is trainable until the caller freezes it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use sha2::{Digest, Sha256};

use crate::dataio::NormalizationStats;
use crate::estimator::EstimatorModel;
use crate::guardian::GuardianModel;
use crate::nn::{LayerSpec, NeuralNet};
use crate::{Error, Result, Scalar};

pub const MAGIC: &[u8; 8] = b"GENMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelKind {
    Estimator,
    Guardian,
}

impl ModelKind {
    fn code(self) -> u32 {
        match self {
            ModelKind::Estimator => 0,
            ModelKind::Guardian => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Estimator => "estimator",
            ModelKind::Guardian => "guardian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel<S> {
    Estimator(EstimatorModel<S>),
    Guardian(GuardianModel<S>),
}

impl<S> StoredModel<S> {
    pub fn kind(&self) -> ModelKind {
        match self {
            StoredModel::Estimator(_) => ModelKind::Estimator,
            StoredModel::Guardian(_) => ModelKind::Guardian,
        }
    }

    pub fn into_estimator(self) -> Result<EstimatorModel<S>> {
        match self {
            StoredModel::Estimator(m) => Ok(m),
            StoredModel::Guardian(_) => Err(Error::Format("file holds a guardian, not an estimator".into())),
        }
    }

    pub fn into_guardian(self) -> Result<GuardianModel<S>> {
        match self {
            StoredModel::Guardian(m) => Ok(m),
            StoredModel::Estimator(_) => Err(Error::Format("file holds an estimator, not a guardian".into())),
        }
    }
}

const NETWORK_NAMES: [&str; 3] = ["trunk", "activity_head", "gender_head"];

fn put(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn layer_code(spec: &LayerSpec) -> (u32, u32, u32) {
    match *spec {
        LayerSpec::Conv1D { filters, kernel } => (1, filters as u32, kernel as u32),
        LayerSpec::Dense { units } => (2, units as u32, 0),
        LayerSpec::PositionwiseDense { units } => (3, units as u32, 0),
        LayerSpec::MaxPool1D { pool } => (4, pool as u32, 0),
        LayerSpec::Dropout { rate } => {
            let bits = rate.to_bits();
            (5, bits as u32, (bits >> 32) as u32)
        }
        LayerSpec::Flatten => (6, 0, 0),
        LayerSpec::ReLU => (7, 0, 0),
        LayerSpec::Softmax => (8, 0, 0),
        LayerSpec::Sigmoid => (9, 0, 0),
    }
}

fn layer_from_code(code: u32, a: u32, b: u32) -> Option<LayerSpec> {
    Some(match code {
        1 => LayerSpec::Conv1D {
            filters: a as usize,
            kernel: b as usize,
        },
        2 => LayerSpec::Dense { units: a as usize },
        3 => LayerSpec::PositionwiseDense { units: a as usize },
        4 => LayerSpec::MaxPool1D { pool: a as usize },
        5 => LayerSpec::Dropout {
            rate: f64::from_bits(((b as u64) << 32) | a as u64),
        },
        6 => LayerSpec::Flatten,
        7 => LayerSpec::ReLU,
        8 => LayerSpec::Softmax,
        9 => LayerSpec::Sigmoid,
        _ => return None,
    })
}

fn networks<S>(model: &StoredModel<S>) -> Vec<&NeuralNet<S>> {
    match model {
        StoredModel::Estimator(e) => alloc::vec![&e.trunk, &e.activity_head, &e.gender_head],
        StoredModel::Guardian(g) => alloc::vec![&g.autoencoder],
    }
}

/// Serialises a model into the byte layout described at module level.
pub fn encode<S: Scalar>(model: &StoredModel<S>) -> Vec<u8> {
    let (shape, norm) = match model {
        StoredModel::Estimator(e) => (e.input_shape, &e.normalization),
        StoredModel::Guardian(g) => (g.input_shape, &g.normalization),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put(&mut out, FORMAT_VERSION);
    put(&mut out, model.kind().code());
    put(&mut out, shape.0 as u32);
    put(&mut out, shape.1 as u32);
    match norm {
        Some(n) => {
            put(&mut out, n.num_channels() as u32);
            for v in n.min.iter().chain(&n.max) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => put(&mut out, 0),
    }
    let nets = networks(model);
    put(&mut out, nets.len() as u32);
    for net in &nets {
        put(&mut out, net.input_shape().len() as u32);
        for &d in net.input_shape() {
            put(&mut out, d as u32);
        }
        put(&mut out, net.num_layers() as u32);
        for (i, spec) in net.specs().enumerate() {
            let (code, a, b) = layer_code(spec);
            put(&mut out, code);
            put(&mut out, a);
            put(&mut out, b);
            let params = net.layer_params(i);
            put(&mut out, params.len() as u32);
            for p in params {
                put(&mut out, p.shape().len() as u32);
                for &d in p.shape() {
                    put(&mut out, d as u32);
                }
            }
        }
    }
    for net in &nets {
        for p in net.params() {
            for v in p.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    put(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "manifest ends early at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("implausible tensor rank {rank}")));
        }
        (0..rank).map(|_| Ok(self.u32()? as usize)).collect()
    }
}

/// Checks magic, version and checksum, returning the payload without the CRC.
fn validate(bytes: &[u8]) -> Result<&[u8]> {
    let head = &bytes[..bytes.len().min(MAGIC.len())];
    if head != &MAGIC[..head.len()] {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Corruption(format!("file truncated to {} bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::Corruption(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    Ok(payload)
}

/// Parses a model file. Parameters are converted to `S`.
pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<StoredModel<S>> {
    let payload = validate(bytes)?;
    let mut r = Reader {
        bytes: payload,
        pos: 12,
    };
    let kind = match r.u32()? {
        0 => ModelKind::Estimator,
        1 => ModelKind::Guardian,
        k => return Err(Error::Format(format!("unknown model kind {k}"))),
    };
    let shape = (r.u32()? as usize, r.u32()? as usize);
    let n_channels = r.u32()? as usize;
    let normalization = if n_channels == 0 {
        None
    } else {
        let min = (0..n_channels).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let max = (0..n_channels).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Some(NormalizationStats::new(min, max)?)
    };
    let n_networks = r.u32()? as usize;
    let expected = match kind {
        ModelKind::Estimator => 3,
        ModelKind::Guardian => 1,
    };
    if n_networks != expected {
        return Err(Error::Incompatible {
            layer: kind.name().to_string(),
            detail: format!("{n_networks} networks stored, {expected} expected"),
        });
    }
    let mut nets = Vec::with_capacity(n_networks);
    for k in 0..n_networks {
        let name = match kind {
            ModelKind::Estimator => NETWORK_NAMES[k],
            ModelKind::Guardian => "autoencoder",
        };
        let input = r.dims()?;
        let n_layers = r.u32()? as usize;
        let mut specs = Vec::with_capacity(n_layers.min(1024));
        let mut shapes = Vec::with_capacity(n_layers.min(1024));
        for i in 0..n_layers {
            let (code, a, b) = (r.u32()?, r.u32()?, r.u32()?);
            let spec = layer_from_code(code, a, b).ok_or_else(|| Error::Incompatible {
                layer: format!("{name} #{i}"),
                detail: format!("unknown layer code {code}"),
            })?;
            let n_params = r.u32()? as usize;
            let params = (0..n_params).map(|_| r.dims()).collect::<Result<Vec<_>>>()?;
            specs.push(spec);
            shapes.push(params);
        }
        let net = NeuralNet::<S>::new(&input, &specs, 0).map_err(|e| match e {
            Error::Shape { layer, detail } => Error::Incompatible {
                layer: format!("{name} {layer}"),
                detail,
            },
            other => other,
        })?;
        for (i, declared) in shapes.iter().enumerate() {
            let actual: Vec<Vec<usize>> = net.layer_params(i).iter().map(|p| p.shape().to_vec()).collect();
            if &actual != declared {
                return Err(Error::Incompatible {
                    layer: format!("{name} {}", specs[i].label(i)),
                    detail: format!("manifest parameter shapes {declared:?}, layer needs {actual:?}"),
                });
            }
        }
        nets.push(net);
    }
    for net in &mut nets {
        for i in 0..net.num_layers() {
            for p in net.layer_params_mut(i) {
                for v in p.data_mut() {
                    *v = S::of(r.f32()? as f64);
                }
            }
        }
    }
    if r.pos != payload.len() {
        return Err(Error::Format(format!(
            "{} unexpected bytes after the parameters",
            payload.len() - r.pos
        )));
    }
    let model = match kind {
        ModelKind::Guardian => {
            let autoencoder = nets.pop().unwrap();
            if autoencoder.input_shape() != [shape.0 * shape.1] {
                return Err(Error::Incompatible {
                    layer: "autoencoder".into(),
                    detail: format!("input {:?} does not match window {shape:?}", autoencoder.input_shape()),
                });
            }
            StoredModel::Guardian(GuardianModel {
                autoencoder,
                input_shape: shape,
                normalization,
            })
        }
        ModelKind::Estimator => {
            let gender_head = nets.pop().unwrap();
            let activity_head = nets.pop().unwrap();
            let trunk = nets.pop().unwrap();
            if trunk.input_shape() != [shape.0, shape.1] {
                return Err(Error::Incompatible {
                    layer: "trunk".into(),
                    detail: format!("input {:?} does not match window {shape:?}", trunk.input_shape()),
                });
            }
            for (head, name) in [(&activity_head, "activity_head"), (&gender_head, "gender_head")] {
                if head.input_shape() != trunk.output_shape() {
                    return Err(Error::Incompatible {
                        layer: name.into(),
                        detail: format!(
                            "input {:?} does not match trunk output {:?}",
                            head.input_shape(),
                            trunk.output_shape()
                        ),
                    });
                }
            }
            StoredModel::Estimator(EstimatorModel {
                trunk,
                activity_head,
                gender_head,
                input_shape: shape,
                normalization,
            })
        }
    };
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fingerprint {
    /// SHA-256 of the whole file, lowercase hex.
    pub digest: String,
    pub kind: ModelKind,
    pub input_shape: (usize, usize),
    pub param_count: usize,
    pub output_heads: usize,
    /// One line per layer, grouped by network.
    pub summary: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Digest plus a readable manifest of a valid model file.
pub fn fingerprint(bytes: &[u8]) -> Result<Fingerprint> {
    let model = decode::<f32>(bytes)?;
    let (input_shape, names): ((usize, usize), &[&str]) = match &model {
        StoredModel::Estimator(e) => (e.input_shape, &NETWORK_NAMES),
        StoredModel::Guardian(g) => (g.input_shape, &["autoencoder"]),
    };
    let nets = networks(&model);
    let mut summary = String::new();
    let _ = writeln!(summary, "{} for windows of {} x {}", model.kind().name(), input_shape.0, input_shape.1);
    let mut param_count = 0;
    for (net, name) in nets.iter().zip(names) {
        let _ = writeln!(summary, "{name}: input {:?}", net.input_shape());
        for (i, (spec, shape)) in net.specs().zip(net.layer_shapes()).enumerate() {
            let params: usize = net.layer_params(i).iter().map(|p| p.len()).sum();
            let _ = writeln!(summary, "  {:<28} -> {:?} ({params} params)", spec.label(i), shape);
        }
        param_count += net.param_count();
    }
    let output_heads = match model.kind() {
        ModelKind::Estimator => 2,
        ModelKind::Guardian => 1,
    };
    let _ = writeln!(summary, "output heads: {output_heads}");
    let _ = write!(summary, "parameters: {param_count}");
    Ok(Fingerprint {
        digest: sha256_hex(bytes),
        kind: model.kind(),
        input_shape,
        param_count,
        output_heads,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::build_mtcnn;
    use crate::guardian::build_guardian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params<S: Scalar>(model: &StoredModel<S>) -> Vec<u32> {
        networks(model)
            .iter()
            .flat_map(|n| n.params().flat_map(|p| p.data().iter().map(|v| (v.as_f64() as f32).to_bits())))
            .collect()
    }

    fn random_model(seed: u64) -> StoredModel<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..5);
        if seed % 2 == 0 {
            let d = rng.random_range(32..48);
            let mut e = build_mtcnn::<f32>(m, d, seed).unwrap();
            if rng.random_bool(0.5) {
                let min = (0..m).map(|c| -(c as f64) - 1.0).collect();
                let max = (0..m).map(|c| c as f64 + rng.random::<f64>()).collect();
                e.normalization = Some(NormalizationStats::new(min, max).unwrap());
            }
            StoredModel::Estimator(e)
        } else {
            let d = rng.random_range(8..40);
            StoredModel::Guardian(build_guardian::<f32>(m, d, seed).unwrap())
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for seed in 0..100 {
            let model = random_model(seed);
            let bytes = encode(&model);
            let back = decode::<f32>(&bytes).unwrap();
            assert_eq!(back, model, "seed {seed}");
            assert_eq!(params(&back), params(&model));
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = encode(&random_model(3));
        let mut flipped = bytes.clone();
        let mid = bytes.len() / 2;
        flipped[mid] ^= 0x01;
        assert!(matches!(decode::<f32>(&flipped), Err(Error::Corruption(_))));
        for cut in [bytes.len() - 1, bytes.len() / 2, 13, 10] {
            assert!(matches!(decode::<f32>(&bytes[..cut]), Err(Error::Corruption(_))), "cut {cut}");
        }
        let mut bumped = bytes.clone();
        bumped[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            decode::<f32>(&bumped),
            Err(Error::Version { found: 2, expected: 1 })
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode::<f32>(&magic), Err(Error::Format(_))));
    }

    fn recrc(mut bytes: Vec<u8>) -> Vec<u8> {
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        bytes
    }

    #[test]
    fn manifest_mismatch_names_the_layer() {
        let model = StoredModel::Guardian(build_guardian::<f32>(2, 8, 1).unwrap());
        let bytes = encode(&model);
        // first layer record follows magic(8) version kind m d norm(0) n_net rank dim n_layers
        let layer0 = 8 + 4 * 9;
        let mut wrong_units = bytes.clone();
        wrong_units[layer0 + 4..layer0 + 8].copy_from_slice(&9u32.to_le_bytes());
        match decode::<f32>(&recrc(wrong_units)) {
            Err(Error::Incompatible { layer, .. }) => assert!(layer.contains("#0"), "{layer}"),
            other => panic!("{other:?}"),
        }
        let mut unknown = bytes;
        unknown[layer0..layer0 + 4].copy_from_slice(&42u32.to_le_bytes());
        assert!(matches!(decode::<f32>(&recrc(unknown)), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let model = StoredModel::Estimator(build_mtcnn::<f32>(12, 128, 7).unwrap());
        let bytes = encode(&model);
        let a = fingerprint(&bytes).unwrap();
        assert_eq!(a, fingerprint(&bytes).unwrap());
        assert_eq!(a.output_heads, 2);
        assert!(a.summary.contains("activity_head") && a.summary.contains("gender_head"));
        assert!(a.summary.contains("Softmax") && a.summary.contains("Sigmoid"));
        let mut flipped = bytes.clone();
        let p = bytes.len() - 40;
        flipped[p] ^= 0x80;
        let flipped = recrc(flipped);
        assert_ne!(fingerprint(&flipped).unwrap().digest, a.digest);
    }

    #[test]
    fn f64_models_store_single_precision() {
        let model = StoredModel::Guardian(build_guardian::<f64>(3, 16, 2).unwrap());
        let once = decode::<f64>(&encode(&model)).unwrap();
        let twice = decode::<f64>(&encode(&once)).unwrap();
        assert_eq!(once, twice);
        assert!(decode::<f64>(&encode(&model)).unwrap().into_estimator().is_err());
    }
}
