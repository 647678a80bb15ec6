//! Binary model container.
//!
//! Layout: 8-byte magic `LSYNCMDL`, u32 LE format version, u32 LE header length,
//! a UTF-8 JSON header, then every tensor as little-endian f32 in the order given
//! by the header's `tensors` list.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureNorm, LstmParams, Model};
use crate::audio::{DeltaMode, FFT_SIZE, HOP_LENGTH, NUM_MEL_FILTERS, NUM_MFCC, SAMPLE_RATE, WINDOW_LENGTH};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LSYNCMDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub shift: usize,
    pub delta_mode: DeltaMode,
    pub feature_config: String,
    pub feature_config_hash: String,
    pub norm: FeatureNorm,
    pub tensors: Vec<TensorEntry>,
}

/// Canonical description of the feature front end a model was trained on.
pub fn feature_config_string(mode: DeltaMode) -> String {
    let deltas = match mode {
        DeltaMode::Centered => "centered",
        DeltaMode::Causal => "causal",
    };
    format!(
        "rate={SAMPLE_RATE};win={WINDOW_LENGTH};hop={HOP_LENGTH};fft={FFT_SIZE};mel={NUM_MEL_FILTERS};\
         mfcc={NUM_MFCC};preemph=0.97;window=hamming;energy=raw_log;deltas={deltas}"
    )
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn feature_config_hash(mode: DeltaMode) -> String {
    format!("{:016x}", fnv1a(feature_config_string(mode).as_bytes()))
}

impl Model {
    pub fn header(&self) -> ModelHeader {
        let p = &self.params;
        ModelHeader {
            input_dim: p.input_dim,
            hidden_dim: p.hidden_dim,
            output_dim: p.output_dim,
            shift: p.shift,
            delta_mode: self.delta_mode,
            feature_config: feature_config_string(self.delta_mode),
            feature_config_hash: feature_config_hash(self.delta_mode),
            norm: self.norm.clone(),
            tensors: super::params::TENSOR_NAMES
                .iter()
                .zip(p.tensor_shapes())
                .map(|(name, shape)| TensorEntry {
                    name: name.to_string(),
                    shape,
                })
                .collect(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for t in self.params.tensors() {
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFile("not a model file (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        read_exact(&mut r, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        read_exact(&mut r, &mut word)?;
        let header_len = u32::from_le_bytes(word) as usize;
        if header_len > 1 << 20 {
            return Err(Error::ModelFile("header too large".into()));
        }
        let mut header = vec![0u8; header_len];
        read_exact(&mut r, &mut header)?;
        let header: ModelHeader = serde_json::from_slice(&header)
            .map_err(|e| Error::ModelFile(format!("bad header: {e}")))?;
        if header.feature_config_hash != feature_config_hash(header.delta_mode) {
            return Err(Error::ModelFile(format!(
                "feature configuration hash {} does not match this build ({})",
                header.feature_config_hash,
                feature_config_hash(header.delta_mode)
            )));
        }

        let mut params = LstmParams::<f32>::zeros(
            header.input_dim,
            header.hidden_dim,
            header.output_dim,
            header.shift,
        );
        let expected: Vec<TensorEntry> = super::params::TENSOR_NAMES
            .iter()
            .zip(params.tensor_shapes())
            .map(|(name, shape)| TensorEntry {
                name: name.to_string(),
                shape,
            })
            .collect();
        if header.tensors != expected {
            return Err(Error::ModelFile("tensor table does not match the dimensions".into()));
        }
        for t in params.tensors_mut() {
            let mut buf = vec![0u8; t.len() * 4];
            read_exact(&mut r, &mut buf)?;
            for (v, b) in t.iter_mut().zip(buf.chunks_exact(4)) {
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::ModelFile("trailing bytes after tensors".into()));
        }
        Model::new(params, header.norm, header.delta_mode)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::ModelFile("truncated model file".into())
        } else {
            Error::IoBare(e)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::FEATURE_DIM;
    use crate::viseme::NUM_VISEMES;

    fn model() -> Model {
        let mut norm = FeatureNorm::identity();
        norm.mean[3] = -0.1234567890123;
        norm.std[7] = 2.5e-3;
        Model::new(
            LstmParams::init(FEATURE_DIM, 10, NUM_VISEMES, 6, 77),
            norm,
            DeltaMode::Centered,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = model().to_bytes();
        assert!(Model::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Model::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Model::from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::from_bytes(&extra).is_err());
    }

    #[test]
    fn hash_depends_on_delta_mode() {
        assert_ne!(
            feature_config_hash(DeltaMode::Centered),
            feature_config_hash(DeltaMode::Causal)
        );
        assert_eq!(feature_config_hash(DeltaMode::Causal).len(), 16);
    }

    #[test]
    fn header_is_readable_json() {
        let bytes = model().to_bytes();
        let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["shift"], 6);
        assert_eq!(header["hidden_dim"], 10);
        assert_eq!(header["tensors"][0]["shape"], serde_json::json!([40, 28]));
    }
}
