//! Corpus ingestion: manifests, phone transcriptions, batch selection, oracle
//! labels and a synthetic corpus generator.

mod batches;
mod oracle;
mod phn;
pub mod synth;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{assemble_features, limit_audio, AudioStream, FeatureVector, LimiterConfig};
use crate::dataset::{Provenance, TrainingPair};
use crate::error::{Error, Result};
use crate::viseme::upsample_24_to_100;

pub use batches::{select_batches, select_batches_scored, Batch, BatchSelection};
pub use oracle::{oracle_frame_count, oracle_visemes, PhoneTable};
pub use phn::{format_phn, parse_phn, read_phn, score_recording, PhoneSegment};
pub use synth::{synth_test_corpus, SynthConfig, SynthCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub fn other(self) -> Self {
        match self {
            Gender::M => Gender::F,
            Gender::F => Gender::M,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
        })
    }
}

/// One recording of one sentence. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub sentence_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub dialect: String,
    pub wav: PathBuf,
    pub phn: PathBuf,
    pub duration_s: f64,
}

impl RecordingMeta {
    pub fn id(&self) -> String {
        format!("{}/{}", self.speaker_id, self.sentence_id)
    }
}

/// A list of recordings plus the directory their relative paths resolve against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    pub base_dir: PathBuf,
    pub recordings: Vec<RecordingMeta>,
}

impl CorpusManifest {
    pub fn new(base_dir: impl Into<PathBuf>, recordings: Vec<RecordingMeta>) -> Self {
        Self {
            base_dir: base_dir.into(),
            recordings,
        }
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let recordings: Vec<RecordingMeta> = serde_json::from_slice(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::new(base_dir, recordings))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_vec_pretty(&self.recordings)?)
            .map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn find(&self, id: &str) -> Option<&RecordingMeta> {
        self.recordings.iter().find(|r| r.id() == id)
    }

    pub fn read_audio(&self, rec: &RecordingMeta) -> Result<AudioStream> {
        AudioStream::read_wav(self.resolve(&rec.wav))
    }

    pub fn read_segments(&self, rec: &RecordingMeta) -> Result<Vec<PhoneSegment>> {
        read_phn(self.resolve(&rec.phn))
    }

    /// Limited audio turned into features, as the live pipeline sees it.
    pub fn features(&self, rec: &RecordingMeta, limiter: &LimiterConfig) -> Result<Vec<FeatureVector>> {
        recording_features(&self.read_audio(rec)?, limiter)
    }
}

/// Pairs a recording's features with its oracle labels upsampled to 100 Hz.
pub fn oracle_pair(
    rec: &RecordingMeta,
    features: Vec<FeatureVector>,
    segments: &[PhoneSegment],
    table: &PhoneTable,
) -> Result<TrainingPair> {
    let track = oracle_visemes(segments, table)?;
    let labels = upsample_24_to_100(&track, features.len())?;
    TrainingPair::new(rec.id(), rec.sentence_id.clone(), features, labels, Provenance::Original)
}

/// Every recording of a manifest with features and oracle labels.
pub fn oracle_dataset(
    manifest: &CorpusManifest,
    table: &PhoneTable,
    limiter: &LimiterConfig,
) -> Result<Vec<TrainingPair>> {
    manifest
        .recordings
        .iter()
        .map(|r| oracle_pair(r, manifest.features(r, limiter)?, &manifest.read_segments(r)?, table))
        .collect()
}

pub fn recording_features(audio: &AudioStream, limiter: &LimiterConfig) -> Result<Vec<FeatureVector>> {
    Ok(assemble_features(&limit_audio(audio, limiter)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_json_shape() {
        let rec = RecordingMeta {
            sentence_id: "SX3".into(),
            speaker_id: "MJS0".into(),
            gender: Gender::M,
            dialect: "DR1".into(),
            wav: "MJS0/SX3.WAV".into(),
            phn: "MJS0/SX3.PHN".into(),
            duration_s: 2.5,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = CorpusManifest::new(dir.path(), vec![rec.clone()]);
        m.write_json(&path).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(v[0]["gender"], "M");
        assert_eq!(v[0]["wav"], "MJS0/SX3.WAV");
        let back = CorpusManifest::read_json(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.find("MJS0/SX3"), Some(&rec));
        assert_eq!(back.resolve(&rec.wav), dir.path().join("MJS0/SX3.WAV"));
    }
}
