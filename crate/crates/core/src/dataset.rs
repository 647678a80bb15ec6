//! Training pairs and their on-disk directory form.
//!
//! A dataset directory holds `index.json` plus, per pair, `<id>.feat` (feature
//! binary) and `<id>.labels.json` (100 Hz viseme track).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{recompute_deltas, BaseFeatures, DeltaMode, FeatureVector, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::filter::subsample_labels;
use crate::viseme::{TrackFile, VisemeTrack100, VisemeTrack24};

/// Where a pair's features came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Original,
    WarpedFrom { speaker: String },
}

/// Feature sequence with one 100 Hz label per feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub sentence_id: String,
    pub features: Vec<FeatureVector>,
    pub labels: VisemeTrack100,
    pub provenance: Provenance,
}

impl TrainingPair {
    pub fn new(
        id: impl Into<String>,
        sentence_id: impl Into<String>,
        features: Vec<FeatureVector>,
        labels: VisemeTrack100,
        provenance: Provenance,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::Empty("training pair without features"));
        }
        Ok(Self {
            id: id.into(),
            sentence_id: sentence_id.into(),
            features,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.labels.len() as f64 / 100.0
    }

    /// 24 fps reference track matching the filtered model output frame for frame.
    pub fn truth_24(&self) -> VisemeTrack24 {
        VisemeTrack24::new(subsample_labels(&self.labels.steps))
    }

    /// Same pair with deltas recomputed for `mode`.
    pub fn with_delta_mode(&self, mode: DeltaMode) -> Self {
        let base: Vec<BaseFeatures> = self.features.iter().map(FeatureVector::base).collect();
        Self {
            features: recompute_deltas(&base, mode),
            ..self.clone()
        }
    }

    /// Cuts the pair into consecutive chunks of `chunk_steps` (the last chunk may be
    /// shorter), recomputing deltas inside each chunk.
    pub fn chunks(&self, chunk_steps: usize, mode: DeltaMode) -> Vec<TrainingPair> {
        assert!(chunk_steps > 0, "chunk length must be positive");
        let base: Vec<BaseFeatures> = self.features.iter().map(FeatureVector::base).collect();
        base.chunks(chunk_steps)
            .zip(self.labels.steps.chunks(chunk_steps))
            .enumerate()
            .map(|(k, (b, l))| TrainingPair {
                id: format!("{}#{k}", self.id),
                sentence_id: self.sentence_id.clone(),
                features: recompute_deltas(b, mode),
                labels: VisemeTrack100 {
                    steps: l.to_vec(),
                    start_time: self.labels.start_time + (k * chunk_steps) as f64 / 100.0,
                },
                provenance: self.provenance.clone(),
            })
            .collect()
    }
}

const FEATURE_MAGIC: &[u8; 8] = b"LSFEAT01";

/// Feature binary: magic, u32 LE count, then per vector 28 feature values and the
/// centre time, all f64 LE.
pub fn write_features<W: Write>(mut w: W, features: &[FeatureVector]) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(features.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(features.len() * (FEATURE_DIM + 1) * 8);
    for v in features {
        for x in v.to_array().iter().chain(std::iter::once(&v.center_time)) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<Vec<FeatureVector>> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| Error::Corpus("truncated feature file".into()))?;
    if &head[..8] != FEATURE_MAGIC {
        return Err(Error::Corpus("not a feature file".into()));
    }
    let n = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let mut buf = vec![0u8; n * (FEATURE_DIM + 1) * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Corpus("truncated feature file".into()))?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Ok(values
        .chunks_exact(FEATURE_DIM + 1)
        .map(|row| {
            let mut a = [0.0; FEATURE_DIM];
            a.copy_from_slice(&row[..FEATURE_DIM]);
            FeatureVector::from_array(&a, row[FEATURE_DIM])
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub sentence_id: String,
    pub features: String,
    pub labels: String,
    pub steps: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub pairs: Vec<IndexEntry>,
    /// Training pairs divided by reference recordings.
    pub augmentation_factor: f64,
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn write_dataset(dir: impl AsRef<Path>, pairs: &[TrainingPair]) -> Result<DatasetIndex> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        let stem = format!("{k:05}_{}", file_stem(&pair.id));
        let feat_name = format!("{stem}.feat");
        let label_name = format!("{stem}.labels.json");
        let feat_path = dir.join(&feat_name);
        let file = std::fs::File::create(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_features(&mut w, &pair.features)?;
        w.flush().map_err(|e| Error::io(&feat_path, e))?;
        pair.labels.to_file().write_json(dir.join(&label_name))?;
        entries.push(IndexEntry {
            id: pair.id.clone(),
            sentence_id: pair.sentence_id.clone(),
            features: feat_name,
            labels: label_name,
            steps: pair.len(),
            provenance: pair.provenance.clone(),
        });
    }
    let originals = pairs
        .iter()
        .filter(|p| p.provenance == Provenance::Original)
        .count();
    let index = DatasetIndex {
        pairs: entries,
        augmentation_factor: if originals == 0 {
            0.0
        } else {
            pairs.len() as f64 / originals as f64
        },
    };
    let index_path = dir.join("index.json");
    std::fs::write(&index_path, serde_json::to_vec_pretty(&index)?)
        .map_err(|e| Error::io(&index_path, e))?;
    Ok(index)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<(DatasetIndex, Vec<TrainingPair>)> {
    let dir = dir.as_ref();
    let index_path = dir.join("index.json");
    let text = std::fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: DatasetIndex = serde_json::from_slice(&text)?;
    let mut pairs = Vec::with_capacity(index.pairs.len());
    for entry in &index.pairs {
        let feat_path: PathBuf = dir.join(&entry.features);
        let file = std::fs::File::open(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
        let features = read_features(std::io::BufReader::new(file))?;
        let labels = TrackFile::read_json(dir.join(&entry.labels))?.into_track100()?;
        pairs.push(TrainingPair::new(
            entry.id.clone(),
            entry.sentence_id.clone(),
            features,
            labels,
            entry.provenance.clone(),
        )?);
    }
    Ok((index, pairs))
}
