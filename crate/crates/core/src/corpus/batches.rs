use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{score_recording, CorpusManifest, Gender, RecordingMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub recordings: Vec<RecordingMeta>,
    pub scores: Vec<usize>,
    pub mean_score: f64,
    pub male: usize,
    pub female: usize,
}

impl Batch {
    fn from_items(items: Vec<(RecordingMeta, usize)>) -> Self {
        let male = items.iter().filter(|(r, _)| r.gender == Gender::M).count();
        let mean_score = if items.is_empty() {
            0.0
        } else {
            items.iter().map(|(_, s)| *s as f64).sum::<f64>() / items.len() as f64
        };
        let (recordings, scores): (Vec<_>, Vec<_>) = items.into_iter().unzip();
        Self {
            female: recordings.len() - male,
            male,
            mean_score,
            recordings,
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSelection {
    pub batches: Vec<Batch>,
    /// Random recordings of sentences not used by any training batch.
    pub validation: Batch,
}

/// Scores every recording from its transcription, then selects batches.
pub fn select_batches(
    manifest: &CorpusManifest,
    n_batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<BatchSelection> {
    let scored = manifest
        .recordings
        .iter()
        .map(|r| Ok((r.clone(), score_recording(&manifest.read_segments(r)?))))
        .collect::<Result<Vec<_>>>()?;
    select_batches_scored(&scored, n_batches, batch_size, seed)
}

/// Picks one recording per sentence (the top-scoring one of a gender that
/// alternates along a seeded sentence order) and deals them into batches.
///
/// Recordings are sorted by gender, then by descending score, and dealt in
/// blocks of `n_batches` in alternating direction, so each batch receives one
/// recording from every score stratum and an even share of each gender.
pub fn select_batches_scored(
    candidates: &[(RecordingMeta, usize)],
    n_batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<BatchSelection> {
    if n_batches == 0 || batch_size == 0 {
        return Err(Error::Config("batch count and size must be positive".into()));
    }
    let mut by_sentence: BTreeMap<&str, Vec<&(RecordingMeta, usize)>> = BTreeMap::new();
    for c in candidates {
        by_sentence.entry(c.0.sentence_id.as_str()).or_default().push(c);
    }
    let needed = n_batches * batch_size;
    if by_sentence.len() < needed {
        return Err(Error::Corpus(format!(
            "{} batches of {batch_size} need {needed} sentences, manifest has {}",
            n_batches,
            by_sentence.len()
        )));
    }

    let best_of = |recs: &[&(RecordingMeta, usize)], g: Gender| {
        recs.iter()
            .filter(|(r, _)| r.gender == g)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.speaker_id.cmp(&a.0.speaker_id)))
            .map(|c| (*c).clone())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences: Vec<&str> = by_sentence.keys().copied().collect();
    sentences.shuffle(&mut rng);

    let mut chosen: Vec<(RecordingMeta, usize)> = sentences[..needed]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let recs = &by_sentence[s];
            let preferred = if i % 2 == 0 { Gender::M } else { Gender::F };
            best_of(recs, preferred)
                .or_else(|| best_of(recs, preferred.other()))
                .expect("sentence has at least one recording")
        })
        .collect();
    chosen.sort_by(|a, b| {
        a.0.gender
            .cmp(&b.0.gender)
            .then(b.1.cmp(&a.1))
            .then_with(|| a.0.id().cmp(&b.0.id()))
    });

    let mut buckets: Vec<Vec<(RecordingMeta, usize)>> = vec![Vec::new(); n_batches];
    for (j, item) in chosen.into_iter().enumerate() {
        let (block, pos) = (j / n_batches, j % n_batches);
        let b = if block % 2 == 0 { pos } else { n_batches - 1 - pos };
        buckets[b].push(item);
    }

    let mut validation = Vec::new();
    for s in &sentences[needed..] {
        if validation.len() == batch_size {
            break;
        }
        let recs = &by_sentence[s];
        validation.push(recs[rng.random_range(0..recs.len())].clone());
    }

    Ok(BatchSelection {
        batches: buckets.into_iter().map(Batch::from_items).collect(),
        validation: Batch::from_items(validation),
    })
}
