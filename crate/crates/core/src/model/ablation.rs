//! Controlled variants of the training setup: no lookahead, and limited context.

use serde::{Deserialize, Serialize};

use super::eval::score_tracks;
use super::{train, EvalReport, Model, TrainConfig, TrainOutcome};
use crate::audio::{DeltaMode, HOP_LENGTH, SAMPLE_RATE};
use crate::dataset::TrainingPair;
use crate::error::{Error, Result};
use crate::filter::filter_predictions;
use crate::viseme::VisemeTrack24;

/// Chunk durations compared by [`ablation_context_chunks`] by default.
pub const DEFAULT_CHUNK_MS: [u32; 5] = [200, 400, 600, 800, 1000];

/// The same training run with zero temporal shift and deltas from past windows
/// only, so no output depends on audio later than its own window.
pub fn no_lookahead_config(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        shift: 0,
        delta_mode: DeltaMode::Causal,
        ..cfg.clone()
    }
}

pub fn ablation_no_lookahead(
    train_pairs: &[TrainingPair],
    val_pairs: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(train_pairs, val_pairs, &no_lookahead_config(cfg))
}

pub fn chunk_steps(chunk_ms: u32) -> usize {
    (chunk_ms as usize * SAMPLE_RATE as usize / 1000) / HOP_LENGTH
}

/// Cuts every pair into independent chunks of `chunk_ms`. Chunks never span two
/// recordings, and the state of the network is reset at every chunk.
pub fn chunk_pairs(pairs: &[TrainingPair], chunk_ms: u32, mode: DeltaMode) -> Result<Vec<TrainingPair>> {
    let steps = chunk_steps(chunk_ms);
    if steps == 0 {
        return Err(Error::Config(format!("chunk of {chunk_ms} ms is shorter than a hop")));
    }
    Ok(pairs.iter().flat_map(|p| p.chunks(steps, mode)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkResult {
    pub chunk_ms: u32,
    pub report: EvalReport,
    pub best_epoch: usize,
}

/// Runs the model on each chunk of a pair from a fresh state, joins the 100 Hz
/// predictions and filters the joined stream as one recording.
pub fn predict_chunked(model: &Model, pair: &TrainingPair, chunk_ms: u32) -> Result<VisemeTrack24> {
    let mut raw = Vec::with_capacity(pair.len());
    for chunk in chunk_pairs(std::slice::from_ref(pair), chunk_ms, model.delta_mode)? {
        raw.extend(model.forward_sequence(&chunk.features)?.visemes);
    }
    Ok(filter_predictions(&raw))
}

/// Accuracy of a model whose context is cut at every chunk boundary, scored on
/// the recordings' own 24 fps frames.
pub fn evaluate_chunked(model: &Model, pairs: &[TrainingPair], chunk_ms: u32) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let predicted = pairs
        .iter()
        .map(|p| predict_chunked(model, p, chunk_ms))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<VisemeTrack24> = pairs.iter().map(TrainingPair::truth_24).collect();
    Ok(score_tracks(predicted.iter().zip(&truths)))
}

/// Trains one model per chunk duration on chunked data and evaluates it with the
/// same context limit on the test recordings.
pub fn ablation_context_chunks(
    train_pairs: &[TrainingPair],
    val_pairs: &[TrainingPair],
    test_pairs: &[TrainingPair],
    cfg: &TrainConfig,
    chunk_ms: &[u32],
) -> Result<Vec<ChunkResult>> {
    chunk_ms
        .iter()
        .map(|&ms| {
            let tr = chunk_pairs(train_pairs, ms, cfg.delta_mode)?;
            let va = chunk_pairs(val_pairs, ms, cfg.delta_mode)?;
            let out = train(&tr, &va, cfg)?;
            tracing::info!(chunk_ms = ms, chunks = tr.len(), "context ablation trained");
            Ok(ChunkResult {
                chunk_ms: ms,
                report: evaluate_chunked(&out.model, test_pairs, ms)?,
                best_epoch: out.best_epoch,
            })
        })
        .collect()
}
