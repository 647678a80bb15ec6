use serde::{Deserialize, Serialize};

use super::Model;
use crate::dataset::TrainingPair;
use crate::error::{Error, Result};
use crate::viseme::{count_transitions, VisemeTrack24, FRAME_RATE};

/// Post-filter 24 fps accuracy and output chattiness over a set of sequences.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_pct: f64,
    pub correct: usize,
    pub frames: usize,
    pub transitions: usize,
    pub transitions_per_s: f64,
}

/// Scores predicted tracks against reference tracks frame by frame. Reference
/// frames with no predicted counterpart count as errors.
pub fn score_tracks<'a>(
    pairs: impl IntoIterator<Item = (&'a VisemeTrack24, &'a VisemeTrack24)>,
) -> EvalReport {
    let mut r = EvalReport::default();
    for (pred, truth) in pairs {
        r.frames += truth.len();
        r.correct += truth
            .frames
            .iter()
            .zip(&pred.frames)
            .filter(|(a, b)| a == b)
            .count();
        r.transitions += count_transitions(&pred.frames);
    }
    if r.frames > 0 {
        r.accuracy_pct = 100.0 * r.correct as f64 / r.frames as f64;
        r.transitions_per_s = r.transitions as f64 / (r.frames as f64 / FRAME_RATE as f64);
    }
    r
}

/// Runs the model and the full filter on every pair and compares against the
/// pair's labels subsampled to 24 fps.
pub fn evaluate_frame_accuracy(model: &Model, pairs: &[TrainingPair]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut predicted = Vec::with_capacity(pairs.len());
    let mut truths = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let pair = pair.with_delta_mode(model.delta_mode);
        predicted.push(model.predict_track(&pair.features)?);
        truths.push(pair.truth_24());
    }
    Ok(score_tracks(predicted.iter().zip(&truths)))
}

/// Transitions per second of a 24 fps track.
pub fn transition_rate(track: &VisemeTrack24) -> f64 {
    if track.is_empty() {
        return 0.0;
    }
    count_transitions(&track.frames) as f64 / track.duration_s()
}
