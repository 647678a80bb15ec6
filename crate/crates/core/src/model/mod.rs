//! The viseme classifier: LSTM parameters, inference, gradients and training.

pub mod ablation;
pub mod adam;
pub mod bptt;
pub mod cell;
pub mod eval;
pub mod file;
pub mod loss;
pub mod params;
pub mod scalar;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::audio::{DeltaMode, FeatureVector, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::filter::filter_predictions;
use crate::viseme::{VisemeId, VisemeTrack24, NUM_VISEMES};

pub use ablation::{ablation_context_chunks, ablation_no_lookahead, ChunkResult, DEFAULT_CHUNK_MS};
pub use adam::{Adam, AdamConfig};
pub use cell::{forward_logits, lstm_step, LstmState, ShiftedPredictor};
pub use eval::{evaluate_frame_accuracy, transition_rate, EvalReport};
pub use loss::{cross_entropy_loss, log_softmax, softmax};
pub use params::LstmParams;
pub use scalar::Scalar;
pub use train::{train, EpochMetrics, TrainConfig, TrainOutcome};

pub const DEFAULT_HIDDEN: usize = 200;
pub const DEFAULT_SHIFT: usize = 6;

/// Per-step class scores, aligned so entry t is the prediction for feature t.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStream {
    classes: usize,
    logits: Vec<f64>,
    pub visemes: Vec<VisemeId>,
    /// Centre time of the first feature, in seconds.
    pub start_time: f64,
}

impl PredictionStream {
    pub fn from_logits(classes: usize, logits: Vec<f64>) -> Self {
        assert!(classes > 0 && logits.len().is_multiple_of(classes));
        let visemes = logits
            .chunks_exact(classes)
            .map(|row| VisemeId::from_code(argmax(row) as u8).unwrap_or(VisemeId::Silent))
            .collect();
        Self {
            classes,
            logits,
            visemes,
            start_time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.visemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visemes.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn logits(&self, t: usize) -> &[f64] {
        &self.logits[t * self.classes..(t + 1) * self.classes]
    }

    pub fn probabilities(&self, t: usize) -> Vec<f64> {
        softmax(self.logits(t))
    }
}

pub(crate) fn argmax<T: PartialOrd>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

/// Per-dimension standardisation applied to features before the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; FEATURE_DIM],
            std: vec![1.0; FEATURE_DIM],
        }
    }

    /// Mean and standard deviation over every vector of every sequence.
    pub fn fit<'a>(sequences: impl IntoIterator<Item = &'a [FeatureVector]>) -> Result<Self> {
        let mut sum = [0.0f64; FEATURE_DIM];
        let mut sq = [0.0f64; FEATURE_DIM];
        let mut n = 0usize;
        for seq in sequences {
            for v in seq {
                for (k, x) in v.to_array().iter().enumerate() {
                    sum[k] += x;
                    sq[k] += x * x;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Empty("feature normalisation needs at least one vector"));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / nf - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: &FeatureVector, out: &mut [f32]) {
        for (k, x) in v.to_array().iter().enumerate() {
            out[k] = ((x - self.mean[k]) / self.std[k]) as f32;
        }
    }

    pub fn apply_all(&self, seq: &[FeatureVector]) -> Vec<f32> {
        let mut out = vec![0.0f32; seq.len() * FEATURE_DIM];
        for (v, row) in seq.iter().zip(out.chunks_exact_mut(FEATURE_DIM)) {
            self.apply(v, row);
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_DIM || self.std.len() != FEATURE_DIM {
            return Err(Error::ModelFile(format!(
                "feature normalisation must have {FEATURE_DIM} entries"
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite())
            || self.std.iter().any(|v| !v.is_finite() || *v <= 0.0)
        {
            return Err(Error::ModelFile("bad feature normalisation values".into()));
        }
        Ok(())
    }
}

/// A trained classifier ready for inference: weights, input normalisation and the
/// delta mode its features must be computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: LstmParams<f32>,
    pub norm: FeatureNorm,
    pub delta_mode: DeltaMode,
}

impl Model {
    pub fn new(params: LstmParams<f32>, norm: FeatureNorm, delta_mode: DeltaMode) -> Result<Self> {
        let model = Self {
            params,
            norm,
            delta_mode,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.norm.validate()?;
        if self.params.input_dim != FEATURE_DIM || self.params.output_dim != NUM_VISEMES {
            return Err(Error::Dimension(format!(
                "model maps {} -> {}, expected {FEATURE_DIM} -> {NUM_VISEMES}",
                self.params.input_dim, self.params.output_dim
            )));
        }
        Ok(())
    }

    pub fn shift(&self) -> usize {
        self.params.shift
    }

    /// Whole-sequence inference with the temporal shift.
    pub fn forward_sequence(&self, features: &[FeatureVector]) -> Result<PredictionStream> {
        if features.is_empty() {
            return Err(Error::Empty("forward_sequence needs at least one feature vector"));
        }
        let inputs: Vec<Vec<f32>> = self
            .norm
            .apply_all(features)
            .chunks_exact(FEATURE_DIM)
            .map(|r| r.to_vec())
            .collect();
        let logits = forward_logits(&self.params, &inputs)
            .into_iter()
            .flatten()
            .map(f64::from)
            .collect();
        let mut stream = PredictionStream::from_logits(self.params.output_dim, logits);
        stream.start_time = features[0].center_time;
        Ok(stream)
    }

    /// Filtered 24 fps track for a whole feature sequence.
    pub fn predict_track(&self, features: &[FeatureVector]) -> Result<VisemeTrack24> {
        Ok(filter_predictions(&self.forward_sequence(features)?.visemes))
    }
}
