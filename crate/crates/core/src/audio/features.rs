use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::deltas::{compute_deltas, delta_from_window, DeltaMode};
use super::frames::{frame_stream, window_center_time, HOP_LENGTH, WINDOW_LENGTH};
use super::mfcc::{compute_log_energy, MfccAnalyzer, NUM_MFCC};
use super::AudioStream;

pub const FEATURE_DIM: usize = 2 * NUM_MFCC + 2;

/// Per-window MFCCs and log-energy, before deltas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseFeatures {
    pub mfcc: [f64; NUM_MFCC],
    pub log_energy: f64,
    pub center_time: f64,
}

impl BaseFeatures {
    pub fn from_window(analyzer: &mut MfccAnalyzer, samples: &[i16], index: usize) -> Self {
        Self {
            mfcc: analyzer.mfcc(samples),
            log_energy: compute_log_energy(samples),
            center_time: window_center_time(index),
        }
    }

    #[inline]
    fn channel(&self, c: usize) -> f64 {
        if c < NUM_MFCC {
            self.mfcc[c]
        } else {
            self.log_energy
        }
    }
}

/// 28-dim descriptor: 13 MFCC, 13 delta-MFCC, log-energy, delta log-energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mfcc: [f64; NUM_MFCC],
    pub d_mfcc: [f64; NUM_MFCC],
    pub log_energy: f64,
    pub d_log_energy: f64,
    pub center_time: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..NUM_MFCC].copy_from_slice(&self.mfcc);
        out[NUM_MFCC..2 * NUM_MFCC].copy_from_slice(&self.d_mfcc);
        out[2 * NUM_MFCC] = self.log_energy;
        out[2 * NUM_MFCC + 1] = self.d_log_energy;
        out
    }

    pub fn from_array(values: &[f64; FEATURE_DIM], center_time: f64) -> Self {
        let mut mfcc = [0.0; NUM_MFCC];
        let mut d_mfcc = [0.0; NUM_MFCC];
        mfcc.copy_from_slice(&values[..NUM_MFCC]);
        d_mfcc.copy_from_slice(&values[NUM_MFCC..2 * NUM_MFCC]);
        Self {
            mfcc,
            d_mfcc,
            log_energy: values[2 * NUM_MFCC],
            d_log_energy: values[2 * NUM_MFCC + 1],
            center_time,
        }
    }

    pub fn base(&self) -> BaseFeatures {
        BaseFeatures {
            mfcc: self.mfcc,
            log_energy: self.log_energy,
            center_time: self.center_time,
        }
    }
}

/// Attaches deltas to a base-feature sequence, replicating edge windows.
pub fn recompute_deltas(base: &[BaseFeatures], mode: DeltaMode) -> Vec<FeatureVector> {
    let channels: Vec<Vec<f64>> = (0..=NUM_MFCC)
        .map(|c| base.iter().map(|b| b.channel(c)).collect())
        .collect();
    (0..base.len())
        .map(|t| {
            let mut d_mfcc = [0.0; NUM_MFCC];
            for (c, d) in d_mfcc.iter_mut().enumerate() {
                *d = compute_deltas(&channels[c], t, mode);
            }
            FeatureVector {
                mfcc: base[t].mfcc,
                d_mfcc,
                log_energy: base[t].log_energy,
                d_log_energy: compute_deltas(&channels[NUM_MFCC], t, mode),
                center_time: base[t].center_time,
            }
        })
        .collect()
}

/// Whole-recording feature extraction with centred deltas.
pub fn assemble_features(stream: &AudioStream) -> Vec<FeatureVector> {
    assemble_features_with(stream, DeltaMode::Centered)
}

pub fn assemble_features_with(stream: &AudioStream, mode: DeltaMode) -> Vec<FeatureVector> {
    let mut analyzer = MfccAnalyzer::new();
    let samples = stream.samples();
    let base: Vec<BaseFeatures> = frame_stream(samples.len())
        .map(|w| BaseFeatures::from_window(&mut analyzer, w.samples(samples), w.index))
        .collect();
    recompute_deltas(&base, mode)
}

/// Incremental feature extraction for one audio stream.
///
/// Feature `t` is released as soon as window `t + lookahead` is complete
/// (two windows for centred deltas, none for causal). `finish` releases the tail
/// using edge replication, so the emitted sequence equals [`assemble_features_with`]
/// for the same audio regardless of how the input was chunked.
#[derive(Debug)]
pub struct FeatureExtractor {
    mode: DeltaMode,
    analyzer: MfccAnalyzer,
    pending: Vec<i16>,
    // absolute sample index of pending[0]
    pending_offset: usize,
    next_window: usize,
    history: VecDeque<BaseFeatures>,
    // window index of history[0]
    history_offset: usize,
    next_emit: usize,
    finished: bool,
}

impl FeatureExtractor {
    pub fn new(mode: DeltaMode) -> Self {
        Self {
            mode,
            analyzer: MfccAnalyzer::new(),
            pending: Vec::with_capacity(2 * WINDOW_LENGTH),
            pending_offset: 0,
            next_window: 0,
            history: VecDeque::with_capacity(8),
            history_offset: 0,
            next_emit: 0,
            finished: false,
        }
    }

    pub fn mode(&self) -> DeltaMode {
        self.mode
    }

    /// Number of complete analysis windows seen so far.
    pub fn windows_seen(&self) -> usize {
        self.next_window
    }

    pub fn push(&mut self, samples: &[i16], out: &mut Vec<FeatureVector>) {
        assert!(!self.finished, "push after finish");
        self.pending.extend_from_slice(samples);
        loop {
            let start = self.next_window * HOP_LENGTH - self.pending_offset;
            if self.pending.len() < start + WINDOW_LENGTH {
                break;
            }
            let base = BaseFeatures::from_window(
                &mut self.analyzer,
                &self.pending[start..start + WINDOW_LENGTH],
                self.next_window,
            );
            self.history.push_back(base);
            self.next_window += 1;

            let consumed = self.next_window * HOP_LENGTH - self.pending_offset;
            self.pending.drain(..consumed.min(self.pending.len()));
            self.pending_offset = self.next_window * HOP_LENGTH;

            self.emit_ready(out, false);
        }
    }

    /// Flushes features held back for lookahead. The extractor is unusable afterwards.
    pub fn finish(&mut self, out: &mut Vec<FeatureVector>) {
        if !self.finished {
            self.finished = true;
            self.emit_ready(out, true);
        }
    }

    fn emit_ready(&mut self, out: &mut Vec<FeatureVector>, at_end: bool) {
        let lookahead = self.mode.lookahead_windows();
        while self.next_emit < self.next_window
            && (at_end || self.next_emit + lookahead < self.next_window)
        {
            out.push(self.vector_at(self.next_emit));
            self.next_emit += 1;
            // keep the four windows before next_emit for the regression span
            while self.history_offset + 4 < self.next_emit {
                self.history.pop_front();
                self.history_offset += 1;
            }
        }
    }

    fn vector_at(&self, t: usize) -> FeatureVector {
        // while streaming, `last` is only reached at end of stream
        let last = self.next_window as isize - 1;
        let start = t as isize + self.mode.span_start();
        let span: [&BaseFeatures; 5] = std::array::from_fn(|j| {
            let idx = (start + j as isize).clamp(0, last) as usize;
            &self.history[idx - self.history_offset]
        });
        let current = &self.history[t - self.history_offset];
        let delta = |c: usize| delta_from_window(std::array::from_fn(|j| span[j].channel(c)));
        let mut d_mfcc = [0.0; NUM_MFCC];
        for (c, d) in d_mfcc.iter_mut().enumerate() {
            *d = delta(c);
        }
        FeatureVector {
            mfcc: current.mfcc,
            d_mfcc,
            log_energy: current.log_energy,
            d_log_energy: delta(NUM_MFCC),
            center_time: current.center_time,
        }
    }
}
