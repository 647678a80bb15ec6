//! 100 Hz prediction clean-up and conversion to 24 fps.
//!
//! Two rules: a transition at 100 Hz survives only if the next three predictions
//! agree with it, and at 24 fps a viseme that has been shown for a single frame may
//! not change yet.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::audio::DeltaMode;
use crate::viseme::{VisemeId, VisemeTrack24, FRAME_RATE, STEP_RATE};

/// Future predictions inspected at each transition.
pub const DENOISE_LOOKAHEAD: usize = 3;

/// Batch form of the transition rule. Each prediction that differs from the
/// already-filtered predecessor is kept only if the (up to) three raw predictions
/// after it repeat it; otherwise the predecessor is carried forward. A rejected
/// transition leaves the next differing prediction to be judged afresh against the
/// carried value. Near the end of the stream only the predictions that exist are
/// inspected.
pub fn denoise_100hz(raw: &[VisemeId]) -> Vec<VisemeId> {
    let mut out: Vec<VisemeId> = Vec::with_capacity(raw.len());
    for (t, &v) in raw.iter().enumerate() {
        let filtered = match out.last() {
            None => v,
            Some(&prev) if prev == v => v,
            Some(&prev) => {
                let end = (t + 1 + DENOISE_LOOKAHEAD).min(raw.len());
                if raw[t + 1..end].iter().all(|&n| n == v) {
                    v
                } else {
                    prev
                }
            }
        };
        out.push(filtered);
    }
    out
}

/// Streaming form of [`denoise_100hz`]: output step t is released once raw step
/// t + 3 has arrived.
#[derive(Debug, Clone, Default)]
pub struct Denoiser {
    window: VecDeque<VisemeId>,
    previous: Option<VisemeId>,
}

impl Denoiser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Raw steps buffered for lookahead (never more than 3 between calls).
    pub fn pending(&self) -> usize {
        self.window.len()
    }

    pub fn push(&mut self, raw: VisemeId) -> Option<VisemeId> {
        self.window.push_back(raw);
        if self.window.len() > DENOISE_LOOKAHEAD {
            Some(self.decide_front())
        } else {
            None
        }
    }

    pub fn finish(&mut self, out: &mut Vec<VisemeId>) {
        while !self.window.is_empty() {
            out.push(self.decide_front());
        }
    }

    fn decide_front(&mut self) -> VisemeId {
        let v = self.window.pop_front().expect("non-empty window");
        let filtered = match self.previous {
            Some(prev) if prev != v => {
                if self.window.iter().all(|&n| n == v) {
                    v
                } else {
                    prev
                }
            }
            _ => v,
        };
        self.previous = Some(filtered);
        filtered
    }
}

/// The 100 Hz step sampled by 24 fps frame `n`: the first step at or after the frame
/// time, ceil(n * 100 / 24). This is the exact inverse of the floor-based label
/// upsampling.
#[inline]
pub fn step_for_frame(n: usize) -> usize {
    (n * STEP_RATE as usize).div_ceil(FRAME_RATE as usize)
}

/// Number of 24 fps frames obtainable from `steps` 100 Hz steps.
pub fn frames_for_steps(steps: usize) -> usize {
    if steps == 0 {
        return 0;
    }
    // largest n with step_for_frame(n) <= steps - 1
    let mut n = (steps - 1) * FRAME_RATE as usize / STEP_RATE as usize;
    while step_for_frame(n + 1) < steps {
        n += 1;
    }
    while step_for_frame(n) > steps - 1 {
        n -= 1;
    }
    n + 1
}

/// 24 fps frames sampled from a (filtered) 100 Hz sequence.
pub fn subsample_labels(steps: &[VisemeId]) -> Vec<VisemeId> {
    (0..frames_for_steps(steps.len()))
        .map(|n| steps[step_for_frame(n)])
        .collect()
}

pub fn subsample_to_24fps(steps: &[VisemeId]) -> VisemeTrack24 {
    VisemeTrack24::new(subsample_labels(steps))
}

/// Streaming subsampler: emits `(frame_index, viseme)` as the sampled step arrives.
#[derive(Debug, Clone, Default)]
pub struct Subsampler {
    next_step: usize,
    next_frame: usize,
}

impl Subsampler {
    pub fn push(&mut self, v: VisemeId) -> Option<(usize, VisemeId)> {
        let step = self.next_step;
        self.next_step += 1;
        if step == step_for_frame(self.next_frame) {
            let frame = self.next_frame;
            self.next_frame += 1;
            Some((frame, v))
        } else {
            None
        }
    }
}

/// Min-hold state: the viseme on screen and how many frames it has been held.
#[derive(Debug, Clone, Default)]
pub struct MinHold {
    current: Option<VisemeId>,
    hold_frames: usize,
}

impl MinHold {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> Option<VisemeId> {
        self.current
    }

    pub fn hold_frames(&self) -> usize {
        self.hold_frames
    }

    pub fn push(&mut self, incoming: VisemeId) -> VisemeId {
        match self.current {
            Some(cur) if cur == incoming || self.hold_frames == 1 => {
                self.hold_frames += 1;
                cur
            }
            _ => {
                self.current = Some(incoming);
                self.hold_frames = 1;
                incoming
            }
        }
    }
}

/// Blocks any change after a one-frame hold by repeating the current viseme.
pub fn enforce_min_hold(track: &VisemeTrack24) -> VisemeTrack24 {
    let mut state = MinHold::new();
    VisemeTrack24 {
        frames: track.frames.iter().map(|&v| state.push(v)).collect(),
        start_time: track.start_time,
    }
}

/// The whole 100 Hz -> 24 fps chain in one pass: denoise, subsample, min-hold.
pub fn filter_predictions(raw: &[VisemeId]) -> VisemeTrack24 {
    enforce_min_hold(&subsample_to_24fps(&denoise_100hz(raw)))
}

/// Streaming counterpart of [`filter_predictions`].
#[derive(Debug, Clone, Default)]
pub struct FilterState {
    denoiser: Denoiser,
    subsampler: Subsampler,
    hold: MinHold,
}

impl FilterState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, raw: VisemeId, out: &mut Vec<(usize, VisemeId)>) {
        if let Some(v) = self.denoiser.push(raw) {
            self.sample(v, out);
        }
    }

    pub fn finish(&mut self, out: &mut Vec<(usize, VisemeId)>) {
        let mut tail = Vec::new();
        self.denoiser.finish(&mut tail);
        for v in tail {
            self.sample(v, out);
        }
    }

    fn sample(&mut self, v: VisemeId, out: &mut Vec<(usize, VisemeId)>) {
        if let Some((frame, v)) = self.subsampler.push(v) {
            out.push((frame, self.hold.push(v)));
        }
    }

    pub fn pending(&self) -> usize {
        self.denoiser.pending()
    }

    pub fn current_viseme(&self) -> Option<VisemeId> {
        self.hold.current()
    }

    pub fn current_hold_frames(&self) -> usize {
        self.hold.hold_frames()
    }
}

/// Latency contributions in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBudget {
    pub feature_ms: f64,
    pub shift_ms: f64,
    pub filter_ms: f64,
    pub processing_ms: f64,
    pub total_ms: f64,
}

impl LatencyBudget {
    pub fn algorithmic_ms(&self) -> f64 {
        self.feature_ms + self.shift_ms + self.filter_ms
    }
}

/// Centred deltas reach 32.5 ms past the window centre, budgeted as 33 ms; the
/// temporal shift costs one 10 ms hop per step and the denoiser three hops.
pub fn latency_report(delta_mode: DeltaMode, shift: usize, processing_ms: f64) -> LatencyBudget {
    let feature_ms = match delta_mode {
        DeltaMode::Centered => 33.0,
        DeltaMode::Causal => 0.0,
    };
    let shift_ms = 10.0 * shift as f64;
    let filter_ms = 10.0 * DENOISE_LOOKAHEAD as f64;
    LatencyBudget {
        feature_ms,
        shift_ms,
        filter_ms,
        processing_ms,
        total_ms: feature_ms + shift_ms + filter_ms + processing_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viseme::run_lengths;
    use proptest::prelude::*;
    use VisemeId::*;

    fn stream_denoise(raw: &[VisemeId]) -> Vec<VisemeId> {
        let mut d = Denoiser::new();
        let mut out: Vec<VisemeId> = raw.iter().filter_map(|&v| d.push(v)).collect();
        d.finish(&mut out);
        out
    }

    #[test]
    fn denoise_golden_traces() {
        assert_eq!(denoise_100hz(&[Ah, Ah, D, Ah, Ah, Ah]), vec![Ah; 6]);
        assert_eq!(
            denoise_100hz(&[Ah, Ah, D, D, D, D]),
            vec![Ah, Ah, D, D, D, D]
        );
        // B at 1 fails (index 4 differs); index 2 is then a fresh transition against
        // the carried Ah and fails too, as does index 3.
        assert_eq!(
            denoise_100hz(&[Ah, D, D, D, Ah, Ah, Ah]),
            vec![Ah, Ah, Ah, Ah, Ah, Ah, Ah]
        );
        // the cascade can accept a later transition once it is held long enough
        assert_eq!(
            denoise_100hz(&[Ah, D, M, M, M, M]),
            vec![Ah, Ah, M, M, M, M]
        );
        // at stream end only existing predictions are inspected
        assert_eq!(denoise_100hz(&[Ah, Ah, Ah, D, D]), vec![Ah, Ah, Ah, D, D]);
        assert!(denoise_100hz(&[]).is_empty());
    }

    #[test]
    fn subsample_examples() {
        assert_eq!(subsample_to_24fps(&[M; 100]).frames, vec![M; 24]);
        let mut s = vec![Ah; 50];
        s.extend(vec![D; 50]);
        let frames = subsample_to_24fps(&s).frames;
        assert_eq!(frames[11], Ah);
        assert_eq!(frames[12], D);
        for steps in 0..500 {
            let n = frames_for_steps(steps);
            assert!(n == 0 || step_for_frame(n - 1) < steps);
            assert!(step_for_frame(n) >= steps);
        }
    }

    #[test]
    fn min_hold_examples() {
        let t = |v: Vec<VisemeId>| enforce_min_hold(&VisemeTrack24::new(v)).frames;
        assert_eq!(t(vec![Ah, D, M, M]), vec![Ah, Ah, M, M]);
        assert_eq!(t(vec![Ah, Ah, D, D]), vec![Ah, Ah, D, D]);
    }

    #[test]
    fn latency_examples() {
        let b = latency_report(DeltaMode::Centered, 6, 0.0);
        assert_eq!(b.algorithmic_ms(), 123.0);
        assert_eq!(latency_report(DeltaMode::Causal, 0, 0.0).algorithmic_ms(), 30.0);
        assert_eq!(latency_report(DeltaMode::Centered, 6, 2.0).total_ms, 125.0);
    }

    fn any_viseme() -> impl Strategy<Value = VisemeId> {
        (0u8..4).prop_map(|c| VisemeId::from_code(c).unwrap())
    }

    proptest! {
        #[test]
        fn streaming_denoise_matches_batch(raw in proptest::collection::vec(any_viseme(), 0..80)) {
            prop_assert_eq!(stream_denoise(&raw), denoise_100hz(&raw));
        }

        #[test]
        fn min_hold_runs_and_idempotence(frames in proptest::collection::vec(any_viseme(), 1..80)) {
            let once = enforce_min_hold(&VisemeTrack24::new(frames));
            let runs = run_lengths(&once.frames);
            for r in &runs[..runs.len() - 1] {
                prop_assert!(*r >= 2);
            }
            prop_assert_eq!(enforce_min_hold(&once), once);
        }

        #[test]
        fn streaming_filter_matches_batch(raw in proptest::collection::vec(any_viseme(), 0..300)) {
            let mut state = FilterState::new();
            let mut out = Vec::new();
            for &v in &raw {
                state.push(v, &mut out);
                prop_assert!(state.pending() <= DENOISE_LOOKAHEAD);
            }
            state.finish(&mut out);
            let frames: Vec<VisemeId> = out.iter().map(|&(_, v)| v).collect();
            prop_assert!(out.iter().enumerate().all(|(i, &(n, _))| i == n));
            prop_assert_eq!(frames, filter_predictions(&raw).frames);
        }
    }
}
