//! The full audio-to-viseme chain for one stream, used both offline and live.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::audio::{
    AudioStream, FeatureExtractor, FeatureVector, Limiter, LimiterConfig, FEATURE_DIM, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::filter::{latency_report, FilterState, LatencyBudget};
use crate::model::{Model, PredictionStream, ShiftedPredictor};
use crate::viseme::{VisemeId, VisemeTrack24, FRAME_RATE};

/// Playback delay clients are told to apply to their monitored audio.
pub const DEFAULT_AUDIO_DELAY_MS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub model_path: PathBuf,
    pub limiter: LimiterConfig,
    pub audio_delay_ms: f64,
    pub bind: String,
    pub port: u16,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            model_path: PathBuf::from("model.lsm"),
            limiter: LimiterConfig::default(),
            audio_delay_ms: DEFAULT_AUDIO_DELAY_MS,
            bind: "127.0.0.1".into(),
            port: 8765,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self, algorithmic_ms: f64) -> Result<()> {
        self.limiter.validate()?;
        if self.audio_delay_ms.is_nan() || self.audio_delay_ms < algorithmic_ms {
            return Err(Error::Config(format!(
                "audio_delay_ms {} is below the algorithmic latency {algorithmic_ms} ms",
                self.audio_delay_ms
            )));
        }
        Ok(())
    }
}

/// One filtered 24 fps frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisemeEvent {
    pub frame: usize,
    /// Media time of the frame, n * 1000 / 24.
    pub time_ms: f64,
    pub viseme: VisemeId,
    /// Time from capture of the frame's audio to emission, estimated from chunk
    /// arrival instants.
    pub wall_latency_ms: f64,
}

pub fn frame_time_ms(frame: usize) -> f64 {
    frame as f64 * 1000.0 / FRAME_RATE as f64
}

/// Streaming state for one audio stream: limiter, features, LSTM, filter.
#[derive(Debug)]
pub struct Session {
    model: Arc<Model>,
    limiter: Limiter,
    extractor: FeatureExtractor,
    predictor: ShiftedPredictor<f32>,
    filter: FilterState,
    limited: Vec<i16>,
    features: Vec<FeatureVector>,
    input: Vec<f32>,
    frames: Vec<(usize, VisemeId)>,
    // (first sample after the chunk, arrival instant) for chunks still referenced
    arrivals: VecDeque<(u64, Instant)>,
    samples_in: u64,
    frames_out: usize,
    hops: usize,
    busy: Duration,
    finished: bool,
}

impl Session {
    pub fn new(model: Arc<Model>, limiter: LimiterConfig) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            limiter: Limiter::new(limiter)?,
            extractor: FeatureExtractor::new(model.delta_mode),
            predictor: ShiftedPredictor::new(&model.params),
            filter: FilterState::new(),
            limited: Vec::new(),
            features: Vec::new(),
            input: vec![0.0; FEATURE_DIM],
            frames: Vec::new(),
            arrivals: VecDeque::new(),
            samples_in: 0,
            frames_out: 0,
            hops: 0,
            busy: Duration::ZERO,
            finished: false,
            model,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn latency(&self) -> LatencyBudget {
        latency_report(self.model.delta_mode, self.model.shift(), self.mean_processing_ms())
    }

    pub fn algorithmic_latency_ms(&self) -> f64 {
        self.latency().algorithmic_ms()
    }

    pub fn samples_in(&self) -> u64 {
        self.samples_in
    }

    pub fn frames_out(&self) -> usize {
        self.frames_out
    }

    /// 100 Hz steps run through the network so far.
    pub fn hops(&self) -> usize {
        self.hops
    }

    /// Mean compute time per 100 Hz step.
    pub fn mean_processing_ms(&self) -> f64 {
        if self.hops == 0 {
            0.0
        } else {
            self.busy.as_secs_f64() * 1000.0 / self.hops as f64
        }
    }

    pub fn push(&mut self, pcm: &[i16], out: &mut Vec<VisemeEvent>) {
        self.push_at(pcm, Instant::now(), out)
    }

    /// Feeds a chunk that arrived at `arrival`; appends every frame it completes.
    pub fn push_at(&mut self, pcm: &[i16], arrival: Instant, out: &mut Vec<VisemeEvent>) {
        assert!(!self.finished, "push after finish");
        let started = Instant::now();
        self.samples_in += pcm.len() as u64;
        self.arrivals.push_back((self.samples_in, arrival));
        self.limited.clear();
        self.limiter.process_into(pcm, &mut self.limited);
        self.features.clear();
        self.extractor.push(&self.limited, &mut self.features);
        for k in 0..self.features.len() {
            self.model.norm.apply(&self.features[k], &mut self.input);
            if let Some(logits) = self.predictor.push(&self.model.params, &self.input) {
                self.filter_logits(&logits);
            }
        }
        self.hops += self.features.len();
        self.busy += started.elapsed();
        self.emit(out);
    }

    /// Flushes every held-back stage. Further pushes panic.
    pub fn finish(&mut self, out: &mut Vec<VisemeEvent>) {
        if self.finished {
            return;
        }
        self.finished = true;
        let started = Instant::now();
        self.features.clear();
        self.extractor.finish(&mut self.features);
        for k in 0..self.features.len() {
            self.model.norm.apply(&self.features[k], &mut self.input);
            if let Some(logits) = self.predictor.push(&self.model.params, &self.input) {
                self.filter_logits(&logits);
            }
        }
        self.hops += self.features.len();
        for logits in self.predictor.finish(&self.model.params) {
            self.filter_logits(&logits);
        }
        self.filter.finish(&mut self.frames);
        self.busy += started.elapsed();
        self.emit(out);
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn filter_logits(&mut self, logits: &[f32]) {
        let row: Vec<f64> = logits.iter().map(|&v| f64::from(v)).collect();
        let v = PredictionStream::from_logits(row.len(), row).visemes[0];
        self.filter.push(v, &mut self.frames);
    }

    fn emit(&mut self, out: &mut Vec<VisemeEvent>) {
        let now = Instant::now();
        for (frame, viseme) in self.frames.drain(..) {
            let time_ms = frame_time_ms(frame);
            let sample = (time_ms * SAMPLE_RATE as f64 / 1000.0) as u64;
            while self.arrivals.len() > 1 && self.arrivals[0].0 <= sample {
                self.arrivals.pop_front();
            }
            let wall_latency_ms = match self.arrivals.front() {
                Some(&(end, at)) => {
                    let before_arrival = end.saturating_sub(sample) as f64 * 1000.0 / SAMPLE_RATE as f64;
                    now.duration_since(at).as_secs_f64() * 1000.0 + before_arrival
                }
                None => 0.0,
            };
            out.push(VisemeEvent {
                frame,
                time_ms,
                viseme,
                wall_latency_ms,
            });
            self.frames_out = frame + 1;
        }
    }
}

/// Keeps only frames whose viseme differs from the previous frame.
pub fn changes(events: &[VisemeEvent]) -> Vec<VisemeEvent> {
    let mut out: Vec<VisemeEvent> = Vec::new();
    for e in events {
        if out.last().is_none_or(|p| p.viseme != e.viseme) {
            out.push(*e);
        }
    }
    out
}

/// Rebuilds a full track from change events and the total frame count.
pub fn track_from_changes(changes: &[(usize, VisemeId)], total_frames: usize) -> Result<VisemeTrack24> {
    let mut frames = Vec::with_capacity(total_frames);
    for &(frame, v) in changes {
        if frame < frames.len() {
            return Err(Error::Format(format!("change events out of order at frame {frame}")));
        }
        if frame > frames.len() {
            let Some(&prev) = frames.last() else {
                return Err(Error::Format("first change event must be frame 0".into()));
            };
            frames.resize(frame, prev);
        }
        frames.push(v);
    }
    if total_frames < frames.len() {
        return Err(Error::Format(format!(
            "{} frames announced, changes reach frame {}",
            total_frames,
            frames.len()
        )));
    }
    if let Some(&last) = frames.last() {
        frames.resize(total_frames, last);
    }
    Ok(VisemeTrack24::new(frames))
}

/// Offline synchronisation of a whole recording through the streaming chain.
pub fn sync_audio(model: Arc<Model>, audio: &AudioStream, limiter: &LimiterConfig) -> Result<VisemeTrack24> {
    if audio.is_empty() {
        return Err(Error::Empty("audio has no samples"));
    }
    let mut session = Session::new(model, *limiter)?;
    let mut events = Vec::new();
    session.push(audio.samples(), &mut events);
    session.finish(&mut events);
    Ok(VisemeTrack24::new(events.iter().map(|e| e.viseme).collect()))
}

/// Reads a wav file, synchronises it and writes a JSON (or `.csv`) track.
pub fn sync_file(
    model: Arc<Model>,
    wav: impl AsRef<Path>,
    out: impl AsRef<Path>,
    limiter: &LimiterConfig,
) -> Result<VisemeTrack24> {
    let audio = AudioStream::read_wav(wav)?;
    let track = sync_audio(model, &audio, limiter)?;
    write_track(&track, out)?;
    Ok(track)
}

pub fn write_track(track: &VisemeTrack24, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    let file = track.to_file();
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        std::fs::write(out, file.to_csv()).map_err(|e| Error::io(out, e))
    } else {
        file.write_json(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{assemble_features_with, limit_audio, DeltaMode};
    use crate::model::{FeatureNorm, LstmParams};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(shift: usize, mode: DeltaMode, seed: u64) -> Arc<Model> {
        let mut p = LstmParams::<f32>::init(FEATURE_DIM, 16, 12, shift, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // bias some classes so the argmax actually moves around
        for w in p.w_out.iter_mut() {
            *w *= 20.0;
        }
        let norm = FeatureNorm {
            mean: (0..FEATURE_DIM).map(|_| rng.random_range(-5.0..5.0)).collect(),
            std: vec![3.0; FEATURE_DIM],
        };
        Arc::new(Model::new(p, norm, mode).unwrap())
    }

    fn noise(n: usize, seed: u64) -> AudioStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phase = 0.0f64;
        AudioStream::mono_16k(
            (0..n)
                .map(|i| {
                    let f = 200.0 + 3000.0 * ((i / 1600) % 5) as f64 / 5.0;
                    phase += 2.0 * std::f64::consts::PI * f / 16000.0;
                    (8000.0 * phase.sin()) as i16 + rng.random_range(-500..500)
                })
                .collect(),
        )
    }

    #[test]
    fn streaming_matches_batch_for_any_chunking() {
        for (seed, mode, shift) in [(1, DeltaMode::Centered, 6), (2, DeltaMode::Causal, 0), (3, DeltaMode::Centered, 2)] {
            let m = model(shift, mode, seed);
            let audio = noise(16000 + 37 * seed as usize, seed);
            let lim = LimiterConfig::default();
            let feats = assemble_features_with(&limit_audio(&audio, &lim).unwrap(), mode);
            let batch = m.predict_track(&feats).unwrap();
            assert!(crate::viseme::count_transitions(&batch.frames) > 0);
            assert_eq!(sync_audio(m.clone(), &audio, &lim).unwrap(), batch);

            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut s = Session::new(m.clone(), lim).unwrap();
            let mut events = Vec::new();
            let mut i = 0;
            while i < audio.len() {
                let n = rng.random_range(1..700).min(audio.len() - i);
                s.push(&audio.samples()[i..i + n], &mut events);
                i += n;
            }
            s.finish(&mut events);
            let frames: Vec<VisemeId> = events.iter().map(|e| e.viseme).collect();
            assert_eq!(frames, batch.frames);
            for (k, e) in events.iter().enumerate() {
                assert_eq!(e.frame, k);
                assert_eq!(e.time_ms, k as f64 * 1000.0 / 24.0);
            }
        }
    }

    #[test]
    fn change_events_rebuild_the_track() {
        let m = model(6, DeltaMode::Centered, 4);
        let audio = noise(24000, 4);
        let mut s = Session::new(m, LimiterConfig::default()).unwrap();
        let mut events = Vec::new();
        s.push(audio.samples(), &mut events);
        s.finish(&mut events);
        let ch: Vec<(usize, VisemeId)> = changes(&events).iter().map(|e| (e.frame, e.viseme)).collect();
        let track = track_from_changes(&ch, events.len()).unwrap();
        assert_eq!(track.frames, events.iter().map(|e| e.viseme).collect::<Vec<_>>());
        assert!(track_from_changes(&[(3, VisemeId::Ah)], 5).is_err());
        assert!(track_from_changes(&[(0, VisemeId::Ah), (4, VisemeId::M)], 3).is_err());
    }

    #[test]
    fn default_latency_is_123_ms() {
        let s = Session::new(model(6, DeltaMode::Centered, 5), LimiterConfig::default()).unwrap();
        assert_eq!(s.algorithmic_latency_ms(), 123.0);
        let c = model(0, DeltaMode::Causal, 5);
        let s = Session::new(c, LimiterConfig::default()).unwrap();
        assert_eq!(s.algorithmic_latency_ms(), 30.0);
    }

    #[test]
    fn sessions_do_not_share_state() {
        let m = model(6, DeltaMode::Centered, 6);
        let a = noise(16000, 1);
        let b = noise(16000, 2);
        let mut sa = Session::new(m.clone(), LimiterConfig::default()).unwrap();
        let mut sb = Session::new(m.clone(), LimiterConfig::default()).unwrap();
        let (mut ea, mut eb) = (Vec::new(), Vec::new());
        for (ca, cb) in a.samples().chunks(320).zip(b.samples().chunks(320)) {
            sa.push(ca, &mut ea);
            sb.push(cb, &mut eb);
        }
        sa.finish(&mut ea);
        sb.finish(&mut eb);
        let lim = LimiterConfig::default();
        assert_eq!(ea.iter().map(|e| e.viseme).collect::<Vec<_>>(), sync_audio(m.clone(), &a, &lim).unwrap().frames);
        assert_eq!(eb.iter().map(|e| e.viseme).collect::<Vec<_>>(), sync_audio(m, &b, &lim).unwrap().frames);
    }

    #[test]
    fn config_rejects_short_audio_delay() {
        let c = SessionConfig {
            audio_delay_ms: 100.0,
            ..SessionConfig::default()
        };
        assert!(c.validate(123.0).is_err());
        assert!(SessionConfig::default().validate(123.0).is_ok());
    }

    #[test]
    fn empty_audio_is_an_error() {
        let m = model(6, DeltaMode::Centered, 7);
        assert!(sync_audio(m, &AudioStream::mono_16k(vec![]), &LimiterConfig::default()).is_err());
    }
}
