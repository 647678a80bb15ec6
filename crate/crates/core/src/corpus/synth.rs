//! Synthetic corpus with a known answer.
//!
//! Every viseme class is rendered as a cluster of three tones in its own spectral
//! band (Silent is only the noise floor), so the classes are separable from the
//! audio alone. Each sentence is a random script of classes read by seven
//! simulated speakers who differ in band placement, gain and tempo. The audio
//! trails its transcription by a fixed lead, the way mouth shapes anticipate
//! sound, so a model has to look ahead to place transitions correctly.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{format_phn, CorpusManifest, Gender, PhoneSegment, RecordingMeta};
use crate::audio::{AudioStream, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::viseme::{VisemeId, FRAME_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub seed: u64,
    /// Recordings per sentence of the reference speaker's gender (reference included).
    pub same_gender: usize,
    pub other_gender: usize,
    /// Non-reference recordings stretch their script by a factor drawn from
    /// [1 - tempo_jitter, 1 + tempo_jitter].
    pub tempo_jitter: f64,
    pub label_lead_ms: f64,
    pub phones_per_sentence: (usize, usize),
    pub phone_ms: (f64, f64),
    pub edge_silence_ms: (f64, f64),
    pub pause_probability: f64,
    pub crossfade_ms: f64,
    pub speakers_per_gender: usize,
    /// Snap phone boundaries to the 24 fps frame grid, so the midpoint labels are
    /// a function of the audio alone.
    pub frame_aligned: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sentences: 50,
            seed: 0,
            same_gender: 4,
            other_gender: 3,
            tempo_jitter: 0.2,
            label_lead_ms: 40.0,
            phones_per_sentence: (8, 14),
            phone_ms: (90.0, 220.0),
            edge_silence_ms: (150.0, 300.0),
            pause_probability: 0.1,
            crossfade_ms: 16.0,
            speakers_per_gender: 16,
            frame_aligned: true,
        }
    }
}

/// Phone label used in transcriptions for each class.
pub fn class_phone(v: VisemeId) -> &'static str {
    match v {
        VisemeId::Silent => "pau",
        VisemeId::Ah => "aa",
        VisemeId::D => "d",
        VisemeId::Ee => "iy",
        VisemeId::F => "f",
        VisemeId::L => "l",
        VisemeId::M => "m",
        VisemeId::Oh => "ow",
        VisemeId::R => "r",
        VisemeId::S => "s",
        VisemeId::Uh => "ah",
        VisemeId::WOo => "uw",
    }
}

/// Centre frequency of a class's band before the speaker shift: log-spaced
/// 300 Hz .. 6 kHz over the eleven non-silent classes.
pub fn class_frequency(v: VisemeId) -> Option<f64> {
    let k = v.index().checked_sub(1)?;
    Some(300.0 * 20f64.powf(k as f64 / 10.0))
}

#[derive(Debug, Clone)]
struct Speaker {
    id: String,
    gender: Gender,
    dialect: String,
    band_shift: f64,
    gain: f64,
}

/// Generated recordings kept in memory, parallel to `manifest.recordings`.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub manifest: CorpusManifest,
    pub audio: Vec<AudioStream>,
    pub segments: Vec<Vec<PhoneSegment>>,
    /// Index of the reference (tempo 1.0) recording of each sentence.
    pub references: Vec<usize>,
    /// Duration multiplier applied to each recording's script.
    pub tempo: Vec<f64>,
}

impl SynthCorpus {
    pub fn total_duration_s(&self) -> f64 {
        self.audio.iter().map(AudioStream::duration_s).sum()
    }

    pub fn reference_ids(&self) -> Vec<String> {
        self.references
            .iter()
            .map(|&i| self.manifest.recordings[i].id())
            .collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.manifest.recordings.iter().position(|r| r.id() == id)
    }

    /// Writes `<speaker>/<sentence>.wav|.phn`, `manifest.json` and
    /// `references.json` under `dir`, and points the manifest at it.
    pub fn write_to_dir(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for ((rec, audio), segs) in self
            .manifest
            .recordings
            .iter()
            .zip(&self.audio)
            .zip(&self.segments)
        {
            let wav = dir.join(&rec.wav);
            if let Some(parent) = wav.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            audio.write_wav(&wav)?;
            let phn = dir.join(&rec.phn);
            std::fs::write(&phn, format_phn(segs)).map_err(|e| Error::io(&phn, e))?;
        }
        self.manifest.base_dir = dir.to_path_buf();
        self.manifest.write_json(dir.join("manifest.json"))?;
        let refs = dir.join("references.json");
        std::fs::write(&refs, serde_json::to_vec_pretty(&self.reference_ids())?)
            .map_err(|e| Error::io(&refs, e))
    }
}

fn speaker_pool(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Speaker> {
    let mut pool = Vec::new();
    for gender in [Gender::M, Gender::F] {
        let base = match gender {
            Gender::M => 0.97,
            Gender::F => 1.06,
        };
        for k in 0..cfg.speakers_per_gender {
            pool.push(Speaker {
                id: format!("{gender}SP{k:02}"),
                gender,
                dialect: format!("DR{}", rng.random_range(1..=8)),
                band_shift: base * (1.0 + rng.random_range(-0.02..0.02)),
                gain: 10f64.powf(rng.random_range(-3.0..3.0) / 20.0),
            });
        }
    }
    pool
}

/// (class, base duration in ms) for one sentence, framed by silences.
fn script(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<(VisemeId, f64)> {
    let (lo, hi) = cfg.phones_per_sentence;
    let n = rng.random_range(lo..=hi);
    let mut out = vec![(
        VisemeId::Silent,
        rng.random_range(cfg.edge_silence_ms.0..=cfg.edge_silence_ms.1),
    )];
    let mut prev = VisemeId::Silent;
    for _ in 0..n {
        let v = if prev != VisemeId::Silent && rng.random_bool(cfg.pause_probability) {
            VisemeId::Silent
        } else {
            loop {
                let c = VisemeId::ALL[rng.random_range(1..VisemeId::ALL.len())];
                if c != prev {
                    break c;
                }
            }
        };
        out.push((v, rng.random_range(cfg.phone_ms.0..=cfg.phone_ms.1)));
        prev = v;
    }
    if prev == VisemeId::Silent {
        out.pop();
    }
    out.push((
        VisemeId::Silent,
        rng.random_range(cfg.edge_silence_ms.0..=cfg.edge_silence_ms.1),
    ));
    out
}

fn render(
    cfg: &SynthConfig,
    script: &[(VisemeId, f64)],
    speaker: &Speaker,
    tempo: f64,
    rng: &mut ChaCha8Rng,
) -> (AudioStream, Vec<PhoneSegment>) {
    let rate = SAMPLE_RATE as f64;
    let ms = |v: f64| (v * rate / 1000.0).round() as i64;
    let mut bounds = vec![0i64];
    let mut t = 0.0;
    for (_, d) in script {
        t += d * tempo;
        let b = if cfg.frame_aligned {
            let frame = (t * FRAME_RATE as f64 / 1000.0).round();
            (frame * rate / FRAME_RATE as f64).round() as i64
        } else {
            ms(t)
        };
        let prev = *bounds.last().expect("non-empty");
        bounds.push(b.max(prev + ms(1000.0 / FRAME_RATE as f64)));
    }
    let lead = ms(cfg.label_lead_ms);
    let total = *bounds.last().expect("non-empty") + lead;

    let mut segments = Vec::with_capacity(script.len());
    for (k, (v, _)) in script.iter().enumerate() {
        let phone = if k == 0 || k == script.len() - 1 {
            "h#"
        } else {
            class_phone(*v)
        };
        let end = if k == script.len() - 1 { total } else { bounds[k + 1] };
        segments.push(PhoneSegment::new(phone, bounds[k] as u64, end as u64));
    }

    let mut x: Vec<f64> = (0..total).map(|_| rng.random_range(-0.002..0.002)).collect();
    let half_fade = ms(cfg.crossfade_ms / 2.0).max(1);
    for (k, (v, _)) in script.iter().enumerate() {
        let Some(fc) = class_frequency(*v) else {
            continue;
        };
        let fc = fc * speaker.band_shift;
        let tones: Vec<(f64, f64, f64)> = [(0.97, 0.6), (1.0, 1.0), (1.03, 0.6)]
            .iter()
            .map(|&(m, a)| (2.0 * PI * fc * m / rate, a * 0.06 * speaker.gain, rng.random_range(0.0..2.0 * PI)))
            .collect();
        let (s, e) = (bounds[k] + lead, bounds[k + 1] + lead);
        let (from, to) = ((s - half_fade).max(0), (e + half_fade).min(total));
        for n in from..to {
            // raised-cosine ramps centred on the segment boundaries
            let ramp = |d: i64| {
                let u = ((d + half_fade) as f64 / (2 * half_fade) as f64).clamp(0.0, 1.0);
                0.5 - 0.5 * (PI * u).cos()
            };
            let env = ramp(n - s).min(ramp(e - n));
            let mut acc = 0.0;
            for &(w, a, ph) in &tones {
                acc += a * (w * (n - from) as f64 + ph).sin();
            }
            x[n as usize] += env * acc;
        }
    }
    let samples = x
        .iter()
        .map(|v| (v * 32767.0).round().clamp(-32768.0, 32767.0) as i16)
        .collect();
    (AudioStream::mono_16k(samples), segments)
}

/// Generates `cfg.n_sentences` sentences, each read by `same_gender` speakers of
/// the reference gender (alternating M/F by sentence) and `other_gender` of the
/// other. The first recording of each sentence is the reference and is read at
/// tempo 1.0.
pub fn synth_test_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.same_gender == 0 {
        return Err(Error::Config("same_gender must include the reference".into()));
    }
    if cfg.same_gender.max(cfg.other_gender) > cfg.speakers_per_gender {
        return Err(Error::Config("not enough speakers in the pool".into()));
    }
    if !(0.0..1.0).contains(&cfg.tempo_jitter) {
        return Err(Error::Config("tempo_jitter must be in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = speaker_pool(cfg, &mut rng);
    let mut corpus = SynthCorpus {
        manifest: CorpusManifest::default(),
        audio: Vec::new(),
        segments: Vec::new(),
        references: Vec::new(),
        tempo: Vec::new(),
    };
    for i in 0..cfg.n_sentences {
        let sentence_id = format!("SX{}", 100 + i);
        let ref_gender = if i % 2 == 0 { Gender::M } else { Gender::F };
        let script = script(cfg, &mut rng);
        let pick = |g: Gender, n: usize, rng: &mut ChaCha8Rng| {
            let mut of: Vec<&Speaker> = pool.iter().filter(|s| s.gender == g).collect();
            of.shuffle(rng);
            of.truncate(n);
            of
        };
        let mut speakers = pick(ref_gender, cfg.same_gender, &mut rng);
        speakers.extend(pick(ref_gender.other(), cfg.other_gender, &mut rng));
        for (slot, speaker) in speakers.into_iter().enumerate() {
            let tempo = if slot == 0 {
                1.0
            } else {
                1.0 + rng.random_range(-cfg.tempo_jitter..=cfg.tempo_jitter)
            };
            let (audio, segments) = render(cfg, &script, speaker, tempo, &mut rng);
            if slot == 0 {
                corpus.references.push(corpus.audio.len());
            }
            corpus.manifest.recordings.push(RecordingMeta {
                sentence_id: sentence_id.clone(),
                speaker_id: speaker.id.clone(),
                gender: speaker.gender,
                dialect: speaker.dialect.clone(),
                wav: format!("{}/{sentence_id}.wav", speaker.id).into(),
                phn: format!("{}/{sentence_id}.phn", speaker.id).into(),
                duration_s: audio.duration_s(),
            });
            corpus.audio.push(audio);
            corpus.segments.push(segments);
            corpus.tempo.push(tempo);
        }
    }
    Ok(corpus)
}
