//! Audio front end: limiter, framing, MFCC/log-energy analysis, delta features and
//! the streaming feature extractor that ties them together.

mod deltas;
mod features;
mod frames;
mod limiter;
mod mfcc;

use std::path::Path;

pub use deltas::{compute_deltas, delta_from_window, DeltaMode};
pub use features::{
    assemble_features, assemble_features_with, recompute_deltas, BaseFeatures, FeatureExtractor,
    FeatureVector, FEATURE_DIM,
};
pub use frames::{frame_stream, window_count, AnalysisWindow, HOP_LENGTH, WINDOW_LENGTH};
pub use limiter::{limit_audio, Limiter, LimiterConfig};
pub use mfcc::{compute_log_energy, compute_mfcc, MfccAnalyzer, ENERGY_FLOOR, FFT_SIZE, NUM_MEL_FILTERS, NUM_MFCC};

use crate::error::{Error, Result};

/// The one sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono 16-bit PCM at 16 kHz.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioStream {
    samples: Vec<i16>,
}

impl AudioStream {
    pub fn new(samples: Vec<i16>, sample_rate: u32, channel_count: u16) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Format(format!(
                "sample rate {sample_rate} Hz, expected {SAMPLE_RATE} Hz (resample before ingest)"
            )));
        }
        if channel_count != 1 {
            return Err(Error::Format(format!(
                "{channel_count} channels, expected mono"
            )));
        }
        Ok(Self { samples })
    }

    pub fn mono_16k(samples: Vec<i16>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<i16> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Reads a 16-bit PCM WAV file; anything other than mono 16 kHz is rejected.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = hound::WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other}", path.display())),
        })?;
        let spec = reader.spec();
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(Error::Format(format!(
                "{}: expected 16-bit integer PCM, got {}-bit {:?}",
                path.display(),
                spec.bits_per_sample,
                spec.sample_format
            )));
        }
        let samples = reader
            .into_samples::<i16>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples, spec.sample_rate, spec.channels)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
        for &s in &self.samples {
            writer.write_sample(s)?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Decodes headerless little-endian 16-bit PCM; `sample_rate` must be stated by the caller.
    pub fn from_raw_le(bytes: &[u8], sample_rate: u32) -> Result<Self> {
        if !bytes.len().is_multiple_of(2) {
            return Err(Error::Format(format!(
                "raw PCM byte length {} is not a multiple of 2",
                bytes.len()
            )));
        }
        Self::new(decode_pcm_le(bytes), sample_rate, 1)
    }

    pub fn read_raw(path: impl AsRef<Path>, sample_rate: u32) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_raw_le(&bytes, sample_rate)
    }
}

/// Little-endian 16-bit PCM bytes to samples. A trailing odd byte is ignored.
pub fn decode_pcm_le(bytes: &[u8]) -> Vec<i16> {
    bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect()
}

pub fn encode_pcm_le(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}

/// Maps a PCM sample to [-1, 1).
#[inline]
pub fn normalize_sample(s: i16) -> f64 {
    s as f64 / 32768.0
}
