use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{normalize_sample, AudioStream, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Boost-then-clamp peak limiter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimiterConfig {
    /// Gain applied before limiting.
    pub boost_db: f64,
    /// Output peak ceiling relative to full scale (<= 0).
    pub ceiling_db: f64,
    /// Look-back window over which the peak envelope is held.
    pub attack_ms: f64,
    /// Time constant for gain recovery after a peak.
    pub release_ms: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self {
            boost_db: 10.0,
            ceiling_db: -0.1,
            attack_ms: 5.0,
            release_ms: 100.0,
        }
    }
}

impl LimiterConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.boost_db, self.ceiling_db, self.attack_ms, self.release_ms]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("limiter parameters must be finite".into()));
        }
        if self.ceiling_db > 0.0 {
            return Err(Error::Config(format!(
                "limiter ceiling {} dBFS is above full scale",
                self.ceiling_db
            )));
        }
        if self.attack_ms < 0.0 || self.release_ms < 0.0 {
            return Err(Error::Config(
                "limiter attack/release times must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn ceiling_linear(&self) -> f64 {
        db_to_linear(self.ceiling_db)
    }

    /// Largest output sample magnitude the limiter may produce.
    pub fn ceiling_sample(&self) -> i16 {
        (self.ceiling_linear() * 32767.0).floor() as i16
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Streaming hard limiter. Gain reduction is driven by the peak of the boosted signal
/// over the last `attack_ms` (current sample included), so the limiter never reads
/// ahead and the output peak never exceeds the ceiling. Gain recovers exponentially
/// with the release time constant.
#[derive(Debug, Clone)]
pub struct Limiter {
    config: LimiterConfig,
    boost: f64,
    ceiling: f64,
    ceiling_sample: f64,
    window: usize,
    release_coeff: f64,
    // (sample index, |boosted sample|), values strictly decreasing front to back
    peaks: VecDeque<(u64, f64)>,
    position: u64,
    gain: f64,
}

impl Limiter {
    pub fn new(config: LimiterConfig) -> Result<Self> {
        config.validate()?;
        let window = ((config.attack_ms * SAMPLE_RATE as f64 / 1000.0).round() as usize).max(1);
        let release_samples = config.release_ms * SAMPLE_RATE as f64 / 1000.0;
        let release_coeff = if release_samples > 0.0 {
            (-1.0 / release_samples).exp()
        } else {
            0.0
        };
        Ok(Self {
            config,
            boost: db_to_linear(config.boost_db),
            ceiling: config.ceiling_linear(),
            ceiling_sample: config.ceiling_sample() as f64,
            window,
            release_coeff,
            peaks: VecDeque::with_capacity(window + 1),
            position: 0,
            gain: 1.0,
        })
    }

    pub fn config(&self) -> &LimiterConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.peaks.clear();
        self.position = 0;
        self.gain = 1.0;
    }

    #[inline]
    fn process_sample(&mut self, sample: i16) -> i16 {
        let boosted = normalize_sample(sample) * self.boost;
        let level = boosted.abs();

        while matches!(self.peaks.back(), Some(&(_, v)) if v <= level) {
            self.peaks.pop_back();
        }
        self.peaks.push_back((self.position, level));
        let oldest = self.position.saturating_sub(self.window as u64 - 1);
        while matches!(self.peaks.front(), Some(&(i, _)) if i < oldest) {
            self.peaks.pop_front();
        }
        self.position += 1;

        let envelope = self.peaks.front().map_or(0.0, |&(_, v)| v);
        let target = if envelope > self.ceiling {
            self.ceiling / envelope
        } else {
            1.0
        };
        self.gain = if target < self.gain {
            target
        } else {
            target + (self.gain - target) * self.release_coeff
        };

        let out = (boosted * self.gain * 32768.0).trunc();
        out.clamp(-self.ceiling_sample, self.ceiling_sample) as i16
    }

    pub fn process_into(&mut self, input: &[i16], output: &mut Vec<i16>) {
        output.reserve(input.len());
        for &s in input {
            let y = self.process_sample(s);
            output.push(y);
        }
    }

    pub fn process(&mut self, input: &[i16]) -> Vec<i16> {
        let mut out = Vec::with_capacity(input.len());
        self.process_into(input, &mut out);
        out
    }
}

/// Runs a fresh limiter over a whole stream.
pub fn limit_audio(stream: &AudioStream, config: &LimiterConfig) -> Result<AudioStream> {
    let mut limiter = Limiter::new(*config)?;
    Ok(AudioStream::mono_16k(limiter.process(stream.samples())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(xs: &[i16]) -> f64 {
        (xs.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let out = limit_audio(&AudioStream::mono_16k(vec![0; 4000]), &LimiterConfig::default())
            .unwrap();
        assert!(out.samples().iter().all(|&s| s == 0));
        assert_eq!(out.len(), 4000);
    }

    #[test]
    fn full_scale_is_clamped_to_ceiling() {
        let cfg = LimiterConfig::default();
        // 32767 * 10^(-0.1/20) = 32391.9
        let ceiling = 32767.0 * 10f64.powf(-0.1 / 20.0);
        assert_eq!(cfg.ceiling_sample(), 32391);
        let out = limit_audio(&AudioStream::mono_16k(vec![32767; 16000]), &cfg).unwrap();
        assert!(out.samples().iter().all(|&s| (s as f64) <= ceiling));
        assert!(out.samples().iter().all(|&s| s <= 32729));
        let neg = limit_audio(&AudioStream::mono_16k(vec![-32768; 1000]), &cfg).unwrap();
        assert!(neg.samples().iter().all(|&s| (s as f64).abs() <= ceiling));
    }

    #[test]
    fn quiet_sine_gets_exact_boost() {
        let amp = 32768.0 * 10f64.powf(-30.0 / 20.0);
        let input: Vec<i16> = (0..16000)
            .map(|n| (amp * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin()).round() as i16)
            .collect();
        let cfg = LimiterConfig {
            boost_db: 12.0,
            ..LimiterConfig::default()
        };
        let out = limit_audio(&AudioStream::mono_16k(input.clone()), &cfg).unwrap();
        let ratio = rms(out.samples()) / rms(&input);
        let expected = 10f64.powf(12.0 / 20.0);
        assert!((ratio / expected - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn loud_burst_is_limited_then_released() {
        let cfg = LimiterConfig::default();
        let mut input = vec![30000i16; 1600];
        input.extend(std::iter::repeat_n(1000i16, 16000));
        let out = limit_audio(&AudioStream::mono_16k(input), &cfg).unwrap();
        let peak = out.samples().iter().map(|&s| (s as i32).abs()).max().unwrap();
        assert!(peak <= cfg.ceiling_sample() as i32);
        // well after the release time the quiet section is boosted by the full +10 dB
        let tail = *out.samples().last().unwrap() as f64;
        assert!((tail / (1000.0 * db_to_linear(10.0)) - 1.0).abs() < 0.01, "{tail}");
        // but right after the burst the gain is still reduced
        assert!((out.samples()[1600 + 100] as f64) < 0.5 * tail);
    }

    #[test]
    fn chunked_processing_matches_whole() {
        let input: Vec<i16> = (0..5000).map(|n| ((n * 7919) % 65536 - 32768) as i16).collect();
        let whole = limit_audio(&AudioStream::mono_16k(input.clone()), &LimiterConfig::default())
            .unwrap();
        let mut lim = Limiter::new(LimiterConfig::default()).unwrap();
        let mut out = Vec::new();
        for chunk in input.chunks(37) {
            lim.process_into(chunk, &mut out);
        }
        assert_eq!(whole.samples(), &out[..]);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = LimiterConfig {
            ceiling_db: 1.0,
            ..LimiterConfig::default()
        };
        assert!(Limiter::new(bad).is_err());
        let bad = LimiterConfig {
            attack_ms: f64::NAN,
            ..LimiterConfig::default()
        };
        assert!(Limiter::new(bad).is_err());
    }
}
