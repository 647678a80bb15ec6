use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{normalize_sample, SAMPLE_RATE, WINDOW_LENGTH};

pub const NUM_MFCC: usize = 13;
pub const NUM_MEL_FILTERS: usize = 26;
pub const FFT_SIZE: usize = 512;
pub const PRE_EMPHASIS: f64 = 0.97;
/// Floor applied to mel-filter outputs and frame energy before taking the log.
pub const ENERGY_FLOOR: f64 = 1e-10;

const NUM_BINS: usize = FFT_SIZE / 2 + 1;

pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
struct MelFilter {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Triangular filters equally spaced on the HTK mel scale between 0 Hz and Nyquist,
/// evaluated at FFT bin centre frequencies.
fn mel_filterbank() -> Vec<MelFilter> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..NUM_MEL_FILTERS + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (NUM_MEL_FILTERS + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;

    (0..NUM_MEL_FILTERS)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut first_bin = None;
            let mut weights = Vec::new();
            for k in 0..NUM_BINS {
                let f = k as f64 * bin_hz;
                let w = if f >= left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f <= right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    first_bin.get_or_insert(k);
                }
                if first_bin.is_some() {
                    if w <= 0.0 && f > right {
                        break;
                    }
                    weights.push(w);
                }
            }
            MelFilter {
                first_bin: first_bin.unwrap_or(0),
                weights,
            }
        })
        .collect()
}

/// Reusable MFCC analysis state: FFT plan, Hamming window, filterbank and DCT basis.
pub struct MfccAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filters: Vec<MelFilter>,
    dct: Vec<[f64; NUM_MEL_FILTERS]>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Default for MfccAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for MfccAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccAnalyzer").finish_non_exhaustive()
    }
}

impl Clone for MfccAnalyzer {
    fn clone(&self) -> Self {
        Self::new()
    }
}

impl MfccAnalyzer {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        let window = (0..WINDOW_LENGTH)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (WINDOW_LENGTH - 1) as f64).cos())
            .collect();
        let m = NUM_MEL_FILTERS as f64;
        let dct = (0..NUM_MFCC)
            .map(|i| {
                let scale = if i == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                let mut row = [0.0; NUM_MEL_FILTERS];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = scale * (PI * i as f64 * (j as f64 + 0.5) / m).cos();
                }
                row
            })
            .collect();
        Self {
            fft,
            window,
            filters: mel_filterbank(),
            dct,
            buffer: vec![Complex::default(); FFT_SIZE],
            scratch,
        }
    }

    /// Log mel-filterbank energies of one 400-sample window.
    pub fn log_mel(&mut self, samples: &[i16]) -> [f64; NUM_MEL_FILTERS] {
        assert_eq!(samples.len(), WINDOW_LENGTH, "analysis window must hold 400 samples");
        // window-local pre-emphasis; the first sample is differenced with itself
        let mut prev = normalize_sample(samples[0]);
        for (n, slot) in self.buffer.iter_mut().enumerate() {
            *slot = if n < WINDOW_LENGTH {
                let x = normalize_sample(samples[n]);
                let y = x - PRE_EMPHASIS * prev;
                prev = x;
                Complex::new(y * self.window[n], 0.0)
            } else {
                Complex::default()
            };
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);

        let mut out = [0.0; NUM_MEL_FILTERS];
        for (o, filter) in out.iter_mut().zip(&self.filters) {
            let energy: f64 = filter
                .weights
                .iter()
                .enumerate()
                .map(|(j, w)| w * self.buffer[filter.first_bin + j].norm_sqr())
                .sum();
            *o = energy.max(ENERGY_FLOOR).ln();
        }
        out
    }

    pub fn mfcc(&mut self, samples: &[i16]) -> [f64; NUM_MFCC] {
        let log_mel = self.log_mel(samples);
        let mut out = [0.0; NUM_MFCC];
        for (o, row) in out.iter_mut().zip(&self.dct) {
            *o = row.iter().zip(&log_mel).map(|(a, b)| a * b).sum();
        }
        out
    }
}

thread_local! {
    static ANALYZER: RefCell<MfccAnalyzer> = RefCell::new(MfccAnalyzer::new());
}

/// 13 cepstral coefficients (c0..c12) of one 400-sample window.
pub fn compute_mfcc(window: &[i16]) -> [f64; NUM_MFCC] {
    ANALYZER.with(|a| a.borrow_mut().mfcc(window))
}

/// log(max(sum of squared normalized samples, floor)).
pub fn compute_log_energy(window: &[i16]) -> f64 {
    let energy: f64 = window.iter().map(|&s| normalize_sample(s).powi(2)).sum();
    energy.max(ENERGY_FLOOR).ln()
}
