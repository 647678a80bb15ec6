use super::PredictionStream;
use crate::error::{Error, Result};
use crate::viseme::VisemeTrack100;

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_sum).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Mean over steps of -log softmax(logits)[truth].
pub fn cross_entropy_loss(pred: &PredictionStream, truth: &VisemeTrack100) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("cross-entropy over an empty prediction stream"));
    }
    let total: f64 = truth
        .steps
        .iter()
        .enumerate()
        .map(|(t, v)| -log_softmax(pred.logits(t))[v.index()])
        .sum();
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viseme::VisemeId;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_log_twelve() {
        let pred = PredictionStream::from_logits(12, vec![0.7; 12 * 5]);
        let truth = VisemeTrack100::new(vec![VisemeId::M; 5]);
        let loss = cross_entropy_loss(&pred, &truth).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-12);
        assert!((loss - 2.4849).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let truth = VisemeTrack100::new(vec![VisemeId::Oh, VisemeId::Silent]);
        let mut last = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 60.0] {
            let mut logits = vec![0.0; 24];
            logits[VisemeId::Oh.index()] = margin;
            logits[12 + VisemeId::Silent.index()] = margin;
            let loss = cross_entropy_loss(&PredictionStream::from_logits(12, logits), &truth).unwrap();
            assert!(loss >= 0.0 && loss < last);
            last = loss;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let pred = PredictionStream::from_logits(12, vec![0.0; 24]);
        let truth = VisemeTrack100::new(vec![VisemeId::M; 3]);
        assert!(matches!(
            cross_entropy_loss(&pred, &truth),
            Err(Error::LengthMismatch { .. })
        ));
    }

    /// exp/ln evaluated with compensated (Kahan) sums over shifted exponents, as an
    /// extended-precision recomputation of the same quantity.
    fn careful_loss(logits: &[f64], truth: &[usize]) -> f64 {
        let mut total = 0.0f64;
        let mut comp = 0.0f64;
        for (t, &y) in truth.iter().enumerate() {
            let row = &logits[t * 12..(t + 1) * 12];
            let pivot = row[y];
            // -log p_y = log(sum_k exp(l_k - l_y))
            let mut s = 0.0f64;
            let mut c = 0.0f64;
            for &l in row {
                let term = (l - pivot).exp() - c;
                let next = s + term;
                c = (next - s) - term;
                s = next;
            }
            let v = s.ln();
            let term = v - comp;
            let next = total + term;
            comp = (next - total) - term;
            total = next;
        }
        total / truth.len() as f64
    }

    #[test]
    fn random_case_agrees_with_careful_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..50);
            let logits: Vec<f64> = (0..n * 12).map(|_| rng.random_range(-8.0..8.0)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..12)).collect();
            let track = VisemeTrack100::new(
                truth.iter().map(|&c| VisemeId::from_code(c as u8).unwrap()).collect(),
            );
            let loss =
                cross_entropy_loss(&PredictionStream::from_logits(12, logits.clone()), &track).unwrap();
            assert!((loss - careful_loss(&logits, &truth)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 2.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
