use serde::{Deserialize, Serialize};

/// Where the five-window regression span sits relative to the current window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Windows t-2..t+2; needs two windows of future audio.
    #[default]
    Centered,
    /// Windows t-4..t; past-only, used by the no-lookahead variant.
    Causal,
}

impl DeltaMode {
    /// How many windows past `t` a delta at `t` reads.
    pub fn lookahead_windows(self) -> usize {
        match self {
            DeltaMode::Centered => 2,
            DeltaMode::Causal => 0,
        }
    }

    /// Offset of the first window in the span relative to t.
    pub(crate) fn span_start(self) -> isize {
        match self {
            DeltaMode::Centered => -2,
            DeltaMode::Causal => -4,
        }
    }
}

/// Span-2 regression slope over five consecutive values `[v0, v1, v2, v3, v4]`:
/// ((v3 - v1) + 2 (v4 - v0)) / 10.
#[inline]
pub fn delta_from_window(w: [f64; 5]) -> f64 {
    ((w[3] - w[1]) + 2.0 * (w[4] - w[0])) / 10.0
}

/// Delta of `series` at `t`, replicating the first/last value outside the valid range.
pub fn compute_deltas(series: &[f64], t: usize, mode: DeltaMode) -> f64 {
    assert!(t < series.len(), "delta index {t} out of range");
    let last = series.len() as isize - 1;
    let start = t as isize + mode.span_start();
    let mut w = [0.0; 5];
    for (j, slot) in w.iter_mut().enumerate() {
        let idx = (start + j as isize).clamp(0, last) as usize;
        *slot = series[idx];
    }
    delta_from_window(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_has_zero_delta() {
        let s = vec![3.5; 9];
        for t in 0..9 {
            assert_eq!(compute_deltas(&s, t, DeltaMode::Centered), 0.0);
            assert_eq!(compute_deltas(&s, t, DeltaMode::Causal), 0.0);
        }
    }

    #[test]
    fn ramp_has_unit_delta_in_interior() {
        let s: Vec<f64> = (0..10).map(|t| t as f64).collect();
        for t in 2..8 {
            assert!((compute_deltas(&s, t, DeltaMode::Centered) - 1.0).abs() < 1e-12);
        }
        for t in 4..10 {
            assert!((compute_deltas(&s, t, DeltaMode::Causal) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_bump_cancels() {
        let s = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(compute_deltas(&s, 2, DeltaMode::Centered), 0.0);
    }

    #[test]
    fn edges_replicate() {
        let s = [1.0, 2.0];
        // t=0 window [1,1,1,2,2] -> ((2-1) + 2(2-1))/10
        assert!((compute_deltas(&s, 0, DeltaMode::Centered) - 0.3).abs() < 1e-12);
        // causal at t=0 sees only replicated s[0]
        assert_eq!(compute_deltas(&s, 0, DeltaMode::Causal), 0.0);
    }

    proptest! {
        #[test]
        fn linear_in_series(
            a in proptest::collection::vec(-100.0f64..100.0, 1..30),
            k in -5.0f64..5.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 - i as f64).collect();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| k * x + y).collect();
            for mode in [DeltaMode::Centered, DeltaMode::Causal] {
                for t in 0..a.len() {
                    let lhs = compute_deltas(&combo, t, mode);
                    let rhs = k * compute_deltas(&a, t, mode) + compute_deltas(&b, t, mode);
                    prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
                }
            }
        }
    }
}
