//! Data augmentation by time warping: recordings of the same sentence are
//! aligned to a labeled reference and inherit its viseme track.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::audio::{recompute_deltas, BaseFeatures, DeltaMode, FeatureVector, NUM_MFCC};
use crate::corpus::{CorpusManifest, RecordingMeta};
use crate::dataset::{Provenance, TrainingPair};
use crate::error::{Error, Result};
use crate::viseme::{upsample_24_to_100, VisemeTrack24};

pub const DEFAULT_DURATION_THRESHOLD: f64 = 0.30;

/// Monotone alignment from reference frames to target frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    /// `(ref_index, target_index)` from `(0, 0)` to `(R - 1, T - 1)`.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpPath {
    pub fn is_valid(&self, ref_len: usize, target_len: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.pairs.first(), self.pairs.last()) else {
            return false;
        };
        first == (0, 0)
            && last == (ref_len - 1, target_len - 1)
            && self.pairs.windows(2).all(|w| {
                let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
                matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
            })
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum total Euclidean distance path with steps (1,0), (0,1), (1,1).
///
/// Ties during backtracking prefer the diagonal, then a reference step.
pub fn dtw_align<V: AsRef<[f64]>>(reference: &[V], target: &[V]) -> Result<WarpPath> {
    let (r, t) = (reference.len(), target.len());
    if r == 0 || t == 0 {
        return Err(Error::Empty("dtw_align needs two non-empty sequences"));
    }
    let mut acc = vec![f64::INFINITY; r * t];
    for i in 0..r {
        for j in 0..t {
            let d = euclidean(reference[i].as_ref(), target[j].as_ref());
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * t + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * t + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * t + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * t + j] = d + prev;
        }
    }
    let mut pairs = vec![(r - 1, t - 1)];
    let (mut i, mut j) = (r - 1, t - 1);
    while (i, j) != (0, 0) {
        let cand = [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ];
        let mut best: Option<(usize, usize)> = None;
        for (a, b) in cand.into_iter().flatten() {
            if best.is_none_or(|(x, y)| acc[a * t + b] < acc[x * t + y]) {
                best = Some((a, b));
            }
        }
        (i, j) = best.expect("some predecessor exists");
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(WarpPath {
        pairs,
        cost: acc[r * t - 1],
    })
}

/// 13-dim MFCC rows used for alignment.
pub fn mfcc_rows(features: &[FeatureVector]) -> Vec<[f64; NUM_MFCC]> {
    features.iter().map(|f| f.mfcc).collect()
}

/// Resamples the target onto the reference time axis: each reference frame gets
/// the average of the target frames the path maps to it, then deltas are
/// recomputed on the warped sequence.
pub fn warp_target_features(
    target: &[BaseFeatures],
    path: &WarpPath,
    ref_len: usize,
    mode: DeltaMode,
) -> Result<Vec<FeatureVector>> {
    if !path.is_valid(ref_len, target.len()) {
        return Err(Error::Config("warp path does not span the sequences".into()));
    }
    let mut sums = vec![([0.0; NUM_MFCC], 0.0, 0usize); ref_len];
    for &(r, j) in &path.pairs {
        let slot = &mut sums[r];
        for (a, b) in slot.0.iter_mut().zip(&target[j].mfcc) {
            *a += b;
        }
        slot.1 += target[j].log_energy;
        slot.2 += 1;
    }
    let base: Vec<BaseFeatures> = sums
        .into_iter()
        .enumerate()
        .map(|(r, (m, e, n))| {
            let n = n as f64;
            BaseFeatures {
                mfcc: m.map(|v| v / n),
                log_energy: e / n,
                center_time: crate::audio::AnalysisWindow::new(r).center_time(),
            }
        })
        .collect();
    Ok(recompute_deltas(&base, mode))
}

/// Accepts iff |target - ref| / ref <= threshold.
pub fn duration_gate(ref_duration_s: f64, target_duration_s: f64, threshold: f64) -> bool {
    assert!(ref_duration_s > 0.0 && target_duration_s > 0.0, "durations must be positive");
    (target_duration_s - ref_duration_s).abs() / ref_duration_s <= threshold + 1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub reference: String,
    pub accepted: Vec<String>,
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub pairs: Vec<TrainingPair>,
    pub references: Vec<ReferenceReport>,
}

impl AugmentOutcome {
    /// Training pairs per labeled reference.
    pub fn factor(&self) -> f64 {
        if self.references.is_empty() {
            0.0
        } else {
            self.pairs.len() as f64 / self.references.len() as f64
        }
    }
}

/// Builds training pairs from labeled references: the reference itself plus every
/// same-sentence, same-gender recording that passes the duration gate, warped
/// onto the reference and labeled with the reference's track.
///
/// `features` loads a recording's feature sequence.
pub fn augment_corpus<F>(
    manifest: &CorpusManifest,
    labeled: &[(String, VisemeTrack24)],
    threshold: f64,
    mut features: F,
) -> Result<AugmentOutcome>
where
    F: FnMut(&RecordingMeta) -> Result<Vec<FeatureVector>>,
{
    let mut cache: HashMap<String, Vec<FeatureVector>> = HashMap::new();
    let mut load = |rec: &RecordingMeta| -> Result<Vec<FeatureVector>> {
        if let Some(f) = cache.get(&rec.id()) {
            return Ok(f.clone());
        }
        let f = features(rec)?;
        if f.is_empty() {
            return Err(Error::Empty("recording shorter than one analysis window"));
        }
        cache.insert(rec.id(), f.clone());
        Ok(f)
    };

    let mut pairs = Vec::new();
    let mut reports = Vec::new();
    for (ref_id, track) in labeled {
        let reference = manifest
            .find(ref_id)
            .ok_or_else(|| Error::Corpus(format!("reference {ref_id} is not in the manifest")))?;
        let ref_feats = load(reference)?;
        let labels = upsample_24_to_100(track, ref_feats.len())?;
        pairs.push(TrainingPair::new(
            ref_id.clone(),
            reference.sentence_id.clone(),
            ref_feats.clone(),
            labels.clone(),
            Provenance::Original,
        )?);

        let ref_mfcc = mfcc_rows(&ref_feats);
        let mut report = ReferenceReport {
            reference: ref_id.clone(),
            accepted: Vec::new(),
            rejected: Vec::new(),
        };
        let mates = manifest.recordings.iter().filter(|r| {
            r.sentence_id == reference.sentence_id
                && r.gender == reference.gender
                && r.id() != reference.id()
        });
        for mate in mates {
            if !duration_gate(reference.duration_s, mate.duration_s, threshold) {
                report.rejected.push(mate.id());
                continue;
            }
            let target = load(mate)?;
            let path = dtw_align(&ref_mfcc, &mfcc_rows(&target))?;
            let base: Vec<BaseFeatures> = target.iter().map(FeatureVector::base).collect();
            let warped = warp_target_features(&base, &path, ref_feats.len(), DeltaMode::Centered)?;
            pairs.push(TrainingPair::new(
                format!("{}~{}", mate.id(), ref_id),
                reference.sentence_id.clone(),
                warped,
                labels.clone(),
                Provenance::WarpedFrom {
                    speaker: mate.speaker_id.clone(),
                },
            )?);
            report.accepted.push(mate.id());
        }
        if report.accepted.is_empty() {
            tracing::warn!(reference = %ref_id, "no sentence-mate passed the duration gate");
        }
        reports.push(report);
    }
    Ok(AugmentOutcome {
        pairs,
        references: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;
    use crate::viseme::VisemeId;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cheapest monotone path by exhaustive recursion over every step sequence.
    fn brute_force_cost(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let here = euclidean(&a[i], &b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(brute_force_cost(a, b, i + 1, j + 1));
        }
        if i + 1 < a.len() {
            best = best.min(brute_force_cost(a, b, i + 1, j));
        }
        if j + 1 < b.len() {
            best = best.min(brute_force_cost(a, b, i, j + 1));
        }
        here + best
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    fn path_cost(a: &[Vec<f64>], b: &[Vec<f64>], p: &WarpPath) -> f64 {
        p.pairs.iter().map(|&(i, j)| euclidean(&a[i], &b[j])).sum()
    }

    #[test]
    fn matches_exhaustive_search_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (r, t) = (rng.random_range(1..=7), rng.random_range(1..=7));
            let a = random_seq(&mut rng, r, 3);
            let b = random_seq(&mut rng, t, 3);
            let p = dtw_align(&a, &b).unwrap();
            assert!(p.is_valid(r, t));
            let oracle = brute_force_cost(&a, &b, 0, 0);
            assert!((p.cost - oracle).abs() < 1e-9);
            assert!((path_cost(&a, &b, &p) - p.cost).abs() < 1e-9);
        }
    }

    /// Grid shortest path by Dijkstra, an independent optimum for larger cases.
    fn dijkstra_cost(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let (r, t) = (a.len(), b.len());
        let mut dist = vec![f64::INFINITY; r * t];
        let mut heap = BinaryHeap::new();
        let key = |d: f64| Reverse((d * 1e12) as u128);
        dist[0] = euclidean(&a[0], &b[0]);
        heap.push((key(dist[0]), 0usize));
        while let Some((_, node)) = heap.pop() {
            let (i, j) = (node / t, node % t);
            for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < r && nj < t {
                    let nd = dist[node] + euclidean(&a[ni], &b[nj]);
                    if nd < dist[ni * t + nj] {
                        dist[ni * t + nj] = nd;
                        heap.push((key(nd), ni * t + nj));
                    }
                }
            }
        }
        dist[r * t - 1]
    }

    #[test]
    fn random_twenty_by_thirty_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let a = random_seq(&mut rng, 20, 13);
            let b = random_seq(&mut rng, 30, 13);
            let p = dtw_align(&a, &b).unwrap();
            assert!((p.cost - dijkstra_cost(&a, &b)).abs() < 1e-6);
        }
    }

    #[test]
    fn self_alignment_is_diagonal_with_zero_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_seq(&mut rng, 15, 13);
        let p = dtw_align(&a, &a).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs, (0..15).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn doubled_target_visits_each_reference_frame_twice() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_seq(&mut rng, 12, 13);
        let b: Vec<Vec<f64>> = a.iter().flat_map(|v| [v.clone(), v.clone()]).collect();
        let p = dtw_align(&a, &b).unwrap();
        assert_eq!(p.cost, 0.0);
        for r in 0..12 {
            assert_eq!(p.pairs.iter().filter(|(i, _)| *i == r).count(), 2);
        }
    }

    fn base_seq(rng: &mut ChaCha8Rng, n: usize) -> Vec<BaseFeatures> {
        (0..n)
            .map(|i| BaseFeatures {
                mfcc: std::array::from_fn(|_| rng.random_range(-5.0..5.0)),
                log_energy: rng.random_range(-10.0..0.0),
                center_time: crate::audio::AnalysisWindow::new(i).center_time(),
            })
            .collect()
    }

    #[test]
    fn identity_path_reproduces_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = base_seq(&mut rng, 30);
        let path = WarpPath {
            pairs: (0..30).map(|i| (i, i)).collect(),
            cost: 0.0,
        };
        let warped = warp_target_features(&base, &path, 30, DeltaMode::Centered).unwrap();
        assert_eq!(warped, recompute_deltas(&base, DeltaMode::Centered));
    }

    #[test]
    fn doubled_target_warps_back_to_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = base_seq(&mut rng, 25);
        let doubled: Vec<BaseFeatures> = base.iter().flat_map(|b| [*b, *b]).collect();
        let path = dtw_align(&mfcc_rows(&recompute_deltas(&base, DeltaMode::Centered)),
            &mfcc_rows(&recompute_deltas(&doubled, DeltaMode::Centered))).unwrap();
        let warped = warp_target_features(&doubled, &path, 25, DeltaMode::Centered).unwrap();
        let expected = recompute_deltas(&base, DeltaMode::Centered);
        for (w, e) in warped.iter().zip(&expected) {
            for (x, y) in w.to_array().iter().zip(e.to_array()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_path_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = base_seq(&mut rng, 5);
        let path = WarpPath {
            pairs: vec![(0, 0), (2, 1)],
            cost: 0.0,
        };
        assert!(warp_target_features(&base, &path, 3, DeltaMode::Centered).is_err());
        assert!(dtw_align::<Vec<f64>>(&[], &[vec![1.0]]).is_err());
    }

    #[test]
    fn duration_gate_examples() {
        assert!(duration_gate(3.0, 3.0, 0.30));
        assert!(!duration_gate(3.0, 4.2, 0.30));
        assert!(duration_gate(3.0, 3.9, 0.30));
        assert!(duration_gate(3.0, 2.1, 0.30));
        assert!(!duration_gate(3.0, 2.09, 0.30));
    }

    proptest! {
        #[test]
        fn warped_length_equals_reference(r in 1usize..20, t in 1usize..20, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = base_seq(&mut rng, r);
            let b = base_seq(&mut rng, t);
            let ra: Vec<Vec<f64>> = a.iter().map(|x| x.mfcc.to_vec()).collect();
            let rb: Vec<Vec<f64>> = b.iter().map(|x| x.mfcc.to_vec()).collect();
            let p = dtw_align(&ra, &rb).unwrap();
            prop_assert!(p.is_valid(r, t));
            prop_assert_eq!(warp_target_features(&b, &p, r, DeltaMode::Centered).unwrap().len(), r);
        }
    }

    fn toy_manifest(durations: &[(Gender, f64)]) -> CorpusManifest {
        let recs = durations
            .iter()
            .enumerate()
            .map(|(k, &(gender, d))| RecordingMeta {
                sentence_id: "SX1".into(),
                speaker_id: format!("S{k}"),
                gender,
                dialect: "DR1".into(),
                wav: "x.wav".into(),
                phn: "x.phn".into(),
                duration_s: d,
            })
            .collect();
        CorpusManifest::new("", recs)
    }

    fn toy_features(rec: &RecordingMeta) -> Result<Vec<FeatureVector>> {
        let n = (rec.duration_s * 100.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(rec.speaker_id.len() as u64);
        let base = base_seq(&mut rng, n);
        Ok(recompute_deltas(&base, DeltaMode::Centered))
    }

    #[test]
    fn seven_recordings_give_four_pairs() {
        use Gender::*;
        let m = toy_manifest(&[(M, 1.0), (M, 1.1), (M, 0.9), (M, 1.2), (F, 1.0), (F, 1.0), (F, 1.0)]);
        let track = VisemeTrack24::new(vec![VisemeId::Ah; 24]);
        let out = augment_corpus(&m, &[("S0/SX1".into(), track)], 0.3, toy_features).unwrap();
        assert_eq!(out.pairs.len(), 4);
        assert_eq!(out.factor(), 4.0);
        assert_eq!(out.pairs[0].provenance, Provenance::Original);
        for p in &out.pairs {
            assert_eq!(p.len(), 100);
            assert_eq!(p.labels.len(), 100);
        }
        assert_eq!(out.references[0].accepted, vec!["S1/SX1", "S2/SX1", "S3/SX1"]);
    }

    #[test]
    fn all_rejected_leaves_reference_only() {
        use Gender::*;
        let m = toy_manifest(&[(F, 1.0), (F, 2.0), (F, 0.5), (M, 1.0)]);
        let track = VisemeTrack24::new(vec![VisemeId::M; 24]);
        let out = augment_corpus(&m, &[("S0/SX1".into(), track)], 0.3, toy_features).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.references[0].rejected.len(), 2);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let m = toy_manifest(&[(Gender::M, 1.0)]);
        let track = VisemeTrack24::new(vec![VisemeId::M; 24]);
        assert!(augment_corpus(&m, &[("nobody/SX1".into(), track)], 0.3, toy_features).is_err());
    }
}
