use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::bptt::{batch_loss, loss_and_gradients, Dropout, SequenceRef, Workspace};
use super::eval::evaluate_frame_accuracy;
use super::{FeatureNorm, LstmParams, Model, DEFAULT_HIDDEN, DEFAULT_SHIFT};
use crate::audio::{DeltaMode, FEATURE_DIM};
use crate::dataset::TrainingPair;
use crate::error::{Error, Result};
use crate::viseme::NUM_VISEMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    pub shift: usize,
    pub delta_mode: DeltaMode,
    /// Stop once validation frame accuracy (percent) reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 20,
            epochs: 200,
            dropout: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            hidden_dim: DEFAULT_HIDDEN,
            shift: DEFAULT_SHIFT,
            delta_mode: DeltaMode::Centered,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_frame_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy (the last epoch
    /// when there is no validation set).
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    /// Training-set loss of the initial parameters.
    pub initial_loss: f64,
}

pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,train_loss,val_loss,val_frame_acc\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for m in metrics {
        out.push_str(&format!(
            "{},{:.6},{},{}\n",
            m.epoch,
            m.train_loss,
            opt(m.val_loss),
            opt(m.val_frame_acc)
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Normalised f32 inputs and class indices for one sequence.
struct Prepared {
    inputs: Vec<f32>,
    labels: Vec<u8>,
}

fn prepare(pairs: &[TrainingPair], norm: &FeatureNorm) -> Vec<Prepared> {
    pairs
        .iter()
        .map(|p| Prepared {
            inputs: norm.apply_all(&p.features),
            labels: p.labels.steps.iter().map(|v| v.code()).collect(),
        })
        .collect()
}

fn refs<'a>(data: &'a [Prepared], order: &[usize]) -> Vec<SequenceRef<'a, f32>> {
    order
        .iter()
        .map(|&i| SequenceRef {
            inputs: &data[i].inputs,
            labels: &data[i].labels,
        })
        .collect()
}

/// Step-weighted mean loss over `data` in batches, without dropout.
fn dataset_loss(
    p: &LstmParams<f32>,
    data: &[Prepared],
    batch_size: usize,
    ws: &mut Workspace<f32>,
) -> f64 {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    let mut steps = 0usize;
    for chunk in order.chunks(batch_size) {
        let batch = refs(data, chunk);
        let n: usize = batch.iter().map(|s| s.len()).sum();
        total += batch_loss(p, &batch, ws) * n as f64;
        steps += n;
    }
    total / steps.max(1) as f64
}

/// Mini-batch BPTT with Adam.
///
/// Each epoch shuffles the training pairs with the seeded generator, pads each
/// batch to its longest sequence and masks the padding out of the loss. Deltas
/// are recomputed for `cfg.delta_mode`, and features are standardised with
/// statistics of the training set, which are stored in the returned model.
pub fn train(
    train_pairs: &[TrainingPair],
    val_pairs: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let train_pairs: Vec<TrainingPair> = train_pairs
        .iter()
        .map(|p| p.with_delta_mode(cfg.delta_mode))
        .collect();
    let val_pairs: Vec<TrainingPair> = val_pairs
        .iter()
        .map(|p| p.with_delta_mode(cfg.delta_mode))
        .collect();
    let norm = FeatureNorm::fit(train_pairs.iter().map(|p| p.features.as_slice()))?;
    let train_data = prepare(&train_pairs, &norm);
    let val_data = prepare(&val_pairs, &norm);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = LstmParams::<f32>::init(FEATURE_DIM, cfg.hidden_dim, NUM_VISEMES, cfg.shift, cfg.seed);
    let mut grads = params.zeros_like();
    let mut adam = Adam::new(&params, cfg.adam());
    let mut ws = Workspace::new();

    let initial_loss = dataset_loss(&params, &train_data, cfg.batch_size, &mut ws);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, LstmParams<f32>)> = None;
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = refs(&train_data, chunk);
            let n: usize = batch.iter().map(|s| s.len()).sum();
            let dropout = Some(Dropout {
                rate: cfg.dropout,
                rng: &mut rng,
            });
            let loss = loss_and_gradients(&params, &batch, dropout, &mut grads, &mut ws);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss is {loss} at epoch {epoch}, batch starting with pair {}",
                    train_pairs[chunk[0]].id
                )));
            }
            adam.step(&mut params, &grads);
            total += loss * n as f64;
            steps += n;
        }
        let train_loss = total / steps as f64;

        let (val_loss, val_acc) = if val_data.is_empty() {
            (None, None)
        } else {
            let loss = dataset_loss(&params, &val_data, cfg.batch_size, &mut ws);
            let model = Model::new(params.clone(), norm.clone(), cfg.delta_mode)?;
            let acc = evaluate_frame_accuracy(&model, &val_pairs)?.accuracy_pct;
            (Some(loss), Some(acc))
        };
        tracing::info!(
            epoch,
            train_loss,
            val_loss = val_loss.unwrap_or(f64::NAN),
            val_frame_acc = val_acc.unwrap_or(f64::NAN),
            "epoch done"
        );
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_frame_acc: val_acc,
        });

        let score = val_acc.unwrap_or(f64::NEG_INFINITY);
        if val_acc.is_none() || best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
        }
        if let (Some(target), Some(acc)) = (cfg.target_accuracy, val_acc) {
            if acc >= target {
                break;
            }
        }
    }

    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome {
        model: Model::new(best_params, norm, cfg.delta_mode)?,
        metrics,
        best_epoch,
        initial_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{FeatureVector, FEATURE_DIM};
    use crate::dataset::Provenance;
    use crate::viseme::{VisemeId, VisemeTrack100};
    use rand::RngExt;

    /// Sequences whose label is a noisy function of the current feature values.
    fn toy_pairs(n: usize, len: usize, seed: u64) -> Vec<TrainingPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut feats = Vec::new();
                let mut labels = Vec::new();
                let mut class = 0u8;
                for t in 0..len {
                    if t % 12 == 0 {
                        class = rng.random_range(0..4);
                    }
                    let mut a = [0.0; FEATURE_DIM];
                    for (k, v) in a.iter_mut().enumerate().take(13) {
                        *v = if k == class as usize * 3 { 4.0 } else { 0.0 } + rng.random_range(-0.3..0.3);
                    }
                    feats.push(FeatureVector::from_array(&a, t as f64 * 0.01));
                    labels.push(VisemeId::from_code(class * 2).unwrap());
                }
                TrainingPair::new(
                    format!("p{i}"),
                    format!("s{i}"),
                    feats,
                    VisemeTrack100::new(labels),
                    Provenance::Original,
                )
                .unwrap()
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden_dim: 16,
            shift: 2,
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.01,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn first_epoch_beats_uniform_loss_and_is_deterministic() {
        let data = toy_pairs(12, 60, 1);
        let val = toy_pairs(3, 60, 2);
        let a = train(&data, &val, &small_cfg()).unwrap();
        assert!(a.metrics[0].train_loss < 12f64.ln());
        let b = train(&data, &val, &small_cfg()).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert_eq!(a.metrics, b.metrics);
        let c = train(&data, &val, &TrainConfig { seed: 6, ..small_cfg() }).unwrap();
        assert_ne!(a.model.to_bytes(), c.model.to_bytes());
    }

    #[test]
    fn best_epoch_is_the_best_validation_accuracy() {
        let data = toy_pairs(12, 60, 1);
        let val = toy_pairs(3, 60, 2);
        let out = train(&data, &val, &TrainConfig { epochs: 6, ..small_cfg() }).unwrap();
        let best = out
            .metrics
            .iter()
            .map(|m| m.val_frame_acc.unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.metrics[out.best_epoch - 1].val_frame_acc, Some(best));
        let acc = evaluate_frame_accuracy(&out.model, &val).unwrap().accuracy_pct;
        assert!((acc - best).abs() < 1e-9);
    }

    #[test]
    fn early_stop_on_target() {
        let data = toy_pairs(12, 60, 1);
        let out = train(
            &data,
            &toy_pairs(2, 60, 3),
            &TrainConfig {
                epochs: 50,
                target_accuracy: Some(0.0),
                ..small_cfg()
            },
        )
        .unwrap();
        assert_eq!(out.metrics.len(), 1);
    }

    #[test]
    fn diverging_run_aborts() {
        let mut data = toy_pairs(4, 30, 1);
        data[0].features[3].mfcc[0] = f64::NAN;
        // NaN propagates into the normalisation statistics and the loss
        let err = train(&data, &[], &small_cfg()).unwrap_err();
        assert!(matches!(err, Error::Diverged(_) | Error::ModelFile(_)), "{err}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let data = toy_pairs(2, 20, 1);
        for cfg in [
            TrainConfig { dropout: 1.0, ..small_cfg() },
            TrainConfig { batch_size: 0, ..small_cfg() },
            TrainConfig { learning_rate: 0.0, ..small_cfg() },
        ] {
            assert!(matches!(train(&data, &[], &cfg), Err(Error::Config(_))));
        }
        assert!(train(&[], &[], &small_cfg()).is_err());
    }

    #[test]
    fn metrics_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(
            &path,
            &[EpochMetrics {
                epoch: 1,
                train_loss: 2.0,
                val_loss: None,
                val_frame_acc: Some(50.0),
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss,val_frame_acc\n1,2.000000,,50.000000\n");
    }
}
