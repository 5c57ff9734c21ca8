//! Training loop, evaluation, gradient checking and the credibility study.

pub mod gradcheck;
pub mod metrics;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::checkpoint::Checkpoint;
use crate::data::{build_batches, plan_augmentation, AugmentationPlan, AugmentationSummary, Dataset};
use crate::error::{MiclError, Result};
use crate::fusion::predict_label;
use crate::model::{Inference, MiclModel, ModelConfig, PreparedSample};
use crate::objective::{total_loss, LossBreakdown};
use crate::params::{Adam, ParamStore};

pub use gradcheck::{grad_check, GradCheckReport, GroupError};
pub use metrics::{ClassScores, Confusion, Metrics};
pub use report::{credibility_report, CredibilityReport, GroupCredibility, SampleDiagnostic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub lambda: f64,
    pub seed: u64,
    pub text_augmentation: bool,
    pub image_augmentation: bool,
}

impl Default for TrainConfig {
    /// Desk-scale settings.
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 16,
            epochs: 30,
            learning_rate: 2e-3,
            tau: 0.07,
            lambda: 1.0,
            seed: 7,
            text_augmentation: true,
            image_augmentation: true,
        }
    }
}

impl TrainConfig {
    /// Backbone-width model (d = 768) at learning rate 1e-5.
    pub fn full_width() -> Self {
        Self {
            model: ModelConfig {
                dim: 768,
                ..ModelConfig::default()
            },
            learning_rate: 1e-5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(MiclError::Config(format!("tau {} must be positive", self.tau)));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(MiclError::Config(format!("lambda {} must be non-negative", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(MiclError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(MiclError::Config(format!(
                "batch size {} must be at least 2",
                self.batch_size
            )));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(MiclError::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn augmentation_plan(&self) -> AugmentationPlan {
        AugmentationPlan {
            text: self.text_augmentation,
            image: self.image_augmentation,
            ..AugmentationPlan::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the selected epoch.
    pub checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
    pub augmentation: Option<AugmentationSummary>,
    pub train_size: usize,
}

fn batch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(epoch as u64 + 1)
}

/// Trains on `train` (augmenting originals first when enabled and not
/// already augmented) and keeps the epoch with the best `val` accuracy;
/// ties go to the earlier epoch. Without validation data the last epoch is
/// kept.
pub fn train(config: &TrainConfig, train: &Dataset, val: Option<&Dataset>) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(MiclError::Config("training set is empty".into()));
    }
    let counts = train.label_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(MiclError::Config(format!(
            "training set needs both labels, found {} non-sarcastic and {} sarcastic",
            counts[0], counts[1]
        )));
    }

    let already_augmented = train.samples.iter().any(|s| s.origin.is_augmented());
    let plan = config.augmentation_plan();
    let (data, augmentation) = if (plan.text || plan.image) && !already_augmented {
        let (d, s) = plan_augmentation(train, &plan, config.seed)?;
        (d, Some(s))
    } else {
        (train.clone(), None)
    };

    let (model, mut store) = MiclModel::new(config.model.clone(), config.seed)?;
    let prepared = prepare_all(&model, &data)?;
    let val_prepared = match val {
        Some(v) if !v.is_empty() => Some(prepare_all(&model, v)?),
        _ => None,
    };

    let schedule = (0..config.epochs)
        .map(|e| build_batches(&data, config.batch_size, batch_seed(config.seed, e)))
        .collect::<Result<Vec<_>>>()?;
    let total_steps = schedule.iter().map(Vec::len).sum();
    let mut adam = Adam::new(&store, config.learning_rate, total_steps);

    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for (epoch, batches) in schedule.iter().enumerate() {
        let (mut ce_sum, mut cl_sum, mut n_ce, mut n_cl) = (0.0, 0.0, 0usize, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let samples: Vec<&PreparedSample> = batch.indices.iter().map(|&i| &prepared[i]).collect();
            let mut tape = Tape::new();
            let p = store.bind(&mut tape);
            let (loss, _) = model.batch_loss(&mut tape, &p, &samples, config.tau, config.lambda)?;
            let total = tape.scalar_value(loss.total);
            if !total.is_finite() {
                let ids: Vec<&str> = batch.indices.iter().map(|&i| data.samples[i].id.as_str()).collect();
                return Err(MiclError::Numerical(format!(
                    "non-finite loss at epoch {}, batch {b} (samples {})",
                    epoch + 1,
                    ids.join(", ")
                )));
            }
            let grads = tape.backward(loss.total);
            let grads = p.gradients(&store, &grads);
            adam.step(&mut store, &grads);

            ce_sum += tape.scalar_value(loss.ce) * batch.len() as f64;
            n_ce += batch.len();
            if let Some(cl) = loss.cl {
                cl_sum += tape.scalar_value(cl) * batch.len() as f64;
                n_cl += batch.len();
            }
        }
        let l_cl = if n_cl == 0 { 0.0 } else { cl_sum / n_cl as f64 };
        let loss = total_loss(ce_sum / n_ce as f64, l_cl, config.lambda)?;
        let val_metrics = match &val_prepared {
            Some(v) => Some(evaluate_prepared(&model, &store, v)?),
            None => None,
        };
        let log = EpochLog {
            epoch: epoch + 1,
            loss,
            val_accuracy: val_metrics.as_ref().map(|m| m.accuracy),
            val_macro_f1: val_metrics.as_ref().map(|m| m.macro_avg.f1),
        };
        log::info!(
            "epoch {:>3}  l_ce {:.5}  l_cl {:.5}  l_total {:.5}  val_acc {}",
            log.epoch,
            loss.l_ce,
            loss.l_cl,
            loss.l_total,
            log.val_accuracy.map_or("-".into(), |a| format!("{a:.4}"))
        );
        let score = log.val_accuracy.unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((s, _, _)) => score > *s || val_prepared.is_none(),
        };
        if better {
            best = Some((score, epoch + 1, store.clone()));
        }
        logs.push(log);
    }

    let (_, best_epoch, best_store) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        checkpoint: Checkpoint::capture(&config.model, &best_store)?,
        best_epoch,
        logs,
        augmentation,
        train_size: data.len(),
    })
}

pub fn prepare_all(model: &MiclModel, dataset: &Dataset) -> Result<Vec<PreparedSample>> {
    dataset.samples.iter().map(|s| model.prepare(s)).collect()
}

pub fn infer_all(model: &MiclModel, store: &ParamStore, prepared: &[PreparedSample]) -> Result<Vec<Inference>> {
    prepared.iter().map(|s| model.infer(store, s)).collect()
}

fn evaluate_prepared(model: &MiclModel, store: &ParamStore, prepared: &[PreparedSample]) -> Result<Metrics> {
    if prepared.is_empty() {
        return Err(MiclError::Config("cannot evaluate an empty dataset".into()));
    }
    let inferred = infer_all(model, store, prepared)?;
    let labels: Vec<u8> = prepared.iter().map(|s| s.label).collect();
    let predicted: Vec<u8> = inferred.iter().map(|i| predict_label(i.probability)).collect();
    Ok(Metrics::from_predictions(&labels, &predicted))
}

/// Metrics of `checkpoint` on `dataset` with hard labels at `ŷ ≥ 0.5`.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<Metrics> {
    let (model, store) = checkpoint.restore()?;
    evaluate_model(&model, &store, dataset)
}

pub fn evaluate_model(model: &MiclModel, store: &ParamStore, dataset: &Dataset) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(MiclError::Config("cannot evaluate an empty dataset".into()));
    }
    evaluate_prepared(model, store, &prepare_all(model, dataset)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Split, SynthConfig};

    fn small_config() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                dim: 8,
                ..ModelConfig::default()
            },
            epochs: 2,
            batch_size: 6,
            ..TrainConfig::default()
        }
    }

    fn corpus(n: usize) -> Dataset {
        generate_synthetic(&SynthConfig { size: n, ..SynthConfig::default() }, 3).unwrap()
    }

    #[test]
    fn rejects_invalid_configs() {
        let ds = corpus(10);
        for bad in [
            TrainConfig { epochs: 0, ..small_config() },
            TrainConfig { tau: 0.0, ..small_config() },
            TrainConfig { lambda: -1.0, ..small_config() },
            TrainConfig { batch_size: 1, ..small_config() },
        ] {
            assert!(matches!(train(&bad, &ds, None), Err(MiclError::Config(_))));
        }
    }

    #[test]
    fn rejects_single_label_training_set() {
        let mut ds = corpus(10);
        ds.samples.retain(|s| s.label == 1);
        assert!(matches!(train(&small_config(), &ds, None), Err(MiclError::Config(_))));
    }

    #[test]
    fn lambda_zero_without_augmentation_logs_zero_contrastive_weight() {
        let config = TrainConfig {
            lambda: 0.0,
            text_augmentation: false,
            image_augmentation: false,
            ..small_config()
        };
        let out = train(&config, &corpus(12), None).unwrap();
        assert!(out.augmentation.is_none());
        assert_eq!(out.train_size, 12);
        for log in &out.logs {
            assert_eq!(log.loss.l_total, log.loss.l_ce);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let ds = corpus(12);
        let mut val = corpus(6);
        val.split = Split::Val;
        let a = train(&small_config(), &ds, Some(&val)).unwrap();
        let b = train(&small_config(), &ds, Some(&val)).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.train_size, 36);
    }

    #[test]
    fn evaluate_rejects_empty_dataset() {
        let out = train(&small_config(), &corpus(8), None).unwrap();
        let mut empty = corpus(2);
        empty.samples.clear();
        assert!(evaluate(&out.checkpoint, &empty).is_err());
    }
}
