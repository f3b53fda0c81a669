use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::network::{cross_entropy_loss, forward, loss_and_gradients};
use super::optim::{adamw_step, AdamState, PlateauScheduler, TrainConfig};
use super::params::{ClassifierConfig, ModelParams};
use crate::dataset::{make_batches, FeatureStore, Label, UtteranceRecord};
use crate::error::{Error, Result};
use crate::eval::{accuracy_f1, aggregate_subjects, SegmentPrediction, SequenceAttention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training mini-batch loss (dropout active).
    pub train_loss: f64,
    /// Loss and accuracy over the training split in evaluation mode, after the epoch.
    pub train_eval_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best_params: ModelParams,
    pub best_epoch: usize,
    /// Evaluation-mode training loss before the first update.
    pub initial_train_loss: f64,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Segment-level prediction with the attention it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: Label,
    pub pd_prob: f64,
    pub attention: SequenceAttention,
}

impl Prediction {
    pub fn segment(&self) -> SegmentPrediction {
        SegmentPrediction {
            speaker_id: self.speaker_id.clone(),
            pd_prob: self.pd_prob,
            true_label: self.label,
        }
    }
}

/// Evaluation-mode predictions for `records`, in input order.
pub fn predict(
    records: &[&UtteranceRecord],
    store: &FeatureStore,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(batch_size.max(1)) {
        // One batch per chunk; seed 0 with batch == chunk size keeps order
        // irrelevant because results are matched back by utterance id.
        let batch = &make_batches(chunk, store, chunk.len(), 0)?[0];
        let fw = forward(batch, params, cfg, false, 0)?;
        let mut by_id: Vec<Prediction> = (0..batch.size())
            .map(|i| Prediction {
                utterance_id: batch.utterance_ids[i].clone(),
                speaker_id: batch.speaker_ids[i].clone(),
                label: Label::from_class(batch.labels[i]),
                pd_prob: fw.probs[i][Label::PD.class()],
                attention: SequenceAttention {
                    utterance_id: batch.utterance_ids[i].clone(),
                    labels: batch.unit_labels[i].clone(),
                    weights: fw.attention[i]
                        .iter()
                        .map(|w| w[..batch.lengths[i]].to_vec())
                        .collect(),
                },
            })
            .collect();
        for r in chunk {
            let pos = by_id
                .iter()
                .position(|p| p.utterance_id == r.utterance_id)
                .expect("every record is batched");
            out.push(by_id.swap_remove(pos));
        }
    }
    Ok(out)
}

struct SplitEval {
    loss: f64,
    accuracy: f64,
    subject_f1: f64,
    subject_accuracy: f64,
}

fn evaluate(
    records: &[&UtteranceRecord],
    store: &FeatureStore,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    batch_size: usize,
) -> Result<SplitEval> {
    let preds = predict(records, store, params, cfg, batch_size)?;
    let probs: Vec<Vec<f64>> = preds.iter().map(|p| vec![1.0 - p.pd_prob, p.pd_prob]).collect();
    let labels: Vec<usize> = preds.iter().map(|p| p.label.class()).collect();
    let loss = cross_entropy_loss(&probs, &labels)?;
    let correct = preds
        .iter()
        .filter(|p| (p.pd_prob >= 0.5) == (p.label == Label::PD))
        .count();
    let segments: Vec<SegmentPrediction> = preds.iter().map(Prediction::segment).collect();
    let (subject_accuracy, subject_f1) = accuracy_f1(&aggregate_subjects(&segments)?)?;
    Ok(SplitEval {
        loss,
        accuracy: correct as f64 / preds.len() as f64,
        subject_f1,
        subject_accuracy,
    })
}

/// Seed used to shuffle the training split at `epoch`.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Trains from a seeded initialisation.
///
/// Validation loss drives the plateau schedule; validation F1 (subject level)
/// selects the checkpoint and stops training after `early_stop_patience`
/// epochs without improvement.
pub fn fit(
    train: &[&UtteranceRecord],
    val: &[&UtteranceRecord],
    store: &FeatureStore,
    cfg: &ClassifierConfig,
    tc: &TrainConfig,
    seed: u64,
) -> Result<FitOutcome> {
    fit_from(ModelParams::init(cfg, seed), train, val, store, cfg, tc, seed)
}

pub fn fit_from(
    init: ModelParams,
    train: &[&UtteranceRecord],
    val: &[&UtteranceRecord],
    store: &FeatureStore,
    cfg: &ClassifierConfig,
    tc: &TrainConfig,
    seed: u64,
) -> Result<FitOutcome> {
    cfg.validate()?;
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Precondition("training and validation splits must be non-empty".into()));
    }
    let mut params = init;
    let mut state = AdamState::new(cfg);
    let mut sched = PlateauScheduler::new(tc.lr, tc.plateau_factor, tc.plateau_patience);
    let initial_train_loss = evaluate(train, store, &params, cfg, tc.batch_size)?.loss;
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut history = Vec::new();
    let mut stop = StopReason::Completed;

    for epoch in 1..=tc.max_epochs {
        let lr = sched.lr;
        let batches = make_batches(train, store, tc.batch_size, epoch_seed(seed, epoch))?;
        let mut loss_sum = 0.0;
        let mut diverged = false;
        for (b, batch) in batches.iter().enumerate() {
            let dropout = (cfg.dropout > 0.0).then(|| epoch_seed(seed ^ 0xD809, epoch * 100_003 + b));
            let (loss, grads) = match loss_and_gradients(batch, &params, cfg, dropout) {
                Ok(r) => r,
                Err(Error::Numeric { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || adamw_step(&mut params, &grads, &mut state, lr, tc).is_err() {
                diverged = true;
                break;
            }
            loss_sum += loss;
        }
        if diverged || !params.all_finite() {
            warn!("epoch {epoch}: training diverged, keeping the best checkpoint so far");
            stop = StopReason::Diverged;
            break;
        }
        let tr = evaluate(train, store, &params, cfg, tc.batch_size)?;
        let va = evaluate(val, store, &params, cfg, tc.batch_size)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches.len() as f64,
            train_eval_loss: tr.loss,
            train_accuracy: tr.accuracy,
            val_loss: va.loss,
            val_f1: va.subject_f1,
            val_accuracy: va.subject_accuracy,
        };
        info!(
            "epoch {epoch}: lr {lr:.2e} train loss {:.4} acc {:.3} | val loss {:.4} f1 {:.3}",
            record.train_loss, record.train_accuracy, record.val_loss, record.val_f1
        );
        history.push(record);
        sched.observe(va.loss);

        let improved = best.as_ref().is_none_or(|(f1, _, _)| va.subject_f1 > *f1);
        if improved {
            best = Some((va.subject_f1, epoch, params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= tc.early_stop_patience {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(FitOutcome {
        best_params,
        best_epoch,
        initial_train_loss,
        history,
        stop,
    })
}
