//! Training, evaluation, leave-one-participant-out folds and fine-tuning.
//!
//! Randomness comes from one seed split into independent ChaCha8 streams so
//! that changing one factor leaves the others untouched.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::{ModelConfig, TrainConfig};
use super::loss::{focal_loss_grad, softmax};
use super::metrics::EvalReport;
use super::network::{backward, forward, DropoutMasks};
use super::optim::{adam_step, cosine_lr, AdamState};
use super::params::ModelParams;
use crate::dataset::{augment_gaussian, crop_at, crop_jitter, patchify, CropMode, EchoWindow, NormStats};
use crate::error::{Error, Result};
use crate::sim::{Category, GestureLabel};

pub const STREAM_SHUFFLE: u64 = 0;
pub const STREAM_DROPOUT: u64 = 1;
pub const STREAM_AUGMENT: u64 = 2;
pub const STREAM_INIT: u64 = 3;

const EVAL_BATCH: usize = 64;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One training-log line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean focal loss over the epoch's samples.
    pub train_loss: f64,
    /// Macro F1 of the predictions made during the epoch's steps.
    pub train_macro_f1: f64,
}

pub const LOG_HEADER: &str = "epoch,lr,train_loss,train_macro_f1";

pub fn log_csv(records: &[EpochRecord]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.train_macro_f1));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Model input for a batch of windows: normalize, crop, patchify. Training
/// mode augments the raw window first and draws the crop start.
pub fn batch_input(
    cfg: &ModelConfig,
    windows: &[&EchoWindow],
    norm: &NormStats,
    train: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((windows.len() * cfg.n_patches, cfg.patch_dim));
    let mut train = train;
    for (i, w) in windows.iter().enumerate() {
        let cropped = match train.as_mut() {
            Some((sigma, rng)) => {
                let augmented = augment_gaussian(w, *sigma, &mut **rng)?;
                crop_jitter(&norm.apply(&augmented)?, CropMode::Train, &mut **rng)
            }
            None => crop_at(&norm.apply(w)?, 0),
        };
        let patches = patchify(&cropped)?;
        let flat = patches.as_flat();
        if flat.len() != cfg.n_patches * cfg.patch_dim {
            return Err(Error::Shape {
                expected: format!("{} x {} patches", cfg.n_patches, cfg.patch_dim),
                actual: format!("{} values", flat.len()),
            });
        }
        x.as_slice_mut().unwrap()[i * flat.len()..(i + 1) * flat.len()].copy_from_slice(flat);
    }
    Ok(x)
}

/// Focal loss, logits and exact gradients for one batch under fixed masks.
pub fn param_gradients(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &Array2<f64>,
    targets: &[usize],
    masks: &DropoutMasks,
    gamma: f64,
) -> Result<(f64, Array2<f64>, ModelParams)> {
    let fwd = forward(cfg, params, x, masks)?;
    let (loss, dlogits) = focal_loss_grad(&fwd.logits, targets, gamma)?;
    if !loss.is_finite() {
        return Err(Error::NumericFailure {
            location: "focal loss".into(),
        });
    }
    let grads = backward(cfg, params, x, &fwd, &dlogits)?;
    if let Err(name) = grads.all_finite() {
        return Err(Error::NumericFailure {
            location: format!("gradient of {name}"),
        });
    }
    Ok((loss, fwd.logits, grads))
}

fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn class_names(labels: &[GestureLabel]) -> Vec<String> {
    labels.iter().map(|l| l.name.clone()).collect()
}

/// Mini-batch Adam over `windows` starting from `params`.
fn fit(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    params: &mut ModelParams,
    norm: &NormStats,
    windows: &[EchoWindow],
    targets: &[usize],
    names: Vec<String>,
) -> Result<Vec<EpochRecord>> {
    let seed = train_cfg.seed;
    let mut shuffle_rng = stream_rng(seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream_rng(seed, STREAM_DROPOUT);
    let mut augment_rng = stream_rng(seed, STREAM_AUGMENT);
    let mut state = AdamState::new(params);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let lr = cosine_lr(epoch, train_cfg)?;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut truth = Vec::with_capacity(order.len());
        let mut predicted = Vec::with_capacity(order.len());
        for chunk in order.chunks(train_cfg.batch) {
            let batch: Vec<&EchoWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let t: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let x = batch_input(
                model_cfg,
                &batch,
                norm,
                Some((train_cfg.augment_sigma, &mut augment_rng)),
            )?;
            let masks = DropoutMasks::sample(model_cfg, batch.len(), &mut dropout_rng);
            let (loss, logits, grads) = param_gradients(model_cfg, params, &x, &t, &masks, train_cfg.focal_gamma)?;
            adam_step(params, &grads, &mut state, lr, train_cfg)?;
            loss_sum += loss * batch.len() as f64;
            for (row, &ti) in logits.rows().into_iter().zip(&t) {
                predicted.push(argmax(row.iter().copied()));
                truth.push(ti);
            }
        }
        let report = EvalReport::from_predictions(names.clone(), &truth, &predicted)?;
        log.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / windows.len() as f64,
            train_macro_f1: report.macro_f1,
        });
    }
    if let Err(name) = params.all_finite() {
        return Err(Error::NumericFailure {
            location: format!("parameter {name}"),
        });
    }
    Ok(log)
}

fn participants_of(windows: &[EchoWindow]) -> BTreeSet<u32> {
    windows.iter().map(|w| w.provenance.participant_id).collect()
}

fn targets_for(windows: &[EchoWindow], labels: &[GestureLabel]) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|w| {
            labels.iter().position(|l| *l == w.label).ok_or_else(|| {
                Error::UnknownLabel(format!("{} (id {}) is not among the model's classes", w.label.name, w.label.id))
            })
        })
        .collect()
}

/// Train a fresh model. Class `i` is `labels[i]`; `model_cfg.n_classes` must
/// equal `labels.len()`. Normalization statistics are fitted on `windows`.
pub fn train_model(
    windows: &[EchoWindow],
    labels: &[GestureLabel],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if labels.len() != model_cfg.n_classes {
        return Err(Error::precondition(format!(
            "{} labels for a {}-class model",
            labels.len(),
            model_cfg.n_classes
        )));
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].iter().any(|o| o.id == l.id || o.name == l.name) {
            return Err(Error::precondition(format!("duplicate class label {}", l.name)));
        }
    }
    let targets = targets_for(windows, labels)?;
    let norm = NormStats::fit(windows)?;
    let mut params = ModelParams::init(model_cfg, &mut stream_rng(train_cfg.seed, STREAM_INIT))?;
    let log = fit(model_cfg, train_cfg, &mut params, &norm, windows, &targets, class_names(labels))?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model_cfg: model_cfg.clone(),
            train_cfg: train_cfg.clone(),
            params,
            norm,
            participants: participants_of(windows).into_iter().collect(),
            labels: labels.to_vec(),
        },
        log,
    })
}

/// Class probabilities for each window, in order.
pub fn predict(checkpoint: &Checkpoint, windows: &[EchoWindow]) -> Result<Vec<Vec<f64>>> {
    let cfg = &checkpoint.model_cfg;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_BATCH) {
        let batch: Vec<&EchoWindow> = chunk.iter().collect();
        let x = batch_input(cfg, &batch, &checkpoint.norm, None)?;
        let fwd = forward(cfg, &checkpoint.params, &x, &DropoutMasks::none())?;
        for row in fwd.logits.rows() {
            out.push(softmax(row.as_slice().unwrap()));
        }
    }
    Ok(out)
}

/// Probability vector for one window: normalize, crop at 0, patchify, forward.
pub fn classify(window: &EchoWindow, checkpoint: &Checkpoint) -> Result<Vec<f64>> {
    Ok(predict(checkpoint, std::slice::from_ref(window))?.remove(0))
}

pub fn evaluate(checkpoint: &Checkpoint, windows: &[EchoWindow]) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let truth = targets_for(windows, &checkpoint.labels)?;
    let predicted: Vec<usize> = predict(checkpoint, windows)?
        .into_iter()
        .map(argmax)
        .collect();
    EvalReport::from_predictions(class_names(&checkpoint.labels), &truth, &predicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LopoMode {
    /// One model over all classes.
    Joint,
    /// Separate models for gestures, activities and head motions; null-class
    /// windows are left out.
    PerCategory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub participant: u32,
    pub category: Option<Category>,
    pub train_participants: Vec<u32>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LopoReport {
    pub folds: Vec<FoldReport>,
}

impl LopoReport {
    /// Mean macro F1 over the folds of one category (`None` for joint folds).
    pub fn mean_for(&self, category: Option<Category>) -> Option<f64> {
        let v: Vec<f64> = self
            .folds
            .iter()
            .filter(|f| f.category == category)
            .map(|f| f.report.macro_f1)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean macro F1 over all folds.
    pub fn mean_macro_f1(&self) -> f64 {
        self.folds.iter().map(|f| f.report.macro_f1).sum::<f64>() / self.folds.len() as f64
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("participant\tcategory\tmacro_f1\taccuracy\n");
        for f in &self.folds {
            let cat = f.category.map_or("all", |c| c.as_str());
            out.push_str(&format!(
                "{}\t{cat}\t{:.6}\t{:.6}\n",
                f.participant, f.report.macro_f1, f.report.accuracy
            ));
        }
        out.push_str(&format!("mean\t-\t{:.6}\t-\n", self.mean_macro_f1()));
        out
    }
}

/// Leave-one-participant-out evaluation; `on_fold` sees each fold as it
/// finishes.
pub fn lopo_evaluate(
    windows: &[EchoWindow],
    labels: &[GestureLabel],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mode: LopoMode,
    mut on_fold: impl FnMut(&FoldReport),
) -> Result<LopoReport> {
    let participants = participants_of(windows);
    if participants.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-participant-out needs at least 2 participants, found {}",
            participants.len()
        )));
    }
    let groups: Vec<(Option<Category>, Vec<GestureLabel>)> = match mode {
        LopoMode::Joint => vec![(None, labels.to_vec())],
        LopoMode::PerCategory => [Category::Gesture, Category::Activity, Category::HeadMotion]
            .into_iter()
            .map(|c| (Some(c), labels.iter().filter(|l| l.category == c).cloned().collect::<Vec<_>>()))
            .filter(|(_, ls)| !ls.is_empty())
            .collect(),
    };
    let mut folds = Vec::new();
    for &p in &participants {
        for (category, group_labels) in &groups {
            let in_group = |w: &&EchoWindow| category.is_none_or(|c| w.label.category == c);
            let train: Vec<EchoWindow> = windows
                .iter()
                .filter(in_group)
                .filter(|w| w.provenance.participant_id != p)
                .cloned()
                .collect();
            let test: Vec<EchoWindow> = windows
                .iter()
                .filter(in_group)
                .filter(|w| w.provenance.participant_id == p)
                .cloned()
                .collect();
            if participants_of(&train).contains(&p) {
                return Err(Error::Protocol(format!("participant {p} appears in its own training fold")));
            }
            let cfg = ModelConfig {
                n_classes: group_labels.len(),
                ..model_cfg.clone()
            };
            let outcome = train_model(&train, group_labels, &cfg, train_cfg)?;
            if outcome.checkpoint.participants.contains(&p) {
                return Err(Error::Protocol(format!("participant {p} reached a training batch")));
            }
            let fold = FoldReport {
                participant: p,
                category: *category,
                train_participants: outcome.checkpoint.participants.clone(),
                report: evaluate(&outcome.checkpoint, &test)?,
            };
            on_fold(&fold);
            folds.push(fold);
        }
    }
    Ok(LopoReport { folds })
}

/// Continue training a checkpoint on data from participants it has never
/// seen. Normalization statistics are kept; the Adam state starts fresh.
pub fn fine_tune(checkpoint: &Checkpoint, windows: &[EchoWindow], train_cfg: &TrainConfig) -> Result<TrainOutcome> {
    let incoming = participants_of(windows);
    if let Some(p) = incoming.iter().find(|p| checkpoint.participants.contains(p)) {
        return Err(Error::Protocol(format!(
            "participant {p} is already in the checkpoint's training set"
        )));
    }
    if train_cfg.epochs == 0 {
        return Ok(TrainOutcome {
            checkpoint: checkpoint.clone(),
            log: Vec::new(),
        });
    }
    train_cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Empty("fine-tuning split"));
    }
    let targets = targets_for(windows, &checkpoint.labels)?;
    let mut params = checkpoint.params.clone();
    let log = fit(
        &checkpoint.model_cfg,
        train_cfg,
        &mut params,
        &checkpoint.norm,
        windows,
        &targets,
        class_names(&checkpoint.labels),
    )?;
    let mut participants: BTreeSet<u32> = checkpoint.participants.iter().copied().collect();
    participants.extend(incoming);
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model_cfg: checkpoint.model_cfg.clone(),
            train_cfg: train_cfg.clone(),
            params,
            norm: checkpoint.norm.clone(),
            participants: participants.into_iter().collect(),
            labels: checkpoint.labels.clone(),
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{sliding_windows, Provenance};
    use crate::sim::LabelRegistry;

    fn small_cfg(n_classes: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            n_heads: 2,
            mlp_hidden: 16,
            n_classes,
            ..ModelConfig::default()
        }
    }

    /// Windows whose channel 0 carries a class-specific constant row.
    fn toy_windows(labels: &[GestureLabel], participants: &[u32], per: usize) -> Vec<EchoWindow> {
        use crate::cfmcw::{DifferentialEchoProfile, ProfileGrid};
        let mut out = Vec::new();
        for &p in participants {
            for (k, label) in labels.iter().enumerate() {
                for r in 0..per {
                    let frames = 83;
                    let mut values = vec![0.0f32; frames * 4 * 200];
                    for f in 0..frames {
                        let bin = 40 + 60 * k;
                        values[(f * 4) * 200 + bin] = 1.0 + 0.1 * r as f32;
                        values[(f * 4 + 1) * 200 + (f + r) % 200] = 0.3;
                    }
                    let grid = ProfileGrid {
                        channels: 4,
                        range_bins: 200,
                        frames,
                        sample_rate: 50_000.0,
                        values,
                    };
                    let profile = DifferentialEchoProfile::from_grid(grid).unwrap();
                    let origin = Provenance {
                        participant_id: p,
                        session_id: 0,
                        repetition: r as u32,
                        label_id: label.id,
                        window_index: 0,
                    };
                    out.extend(sliding_windows(&profile, label, &origin).unwrap());
                }
            }
        }
        out
    }

    fn labels(n: usize) -> Vec<GestureLabel> {
        LabelRegistry::default().labels().take(n).cloned().collect()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch: 4,
            lr0: 1e-2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_classes_are_learned() {
        let ls = labels(2);
        let ws = toy_windows(&ls, &[0], 8);
        let out = train_model(&ws, &ls, &small_cfg(2), &quick(5)).unwrap();
        assert_eq!(out.log.len(), 5);
        assert!(out.log[4].train_loss < out.log[0].train_loss);
        assert_eq!(evaluate(&out.checkpoint, &ws).unwrap().macro_f1, 1.0);
        for w in &ws {
            let p = classify(w, &out.checkpoint).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ls = labels(2);
        let ws = toy_windows(&ls, &[0, 1], 2);
        let a = train_model(&ws, &ls, &small_cfg(2), &quick(2)).unwrap();
        let b = train_model(&ws, &ls, &small_cfg(2), &quick(2)).unwrap();
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
        assert_eq!(log_csv(&a.log), log_csv(&b.log));
        assert_eq!(a.checkpoint.participants, vec![0, 1]);
        assert!(log_csv(&a.log).starts_with("epoch,lr,train_loss,train_macro_f1\n0,0.01,"));
    }

    #[test]
    fn training_preconditions() {
        let ls = labels(2);
        let ws = toy_windows(&ls, &[0], 1);
        assert!(matches!(
            train_model(&[], &ls, &small_cfg(2), &quick(1)),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            train_model(&ws, &ls[..1], &small_cfg(1), &quick(1)),
            Err(Error::UnknownLabel(_))
        ));
        assert!(train_model(&ws, &ls, &small_cfg(3), &quick(1)).is_err());
    }

    #[test]
    fn lopo_folds_are_disjoint() {
        let ls = labels(2);
        let ws = toy_windows(&ls, &[0, 1, 2], 1);
        let mut seen = Vec::new();
        let r = lopo_evaluate(&ws, &ls, &small_cfg(2), &quick(1), LopoMode::Joint, |f| {
            seen.push(f.participant)
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
        assert_eq!(r.folds.len(), 3);
        for f in &r.folds {
            assert!(!f.train_participants.contains(&f.participant));
            assert_eq!(f.train_participants.len(), 2);
            assert_eq!(f.report.confusion.iter().flatten().sum::<u64>(), 2);
        }
        let one = toy_windows(&ls, &[4], 1);
        assert!(lopo_evaluate(&one, &ls, &small_cfg(2), &quick(1), LopoMode::Joint, |_| {}).is_err());
    }

    #[test]
    fn per_category_mode_trains_one_model_per_category() {
        let reg = LabelRegistry::default();
        let mut ls = Vec::new();
        for c in [Category::Gesture, Category::Activity, Category::Null] {
            ls.push(reg.in_category(c)[0].clone());
        }
        let ws = toy_windows(&ls, &[0, 1], 1);
        let r = lopo_evaluate(&ws, &ls, &small_cfg(3), &quick(1), LopoMode::PerCategory, |_| {}).unwrap();
        assert_eq!(r.folds.len(), 4);
        assert!(r.folds.iter().all(|f| f.report.class_names.len() == 1));
        assert!(r.mean_for(Some(Category::Gesture)).is_some());
        assert!(r.mean_for(Some(Category::HeadMotion)).is_none());
        assert!(r.mean_for(None).is_none());
    }

    #[test]
    fn fine_tune_protocol() {
        let ls = labels(2);
        let base = train_model(&toy_windows(&ls, &[0, 1], 1), &ls, &small_cfg(2), &quick(1)).unwrap();
        let same = toy_windows(&ls, &[1], 1);
        assert!(matches!(
            fine_tune(&base.checkpoint, &same, &quick(1)),
            Err(Error::Protocol(_))
        ));
        let new = toy_windows(&ls, &[7], 2);
        let zero = fine_tune(&base.checkpoint, &new, &TrainConfig {
                epochs: 0,
                ..quick(1).fine_tune()
            }).unwrap();
        assert_eq!(zero.checkpoint, base.checkpoint);
        let a = fine_tune(&base.checkpoint, &new, &quick(2).fine_tune()).unwrap();
        let b = fine_tune(&base.checkpoint, &new, &quick(2).fine_tune()).unwrap();
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
        assert_eq!(a.checkpoint.participants, vec![0, 1, 7]);
        assert_eq!(a.checkpoint.norm, base.checkpoint.norm);
        assert_ne!(a.checkpoint.params, base.checkpoint.params);
    }

    #[test]
    fn logits_equal_gives_uniform_probabilities() {
        let ls = labels(3);
        let ws = toy_windows(&ls, &[0], 1);
        let mut ck = train_model(&ws, &ls, &small_cfg(3), &quick(1)).unwrap().checkpoint;
        ck.params.head_w.fill(0.0);
        ck.params.head_b.fill(0.25);
        let p = classify(&ws[0], &ck).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
