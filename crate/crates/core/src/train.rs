//! Epoch loop, evaluation and cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_weights, holdout_split, kfold, weighted_sample};
use crate::error::{Error, Result};
use crate::features::FeaturizedGraph;
use crate::metrics::MetricsReport;
use crate::mpnn::{Batch, Model, ModelSpec, Task};
use crate::tensor::{adam_step, clip_grad_norm, AdamConfig, PlateauScheduler, Tape};

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Uniform,
    WeightedByClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_max_norm: f64,
    pub sampler: Sampler,
    pub augment_minority: bool,
    pub cv_folds: usize,
    /// Fraction of the training data held out to drive the scheduler.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.003,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            clip_max_norm: 1.0,
            sampler: Sampler::WeightedByClass,
            augment_minority: false,
            cv_folds: 5,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("validation fraction {}", self.val_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per graph over the epoch's training batches.
    pub train_loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<MetricsReport>,
}

/// Whether to keep training after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn loss_on(tape: &mut Tape, task: Task, out: crate::tensor::Var, y: &[f64]) -> Result<crate::tensor::Var> {
    match task {
        Task::Classification => tape.bce_with_logits(out, y, None),
        Task::Regression => tape.mse(out, y),
    }
}

/// Raw outputs (logits or values) for every graph, in order.
pub fn predict(model: &Model, graphs: &[FeaturizedGraph]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(EVAL_BATCH) {
        out.extend(model.predict(&Batch::from_graphs(chunk)?)?);
    }
    Ok(out)
}

/// Loss and metrics of `model` on labelled graphs.
pub fn evaluate(model: &Model, graphs: &[FeaturizedGraph]) -> Result<MetricsReport> {
    if graphs.is_empty() {
        return Err(Error::Dataset("evaluation set is empty".into()));
    }
    let pred = predict(model, graphs)?;
    let y: Vec<f64> = graphs
        .iter()
        .map(|g| g.y.ok_or_else(|| Error::Dataset(format!("`{}` has no label", g.name))))
        .collect::<Result<_>>()?;
    let mut tape = Tape::new();
    let p = tape.constant(pred.len(), 1, pred.clone())?;
    let l = loss_on(&mut tape, model.spec.task, p, &y)?;
    let loss = tape.scalar(l);
    Ok(match model.spec.task {
        Task::Classification => MetricsReport::classification(&pred, &y, loss),
        Task::Regression => MetricsReport::regression(&pred, &y, loss),
    })
}

/// Train on `train`, scoring `val` after every epoch. The scheduler follows
/// the validation loss (training loss if `val` is empty). `on_epoch` may stop
/// training early.
pub fn train_with(
    model: &mut Model,
    train: &[FeaturizedGraph],
    val: &[FeaturizedGraph],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Control,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let task = model.spec.task;
    let labels: Vec<f64> = train
        .iter()
        .map(|g| g.y.ok_or_else(|| Error::Dataset(format!("`{}` has no label", g.name))))
        .collect::<Result<_>>()?;
    let weights = match (cfg.sampler, task) {
        (Sampler::WeightedByClass, Task::Classification) => class_weights(&labels).ok(),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut sched = PlateauScheduler::new(cfg.lr);
    let mut lr = cfg.lr;
    let mut history = History::default();
    for epoch in 1..=cfg.epochs {
        let order = match &weights {
            Some(w) => weighted_sample(w, train.len(), &mut rng)?,
            None => {
                let mut o: Vec<usize> = (0..train.len()).collect();
                o.shuffle(&mut rng);
                o
            }
        };
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::from_graphs(chunk.iter().map(|&i| &train[i]))?;
            let y: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let f = model.forward(&mut tape, &batch, true, &mut rng)?;
            let l = loss_on(&mut tape, task, f.output, &y)?;
            let loss = tape.scalar(l);
            if !loss.is_finite() {
                log::error!(
                    "non-finite loss {loss} at epoch {epoch}, batch {bi} (graphs: {})",
                    chunk.iter().map(|&i| train[i].name.as_str()).collect::<Vec<_>>().join(", ")
                );
                return Err(Error::NonFiniteLoss { epoch, batch: bi, loss });
            }
            model.store.zero_grad();
            tape.backward_into(l, &mut model.store)?;
            clip_grad_norm(&mut model.store, cfg.clip_max_norm);
            adam_step(&mut model.store, lr, AdamConfig::default());
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen as f64;
        let validation = if val.is_empty() { None } else { Some(evaluate(model, val)?) };
        let record = EpochRecord {
            epoch,
            train_loss,
            lr,
            validation,
        };
        lr = sched.step(record.validation.as_ref().map_or(train_loss, |v| v.loss));
        log::debug!("epoch {epoch}: train {train_loss:.4}, lr {lr:.2e}");
        let control = on_epoch(&record);
        history.epochs.push(record);
        if control == Control::Stop {
            history.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok(history)
}

/// Hold out `cfg.val_fraction` of `data` for validation and train on the rest.
pub fn fit(model: &mut Model, data: &[FeaturizedGraph], cfg: &TrainConfig) -> Result<History> {
    let (train, val) = inner_split(data, model.spec.task, cfg)?;
    train_with(model, &train, &val, cfg, |_| Control::Continue)
}

fn inner_split(
    data: &[FeaturizedGraph],
    task: Task,
    cfg: &TrainConfig,
) -> Result<(Vec<FeaturizedGraph>, Vec<FeaturizedGraph>)> {
    let labels: Vec<f64> = data.iter().map(|g| g.y.unwrap_or(f64::NAN)).collect();
    if cfg.val_fraction == 0.0 || data.len() < 10 {
        return Ok((data.to_vec(), Vec::new()));
    }
    let stratify = task == Task::Classification;
    let (tr, va) = holdout_split(&labels, cfg.val_fraction, stratify, cfg.seed ^ 0x0076_616c)?;
    Ok((
        tr.iter().map(|&i| data[i].clone()).collect(),
        va.iter().map(|&i| data[i].clone()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub history: History,
    pub validation: MetricsReport,
}

/// k-fold cross-validation; folds train in parallel on fresh models.
pub fn cross_validate(
    spec: &ModelSpec,
    data: &[FeaturizedGraph],
    cfg: &TrainConfig,
    on_epoch: impl Fn(usize, &EpochRecord) -> Control + Sync,
) -> Result<Vec<FoldResult>> {
    let labels: Vec<f64> = data.iter().map(|g| g.y.unwrap_or(f64::NAN)).collect();
    let stratify = spec.task == Task::Classification;
    let folds = kfold(&labels, cfg.cv_folds, stratify, cfg.seed)?;
    folds
        .par_iter()
        .enumerate()
        .map(|(k, (tr, va))| {
            let train: Vec<FeaturizedGraph> = tr.iter().map(|&i| data[i].clone()).collect();
            let val: Vec<FeaturizedGraph> = va.iter().map(|&i| data[i].clone()).collect();
            let mut model = Model::new(spec.clone(), cfg.seed.wrapping_add(k as u64))?;
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                ..cfg.clone()
            };
            let history = train_with(&mut model, &train, &val, &fold_cfg, |r| on_epoch(k, r))?;
            let validation = evaluate(&model, &val)?;
            Ok(FoldResult {
                fold: k,
                history,
                validation,
            })
        })
        .collect()
}

/// Mean of the primary validation score across folds.
pub fn mean_primary(folds: &[FoldResult]) -> f64 {
    folds.iter().map(|f| f.validation.primary()).sum::<f64>() / folds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::features::{featurize, FeatureMask};
    use crate::mpnn::Variant;

    fn toy() -> Vec<FeaturizedGraph> {
        let pos = ["CCO", "CCCO", "OCC(C)C", "OC1CCCC1", "CC(O)CC", "OCCCCC"];
        let neg = ["CCC", "CCCC", "CC(C)C", "C1CCCC1", "CC(C)CC", "CCCCCC"];
        pos.iter()
            .map(|s| (s, 1.0))
            .chain(neg.iter().map(|s| (s, 0.0)))
            .map(|(s, y)| featurize(&parse_smiles(s).unwrap(), &FeatureMask::all(), Some(y)).unwrap())
            .collect()
    }

    fn model(seed: u64) -> Model {
        let g = &toy()[0];
        let spec = ModelSpec::new(Variant::Bmp, Task::Classification, 16, g.atom_dim(), g.bond_dim(), 6);
        Model::new(spec, seed).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let data = toy();
        let mut m = model(1);
        let before: Vec<Vec<f64>> = m.store.params().iter().map(|p| p.value.clone()).collect();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        train_with(&mut m, &data, &[], &cfg, |_| Control::Continue).unwrap();
        let after: Vec<Vec<f64>> = m.store.params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(before, after);
    }

    /// Full-batch loss with batch statistics, as seen by the optimizer.
    fn batch_loss(m: &Model, data: &[FeaturizedGraph]) -> f64 {
        let mut m = m.clone();
        let batch = Batch::from_graphs(data).unwrap();
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = m.forward(&mut tape, &batch, true, &mut rng).unwrap();
        let l = loss_on(&mut tape, m.spec.task, f.output, &batch.targets().unwrap()).unwrap();
        tape.scalar(l)
    }

    #[test]
    fn one_epoch_reduces_loss_on_toy_set() {
        let data = toy();
        for seed in 0..5 {
            let mut m = model(seed);
            let before = batch_loss(&m, &data);
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: data.len(),
                lr: 0.01,
                seed,
                sampler: Sampler::Uniform,
                ..Default::default()
            };
            train_with(&mut m, &data, &[], &cfg, |_| Control::Continue).unwrap();
            let after = batch_loss(&m, &data);
            assert!(after < before, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn deterministic_training() {
        let data = toy();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 5,
            seed: 9,
            ..Default::default()
        };
        let run = || {
            let mut m = model(2);
            let h = fit(&mut m, &data, &cfg).unwrap();
            (h, m.store)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn early_stop_hook() {
        let data = toy();
        let mut m = model(0);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 6,
            ..Default::default()
        };
        let h = train_with(&mut m, &data, &data[..4], &cfg, |r| {
            if r.epoch == 3 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert!(h.stopped_early);
        assert!(h.epochs[0].validation.is_some());
    }

    #[test]
    fn nan_loss_aborts() {
        let mut data = toy();
        data[0].x[0] = f64::NAN;
        let mut m = model(0);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 12,
            sampler: Sampler::Uniform,
            ..Default::default()
        };
        let err = train_with(&mut m, &data, &[], &cfg, |_| Control::Continue).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 0, .. }));
    }

    #[test]
    fn invalid_config() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn cross_validation_runs_each_fold() {
        let data = toy();
        let g = &data[0];
        let spec = ModelSpec::new(Variant::Bmp, Task::Classification, 8, g.atom_dim(), g.bond_dim(), 6);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            cv_folds: 3,
            ..Default::default()
        };
        let folds = cross_validate(&spec, &data, &cfg, |_, _| Control::Continue).unwrap();
        assert_eq!(folds.len(), 3);
        assert!(folds.iter().all(|f| f.validation.n == 4));
    }
}
