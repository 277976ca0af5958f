//! Random hyperparameter search over two objectives with epoch-based pruning
//! and Pareto knee selection.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeaturizedGraph;
use crate::mpnn::{ModelSpec, Task};
use crate::train::{cross_validate, Control, EpochRecord, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden: (usize, usize),
    pub dropout: (f64, f64),
    pub batch_size: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            hidden: (50, 400),
            dropout: (0.05, 0.5),
            batch_size: (20, 180),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub batch_size: usize,
    /// Mean |validation loss − training loss| at the last epoch.
    pub loss_gap: f64,
    /// Mean validation F1 (classification) or RMSE (regression).
    pub score: f64,
    pub pruned: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_at: Option<usize>,
    pub pareto: bool,
}

impl Trial {
    /// Both objectives as quantities to minimize.
    fn objectives(&self, task: Task) -> [f64; 2] {
        match task {
            Task::Classification => [self.loss_gap, -self.score],
            Task::Regression => [self.loss_gap, self.score],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub task: Task,
    pub trials: Vec<Trial>,
    pub pareto: Vec<usize>,
    pub chosen: usize,
}

impl TuneResult {
    pub fn best(&self) -> &Trial {
        &self.trials[self.chosen]
    }
}

/// Classification: stop at epoch 30 when validation F1 < 0.65.
/// Regression: stop at epoch 20 when |val loss − train loss| > 0.15.
pub fn should_prune(task: Task, r: &EpochRecord) -> bool {
    let Some(v) = &r.validation else {
        return false;
    };
    match task {
        Task::Classification => r.epoch == 30 && v.f1.unwrap_or(0.0) < 0.65,
        Task::Regression => r.epoch == 20 && (v.loss - r.train_loss).abs() > 0.15,
    }
}

fn dominates(a: [f64; 2], b: [f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Indices of mutually nondominated points (minimization).
pub fn pareto_front(points: &[[f64; 2]]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|p| dominates(*p, points[i])))
        .collect()
}

/// Point of `front` nearest the ideal corner after min-max scaling each
/// objective over the front; ties go to the lower index.
pub fn knee(points: &[[f64; 2]], front: &[usize]) -> Option<usize> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in front {
        for k in 0..2 {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let scaled = |i: usize, k: usize| {
        let r = hi[k] - lo[k];
        if r > 0.0 {
            (points[i][k] - lo[k]) / r
        } else {
            0.0
        }
    };
    front
        .iter()
        .copied()
        .map(|i| (i, scaled(i, 0).hypot(scaled(i, 1))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Sample `n` configurations from `space`.
pub fn sample_trials(space: &SearchSpace, n: usize, seed: u64) -> Vec<(usize, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                rng.random_range(space.hidden.0..=space.hidden.1),
                rng.random_range(space.dropout.0..=space.dropout.1),
                rng.random_range(space.batch_size.0..=space.batch_size.1),
            )
        })
        .collect()
}

/// Finish a set of evaluated trials: mark the Pareto set and pick the knee.
pub fn summarize(task: Task, mut trials: Vec<Trial>) -> Result<TuneResult> {
    let live: Vec<usize> = (0..trials.len()).filter(|&i| !trials[i].pruned).collect();
    if live.is_empty() {
        return Err(Error::AllTrialsPruned(trials.len()));
    }
    let pts: Vec<[f64; 2]> = live.iter().map(|&i| trials[i].objectives(task)).collect();
    let front_local = pareto_front(&pts);
    let chosen_local = knee(&pts, &front_local).expect("nonempty front");
    let pareto: Vec<usize> = front_local.iter().map(|&j| live[j]).collect();
    for &i in &pareto {
        trials[i].pareto = true;
    }
    Ok(TuneResult {
        task,
        trials,
        pareto,
        chosen: live[chosen_local],
    })
}

/// Random search with k-fold CV per trial. `template` supplies the variant,
/// task, attention heads and feature dimensions.
pub fn tune(
    data: &[FeaturizedGraph],
    template: &ModelSpec,
    base: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<TuneResult> {
    if n_trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let task = template.task;
    let configs = sample_trials(space, n_trials, seed);
    let trials: Vec<Trial> = configs
        .par_iter()
        .enumerate()
        .map(|(id, &(hidden, dropout, batch_size))| {
            let spec = ModelSpec {
                hidden,
                dropout,
                ..template.clone()
            };
            let cfg = TrainConfig {
                batch_size,
                seed: seed.wrapping_add(1000 * (id as u64 + 1)),
                ..base.clone()
            };
            let pruned = AtomicBool::new(false);
            let pruned_epoch = std::sync::Mutex::new(None);
            let folds = cross_validate(&spec, data, &cfg, |_, r| {
                if pruned.load(Ordering::Relaxed) {
                    return Control::Stop;
                }
                if should_prune(task, r) {
                    pruned.store(true, Ordering::Relaxed);
                    *pruned_epoch.lock().expect("pruning lock") = Some(r.epoch);
                    return Control::Stop;
                }
                Control::Continue
            })?;
            let n = folds.len() as f64;
            let gap = folds
                .iter()
                .map(|f| {
                    let last = f.history.last().expect("at least one epoch");
                    (f.validation.loss - last.train_loss).abs()
                })
                .sum::<f64>()
                / n;
            let score = folds.iter().map(|f| f.validation.primary()).sum::<f64>() / n;
            let pruned = pruned.into_inner();
            log::info!("trial {id}: H={hidden} p={dropout:.3} bs={batch_size} gap={gap:.4} score={score:.4} pruned={pruned}");
            Ok(Trial {
                id,
                hidden,
                dropout,
                batch_size,
                loss_gap: gap,
                score,
                pruned,
                pruned_at: pruned_epoch.into_inner().expect("pruning lock"),
                pareto: false,
            })
        })
        .collect::<Result<_>>()?;
    summarize(task, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsReport;

    fn record(epoch: usize, f1: f64, train_loss: f64, val_loss: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss,
            lr: 0.003,
            validation: Some(MetricsReport {
                loss: val_loss,
                f1: Some(f1),
                ..Default::default()
            }),
        }
    }

    #[test]
    fn pruning_thresholds() {
        assert!(should_prune(Task::Classification, &record(30, 0.64, 0.5, 0.5)));
        assert!(!should_prune(Task::Classification, &record(30, 0.65, 0.5, 0.5)));
        assert!(!should_prune(Task::Classification, &record(29, 0.10, 0.5, 0.5)));
        assert!(should_prune(Task::Regression, &record(20, 0.0, 0.1, 0.3)));
        assert!(!should_prune(Task::Regression, &record(20, 0.0, 0.1, 0.2)));
        assert!(!should_prune(Task::Regression, &record(21, 0.0, 0.1, 0.9)));
    }

    fn trial(id: usize, gap: f64, score: f64, pruned: bool) -> Trial {
        Trial {
            id,
            hidden: 100,
            dropout: 0.1,
            batch_size: 32,
            loss_gap: gap,
            score,
            pruned,
            pruned_at: None,
            pareto: false,
        }
    }

    #[test]
    fn single_trial_front() {
        let r = summarize(Task::Classification, vec![trial(0, 0.1, 0.8, false)]).unwrap();
        assert_eq!(r.pareto, vec![0]);
        assert_eq!(r.chosen, 0);
    }

    #[test]
    fn all_pruned_is_an_error() {
        let err = summarize(Task::Classification, vec![trial(0, 0.1, 0.8, true)]).unwrap_err();
        assert!(matches!(err, Error::AllTrialsPruned(1)));
    }

    #[test]
    fn front_matches_brute_force_dominance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let trials: Vec<Trial> = (0..n)
                .map(|i| {
                    trial(
                        i,
                        (rng.random_range(0..10) as f64) / 10.0,
                        (rng.random_range(0..10) as f64) / 10.0,
                        rng.random_bool(0.2),
                    )
                })
                .collect();
            let Ok(r) = summarize(Task::Classification, trials.clone()) else {
                continue;
            };
            for i in 0..n {
                let ti = &trials[i];
                let dominated = !ti.pruned
                    && trials.iter().any(|tj| {
                        !tj.pruned
                            && tj.loss_gap <= ti.loss_gap
                            && tj.score >= ti.score
                            && (tj.loss_gap < ti.loss_gap || tj.score > ti.score)
                    });
                let expect = !ti.pruned && !dominated;
                assert_eq!(r.trials[i].pareto, expect);
            }
            assert!(r.trials[r.chosen].pareto);
        }
    }

    #[test]
    fn knee_prefers_balanced_point() {
        let pts = [[0.0, 1.0], [0.4, 0.4], [1.0, 0.0]];
        assert_eq!(knee(&pts, &pareto_front(&pts)), Some(1));
    }

    #[test]
    fn samples_stay_in_range() {
        let space = SearchSpace::default();
        for (h, p, b) in sample_trials(&space, 500, 1) {
            assert!((50..=400).contains(&h));
            assert!((0.05..=0.5).contains(&p));
            assert!((20..=180).contains(&b));
        }
        assert_eq!(sample_trials(&space, 5, 9), sample_trials(&space, 5, 9));
    }
}
