//! Hybrid backward/forward feature selection with rank-point bookkeeping.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMask, FeaturizedGraph};
use crate::mpnn::{ModelSpec, Task, Variant};
use crate::train::{cross_validate, mean_primary, Control, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    pub max_rounds: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            variant: Variant::Bmp,
            hidden: 250,
            dropout: 0.25,
            train: TrainConfig {
                lr: 0.003,
                batch_size: 32,
                epochs: 50,
                ..Default::default()
            },
            max_rounds: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub round: usize,
    pub baseline_f1: f64,
    /// CV F1 with each active feature removed; `None` where removal would
    /// leave the model without message inputs.
    pub removal_f1: BTreeMap<String, Option<f64>>,
    pub points: BTreeMap<String, usize>,
    pub removed: Vec<String>,
    pub restored: Vec<String>,
    pub f1_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mask: FeatureMask,
    pub initial_f1: f64,
    pub final_f1: f64,
    pub rounds: Vec<SelectionRound>,
    pub eliminated: Vec<String>,
}

impl SelectionResult {
    pub fn cumulative_points(&self) -> BTreeMap<String, usize> {
        let mut total: BTreeMap<String, usize> = BTreeMap::new();
        for r in &self.rounds {
            for (f, p) in &r.points {
                *total.entry(f.clone()).or_default() += p;
            }
        }
        total
    }

    /// `feature,round_1,…,round_R,cumulative,final_rank`, most points first.
    pub fn ranking_csv(&self) -> String {
        let total = self.cumulative_points();
        let mut order: Vec<(&String, &usize)> = total.iter().collect();
        order.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let mut out = String::from("feature");
        for r in &self.rounds {
            out.push_str(&format!(",round_{}", r.round));
        }
        out.push_str(",cumulative,final_rank\n");
        for (rank, (f, t)) in order.iter().enumerate() {
            out.push_str(f);
            for r in &self.rounds {
                out.push(',');
                if let Some(p) = r.points.get(*f) {
                    out.push_str(&p.to_string());
                }
            }
            out.push_str(&format!(",{t},{}\n", rank + 1));
        }
        out
    }
}

/// Rank points: the largest F1 drop on removal earns `n` points, the smallest
/// earns 1. Ties break alphabetically.
pub fn rank_points(baseline: f64, removal_f1: &BTreeMap<String, Option<f64>>) -> BTreeMap<String, usize> {
    let mut drops: Vec<(&String, f64)> = removal_f1
        .iter()
        .map(|(f, v)| (f, v.map_or(f64::INFINITY, |v| baseline - v)))
        .collect();
    drops.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let n = drops.len();
    drops
        .into_iter()
        .enumerate()
        .map(|(i, (f, _))| (f.clone(), n - i))
        .collect()
}

/// Run the protocol from `initial` using `score` (higher is better) to
/// evaluate masks. `valid` says whether a mask can be trained at all.
pub fn select_with<S, V>(initial: &FeatureMask, max_rounds: usize, score: S, valid: V) -> Result<SelectionResult>
where
    S: Fn(&FeatureMask) -> Result<f64> + Sync,
    V: Fn(&FeatureMask) -> bool + Sync,
{
    if initial.count() < 2 {
        return Err(Error::Config("feature selection needs at least two active features".into()));
    }
    let mut mask = initial.clone();
    let initial_f1 = score(&mask)?;
    let mut baseline = initial_f1;
    let mut eliminated: Vec<String> = Vec::new();
    let mut rounds = Vec::new();
    for round in 1..=max_rounds {
        let active = mask.active_names();
        if active.len() < 2 {
            break;
        }
        let removal: Vec<(String, Option<f64>)> = active
            .par_iter()
            .map(|&f| {
                let m = mask.without(f)?;
                let v = if valid(&m) { Some(score(&m)?) } else { None };
                Ok((f.to_string(), v))
            })
            .collect::<Result<_>>()?;
        let removal_f1: BTreeMap<String, Option<f64>> = removal.into_iter().collect();
        let points = rank_points(baseline, &removal_f1);
        let round_baseline = baseline;

        // Candidates: features whose individual removal does not lower F1,
        // most beneficial first.
        let mut candidates: Vec<(&String, f64)> = removal_f1
            .iter()
            .filter_map(|(f, v)| v.filter(|&v| v >= round_baseline).map(|v| (f, v)))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        let mut removed = Vec::new();
        for (f, single) in candidates {
            let trial = mask.without(f)?;
            if trial.count() == 0 || !valid(&trial) {
                continue;
            }
            let v = if removed.is_empty() { single } else { score(&trial)? };
            if v >= baseline {
                mask = trial;
                baseline = v;
                removed.push(f.clone());
            }
        }
        eliminated.extend(removed.iter().cloned());

        let mut restored = Vec::new();
        if !removed.is_empty() {
            let pool: Vec<String> = eliminated.clone();
            for f in pool {
                let trial = mask.with(&f)?;
                let v = score(&trial)?;
                if v > baseline {
                    mask = trial;
                    baseline = v;
                    restored.push(f.clone());
                    eliminated.retain(|e| *e != f);
                }
            }
        }
        log::info!(
            "selection round {round}: baseline {round_baseline:.4}, removed {:?}, restored {:?}",
            removed,
            restored
        );
        let done = removed.is_empty();
        rounds.push(SelectionRound {
            round,
            baseline_f1: round_baseline,
            removal_f1,
            points,
            removed,
            restored,
            f1_after: baseline,
        });
        if done {
            break;
        }
    }
    Ok(SelectionResult {
        mask,
        initial_f1,
        final_f1: baseline,
        rounds,
        eliminated,
    })
}

/// Feature selection scored by cross-validated F1 of the configured model.
/// `graphs` must carry every feature in `initial`.
pub fn select_features(graphs: &[FeaturizedGraph], initial: &FeatureMask, cfg: &SelectionConfig) -> Result<SelectionResult> {
    if graphs.len() < cfg.train.cv_folds.max(2) * 2 {
        return Err(Error::Dataset(format!(
            "{} molecules are too few for {}-fold selection",
            graphs.len(),
            cfg.train.cv_folds
        )));
    }
    let spec_for = |m: &FeatureMask| {
        let mut s = ModelSpec::new(
            cfg.variant,
            Task::Classification,
            cfg.hidden,
            m.atom_dim(),
            m.bond_dim(),
            m.global_dim(),
        );
        s.dropout = cfg.dropout;
        s
    };
    let score = |m: &FeatureMask| -> Result<f64> {
        let data = graphs.iter().map(|g| g.with_mask(m)).collect::<Result<Vec<_>>>()?;
        let folds = cross_validate(&spec_for(m), &data, &cfg.train, |_, _| Control::Continue)?;
        Ok(mean_primary(&folds))
    };
    let valid = |m: &FeatureMask| spec_for(m).validate().is_ok();
    select_with(initial, cfg.max_rounds, score, valid)
}
