//! Seeded blind-test runs and their aggregation across seeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::holdout_split;
use crate::error::{Error, Result};
use crate::features::FeaturizedGraph;
use crate::metrics::{mean_with_margin, MetricsReport};
use crate::mpnn::{Model, ModelSpec, Task};
use crate::pipeline::{augment_graphs, Conformation};
use crate::train::{evaluate, fit, History, TrainConfig};

/// Fraction of the data held out as the blind test set.
pub const BLIND_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub history: History,
    /// Metrics on the held-out test set, or on the training data when no
    /// test set was requested.
    pub test: MetricsReport,
    pub test_indices: Vec<usize>,
}

/// Split off a stratified test set, train a fresh model on the rest and
/// score it. The seed drives the split, initialization and sampling.
pub fn blind_test_run(
    spec: &ModelSpec,
    graphs: &[FeaturizedGraph],
    cfg: &TrainConfig,
    seed: u64,
    test_fraction: f64,
    mode: Conformation,
) -> Result<(Model, SeedRun)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction}")));
    }
    let cfg = TrainConfig { seed, ..cfg.clone() };
    cfg.validate()?;
    let classification = spec.task == Task::Classification;
    let (train_idx, test_idx) = if test_fraction > 0.0 {
        let labels: Vec<f64> = graphs.iter().map(|g| g.y.unwrap_or(f64::NAN)).collect();
        holdout_split(&labels, test_fraction, classification, seed)?
    } else {
        ((0..graphs.len()).collect(), Vec::new())
    };
    let mut train: Vec<FeaturizedGraph> = train_idx.iter().map(|&i| graphs[i].clone()).collect();
    if cfg.augment_minority && classification {
        train = augment_graphs(&train, mode, seed)?;
    }
    let mut model = Model::new(spec.clone(), seed)?;
    let history = fit(&mut model, &train, &cfg)?;
    let test = if test_idx.is_empty() {
        evaluate(&model, graphs)?
    } else {
        let held: Vec<FeaturizedGraph> = test_idx.iter().map(|&i| graphs[i].clone()).collect();
        evaluate(&model, &held)?
    };
    Ok((
        model,
        SeedRun {
            seed,
            history,
            test,
            test_indices: test_idx,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Half-width of the 95% t-interval.
    pub margin: f64,
    pub median: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let (mean, margin) = mean_with_margin(values, 0.95);
        Summary {
            mean,
            margin,
            median: median(values),
            values: values.to_vec(),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-metric summaries across seeds; a metric is included only when every
/// report has it.
pub fn aggregate(reports: &[MetricsReport]) -> BTreeMap<String, Summary> {
    type Pick = fn(&MetricsReport) -> Option<f64>;
    let pick: [(&str, Pick); 5] = [
        ("loss", |r| Some(r.loss)),
        ("auc", |r| r.auc),
        ("f1", |r| r.f1),
        ("accuracy", |r| r.accuracy),
        ("rmse", |r| r.rmse),
    ];
    let mut out = BTreeMap::new();
    if reports.is_empty() {
        return out;
    }
    for (name, f) in pick {
        if let Some(vals) = reports.iter().map(f).collect::<Option<Vec<f64>>>() {
            out.insert(name.to_string(), Summary::of(&vals));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn aggregate_skips_partial_metrics() {
        let a = MetricsReport {
            n: 2,
            loss: 0.5,
            f1: Some(0.8),
            auc: Some(0.9),
            ..Default::default()
        };
        let b = MetricsReport {
            n: 2,
            loss: 0.3,
            f1: Some(0.6),
            auc: None,
            ..Default::default()
        };
        let s = aggregate(&[a, b]);
        assert!(!s.contains_key("auc"));
        assert!((s["f1"].mean - 0.7).abs() < 1e-12);
        // t(0.975, 1) = 12.7062047362 ; sd = 0.141421356 ; se = 0.1
        assert!((s["f1"].margin - 1.270620473617).abs() < 1e-9);
        assert!((s["loss"].median - 0.4).abs() < 1e-12);
    }
}
