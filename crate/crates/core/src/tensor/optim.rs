use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RunningStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Initialization scheme for a new parameter.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// U(−1/√fan_in, 1/√fan_in).
    Uniform { fan_in: usize },
}

/// Named parameters with Adam moment buffers, plus non-trainable buffers
/// such as batch-norm running statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    index: BTreeMap<String, ParamId>,
    pub running: BTreeMap<String, RunningStats>,
    pub step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, init: Init, rng: &mut R) -> ParamId {
        let n = rows * cols;
        let value = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
        };
        self.insert(name, rows, cols, value)
    }

    /// Insert or replace a parameter with explicit values.
    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "parameter `{name}` shape");
        let n = value.len();
        let p = Parameter {
            name: name.to_string(),
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        };
        if let Some(&id) = self.index.get(name) {
            self.params[id.0] = p;
            return id;
        }
        let id = ParamId(self.params.len());
        self.params.push(p);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn accumulate(&mut self, id: ParamId, g: &[f64]) {
        for (o, x) in self.params[id.0].grad.iter_mut().zip(g) {
            *o += x;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn running_stats(&mut self, name: &str, cols: usize) -> &mut RunningStats {
        self.running
            .entry(name.to_string())
            .or_insert_with(|| RunningStats::new(cols))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(store: &mut ParameterStore, lr: f64, cfg: AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in &mut store.params {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = p.m[i] / c1;
            let vhat = p.v[i] / c2;
            p.value[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Rescale all gradients so their global 2-norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in &mut store.params {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Reduce-on-plateau for a metric that should decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64) -> Self {
        Self::with(lr, 0.5, 5, 1e-5)
    }

    pub fn with(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Record one epoch's metric and return the learning rate to use next.
    pub fn step(&mut self, metric: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr.min(self.lr));
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}
