//! Single-pass message-passing model: entry batch norm, an edge message MLP,
//! one of nine node blocks, graph pooling and a global MLP head.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeaturizedGraph;
use crate::tensor::{Init, ParameterStore, RunningStats, Tape, Var};

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "MP")]
    Mp,
    #[serde(rename = "AMP")]
    Amp,
    #[serde(rename = "UMP")]
    Ump,
    #[serde(rename = "AUMP")]
    Aump,
    #[serde(rename = "BMP")]
    Bmp,
    #[serde(rename = "BMP_SN")]
    BmpSn,
    #[serde(rename = "CBMP")]
    Cbmp,
    #[serde(rename = "ABMP")]
    Abmp,
    #[serde(rename = "ABMP_SN")]
    AbmpSn,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Mp,
        Variant::Amp,
        Variant::Ump,
        Variant::Aump,
        Variant::Bmp,
        Variant::BmpSn,
        Variant::Cbmp,
        Variant::Abmp,
        Variant::AbmpSn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mp => "MP",
            Variant::Amp => "AMP",
            Variant::Ump => "UMP",
            Variant::Aump => "AUMP",
            Variant::Bmp => "BMP",
            Variant::BmpSn => "BMP_SN",
            Variant::Cbmp => "CBMP",
            Variant::Abmp => "ABMP",
            Variant::AbmpSn => "ABMP_SN",
        }
    }

    pub fn is_attention(self) -> bool {
        matches!(self, Variant::Amp | Variant::Aump | Variant::Abmp | Variant::AbmpSn)
    }

    /// UMP family: mirrored edge set, mean pooling.
    pub fn is_undirected(self) -> bool {
        matches!(self, Variant::Ump | Variant::Aump)
    }

    pub fn is_bidirectional(self) -> bool {
        matches!(
            self,
            Variant::Bmp | Variant::BmpSn | Variant::Cbmp | Variant::Abmp | Variant::AbmpSn
        )
    }

    /// Whether raw node features enter the final node MLP.
    pub fn uses_self_node(self) -> bool {
        matches!(self, Variant::BmpSn | Variant::AbmpSn) || self.is_undirected()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['+', '-', ' '], "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::ModelSpec(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classification" | "c" => Ok(Task::Classification),
            "regression" | "r" => Ok(Task::Regression),
            _ => Err(Error::ModelSpec(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub task: Task,
    pub hidden: usize,
    pub dropout: f64,
    pub heads: usize,
    pub leaky_slope: f64,
    pub atom_dim: usize,
    pub bond_dim: usize,
    pub global_dim: usize,
}

impl ModelSpec {
    pub fn new(variant: Variant, task: Task, hidden: usize, atom_dim: usize, bond_dim: usize, global_dim: usize) -> Self {
        ModelSpec {
            variant,
            task,
            hidden,
            dropout: 0.0,
            heads: 1,
            leaky_slope: 0.2,
            atom_dim,
            bond_dim,
            global_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ModelSpec(m));
        if self.hidden == 0 {
            return bad("hidden channels must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.heads == 0 {
            return bad("attention heads must be at least 1".into());
        }
        if self.heads > 1 && !self.variant.is_attention() {
            return bad(format!("{} heads requested for non-attention variant {}", self.heads, self.variant));
        }
        if self.atom_dim + self.bond_dim == 0 {
            return bad("messages need at least one atom or bond feature".into());
        }
        Ok(())
    }

    /// Width of the node-block input to the final node MLP.
    fn node_in(&self) -> usize {
        let (h, k) = (self.hidden, self.heads);
        match self.variant {
            Variant::Mp => h,
            Variant::Amp => k * h,
            Variant::Bmp | Variant::Cbmp => 2 * h,
            Variant::BmpSn => 2 * h + self.atom_dim,
            Variant::Abmp => 2 * k * h,
            Variant::AbmpSn => 2 * k * h + self.atom_dim,
            Variant::Ump => h + self.atom_dim,
            Variant::Aump => k * h + self.atom_dim,
        }
    }
}

/// Several graphs stacked into one disconnected graph.
#[derive(Debug, Clone)]
pub struct Batch {
    pub n_graphs: usize,
    pub n_nodes: usize,
    pub atom_dim: usize,
    pub bond_dim: usize,
    pub global_dim: usize,
    pub x: Vec<f64>,
    pub edge_attr: Vec<f64>,
    pub u: Vec<f64>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub node_graph: Vec<usize>,
    pub edge_graph: Vec<usize>,
    /// First node of each graph, plus a trailing total.
    pub node_offsets: Vec<usize>,
    pub labels: Vec<Option<f64>>,
    /// Heavy-atom degree per node.
    pub degree: Vec<f64>,
}

impl Batch {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a FeaturizedGraph>) -> Result<Batch> {
        let mut b: Option<Batch> = None;
        for g in graphs {
            let batch = b.get_or_insert_with(|| Batch {
                n_graphs: 0,
                n_nodes: 0,
                atom_dim: g.atom_dim(),
                bond_dim: g.bond_dim(),
                global_dim: g.feature_mask.global_dim(),
                x: Vec::new(),
                edge_attr: Vec::new(),
                u: Vec::new(),
                src: Vec::new(),
                dst: Vec::new(),
                node_graph: Vec::new(),
                edge_graph: Vec::new(),
                node_offsets: vec![0],
                labels: Vec::new(),
                degree: Vec::new(),
            });
            let dims = (g.atom_dim(), g.bond_dim(), g.feature_mask.global_dim());
            if dims != (batch.atom_dim, batch.bond_dim, batch.global_dim)
                || g.x.len() != g.n_atoms * dims.0
                || g.edge_attr.len() != g.n_edges() * dims.1
                || g.u.len() != dims.2
            {
                return Err(Error::Shape {
                    op: "batch",
                    detail: format!("graph `{}` has inconsistent feature dimensions", g.name),
                });
            }
            let off = batch.n_nodes;
            let gid = batch.n_graphs;
            let mut degree = vec![0.0; g.n_atoms];
            for &[s, d] in &g.edge_index {
                if s >= g.n_atoms || d >= g.n_atoms {
                    return Err(Error::SegmentId { id: s.max(d), n: g.n_atoms });
                }
                batch.src.push(s + off);
                batch.dst.push(d + off);
                batch.edge_graph.push(gid);
                degree[s] += 1.0;
                degree[d] += 1.0;
            }
            batch.x.extend_from_slice(&g.x);
            batch.edge_attr.extend_from_slice(&g.edge_attr);
            batch.u.extend_from_slice(&g.u);
            batch.node_graph.extend(std::iter::repeat_n(gid, g.n_atoms));
            batch.degree.extend(degree);
            batch.labels.push(g.y);
            batch.n_nodes += g.n_atoms;
            batch.n_graphs += 1;
            batch.node_offsets.push(batch.n_nodes);
        }
        b.ok_or_else(|| Error::Dataset("empty batch".into()))
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// Labels as dense values; missing labels are an error.
    pub fn targets(&self) -> Result<Vec<f64>> {
        self.labels
            .iter()
            .map(|y| y.ok_or_else(|| Error::Dataset("unlabelled graph in training batch".into())))
            .collect()
    }
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// One row per graph: logit (classification) or value (regression).
    pub output: Var,
    /// Node embeddings before pooling (`N × H`).
    pub nodes: Var,
    /// Attention coefficients per edge (`E × 1`) for each direction and head.
    pub attention: Vec<Var>,
}

/// Parameters and running statistics for one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParameterStore,
}

struct Ctx<'a, R: Rng> {
    store: &'a ParameterStore,
    running: &'a mut BTreeMap<String, RunningStats>,
    tape: &'a mut Tape,
    bound: HashMap<String, Var>,
    training: bool,
    dropout: f64,
    hidden: usize,
    rng: &'a mut R,
}

impl<R: Rng> Ctx<'_, R> {
    fn p(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let id = self
            .store
            .id(name)
            .ok_or_else(|| Error::ModelSpec(format!("missing parameter `{name}`")))?;
        let v = self.tape.param(self.store, id);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    fn linear(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let w = self.p(&format!("{prefix}.w"))?;
        let b = self.p(&format!("{prefix}.b"))?;
        self.tape.dense(x, w, b)
    }

    /// in → H (ReLU, dropout) → out.
    fn mlp(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let h = self.linear(&format!("{prefix}.l1"), x)?;
        let h = self.tape.relu(h);
        let h = self.tape.dropout(h, self.dropout, self.rng, self.training);
        self.linear(&format!("{prefix}.l2"), h)
    }

    fn batch_norm(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let cols = self.tape.shape(x).1;
        let gamma = self.p(&format!("{prefix}.gamma"))?;
        let beta = self.p(&format!("{prefix}.beta"))?;
        let stats = self
            .running
            .entry(prefix.to_string())
            .or_insert_with(|| RunningStats::new(cols));
        self.tape.batch_norm(x, gamma, beta, stats, BN_EPS, self.training)
    }

    fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let kept: Vec<Var> = parts
            .iter()
            .copied()
            .filter(|v| self.tape.shape(*v).1 > 0)
            .collect();
        self.tape.concat(&kept)
    }

    /// Unnormalized attention score per edge for head `k`.
    fn score(&mut self, k: usize, xs: Var, e: Var, xd: Var) -> Result<Var> {
        let mut parts = Vec::new();
        for (v, map) in [(xs, "phi_x"), (e, "phi_e"), (xd, "phi_x")] {
            if self.tape.shape(v).1 > 0 {
                let w = self.p(&format!("node.att{k}.{map}"))?;
                parts.push(self.tape.matmul(v, w)?);
            } else {
                let (rows, h) = (self.tape.shape(v).0, self.hidden);
                parts.push(self.tape.constant(rows, h, vec![0.0; rows * h])?);
            }
        }
        let cat = self.tape.concat(&parts)?;
        let a = self.p(&format!("node.att{k}.a"))?;
        self.tape.matmul(cat, a)
    }
}

impl Model {
    /// Fresh parameters drawn from a seeded generator.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let h = spec.hidden;
        let (fa, fb, fg) = (spec.atom_dim, spec.bond_dim, spec.global_dim);
        fn linear(store: &mut ParameterStore, name: &str, i: usize, o: usize, rng: &mut ChaCha8Rng) {
            store.add(&format!("{name}.w"), i, o, Init::Uniform { fan_in: i }, rng);
            store.add(&format!("{name}.b"), 1, o, Init::Uniform { fan_in: i }, rng);
        }
        for (name, dim) in [("bn_x", fa), ("bn_e", fb), ("bn_u", fg)] {
            if dim > 0 {
                store.insert(&format!("{name}.gamma"), 1, dim, vec![1.0; dim]);
                store.insert(&format!("{name}.beta"), 1, dim, vec![0.0; dim]);
                store.running.insert(name.to_string(), RunningStats::new(dim));
            }
        }
        let msg_in = 2 * fa + fb;
        linear(&mut store, "msg.l1", msg_in, h, &mut rng);
        linear(&mut store, "msg.l2", h, h, &mut rng);
        if spec.variant.is_attention() {
            for k in 0..spec.heads {
                let p = format!("node.att{k}");
                if fa > 0 {
                    store.add(&format!("{p}.phi_x"), fa, h, Init::Uniform { fan_in: fa }, &mut rng);
                }
                if fb > 0 {
                    store.add(&format!("{p}.phi_e"), fb, h, Init::Uniform { fan_in: fb }, &mut rng);
                }
                store.add(&format!("{p}.a"), 3 * h, 1, Init::Uniform { fan_in: 3 * h }, &mut rng);
            }
        }
        if spec.variant.is_undirected() {
            linear(&mut store, "node.inner.l1", fa + h, h, &mut rng);
            linear(&mut store, "node.inner.l2", h, h, &mut rng);
        }
        let node_in = spec.node_in();
        linear(&mut store, "node.l1", node_in, h, &mut rng);
        linear(&mut store, "node.l2", h, h, &mut rng);
        linear(&mut store, "glob.l1", h + fg, h, &mut rng);
        linear(&mut store, "glob.l2", h, 1, &mut rng);
        linear(&mut store, "relevance", h, 1, &mut rng);
        Ok(Model { spec, store })
    }

    /// Wrap restored parameters, checking every expected tensor is present
    /// with the right shape.
    pub fn from_store(spec: ModelSpec, store: ParameterStore) -> Result<Model> {
        let reference = Model::new(spec.clone(), 0)?;
        for p in reference.store.params() {
            let id = store
                .id(&p.name)
                .ok_or_else(|| Error::ModelSpec(format!("missing parameter `{}`", p.name)))?;
            let q = store.get(id);
            if (q.rows, q.cols) != (p.rows, p.cols) {
                return Err(Error::ModelSpec(format!(
                    "parameter `{}` is {}×{}, expected {}×{}",
                    p.name, q.rows, q.cols, p.rows, p.cols
                )));
            }
        }
        Ok(Model { spec, store })
    }

    pub fn n_params(&self) -> usize {
        self.store.n_scalars()
    }

    /// Trainable scalars inside the node block.
    pub fn node_block_params(&self) -> usize {
        self.store
            .params()
            .iter()
            .filter(|p| p.name.starts_with("node."))
            .map(|p| p.value.len())
            .sum()
    }

    /// Forward pass on `tape`. Training mode applies dropout and updates
    /// batch-norm running statistics.
    pub fn forward<R: Rng>(&mut self, tape: &mut Tape, batch: &Batch, training: bool, rng: &mut R) -> Result<Forward> {
        let mut running = std::mem::take(&mut self.store.running);
        let out = self.run(&mut running, tape, batch, training, rng);
        self.store.running = running;
        out
    }

    /// Evaluation-mode forward that leaves the model untouched.
    pub fn forward_eval(&self, tape: &mut Tape, batch: &Batch) -> Result<Forward> {
        let mut running = self.store.running.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.run(&mut running, tape, batch, false, &mut rng)
    }

    /// Raw outputs per graph in evaluation mode.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.forward_eval(&mut tape, batch)?;
        Ok(tape.value(f.output).to_vec())
    }

    /// Per-molecule min-max-scaled atom relevance scores.
    pub fn relevance(&self, batch: &Batch) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let f = self.forward_eval(&mut tape, batch)?;
        let w = tape.param(&self.store, self.store.id("relevance.w").expect("relevance head"));
        let b = tape.param(&self.store, self.store.id("relevance.b").expect("relevance head"));
        let raw = tape.dense(f.nodes, w, b)?;
        let raw = tape.sigmoid(raw);
        Ok(min_max_per_graph(tape.value(raw), &batch.node_offsets))
    }

    fn run<R: Rng>(
        &self,
        running: &mut BTreeMap<String, RunningStats>,
        tape: &mut Tape,
        batch: &Batch,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let spec = &self.spec;
        if (batch.atom_dim, batch.bond_dim, batch.global_dim) != (spec.atom_dim, spec.bond_dim, spec.global_dim) {
            return Err(Error::Shape {
                op: "model",
                detail: format!(
                    "batch dims {}/{}/{} vs model {}/{}/{}",
                    batch.atom_dim, batch.bond_dim, batch.global_dim, spec.atom_dim, spec.bond_dim, spec.global_dim
                ),
            });
        }
        let mut c = Ctx {
            store: &self.store,
            running,
            tape,
            bound: HashMap::new(),
            training,
            dropout: spec.dropout,
            hidden: spec.hidden,
            rng,
        };
        let (n, e_count, g) = (batch.n_nodes, batch.n_edges(), batch.n_graphs);

        let mut x = c.tape.constant(n, spec.atom_dim, batch.x.clone())?;
        let mut e = c.tape.constant(e_count, spec.bond_dim, batch.edge_attr.clone())?;
        let mut u = c.tape.constant(g, spec.global_dim, batch.u.clone())?;
        if spec.atom_dim > 0 {
            x = c.batch_norm("bn_x", x)?;
        }
        if spec.bond_dim > 0 {
            e = c.batch_norm("bn_e", e)?;
        }
        if spec.global_dim > 0 {
            u = c.batch_norm("bn_u", u)?;
        }

        let (src, dst): (Vec<usize>, Vec<usize>) = if spec.variant.is_undirected() {
            (
                batch.src.iter().chain(&batch.dst).copied().collect(),
                batch.dst.iter().chain(&batch.src).copied().collect(),
            )
        } else {
            (batch.src.clone(), batch.dst.clone())
        };
        if spec.variant.is_undirected() {
            let idx: Vec<usize> = (0..e_count).chain(0..e_count).collect();
            e = c.tape.gather_rows(e, &idx)?;
        }
        let xs = c.tape.gather_rows(x, &src)?;
        let xd = c.tape.gather_rows(x, &dst)?;
        let msg_in = c.concat(&[xs, e, xd])?;
        let m = c.mlp("msg", msg_in)?;

        let mut attention = Vec::new();
        let heads = spec.heads;
        let node_in = match spec.variant {
            Variant::Mp => c.tape.segment_max(m, &dst, n)?.value,
            Variant::Bmp | Variant::BmpSn | Variant::Cbmp => {
                let m = if spec.variant == Variant::Cbmp {
                    let f: Vec<f64> = src
                        .iter()
                        .zip(&dst)
                        .map(|(&s, &d)| 1.0 / (batch.degree[s] * batch.degree[d]))
                        .collect();
                    c.tape.row_scale(m, &f)?
                } else {
                    m
                };
                let fwd = c.tape.segment_max(m, &dst, n)?.value;
                let bwd = c.tape.segment_max(m, &src, n)?.value;
                if spec.variant == Variant::BmpSn {
                    c.concat(&[x, fwd, bwd])?
                } else {
                    c.tape.concat(&[fwd, bwd])?
                }
            }
            Variant::Amp | Variant::Abmp | Variant::AbmpSn => {
                let mut fwd = Vec::new();
                let mut bwd = Vec::new();
                for k in 0..heads {
                    let s = c.score(k, xs, e, xd)?;
                    let s = c.tape.leaky_relu(s, spec.leaky_slope);
                    let a = c.tape.segment_softmax(s, &dst, n)?;
                    let wm = c.tape.mul_col(m, a)?;
                    fwd.push(c.tape.segment_max(wm, &dst, n)?.value);
                    attention.push(a);
                    if spec.variant != Variant::Amp {
                        let a = c.tape.segment_softmax(s, &src, n)?;
                        let wm = c.tape.mul_col(m, a)?;
                        bwd.push(c.tape.segment_max(wm, &src, n)?.value);
                        attention.push(a);
                    }
                }
                let mut parts = Vec::new();
                if spec.variant == Variant::AbmpSn {
                    parts.push(x);
                }
                parts.extend(fwd);
                parts.extend(bwd);
                c.concat(&parts)?
            }
            Variant::Ump | Variant::Aump => {
                let inner_in = c.concat(&[xs, m])?;
                let inner = c.mlp("node.inner", inner_in)?;
                let agg = if spec.variant == Variant::Ump {
                    c.tape.segment_mean(inner, &dst, n)?
                } else {
                    let mut per_head = Vec::new();
                    for k in 0..heads {
                        let s = c.score(k, xs, e, xd)?;
                        let s = c.tape.leaky_relu(s, spec.leaky_slope);
                        let a = c.tape.segment_softmax(s, &dst, n)?;
                        let wm = c.tape.mul_col(inner, a)?;
                        per_head.push(c.tape.segment_sum(wm, &dst, n)?);
                        attention.push(a);
                    }
                    c.tape.concat(&per_head)?
                };
                c.concat(&[x, agg])?
            }
        };
        let nodes = c.mlp("node", node_in)?;

        let pooled = if spec.variant.is_undirected() {
            c.tape.segment_mean(nodes, &batch.node_graph, g)?
        } else {
            c.tape.segment_max(nodes, &batch.node_graph, g)?.value
        };
        let glob_in = c.concat(&[pooled, u])?;
        let output = c.mlp("glob", glob_in)?;
        Ok(Forward {
            output,
            nodes,
            attention,
        })
    }
}

/// Min-max scale each graph's slice of `scores`; constant slices map to 0.5.
pub fn min_max_per_graph(scores: &[f64], offsets: &[usize]) -> Vec<Vec<f64>> {
    offsets
        .windows(2)
        .map(|w| {
            let s = &scores[w[0]..w[1]];
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= 1e-12 {
                vec![0.5; s.len()]
            } else {
                s.iter().map(|v| (v - lo) / (hi - lo)).collect()
            }
        })
        .collect()
}
