use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use bmpnn_core::checkpoint::{Checkpoint, GraphCache};
use bmpnn_core::diversity::{cluster, fingerprint};
use bmpnn_core::features::{FeatureMask, FeaturizedGraph};
use bmpnn_core::mpnn::{Batch, Model, ModelSpec, Task};
use bmpnn_core::pipeline::{split_entries, Conformation};
use bmpnn_core::protocol::{aggregate, blind_test_run, Summary};
use bmpnn_core::selection::{select_features, SelectionConfig};
use bmpnn_core::tensor::sigmoid;
use bmpnn_core::train::{evaluate as evaluate_model, predict as predict_raw};
use bmpnn_core::tuning::tune as run_tuning;
use clap::Args;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ConfigArgs, RunConfig};
use crate::io::{
    create_dir, load_graphs, read_entries, reparse, write_failures, write_json, write_manifest, Loaded,
};
use crate::svg;

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// CSV (smiles, label|ic50, optional name) or SDF file.
    pub input: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn featurize(a: &FeaturizeArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let mask = cfg.data.mask()?;
    let mode = cfg.data.conformation()?;
    let (graphs, failures) = split_entries(read_entries(&a.input, &cfg, &mask, mode, cfg.seeds[0])?);
    ensure!(!graphs.is_empty(), "no molecule in {} could be featurized", a.input.display());
    create_dir(&a.out)?;
    let n = graphs.len();
    GraphCache::new(&mask, &mode.to_string(), graphs).save(&a.out.join("graphs.bmc"))?;
    write_failures(&a.out.join("failures.csv"), &failures)?;
    write_manifest(&a.out, "featurize", &cfg, &[&a.input])?;
    println!("{n} graphs written to {}, {} failed", a.out.join("graphs.bmc").display(), failures.len());
    Ok(())
}

/// Labelled graphs for training. A cache's geometry mode is recorded back
/// into `cfg` so the written configuration describes what was used.
fn training_data(input: &Path, cfg: &mut RunConfig, out: &Path) -> Result<Loaded> {
    let mask = cfg.data.mask()?;
    let loaded = load_graphs(input, cfg, &mask, cfg.data.conformation()?, cfg.seeds[0])?;
    cfg.data.mode = loaded.mode.to_string();
    if !loaded.failures.is_empty() {
        write_failures(&out.join("failures.csv"), &loaded.failures)?;
    }
    ensure!(!loaded.graphs.is_empty(), "no usable molecules in {}", input.display());
    if let Some(g) = loaded.graphs.iter().find(|g| g.y.is_none()) {
        bail!("`{}` has no label", g.name);
    }
    Ok(loaded)
}

fn save_checkpoint(path: &Path, model: &Model, mask: &FeatureMask, mode: Conformation, seed: u64) -> Result<()> {
    Checkpoint::from_store(
        &model.store,
        mask,
        serde_json::to_value(&model.spec)?,
        json!({ "seed": seed, "mode": mode.to_string() }),
    )
    .save(path)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Model, FeatureMask, Conformation)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ckpt.check_manifest()?;
    let spec: ModelSpec = serde_json::from_value(ckpt.header.model_spec.clone())?;
    let model = Model::from_store(spec, ckpt.to_store()?)?;
    let mode = ckpt.header.metadata["mode"].as_str().unwrap_or("3d").parse()?;
    Ok((model, ckpt.header.feature_mask.clone(), mode))
}

fn print_summary(label: &str, metrics: &BTreeMap<String, Summary>) {
    let parts: Vec<String> = metrics
        .iter()
        .map(|(k, s)| format!("{k} {:.4} ± {:.4}", s.mean, s.margin))
        .collect();
    println!("{label}: {}", parts.join(", "));
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Graph cache or molecule file.
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    create_dir(&a.out)?;
    let data = training_data(&a.input, &mut cfg, &a.out)?;
    let mask = data.graphs[0].feature_mask.clone();
    let spec = cfg.model.spec(&mask);
    spec.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| blind_test_run(&spec, &data.graphs, &cfg.train, s, cfg.data.test_fraction, data.mode))
        .collect::<bmpnn_core::Result<Vec<_>>>()?;
    for (model, run) in &runs {
        let dir = a.out.join(format!("seed_{}", run.seed));
        create_dir(&dir)?;
        save_checkpoint(&dir.join("model.ckpt"), model, &mask, data.mode, run.seed)?;
        write_json(
            &dir.join("metrics.json"),
            &json!({ "seed": run.seed, "model": spec, "history": run.history, "test": run.test, "test_indices": run.test_indices }),
        )?;
    }
    let reports: Vec<_> = runs.iter().map(|(_, r)| r.test.clone()).collect();
    let metrics = aggregate(&reports);
    write_json(
        &a.out.join("aggregate.json"),
        &json!({ "variant": spec.variant, "task": spec.task, "seeds": cfg.seeds, "confidence": 0.95, "metrics": metrics }),
    )?;
    write_manifest(&a.out, "train", &cfg, &[&a.input])?;
    print_summary(&format!("{} over {} seeds", spec.variant, cfg.seeds.len()), &metrics);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled graph cache or molecule file.
    pub input: PathBuf,
    /// Write the metrics JSON here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let (model, mask, mode) = load_checkpoint(&a.checkpoint)?;
    let loaded = load_graphs(&a.input, &cfg, &mask, mode, cfg.seeds[0])?;
    ensure!(!loaded.graphs.is_empty(), "no usable molecules in {}", a.input.display());
    let report = evaluate_model(&model, &loaded.graphs)?;
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&serde_json::to_value(&report)?)?),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Graph cache or molecule file (labels optional).
    pub input: PathBuf,
    /// CSV output (stdout when omitted).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn csv_writer(out: &Option<PathBuf>) -> Result<csv::Writer<Box<dyn std::io::Write>>> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("writing {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    let (model, mask, mode) = load_checkpoint(&a.checkpoint)?;
    // Rows are written for every input molecule, so labels are not required.
    cfg.data.label_field = None;
    let rows: Vec<(String, std::result::Result<FeaturizedGraph, String>)> = match load_graphs_or_entries(&a.input, &cfg, &mask, mode)? {
        Either::Cache(graphs) => graphs.into_iter().map(|g| (g.name.clone(), Ok(g))).collect(),
        Either::Entries(entries) => entries
            .into_iter()
            .map(|e| (e.name, e.outcome.map(|(_, g)| g).map_err(|err| err.to_string())))
            .collect(),
    };
    let ok: Vec<FeaturizedGraph> = rows.iter().filter_map(|(_, r)| r.as_ref().ok().cloned()).collect();
    let raw = predict_raw(&model, &ok)?;
    let mut raw = raw.into_iter();
    let mut w = csv_writer(&a.out)?;
    let value_col = match model.spec.task {
        Task::Classification => "probability",
        Task::Regression => "value",
    };
    w.write_record(["row", "name", value_col, "error"])?;
    for (i, (name, r)) in rows.iter().enumerate() {
        let (value, err) = match r {
            Ok(_) => {
                let z = raw.next().expect("one prediction per graph");
                let v = match model.spec.task {
                    Task::Classification => sigmoid(z),
                    Task::Regression => z,
                };
                (v.to_string(), String::new())
            }
            Err(e) => (String::new(), e.clone()),
        };
        w.write_record([(i + 1).to_string(), name.clone(), value, err])?;
    }
    w.flush()?;
    Ok(())
}

enum Either {
    Cache(Vec<FeaturizedGraph>),
    Entries(Vec<bmpnn_core::pipeline::Entry>),
}

fn load_graphs_or_entries(input: &Path, cfg: &RunConfig, mask: &FeatureMask, mode: Conformation) -> Result<Either> {
    if crate::io::is_cache(input)? {
        Ok(Either::Cache(load_graphs(input, cfg, mask, mode, cfg.seeds[0])?.graphs))
    } else {
        Ok(Either::Entries(read_entries(input, cfg, mask, mode, cfg.seeds[0])?))
    }
}

#[derive(Debug, Args)]
pub struct RelevanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Graph cache or molecule file.
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also write one SVG depiction per molecule.
    #[arg(long)]
    pub svg: bool,
    /// With exactly two molecules (e.g. a stereoisomer pair), write a
    /// per-atom score difference table.
    #[arg(long)]
    pub diff: bool,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn file_stem(name: &str, row: usize) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{row:04}_{clean}")
}

pub fn relevance(a: &RelevanceArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    cfg.data.label_field = None;
    let (model, mask, mode) = load_checkpoint(&a.checkpoint)?;
    let items: Vec<(bmpnn_core::chem::Molecule, FeaturizedGraph)> = match load_graphs_or_entries(&a.input, &cfg, &mask, mode)? {
        Either::Cache(graphs) => graphs
            .into_iter()
            .map(|g| Ok((reparse(&g)?, g)))
            .collect::<Result<_>>()?,
        Either::Entries(entries) => {
            let mut v = Vec::new();
            for e in entries {
                match e.outcome {
                    Ok(pair) => v.push(pair),
                    Err(err) => log::warn!("row {}: `{}` skipped: {err}", e.row, e.name),
                }
            }
            v
        }
    };
    ensure!(!items.is_empty(), "no usable molecules in {}", a.input.display());
    create_dir(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("relevance.csv"))?;
    w.write_record(["molecule", "atom_index", "element", "score"])?;
    let mut all_scores = Vec::with_capacity(items.len());
    for (k, (m, g)) in items.iter().enumerate() {
        ensure!(
            m.atom_count() == g.n_atoms,
            "`{}`: molecule has {} atoms but the graph has {}",
            g.name,
            m.atom_count(),
            g.n_atoms
        );
        let scores = model.relevance(&Batch::from_graphs([g])?)?.remove(0);
        for (i, s) in scores.iter().enumerate() {
            w.write_record([g.name.clone(), i.to_string(), m.atoms[i].symbol().to_string(), s.to_string()])?;
        }
        if a.svg {
            let path = a.out.join(format!("{}.svg", file_stem(&g.name, k + 1)));
            fs::write(&path, svg::render(m, &scores, &g.name))?;
        }
        all_scores.push(scores);
    }
    w.flush()?;
    if a.diff {
        ensure!(items.len() == 2, "--diff needs exactly two molecules, got {}", items.len());
        let (ma, mb) = (&items[0].0, &items[1].0);
        ensure!(
            ma.atom_count() == mb.atom_count(),
            "--diff needs molecules with the same atom count"
        );
        let mut d = csv::Writer::from_path(a.out.join("difference.csv"))?;
        d.write_record(["atom_index", "element", &items[0].1.name, &items[1].1.name, "difference"])?;
        let (mut sa, mut sb) = (0.0, 0.0);
        for i in 0..ma.atom_count() {
            let (x, y) = (all_scores[0][i], all_scores[1][i]);
            sa += x;
            sb += y;
            d.write_record([i.to_string(), ma.atoms[i].symbol().to_string(), x.to_string(), y.to_string(), (x - y).to_string()])?;
        }
        d.write_record(["sum".to_string(), String::new(), sa.to_string(), sb.to_string(), (sa - sb).to_string()])?;
        d.flush()?;
    }
    write_manifest(&a.out, "relevance", &cfg, &[&a.checkpoint, &a.input])?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Labelled graph cache or molecule file (binary labels).
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn select(a: &SelectArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(r) = a.max_rounds {
        cfg.selection.max_rounds = r;
    }
    ensure!(cfg.model.task == Task::Classification, "feature selection is scored by F1 and needs a classification task");
    create_dir(&a.out)?;
    let data = training_data(&a.input, &mut cfg, &a.out)?;
    let initial = data.graphs[0].feature_mask.clone();
    let sel = SelectionConfig {
        variant: cfg.model.variant,
        hidden: cfg.model.hidden,
        dropout: cfg.model.dropout,
        train: cfg.train.clone(),
        max_rounds: cfg.selection.max_rounds,
    };
    let result = select_features(&data.graphs, &initial, &sel)?;
    fs::write(a.out.join("ranking.csv"), result.ranking_csv())?;
    write_json(&a.out.join("selection.json"), &result)?;
    write_json(&a.out.join("features.json"), &json!({ "features": result.mask.active_names() }))?;
    write_manifest(&a.out, "select-features", &cfg, &[&a.input])?;
    println!(
        "kept {} of {} features; F1 {:.4} -> {:.4}; eliminated: {}",
        result.mask.count(),
        initial.count(),
        result.initial_f1,
        result.final_f1,
        result.eliminated.join(", ")
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Labelled graph cache or molecule file.
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn tune(a: &TuneArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(t) = a.trials {
        cfg.tune.trials = t;
    }
    create_dir(&a.out)?;
    let data = training_data(&a.input, &mut cfg, &a.out)?;
    let template = cfg.model.spec(&data.graphs[0].feature_mask);
    let result = run_tuning(&data.graphs, &template, &cfg.train, &cfg.tune.space, cfg.tune.trials, cfg.seeds[0])?;
    write_json(&a.out.join("tune.json"), &result)?;
    write_manifest(&a.out, "tune", &cfg, &[&a.input])?;
    let best = result.best();
    println!(
        "{} trials, {} pruned, {} on the front; chosen: hidden {} dropout {:.3} batch {} (gap {:.4}, score {:.4})",
        result.trials.len(),
        result.trials.iter().filter(|t| t.pruned).count(),
        result.pareto.len(),
        best.hidden,
        best.dropout,
        best.batch_size,
        best.loss_gap,
        best.score
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    /// Molecule file or graph cache (labels not needed).
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Tanimoto similarity threshold for joining a cluster.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn diversity(a: &DiversityArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(t) = a.threshold {
        cfg.diversity.threshold = t;
    }
    ensure!((0.0..=1.0).contains(&cfg.diversity.threshold), "threshold must be in [0, 1]");
    cfg.data.label_field = None;
    let mask = cfg.data.mask()?;
    let mols: Vec<(String, bmpnn_core::chem::Molecule)> = match load_graphs_or_entries(&a.input, &cfg, &mask, Conformation::TwoD)? {
        Either::Cache(graphs) => graphs
            .iter()
            .map(|g| Ok((g.name.clone(), reparse(g)?)))
            .collect::<Result<_>>()?,
        Either::Entries(entries) => entries
            .into_iter()
            .filter_map(|e| match e.outcome {
                Ok((m, _)) => Some((e.name, m)),
                Err(err) => {
                    log::warn!("row {}: `{}` skipped: {err}", e.row, e.name);
                    None
                }
            })
            .collect(),
    };
    ensure!(!mols.is_empty(), "no usable molecules in {}", a.input.display());
    let fps: Vec<_> = mols.par_iter().map(|(_, m)| fingerprint(m)).collect();
    let report = cluster(&fps, cfg.diversity.threshold)?;
    create_dir(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("clusters.csv"))?;
    w.write_record(["molecule", "cluster"])?;
    for ((name, _), c) in mols.iter().zip(&report.assignment) {
        w.write_record([name.clone(), c.to_string()])?;
    }
    w.flush()?;
    write_json(
        &a.out.join("summary.json"),
        &json!({
            "molecules": mols.len(),
            "threshold": cfg.diversity.threshold,
            "clusters": report.n_clusters(),
            "singletons": report.singletons,
            "entropy_bits": report.entropy_bits,
            "sizes": report.sizes,
        }),
    )?;
    write_manifest(&a.out, "diversity", &cfg, &[&a.input])?;
    println!(
        "{} molecules, {} clusters ({} singletons), entropy {:.4} bits",
        mols.len(),
        report.n_clusters(),
        report.singletons,
        report.entropy_bits
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Labelled molecule file (CSV or SDF).
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Coordinate noise (Å) for the noisy arm.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn ablate3d(a: &AblateArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(s) = a.sigma {
        cfg.ablation.noise_sigma = s;
    }
    ensure!(
        cfg.ablation.noise_sigma >= 0.0 && cfg.ablation.noise_sigma.is_finite(),
        "noise sigma must be nonnegative"
    );
    ensure!(!crate::io::is_cache(&a.input)?, "ablate3d re-featurizes molecules; pass the CSV or SDF file");
    create_dir(&a.out)?;
    let arms = [
        Conformation::ThreeD,
        Conformation::Noisy3D {
            sigma: cfg.ablation.noise_sigma,
        },
        Conformation::TwoD,
    ];
    let mask = cfg.data.mask()?;
    let mut table = Vec::new();
    let mut w = csv::Writer::from_path(a.out.join("ablation.csv"))?;
    w.write_record(["arm", "metric", "mean", "margin", "median"])?;
    for arm in arms {
        let mut arm_cfg = RunConfig {
            data: with_mode(&cfg, arm),
            ..cfg.clone()
        };
        let data = training_data(&a.input, &mut arm_cfg, &a.out)?;
        let spec = cfg.model.spec(&mask);
        spec.validate()?;
        let runs = cfg
            .seeds
            .par_iter()
            .map(|&s| blind_test_run(&spec, &data.graphs, &cfg.train, s, cfg.data.test_fraction, arm).map(|(_, r)| r.test))
            .collect::<bmpnn_core::Result<Vec<_>>>()?;
        let metrics = aggregate(&runs);
        for (k, s) in &metrics {
            w.write_record([arm.to_string(), k.clone(), s.mean.to_string(), s.margin.to_string(), s.median.to_string()])?;
        }
        print_summary(&arm.to_string(), &metrics);
        table.push(json!({ "arm": arm.to_string(), "metrics": metrics }));
    }
    w.flush()?;
    write_json(&a.out.join("ablation.json"), &json!({ "seeds": cfg.seeds, "arms": table }))?;
    write_manifest(&a.out, "ablate3d", &cfg, &[&a.input])?;
    Ok(())
}

fn with_mode(cfg: &RunConfig, arm: Conformation) -> crate::config::DataSection {
    crate::config::DataSection {
        mode: arm.to_string(),
        ..cfg.data.clone()
    }
}
