//! Input loading, output writing and the per-run reproducibility manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bmpnn_core::checkpoint::{GraphCache, CACHE_MAGIC};
use bmpnn_core::chem::{parse_smiles, standardize, Molecule};
use bmpnn_core::dataset::read_csv;
use bmpnn_core::features::{FeatureMask, FeaturizedGraph};
use bmpnn_core::pipeline::{prepare_records, prepare_sdf, split_entries, Conformation, Entry, Failure};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn is_cache(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 8];
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(f.read(&mut head)? == 8 && &head == CACHE_MAGIC)
}

fn is_sdf(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("sdf" | "sd" | "mol")
    )
}

/// Parse a CSV or SDF molecule file into prepared entries.
pub fn read_entries(path: &Path, cfg: &RunConfig, mask: &FeatureMask, mode: Conformation, seed: u64) -> Result<Vec<Entry>> {
    if is_sdf(path) {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(prepare_sdf(&bytes, cfg.data.label_field.as_deref(), mask, mode, seed)?)
    } else {
        let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let records = read_csv(f, cfg.data.ic50_threshold).with_context(|| format!("reading {}", path.display()))?;
        Ok(prepare_records(&records, mask, mode, seed))
    }
}

pub struct Loaded {
    pub graphs: Vec<FeaturizedGraph>,
    pub failures: Vec<Failure>,
    pub mode: Conformation,
}

/// Load graphs from a graph cache or featurize a molecule file. A cache
/// keeps its own mask and mode; `mask` must then be a subset of its mask.
pub fn load_graphs(path: &Path, cfg: &RunConfig, mask: &FeatureMask, mode: Conformation, seed: u64) -> Result<Loaded> {
    if is_cache(path)? {
        let cache = GraphCache::load(path).with_context(|| format!("loading {}", path.display()))?;
        cache.check_manifest()?;
        let cache_mode: Conformation = cache.header.mode.parse()?;
        let graphs = if *mask == cache.header.feature_mask {
            cache.graphs
        } else if mask.is_subset_of(&cache.header.feature_mask) {
            cache.graphs.iter().map(|g| g.with_mask(mask)).collect::<bmpnn_core::Result<_>>()?
        } else {
            bail!("{} lacks features required by the model", path.display());
        };
        return Ok(Loaded {
            graphs,
            failures: Vec::new(),
            mode: cache_mode,
        });
    }
    let (graphs, failures) = split_entries(read_entries(path, cfg, mask, mode, seed)?);
    Ok(Loaded { graphs, failures, mode })
}

/// Re-parse a cached graph's SMILES into the molecule it was built from.
pub fn reparse(g: &FeaturizedGraph) -> Result<Molecule> {
    if g.smiles.is_empty() {
        bail!("`{}` carries no SMILES; use the original molecule file", g.name);
    }
    let m = standardize(&parse_smiles(&g.smiles)?)?;
    if m.atom_count() != g.n_atoms {
        bail!(
            "`{}`: re-parsed molecule has {} atoms but the graph has {}",
            g.name,
            m.atom_count(),
            g.n_atoms
        );
    }
    Ok(m)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    // Round-trip through `Value` so map keys come out sorted.
    let v = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_failures(path: &Path, failures: &[Failure]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["row", "name", "reason"])?;
    for f in failures {
        w.write_record([f.row.to_string(), f.name.clone(), f.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    seeds: &'a [u64],
    config: serde_json::Value,
    inputs: Vec<InputHash>,
}

/// Write `config.toml` (the resolved configuration; pass it back with
/// `--config` to rerun) and `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<()> {
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(InputHash {
                path: p.to_path_buf(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            seeds: &cfg.seeds,
            config: serde_json::to_value(cfg)?,
            inputs,
        },
    )
}
