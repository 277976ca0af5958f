//! From input rows to featurized graphs, with per-row failure reporting.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::sdf::parse_sdf_records;
use crate::chem::{parse_smiles, perturb_coordinates, standardize, Molecule};
use crate::dataset::{augment_minority, Record};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureMask, FeaturizedGraph};
use crate::layout;

/// Which geometry the features are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conformation {
    /// Graph-only features (no coordinates).
    TwoD,
    /// Input coordinates, or a deterministic graph-layout embedding when the
    /// input has none.
    ThreeD,
    /// `ThreeD` with Gaussian noise (σ in Å) on every coordinate.
    Noisy3D { sigma: f64 },
}

impl fmt::Display for Conformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conformation::TwoD => f.write_str("2d"),
            Conformation::ThreeD => f.write_str("3d"),
            Conformation::Noisy3D { sigma } => write!(f, "noisy3d:{sigma}"),
        }
    }
}

impl FromStr for Conformation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "2d" => Ok(Conformation::TwoD),
            "3d" => Ok(Conformation::ThreeD),
            _ => {
                let sigma = s
                    .strip_prefix("noisy3d:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| *v >= 0.0 && v.is_finite())
                    .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (2d, 3d, noisy3d:<sigma>)")))?;
                Ok(Conformation::Noisy3D { sigma })
            }
        }
    }
}

/// Give `m` the geometry requested by `mode`.
pub fn conform(m: &Molecule, mode: Conformation, seed: u64) -> Result<Molecule> {
    let mut out = m.clone();
    match mode {
        Conformation::TwoD => {
            out.has_3d = false;
            for a in &mut out.atoms {
                a.position = None;
            }
            Ok(out)
        }
        Conformation::ThreeD => {
            if !(out.has_3d && out.positions().is_some()) {
                let pos = layout::embed(&out, 3);
                for (a, p) in out.atoms.iter_mut().zip(pos) {
                    a.position = Some(p);
                }
                out.has_3d = true;
            }
            Ok(out)
        }
        Conformation::Noisy3D { sigma } => perturb_coordinates(&conform(m, Conformation::ThreeD, seed)?, sigma, seed),
    }
}

/// A row that could not be turned into a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// 1-based data row (CSV rows exclude the header; SDF counts records).
    pub row: usize,
    pub name: String,
    pub reason: String,
}

/// One input row after preparation: the standardized, conformed molecule and
/// its graph, or the reason it was rejected.
#[derive(Debug)]
pub struct Entry {
    /// 1-based data row (CSV rows exclude the header; SDF counts records).
    pub row: usize,
    pub name: String,
    pub outcome: Result<(Molecule, FeaturizedGraph)>,
}

fn prepare(
    m: &Molecule,
    name: &str,
    smiles: &str,
    label: Option<f64>,
    mask: &FeatureMask,
    mode: Conformation,
    seed: u64,
) -> Result<(Molecule, FeaturizedGraph)> {
    let m = standardize(m)?;
    let m = conform(&m, mode, seed)?;
    let mut g = featurize(&m, mask, label)?;
    g.name = name.to_string();
    g.smiles = smiles.to_string();
    Ok((m, g))
}

/// Parse, standardize, conform and featurize table rows in parallel;
/// output order follows input order.
pub fn prepare_records(records: &[Record], mask: &FeatureMask, mode: Conformation, seed: u64) -> Vec<Entry> {
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| Entry {
            row: i + 1,
            name: r.name.clone(),
            outcome: parse_smiles(&r.smiles)
                .map_err(Error::from)
                .and_then(|m| prepare(&m, &r.name, &r.smiles, Some(r.label), mask, mode, seed.wrapping_add(i as u64))),
        })
        .collect()
}

/// As [`prepare_records`] for SDF input. The label is read from the data
/// field `label_field` when given; the name from the title line.
pub fn prepare_sdf(
    bytes: &[u8],
    label_field: Option<&str>,
    mask: &FeatureMask,
    mode: Conformation,
    seed: u64,
) -> Result<Vec<Entry>> {
    let recs = parse_sdf_records(bytes)?;
    Ok(recs
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let m = &r.molecule;
            let name = if m.name.is_empty() { format!("mol{}", i + 1) } else { m.name.clone() };
            let label = match label_field {
                Some(f) => match r.fields.get(f) {
                    None => Err(Error::Dataset(format!("missing data field `{f}`"))),
                    Some(raw) => raw
                        .trim()
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Dataset(format!("cannot parse `{f}` value `{raw}`"))),
                },
                None => Ok(None),
            };
            let outcome =
                label.and_then(|label| prepare(m, &name, &m.source_smiles, label, mask, mode, seed.wrapping_add(i as u64)));
            Entry { row: i + 1, name, outcome }
        })
        .collect())
}

/// Featurize table rows; failures are logged and returned with their row.
pub fn featurize_records(
    records: &[Record],
    mask: &FeatureMask,
    mode: Conformation,
    seed: u64,
) -> (Vec<FeaturizedGraph>, Vec<Failure>) {
    split_entries(prepare_records(records, mask, mode, seed))
}

pub fn featurize_sdf(
    bytes: &[u8],
    label_field: Option<&str>,
    mask: &FeatureMask,
    mode: Conformation,
    seed: u64,
) -> Result<(Vec<FeaturizedGraph>, Vec<Failure>)> {
    Ok(split_entries(prepare_sdf(bytes, label_field, mask, mode, seed)?))
}

/// Balance a binary-labelled training set with randomized-SMILES copies of
/// minority-class molecules, re-featurized under `mode`. Molecules without a
/// stored SMILES are not augmented.
pub fn augment_graphs(graphs: &[FeaturizedGraph], mode: Conformation, seed: u64) -> Result<Vec<FeaturizedGraph>> {
    let Some(first) = graphs.first() else {
        return Ok(Vec::new());
    };
    let records: Vec<Record> = graphs
        .iter()
        .map(|g| {
            let label = g.y.ok_or_else(|| Error::Dataset(format!("`{}` has no label", g.name)))?;
            Ok(Record {
                name: g.name.clone(),
                smiles: g.smiles.clone(),
                label,
            })
        })
        .collect::<Result<_>>()?;
    let usable: Vec<Record> = records.iter().filter(|r| !r.smiles.is_empty()).cloned().collect();
    let extra = augment_minority(&usable, seed)?.split_off(usable.len());
    let (new, _) = featurize_records(&extra, &first.feature_mask, mode, seed);
    log::info!("augmentation added {} minority-class molecules", new.len());
    let mut out = graphs.to_vec();
    out.extend(new);
    Ok(out)
}

/// Separate successes from failures, logging each failure.
pub fn split_entries(entries: Vec<Entry>) -> (Vec<FeaturizedGraph>, Vec<Failure>) {
    let mut graphs = Vec::new();
    let mut failures = Vec::new();
    for e in entries {
        match e.outcome {
            Ok((_, g)) => graphs.push(g),
            Err(err) => {
                let f = Failure {
                    row: e.row,
                    name: e.name,
                    reason: err.to_string(),
                };
                log::warn!("row {}: `{}` skipped: {}", f.row, f.name, f.reason);
                failures.push(f);
            }
        }
    }
    (graphs, failures)
}
