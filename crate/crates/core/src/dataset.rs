//! Labelled molecule tables, splits, class balancing and augmentation.

use std::io::Read;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{parse_smiles, randomized_smiles, standardize};
use crate::error::{Error, Result};

/// Default activity cut-off in nM.
pub const ACTIVITY_THRESHOLD_NM: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    pub smiles: String,
    pub label: f64,
}

/// Read `name,smiles,label` rows. With `ic50_threshold`, an `ic50` column
/// (nM) is converted to binary labels instead.
pub fn read_csv<R: Read>(reader: R, ic50_threshold: Option<f64>) -> Result<Vec<Record>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Dataset(e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let smiles_col = col("smiles").ok_or_else(|| Error::Dataset("missing `smiles` column".into()))?;
    let name_col = col("name");
    let value_col = match ic50_threshold {
        Some(_) => col("ic50").ok_or_else(|| Error::Dataset("missing `ic50` column".into()))?,
        None => col("label").ok_or_else(|| Error::Dataset("missing `label` column".into()))?,
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
        let line = row + 2;
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        let raw = field(value_col);
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::Dataset(format!("row {line}: cannot parse value `{raw}`")))?;
        let label = match ic50_threshold {
            Some(t) => activity_threshold(&[value], t)
                .map_err(|e| Error::Dataset(format!("row {line}: {e}")))?[0],
            None => value,
        };
        out.push(Record {
            name: name_col.map(field).unwrap_or_else(|| format!("mol{}", row + 1)),
            smiles: field(smiles_col),
            label,
        });
    }
    Ok(out)
}

/// 1 for IC50 ≤ threshold (nM), else 0.
pub fn activity_threshold(ic50_nm: &[f64], threshold_nm: f64) -> Result<Vec<f64>> {
    ic50_nm
        .iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(if v <= threshold_nm { 1.0 } else { 0.0 })
            } else {
                Err(Error::Dataset(format!("IC50 must be positive, got {v}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Hold out 20% as a blind test set.
    BlindTest20,
    KFold(usize),
}

/// Shuffled indices. When stratifying, each class is shuffled separately and
/// the classes are either interleaved by relative position (so every prefix
/// is approximately class-balanced) or concatenated (so round-robin fold
/// assignment spreads each class evenly).
fn stratified_order(labels: &[f64], stratify: bool, interleave: bool, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !stratify {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut rng);
        return idx;
    }
    let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        match classes.iter_mut().find(|(c, _)| *c == y) {
            Some((_, v)) => v.push(i),
            None => classes.push((y, vec![i])),
        }
    }
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut keyed = Vec::with_capacity(labels.len());
    for (ci, (_, members)) in classes.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        for (k, &i) in members.iter().enumerate() {
            keyed.push(((k as f64 + 0.5) / n, ci, i));
        }
    }
    if !interleave {
        return keyed.into_iter().map(|(_, _, i)| i).collect();
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// `(train, test)` index sets with a 20% (rounded) test fraction.
pub fn blind_split(labels: &[f64], stratify: bool, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    holdout_split(labels, 0.2, stratify, seed)
}

pub fn holdout_split(labels: &[f64], fraction: f64, stratify: bool, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.is_empty() {
        return Err(Error::Dataset("cannot split an empty dataset".into()));
    }
    let order = stratified_order(labels, stratify, true, seed);
    let n_test = ((labels.len() as f64) * fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// `k` folds of `(train, validation)` indices; validation sets are disjoint
/// and cover the dataset.
pub fn kfold(labels: &[f64], k: usize, stratify: bool, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > labels.len() {
        return Err(Error::Dataset(format!("{k}-fold split of {} samples", labels.len())));
    }
    let order = stratified_order(labels, stratify, false, seed);
    let mut folds = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            let train = (0..labels.len()).filter(|i| val.binary_search(i).is_err()).collect();
            (train, val)
        })
        .collect())
}

pub fn split(labels: &[f64], mode: SplitMode, stratify: bool, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    match mode {
        SplitMode::BlindTest20 => Ok(vec![blind_split(labels, stratify, seed)?]),
        SplitMode::KFold(k) => kfold(labels, k, stratify, seed),
    }
}

fn class_counts(labels: &[f64]) -> Result<(usize, usize)> {
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Dataset(format!("binary labels expected, found {y}")));
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    Ok((labels.len() - pos, pos))
}

/// Per-sample weight 1/|class|.
pub fn class_weights(labels: &[f64]) -> Result<Vec<f64>> {
    let (neg, pos) = class_counts(labels)?;
    if neg == 0 || pos == 0 {
        return Err(Error::Dataset("class weights need both classes".into()));
    }
    Ok(labels
        .iter()
        .map(|&y| 1.0 / if y == 1.0 { pos } else { neg } as f64)
        .collect())
}

/// Draw `n` indices with replacement, proportionally to `weights`.
pub fn weighted_sample<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Dataset(format!("sampling weights: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Append randomized-SMILES copies of minority-class molecules until the
/// classes balance, at most one copy per original.
pub fn augment_minority(records: &[Record], seed: u64) -> Result<Vec<Record>> {
    let labels: Vec<f64> = records.iter().map(|r| r.label).collect();
    let (neg, pos) = class_counts(&labels)?;
    let minority = if pos < neg { 1.0 } else { 0.0 };
    let need = neg.max(pos) - neg.min(pos);
    let mut out = records.to_vec();
    if need == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == minority).collect();
    pool.shuffle(&mut rng);
    let mut added = 0;
    for i in pool {
        if added == need {
            break;
        }
        let r = &records[i];
        let mol = match parse_smiles(&r.smiles).map_err(Error::from).and_then(|m| standardize(&m)) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("cannot augment `{}`: {e}", r.name);
                continue;
            }
        };
        out.push(Record {
            name: format!("{}_aug", r.name),
            smiles: randomized_smiles(&mol, rng.random()),
            label: r.label,
        });
        added += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use petgraph::algo::is_isomorphic_matching;
    use petgraph::graph::UnGraph;

    fn labels(pos: usize, neg: usize) -> Vec<f64> {
        let mut v = vec![1.0; pos];
        v.extend(vec![0.0; neg]);
        v
    }

    #[test]
    fn blind_split_sizes_and_determinism() {
        let y = labels(50, 50);
        let (tr, te) = blind_split(&y, true, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        assert_eq!(te.iter().filter(|&&i| y[i] == 1.0).count(), 10);
        assert_eq!(blind_split(&y, true, 7).unwrap(), (tr.clone(), te.clone()));
        assert_ne!(blind_split(&y, true, 8).unwrap().1, te);
    }

    #[test]
    fn kfold_disjoint_cover() {
        let y = labels(30, 70);
        let folds = kfold(&y, 5, true, 1).unwrap();
        let mut seen = vec![0; 100];
        for (tr, va) in &folds {
            assert_eq!(va.len(), 20);
            assert_eq!(tr.len() + va.len(), 100);
            assert_eq!(va.iter().filter(|&&i| y[i] == 1.0).count(), 6);
            for &i in va {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(kfold(&y[..3], 5, true, 1).is_err());
    }

    #[test]
    fn weights_reciprocal_of_counts() {
        assert_eq!(class_weights(&[1.0, 1.0, 1.0, 0.0]).unwrap(), vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]);
        assert_eq!(class_weights(&[1.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert!(class_weights(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn weighted_sampling_balances_classes() {
        let y = labels(20, 80);
        let w = class_weights(&y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = weighted_sample(&w, 100_000, &mut rng).unwrap();
        let pos = draws.iter().filter(|&&i| y[i] == 1.0).count() as f64;
        let ratio = pos / (100_000.0 - pos);
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn activity_cutoff() {
        assert_eq!(activity_threshold(&[50.0, 100.0, 5000.0], 100.0).unwrap(), vec![1.0, 1.0, 0.0]);
        assert!(activity_threshold(&[0.0], 100.0).is_err());
    }

    fn graph(smiles: &str) -> UnGraph<u8, ()> {
        let m = parse_smiles(smiles).unwrap();
        let mut g = UnGraph::new_undirected();
        let nodes: Vec<_> = m.atoms.iter().map(|a| g.add_node(a.element)).collect();
        for b in &m.bonds {
            g.add_edge(nodes[b.a], nodes[b.b], ());
        }
        g
    }

    #[test]
    fn augmentation_balances_with_isomorphic_copies() {
        let smiles = ["CCO", "c1ccccc1O", "CC(=O)N", "CCN", "OCCO", "CCCl"];
        let mut recs: Vec<Record> = (0..10)
            .map(|i| Record {
                name: format!("n{i}"),
                smiles: "CC".into(),
                label: 0.0,
            })
            .collect();
        recs.extend(smiles.iter().map(|s| Record {
            name: s.to_string(),
            smiles: s.to_string(),
            label: 1.0,
        }));
        let out = augment_minority(&recs, 5).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(&out[..16], &recs[..]);
        for aug in &out[16..] {
            let src = recs.iter().find(|r| format!("{}_aug", r.name) == aug.name).unwrap();
            assert!(is_isomorphic_matching(&graph(&src.smiles), &graph(&aug.smiles), |a, b| a == b, |_, _| true));
        }
        let balanced = &recs[4..];
        assert_eq!(augment_minority(balanced, 1).unwrap(), balanced.to_vec());
    }

    #[test]
    fn csv_reading() {
        let text = "name,smiles,label\na,CCO,1\nb,CCN,0\n";
        let recs = read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].label, 0.0);
        let text = "smiles,IC50\nCCO,50\nCCN,250\n";
        let recs = read_csv(text.as_bytes(), Some(100.0)).unwrap();
        assert_eq!(recs.iter().map(|r| r.label).collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert_eq!(recs[0].name, "mol1");
        assert!(read_csv("smiles,label\nCCO,x\n".as_bytes(), None).is_err());
    }
}
