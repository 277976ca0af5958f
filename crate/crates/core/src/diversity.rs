//! Hashed path fingerprints, threshold leader clustering and Shannon entropy.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chem::Molecule;
use crate::error::{Error, Result};

pub const FP_BITS: usize = 2048;
pub const MAX_PATH_BONDS: usize = 7;
pub const CLUSTER_THRESHOLD: f64 = 0.70;
const FP_SEED: u64 = 0x5eed_f1a9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn zeros(width: usize) -> Self {
        Fingerprint {
            words: vec![0; width.div_ceil(64)],
        }
    }

    pub fn from_bits(width: usize, on: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::zeros(width);
        for b in on {
            fp.set(b);
        }
        fp
    }

    pub fn width(&self) -> usize {
        self.words.len() * 64
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn on_bits(&self) -> Vec<usize> {
        (0..self.width()).filter(|&b| self.get(b)).collect()
    }
}

/// Canonical key for a path: element and bond-order sequence, read in the
/// lexicographically smaller direction.
fn path_key(m: &Molecule, atoms: &[usize], bonds: &[usize]) -> Vec<u8> {
    let fwd: Vec<u8> = interleave(m, atoms.iter().copied(), bonds.iter().copied());
    let rev: Vec<u8> = interleave(m, atoms.iter().rev().copied(), bonds.iter().rev().copied());
    fwd.min(rev)
}

fn interleave(m: &Molecule, atoms: impl Iterator<Item = usize>, mut bonds: impl Iterator<Item = usize>) -> Vec<u8> {
    let mut out = Vec::new();
    for a in atoms {
        out.push(m.atoms[a].element);
        out.push(u8::from(m.atoms[a].aromatic));
        if let Some(b) = bonds.next() {
            out.push(m.bonds[b].order as u8 + 1);
        }
    }
    out
}

/// All simple paths of 1..=`MAX_PATH_BONDS` bonds, as canonical keys.
fn path_keys(m: &Molecule) -> BTreeSet<Vec<u8>> {
    let adj = m.adjacency();
    let mut keys = BTreeSet::new();
    let mut atoms = Vec::new();
    let mut bonds = Vec::new();
    let mut on_path = vec![false; m.atoms.len()];
    fn dfs(
        m: &Molecule,
        adj: &[Vec<(usize, usize)>],
        atoms: &mut Vec<usize>,
        bonds: &mut Vec<usize>,
        on_path: &mut [bool],
        keys: &mut BTreeSet<Vec<u8>>,
    ) {
        let tip = *atoms.last().expect("path has a start atom");
        for &(nb, bi) in &adj[tip] {
            if on_path[nb] {
                continue;
            }
            atoms.push(nb);
            bonds.push(bi);
            on_path[nb] = true;
            // Each undirected path is reached from both ends; keep one.
            if atoms[0] < nb {
                keys.insert(path_key(m, atoms, bonds));
            }
            if bonds.len() < MAX_PATH_BONDS {
                dfs(m, adj, atoms, bonds, on_path, keys);
            }
            on_path[nb] = false;
            atoms.pop();
            bonds.pop();
        }
    }
    for start in 0..m.atoms.len() {
        atoms.push(start);
        on_path[start] = true;
        dfs(m, &adj, &mut atoms, &mut bonds, &mut on_path, &mut keys);
        on_path[start] = false;
        atoms.pop();
    }
    keys
}

/// 2048-bit hashed linear-path fingerprint, two bits per distinct path.
pub fn fingerprint(m: &Molecule) -> Fingerprint {
    let mut fp = Fingerprint::zeros(FP_BITS);
    let keys = path_keys(m);
    if keys.is_empty() {
        log::info!("`{}` has no bond paths; fingerprint is empty", m.name);
    }
    for key in keys {
        let mut h = Sha256::new();
        h.update(FP_SEED.to_le_bytes());
        h.update(&key);
        let d = h.finalize();
        for k in 0..2 {
            let word = u64::from_le_bytes(d[8 * k..8 * k + 8].try_into().expect("8-byte slice"));
            fp.set((word % FP_BITS as u64) as usize);
        }
    }
    fp
}

/// |a ∧ b| / |a ∨ b|; two empty fingerprints are identical (1).
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.width() != b.width() {
        return Err(Error::FingerprintWidth(a.width(), b.width()));
    }
    let (mut and, mut or) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        and += (x & y).count_ones();
        or += (x | y).count_ones();
    }
    Ok(if or == 0 { 1.0 } else { f64::from(and) / f64::from(or) })
}

pub fn jaccard_distance(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    Ok(1.0 - tanimoto(a, b)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Cluster id per input fingerprint.
    pub assignment: Vec<usize>,
    /// Size per cluster id.
    pub sizes: Vec<usize>,
    pub leaders: Vec<usize>,
    pub singletons: usize,
    pub entropy_bits: f64,
}

impl ClusterReport {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }
}

/// Leader clustering: molecules are visited in descending order of how many
/// neighbours they have at `threshold`; an unassigned molecule founds a
/// cluster and absorbs every unassigned molecule similar to it.
pub fn cluster(fps: &[Fingerprint], threshold: f64) -> Result<ClusterReport> {
    if fps.is_empty() {
        return Err(Error::Dataset("nothing to cluster".into()));
    }
    let w = fps[0].width();
    if let Some(f) = fps.iter().find(|f| f.width() != w) {
        return Err(Error::FingerprintWidth(w, f.width()));
    }
    let n = fps.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && tanimoto(&fps[i], &fps[j]).expect("equal widths") >= threshold)
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| neighbours[b].len().cmp(&neighbours[a].len()).then(a.cmp(&b)));
    let mut assignment = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut leaders = Vec::new();
    for &i in &order {
        if assignment[i] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        assignment[i] = id;
        let mut size = 1;
        for &j in &neighbours[i] {
            if assignment[j] == usize::MAX {
                assignment[j] = id;
                size += 1;
            }
        }
        sizes.push(size);
        leaders.push(i);
    }
    let singletons = sizes.iter().filter(|&&s| s == 1).count();
    let entropy_bits = shannon_entropy(&sizes)?;
    Ok(ClusterReport {
        assignment,
        sizes,
        leaders,
        singletons,
        entropy_bits,
    })
}

/// −Σ p log2 p over cluster occupancy fractions.
pub fn shannon_entropy(sizes: &[usize]) -> Result<f64> {
    let total: usize = sizes.iter().sum();
    if sizes.is_empty() || total == 0 || sizes.contains(&0) {
        return Err(Error::Metric("entropy needs positive cluster sizes".into()));
    }
    let h: f64 = sizes
        .iter()
        .map(|&s| {
            let p = s as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    Ok(h.max(0.0))
}
