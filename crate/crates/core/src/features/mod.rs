//! Node, edge and global feature vectors with fixed order and scaling.

pub mod descriptors;
pub mod geometry;

use std::sync::Once;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chem::{BondOrder, Hybridization, Molecule};
use crate::elements;
use crate::error::{Error, Result};

pub const ATOM_FEATURES: [&str; 6] = [
    "atomic_number",
    "hybridization",
    "electronegativity",
    "dipole_polarizability",
    "vdw_radius",
    "buried_volume",
];
pub const BOND_FEATURES: [&str; 4] = ["bond_length", "conjugated", "bond_type", "ring_size"];
pub const GLOBAL_FEATURES: [&str; 6] = [
    "chiral_centers",
    "hydrogen_balance",
    "rotatable_bonds",
    "solubility",
    "sp3_fraction",
    "radius_of_gyration",
];
pub const N_FEATURES: usize = ATOM_FEATURES.len() + BOND_FEATURES.len() + GLOBAL_FEATURES.len();

/// Which block a feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Atom,
    Bond,
    Global,
}

pub fn feature_names() -> impl Iterator<Item = &'static str> {
    ATOM_FEATURES
        .iter()
        .chain(BOND_FEATURES.iter())
        .chain(GLOBAL_FEATURES.iter())
        .copied()
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().position(|n| n == name)
}

pub fn block_of(idx: usize) -> Block {
    if idx < ATOM_FEATURES.len() {
        Block::Atom
    } else if idx < ATOM_FEATURES.len() + BOND_FEATURES.len() {
        Block::Bond
    } else {
        Block::Global
    }
}

/// Fixed feature order, exported alongside caches and checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u32,
    pub atom: Vec<String>,
    pub bond: Vec<String>,
    pub global: Vec<String>,
}

impl FeatureManifest {
    pub fn current() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        FeatureManifest {
            version: 1,
            atom: s(&ATOM_FEATURES),
            bond: s(&BOND_FEATURES),
            global: s(&GLOBAL_FEATURES),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Active-feature bit set over the full manifest order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask(pub Vec<bool>);

impl Default for FeatureMask {
    fn default() -> Self {
        Self::all()
    }
}

impl FeatureMask {
    pub fn all() -> Self {
        FeatureMask(vec![true; N_FEATURES])
    }

    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut bits = vec![false; N_FEATURES];
        for n in names {
            let i = feature_index(n)
                .ok_or_else(|| Error::Config(format!("unknown feature `{n}`")))?;
            bits[i] = true;
        }
        Ok(FeatureMask(bits))
    }

    pub fn without(&self, name: &str) -> Result<Self> {
        let i = feature_index(name)
            .ok_or_else(|| Error::Config(format!("unknown feature `{name}`")))?;
        let mut m = self.clone();
        m.0[i] = false;
        Ok(m)
    }

    pub fn with(&self, name: &str) -> Result<Self> {
        let i = feature_index(name)
            .ok_or_else(|| Error::Config(format!("unknown feature `{name}`")))?;
        let mut m = self.clone();
        m.0[i] = true;
        Ok(m)
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.0.get(idx).copied().unwrap_or(false)
    }

    pub fn active_names(&self) -> Vec<&'static str> {
        feature_names()
            .enumerate()
            .filter(|&(i, _)| self.is_active(i))
            .map(|(_, n)| n)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    fn block_dim(&self, block: Block) -> usize {
        (0..N_FEATURES)
            .filter(|&i| block_of(i) == block && self.is_active(i))
            .count()
    }

    pub fn atom_dim(&self) -> usize {
        self.block_dim(Block::Atom)
    }

    pub fn bond_dim(&self) -> usize {
        self.block_dim(Block::Bond)
    }

    pub fn global_dim(&self) -> usize {
        self.block_dim(Block::Global)
    }

    pub fn is_subset_of(&self, other: &FeatureMask) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedGraph {
    /// Row-major `n_atoms × atom_dim`.
    pub x: Vec<f64>,
    /// One entry per bond, `[source, destination]` with source < destination.
    pub edge_index: Vec<[usize; 2]>,
    /// Row-major `n_edges × bond_dim`.
    pub edge_attr: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Option<f64>,
    pub n_atoms: usize,
    pub feature_mask: FeatureMask,
    pub name: String,
    pub smiles: String,
}

impl FeaturizedGraph {
    pub fn atom_dim(&self) -> usize {
        self.feature_mask.atom_dim()
    }

    pub fn bond_dim(&self) -> usize {
        self.feature_mask.bond_dim()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_index.len()
    }

    /// Drop columns not in `mask`; `mask` must be a subset of the current mask.
    pub fn with_mask(&self, mask: &FeatureMask) -> Result<FeaturizedGraph> {
        if !mask.is_subset_of(&self.feature_mask) {
            return Err(Error::Config(
                "mask re-enables features absent from the graph".into(),
            ));
        }
        let keep = |block: Block| -> Vec<bool> {
            (0..N_FEATURES)
                .filter(|&i| block_of(i) == block && self.feature_mask.is_active(i))
                .map(|i| mask.is_active(i))
                .collect()
        };
        let filter_rows = |data: &[f64], cols: &[bool]| -> Vec<f64> {
            if cols.is_empty() {
                return Vec::new();
            }
            data.chunks(cols.len())
                .flat_map(|row| row.iter().zip(cols).filter(|(_, &k)| k).map(|(&v, _)| v))
                .collect()
        };
        Ok(FeaturizedGraph {
            x: filter_rows(&self.x, &keep(Block::Atom)),
            edge_attr: filter_rows(&self.edge_attr, &keep(Block::Bond)),
            u: filter_rows(&self.u, &keep(Block::Global)),
            feature_mask: mask.clone(),
            ..self.clone()
        })
    }
}

fn hybridization_value(h: Hybridization) -> f64 {
    match h {
        Hybridization::Sp => 0.0,
        Hybridization::Sp2 => 0.5,
        Hybridization::Sp3 | Hybridization::Other => 1.0,
    }
}

/// Full (unmasked) atom feature vector in manifest order.
pub fn atom_features(m: &Molecule, i: usize) -> Result<Vec<f64>> {
    let a = &m.atoms[i];
    let e = elements::lookup(a.element)?;
    Ok(vec![
        (a.element as f64 - 1.0) / 78.0,
        hybridization_value(a.hybridization),
        (e.electronegativity - 0.9) / 3.1,
        (e.dipole_polarizability - 4.5) / 31.5,
        (e.vdw_radius - 120.0) / 46.0,
        geometry::buried_volume(m, i, geometry::BURIED_RADIUS, geometry::GRID_SPACING)?,
    ])
}

static TRIPLE_WARNING: Once = Once::new();

/// Full bond feature vector in manifest order.
pub fn bond_features(m: &Molecule, bi: usize) -> Result<Vec<f64>> {
    let b = &m.bonds[bi];
    let (pa, pb) = (m.atoms[b.a].position, m.atoms[b.b].position);
    let length = match (pa, pb) {
        (Some(p), Some(q)) if m.has_3d => {
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
        }
        _ => {
            elements::lookup(m.atoms[b.a].element)?.covalent_radius
                + elements::lookup(m.atoms[b.b].element)?.covalent_radius
        }
    };
    let bond_type = match b.order {
        BondOrder::Single => 1.0,
        BondOrder::Aromatic => 1.5,
        BondOrder::Double => 2.0,
        BondOrder::Triple => {
            TRIPLE_WARNING.call_once(|| {
                log::warn!("triple bonds share the double-bond type value");
            });
            2.0
        }
    };
    let ring = (b.smallest_ring_size as f64 / 8.0).min(1.0);
    Ok(vec![
        length - 1.0,
        if b.conjugated { 1.0 } else { 0.0 },
        bond_type / 2.0,
        ring,
    ])
}

/// Full global feature vector in manifest order.
pub fn global_features(m: &Molecule) -> Result<Vec<f64>> {
    let hbd = descriptors::hbond_donors(m) as f64;
    let hba = descriptors::hbond_acceptors(m) as f64;
    // the guard is a no-op for the constant denominator but kept as written
    let guard = |d: f64| if d == 0.0 { 1e-10 } else { d };
    Ok(vec![
        descriptors::chiral_centers(m) as f64 / 6.0,
        (hbd / 5.0 - hba / guard(10.0)) / 10.0,
        descriptors::rotatable_bonds(m) as f64 / 10.0,
        (descriptors::tpsa(m) + descriptors::crippen_logp(m)) / 145.0,
        descriptors::sp3_fraction(m),
        geometry::molecule_radius_of_gyration(m)?,
    ])
}

fn check_range(kind: &str, name: &str, values: &[f64]) -> Result<()> {
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Dataset(format!("non-finite {kind} feature in {name}")));
        }
        if !(-2.0..=2.0).contains(&v) {
            log::warn!("{kind} feature {v} outside [-2, 2] in {name}");
        }
    }
    Ok(())
}

/// Build the model input for a standardized molecule.
pub fn featurize(m: &Molecule, mask: &FeatureMask, label: Option<f64>) -> Result<FeaturizedGraph> {
    if m.atoms.is_empty() {
        return Err(Error::EmptyMolecule);
    }
    let pick = |block: Block, full: Vec<f64>| -> Vec<f64> {
        let ids = (0..N_FEATURES).filter(|&i| block_of(i) == block);
        full.into_iter()
            .zip(ids)
            .filter(|&(_, i)| mask.is_active(i))
            .map(|(v, _)| v)
            .collect()
    };
    let mut x = Vec::new();
    for i in 0..m.atoms.len() {
        x.extend(pick(Block::Atom, atom_features(m, i)?));
    }
    let mut edges: Vec<(usize, [usize; 2])> = m
        .bonds
        .iter()
        .enumerate()
        .map(|(bi, b)| (bi, [b.a.min(b.b), b.a.max(b.b)]))
        .collect();
    edges.sort_by_key(|&(_, e)| e);
    let mut edge_attr = Vec::new();
    for &(bi, _) in &edges {
        edge_attr.extend(pick(Block::Bond, bond_features(m, bi)?));
    }
    let u = pick(Block::Global, global_features(m)?);
    let name = if m.name.is_empty() { &m.source_smiles } else { &m.name };
    check_range("atom", name, &x)?;
    check_range("bond", name, &edge_attr)?;
    check_range("global", name, &u)?;
    Ok(FeaturizedGraph {
        x,
        edge_index: edges.into_iter().map(|(_, e)| e).collect(),
        edge_attr,
        u,
        y: label,
        n_atoms: m.atoms.len(),
        feature_mask: mask.clone(),
        name: m.name.clone(),
        smiles: m.source_smiles.clone(),
    })
}
