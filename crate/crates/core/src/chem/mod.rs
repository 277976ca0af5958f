//! Molecular graphs: SMILES/SDF ingestion, standardization and perception.

mod perceive;
pub mod rings;
pub mod sdf;
pub mod smiles;
mod standardize;
mod writer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::elements;
use crate::error::{Error, Result};

pub use sdf::parse_sdf;
pub use smiles::parse_smiles;
pub use standardize::standardize;
pub use writer::randomized_smiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hybridization {
    Sp,
    Sp2,
    Sp3,
    Other,
}

/// Tetrahedral tag as written in the input (`@` / `@@`); recorded, never inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Chirality {
    #[default]
    None,
    CounterClockwise,
    Clockwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Atomic number.
    pub element: u8,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Attached hydrogens not present as explicit atoms.
    pub implicit_h: u8,
    pub hybridization: Hybridization,
    /// Cartesian position, Å.
    pub position: Option<[f64; 3]>,
    pub chirality: Chirality,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Atom {
            element,
            formal_charge: 0,
            aromatic: false,
            implicit_h: 0,
            hybridization: Hybridization::Sp3,
            position: None,
            chirality: Chirality::None,
        }
    }

    pub fn symbol(&self) -> &'static str {
        elements::symbol(self.element)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Valence contribution with aromatic bonds counted as 1 (the extra π
    /// electron is accounted once per aromatic atom).
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }
}

/// Directional marker from `/` or `\`; recorded only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BondStereo {
    #[default]
    None,
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub conjugated: bool,
    /// Size of the smallest cycle through this bond, 0 when acyclic.
    pub smallest_ring_size: usize,
    pub stereo: BondStereo,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond {
            a,
            b,
            order,
            conjugated: false,
            smallest_ring_size: 0,
            stereo: BondStereo::None,
        }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }

    pub fn in_ring(&self) -> bool {
        self.smallest_ring_size > 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub name: String,
    pub source_smiles: String,
    pub has_3d: bool,
}

impl Molecule {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != 1).count()
    }

    /// Adjacency as (neighbor, bond index) pairs, in bond order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (bi, b) in self.bonds.iter().enumerate() {
            adj[b.a].push((b.b, bi));
            adj[b.b].push((b.a, bi));
        }
        adj
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == i || b.b == i).count()
    }

    /// Number of bonded neighbors that are not hydrogen.
    pub fn heavy_degree(&self, i: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| (b.a == i || b.b == i) && self.atoms[b.other(i)].element != 1)
            .count()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    /// Connected components as sorted atom-index lists, ordered by lowest member.
    pub fn fragments(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < comp.len() {
                let u = comp[k];
                k += 1;
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Keep only `keep` atoms (sorted, unique), remapping bonds.
    pub fn subgraph(&self, keep: &[usize]) -> Molecule {
        let mut map = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let atoms = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| map[b.a] != usize::MAX && map[b.b] != usize::MAX)
            .map(|b| Bond {
                a: map[b.a],
                b: map[b.b],
                ..b.clone()
            })
            .collect();
        Molecule {
            atoms,
            bonds,
            name: self.name.clone(),
            source_smiles: self.source_smiles.clone(),
            has_3d: self.has_3d,
        }
    }

    /// Recompute ring sizes, aromaticity, hybridization and conjugation.
    pub fn perceive(&mut self) {
        perceive::perceive(self);
    }

    pub fn positions(&self) -> Option<Vec<[f64; 3]>> {
        self.atoms.iter().map(|a| a.position).collect()
    }
}

/// Add independent Gaussian noise (std dev `sigma`, Å) to every coordinate component.
pub fn perturb_coordinates(m: &Molecule, sigma: f64, seed: u64) -> Result<Molecule> {
    if !m.has_3d || m.atoms.iter().any(|a| a.position.is_none()) {
        return Err(Error::MissingCoordinates);
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    let mut out = m.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for atom in &mut out.atoms {
        if let Some(p) = atom.position.as_mut() {
            for c in p.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Molecule {
        let mut m = Molecule::default();
        for i in 0..n {
            let mut a = Atom::new(6);
            a.position = Some([i as f64 * 1.5, 0.0, 0.0]);
            m.atoms.push(a);
        }
        m.has_3d = true;
        m
    }

    #[test]
    fn zero_sigma_is_identity() {
        let m = line(4);
        assert_eq!(perturb_coordinates(&m, 0.0, 3).unwrap(), m);
    }

    #[test]
    fn perturbation_is_seeded() {
        let m = line(5);
        let a = perturb_coordinates(&m, 0.5, 11).unwrap();
        let b = perturb_coordinates(&m, 0.5, 11).unwrap();
        let c = perturb_coordinates(&m, 0.5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn perturbation_std_dev() {
        let m = line(4000);
        let noisy = perturb_coordinates(&m, 0.5, 7).unwrap();
        let deltas: Vec<f64> = m
            .atoms
            .iter()
            .zip(&noisy.atoms)
            .flat_map(|(a, b)| {
                let (p, q) = (a.position.unwrap(), b.position.unwrap());
                (0..3).map(move |k| q[k] - p[k])
            })
            .collect();
        assert!(deltas.len() >= 10_000);
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let sd = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.5).abs() < 0.05, "sample sd {sd}");
    }

    #[test]
    fn missing_coordinates_rejected() {
        let mut m = line(2);
        m.has_3d = false;
        assert!(matches!(
            perturb_coordinates(&m, 0.5, 1),
            Err(Error::MissingCoordinates)
        ));
    }
}
