//! Graph-based molecular descriptors for the global feature block.
//!
//! TPSA follows Ertl's N/O fragment contributions (S and P excluded, as in
//! the common default); logP uses a reduced Wildman–Crippen atom typing.
//! Both are approximations; only their sum enters the feature vector.

use crate::chem::{BondOrder, Hybridization, Molecule};

/// Iteratively refined (Morgan-style) atom classes; equal rank means
/// topologically indistinguishable at convergence.
pub fn morgan_ranks(m: &Molecule) -> Vec<usize> {
    let adj = m.adjacency();
    let n = m.atoms.len();
    let initial: Vec<(u8, usize, u8, i8, bool)> = m
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| (a.element, adj[i].len(), a.implicit_h, a.formal_charge, a.aromatic))
        .collect();
    let mut ranks = dense_rank(&initial);
    let mut classes = count_classes(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u32)>)> = (0..n)
            .map(|i| {
                let mut nb: Vec<(usize, u32)> = adj[i]
                    .iter()
                    .map(|&(j, bi)| (ranks[j], order_code(m.bonds[bi].order)))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = dense_rank(&keys);
        let c = count_classes(&next);
        ranks = next;
        if c == classes {
            return ranks;
        }
        classes = c;
    }
}

fn order_code(o: BondOrder) -> u32 {
    match o {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

fn dense_rank<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let mut sorted = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn count_classes(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

/// Tetrahedral sp3 atoms with four topologically distinct substituents
/// (an implicit hydrogen counts as one substituent).
pub fn chiral_centers(m: &Molecule) -> usize {
    let ranks = morgan_ranks(m);
    let adj = m.adjacency();
    (0..m.atoms.len())
        .filter(|&i| {
            let a = &m.atoms[i];
            if a.hybridization != Hybridization::Sp3 || a.aromatic || a.implicit_h > 1 {
                return false;
            }
            if adj[i].len() + a.implicit_h as usize != 4 {
                return false;
            }
            if adj[i].iter().any(|&(_, bi)| m.bonds[bi].order != BondOrder::Single) {
                return false;
            }
            let mut r: Vec<usize> = adj[i].iter().map(|&(j, _)| ranks[j]).collect();
            r.sort_unstable();
            r.windows(2).all(|w| w[0] != w[1])
        })
        .count()
}

/// Lipinski donors: hydrogens on N and O.
pub fn hbond_donors(m: &Molecule) -> usize {
    m.atoms
        .iter()
        .filter(|a| matches!(a.element, 7 | 8))
        .map(|a| a.implicit_h as usize)
        .sum()
}

/// Lipinski acceptors: N and O atoms.
pub fn hbond_acceptors(m: &Molecule) -> usize {
    m.atoms.iter().filter(|a| matches!(a.element, 7 | 8)).count()
}

fn is_amide_cn(m: &Molecule, adj: &[Vec<(usize, usize)>], c: usize, n: usize) -> bool {
    m.atoms[c].element == 6
        && m.atoms[n].element == 7
        && adj[c].iter().any(|&(o, bi)| {
            o != n && matches!(m.atoms[o].element, 8 | 16) && m.bonds[bi].order == BondOrder::Double
        })
}

/// Acyclic single bonds between two non-terminal heavy atoms, amide C–N excluded.
pub fn rotatable_bonds(m: &Molecule) -> usize {
    let adj = m.adjacency();
    m.bonds
        .iter()
        .filter(|b| {
            b.order == BondOrder::Single
                && !b.in_ring()
                && m.heavy_degree(b.a) >= 2
                && m.heavy_degree(b.b) >= 2
                && !is_amide_cn(m, &adj, b.a, b.b)
                && !is_amide_cn(m, &adj, b.b, b.a)
        })
        .count()
}

#[derive(Default)]
struct BondCounts {
    single: usize,
    double: usize,
    triple: usize,
    aromatic: usize,
}

fn bond_counts(m: &Molecule, adj: &[Vec<(usize, usize)>], i: usize) -> BondCounts {
    let mut c = BondCounts::default();
    for &(_, bi) in &adj[i] {
        match m.bonds[bi].order {
            BondOrder::Single => c.single += 1,
            BondOrder::Double => c.double += 1,
            BondOrder::Triple => c.triple += 1,
            BondOrder::Aromatic => c.aromatic += 1,
        }
    }
    c
}

fn tpsa_contribution(m: &Molecule, adj: &[Vec<(usize, usize)>], i: usize) -> f64 {
    let a = &m.atoms[i];
    let h = a.implicit_h;
    let q = a.formal_charge;
    let c = bond_counts(m, adj, i);
    let heavy = adj[i].len();
    let in3 = adj[i].iter().any(|&(_, bi)| m.bonds[bi].smallest_ring_size == 3);
    match a.element {
        7 => match (q, h, c.single, c.double, c.triple, c.aromatic) {
            (0, 0, 3, 0, 0, 0) if in3 => Some(3.01),
            (0, 0, 3, 0, 0, 0) => Some(3.24),
            (0, 0, 1, 1, 0, 0) => Some(12.36),
            (0, 0, 0, 0, 1, 0) => Some(23.79),
            (0, 0, 1, 2, 0, 0) => Some(11.68),
            (0, 0, 0, 1, 1, 0) => Some(13.60),
            (0, 1, 2, 0, 0, 0) if in3 => Some(21.94),
            (0, 1, 2, 0, 0, 0) => Some(12.03),
            (0, 1, 0, 1, 0, 0) => Some(23.85),
            (0, 2, 1, 0, 0, 0) => Some(26.02),
            (1, 0, 4, 0, 0, 0) => Some(0.0),
            (1, 0, 2, 1, 0, 0) => Some(3.01),
            (1, 0, 1, 0, 1, 0) => Some(4.36),
            (1, 1, 3, 0, 0, 0) => Some(4.44),
            (1, 1, 1, 1, 0, 0) => Some(13.97),
            (1, 2, 2, 0, 0, 0) => Some(16.61),
            (1, 2, 0, 1, 0, 0) => Some(25.59),
            (1, 3, 1, 0, 0, 0) => Some(27.64),
            (0, 0, 0, 0, 0, 2) => Some(12.89),
            (0, 0, 0, 0, 0, 3) => Some(4.41),
            (0, 0, 1, 0, 0, 2) => Some(4.93),
            (0, 0, 0, 1, 0, 2) => Some(8.39),
            (0, 1, 0, 0, 0, 2) => Some(15.79),
            (1, 0, 0, 0, 0, 3) => Some(4.10),
            (1, 0, 1, 0, 0, 2) => Some(3.88),
            (1, 1, 0, 0, 0, 2) => Some(14.14),
            _ => None,
        }
        .unwrap_or_else(|| (30.5 - 8.2 * heavy as f64 + 1.5 * h as f64).max(0.0)),
        8 => match (q, h, c.single, c.double, c.aromatic) {
            (0, 0, 2, 0, 0) if in3 => Some(12.53),
            (0, 0, 2, 0, 0) => Some(9.23),
            (0, 0, 0, 1, 0) => Some(17.07),
            (0, 1, 1, 0, 0) => Some(20.23),
            (-1, 0, 1, 0, 0) => Some(23.06),
            (0, 0, 0, 0, 2) => Some(13.14),
            _ => None,
        }
        .unwrap_or_else(|| (28.5 - 8.6 * heavy as f64 + 1.5 * h as f64).max(0.0)),
        _ => 0.0,
    }
}

/// Topological polar surface area, Å².
pub fn tpsa(m: &Molecule) -> f64 {
    let adj = m.adjacency();
    (0..m.atoms.len()).map(|i| tpsa_contribution(m, &adj, i)).sum()
}

fn is_hetero(z: u8) -> bool {
    !matches!(z, 1 | 6)
}

fn crippen_heavy(m: &Molecule, adj: &[Vec<(usize, usize)>], i: usize) -> f64 {
    let a = &m.atoms[i];
    let nbrs = || adj[i].iter().map(|&(j, bi)| (&m.atoms[j], &m.bonds[bi]));
    match a.element {
        6 if a.aromatic => {
            let exo_hetero = nbrs().any(|(n, b)| is_hetero(n.element) && !b.in_ring());
            let aromatic_nbrs = nbrs().filter(|(n, _)| n.aromatic).count();
            if exo_hetero {
                0.1360
            } else if aromatic_nbrs == 3 {
                0.2955
            } else {
                0.1581
            }
        }
        6 => {
            let hetero_double = nbrs()
                .any(|(n, b)| is_hetero(n.element) && b.order == BondOrder::Double);
            let multiple = nbrs().find(|(_, b)| b.order != BondOrder::Single);
            if hetero_double {
                -0.2783
            } else if let Some((_, b)) = multiple {
                if b.order == BondOrder::Triple {
                    0.0017
                } else {
                    0.1551
                }
            } else if nbrs().any(|(n, _)| is_hetero(n.element)) {
                if adj[i].len() <= 2 {
                    -0.2035
                } else {
                    -0.2051
                }
            } else if nbrs().any(|(n, _)| n.aromatic) {
                0.08452
            } else if adj[i].len() <= 2 {
                0.1441
            } else {
                0.0
            }
        }
        7 => {
            if a.aromatic {
                -0.3239
            } else if a.formal_charge > 0 {
                -1.0190
            } else if nbrs().any(|(n, _)| n.aromatic) {
                -0.4458
            } else {
                match a.implicit_h {
                    2.. => -1.0190,
                    1 => -0.7096,
                    _ => -0.3187,
                }
            }
        }
        8 => {
            let doubly = nbrs().any(|(_, b)| b.order == BondOrder::Double);
            if a.aromatic {
                0.1552
            } else if doubly {
                if nbrs().any(|(n, _)| n.aromatic) {
                    0.1129
                } else {
                    -0.1526
                }
            } else if nbrs().any(|(n, _)| n.aromatic) {
                -0.4195
            } else if a.implicit_h > 0 {
                -0.2893
            } else {
                -0.0684
            }
        }
        9 => 0.4202,
        17 => 0.6895,
        35 => 0.8456,
        53 => 0.8857,
        16 if a.aromatic => 0.6237,
        16 => 0.6482,
        15 => 0.8612,
        _ => 0.0,
    }
}

fn crippen_hydrogen(m: &Molecule, i: usize) -> f64 {
    match m.atoms[i].element {
        6 => 0.1230,
        8 => -0.2677,
        7 => 0.2142,
        _ => 0.1125,
    }
}

/// Octanol–water partition coefficient from atom contributions.
pub fn crippen_logp(m: &Molecule) -> f64 {
    let adj = m.adjacency();
    (0..m.atoms.len())
        .map(|i| {
            crippen_heavy(m, &adj, i) + m.atoms[i].implicit_h as f64 * crippen_hydrogen(m, i)
        })
        .sum()
}

/// Fraction of carbons that are sp3; zero without carbons.
pub fn sp3_fraction(m: &Molecule) -> f64 {
    let carbons: Vec<_> = m.atoms.iter().filter(|a| a.element == 6).collect();
    if carbons.is_empty() {
        return 0.0;
    }
    let sp3 = carbons
        .iter()
        .filter(|a| a.hybridization == Hybridization::Sp3)
        .count();
    sp3 as f64 / carbons.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{parse_smiles, standardize};

    fn mol(s: &str) -> Molecule {
        standardize(&parse_smiles(s).unwrap()).unwrap()
    }

    #[test]
    fn chiral_center_counts() {
        for (smi, n) in [
            ("CCO", 0),
            ("CC(O)CC", 1),
            ("C[C@H](N)C(=O)O", 1),
            ("CC(C)C", 0),
            ("OC1CCCCC1", 0),
            ("CC1CCC(C)CC1", 0),
            ("OC(F)C(O)C(Cl)CC", 3),
            ("c1ccccc1", 0),
        ] {
            assert_eq!(chiral_centers(&mol(smi)), n, "{smi}");
        }
    }

    #[test]
    fn tpsa_reference_values() {
        // published Ertl values
        for (smi, want) in [
            ("CCO", 20.23),
            ("CC(=O)O", 37.30),
            ("c1ccncc1", 12.89),
            ("CC(=O)Nc1ccc(O)cc1", 49.33),
            ("c1ccccc1[N+](=O)[O-]", 43.14),
            ("c1ccccc1", 0.0),
        ] {
            let got = tpsa(&mol(smi));
            assert!((got - want).abs() < 0.01, "{smi}: {got}");
        }
    }

    #[test]
    fn logp_reference_values() {
        // hand sums of the Crippen contributions for simple typings
        for (smi, want) in [
            ("c1ccccc1", 6.0 * (0.1581 + 0.1230)),
            ("CCO", 0.1441 - 0.2035 + 5.0 * 0.1230 - 0.2893 - 0.2677),
            ("CO", -0.2035 + 3.0 * 0.1230 - 0.2893 - 0.2677),
            ("c1ccncc1", 5.0 * (0.1581 + 0.1230) - 0.3239),
        ] {
            let got = crippen_logp(&mol(smi));
            assert!((got - want).abs() < 1e-9, "{smi}: {got}");
        }
    }

    #[test]
    fn rotatable_bond_counts() {
        for (smi, n) in [
            ("CCCC", 1),
            ("CC", 0),
            ("c1ccccc1CC", 1),
            ("CC(=O)NC", 0),
            ("CCOCC", 2),
            ("C1CCCCC1", 0),
        ] {
            assert_eq!(rotatable_bonds(&mol(smi)), n, "{smi}");
        }
    }

    #[test]
    fn donors_acceptors() {
        let m = mol("NCC(=O)O");
        assert_eq!(hbond_donors(&m), 3);
        assert_eq!(hbond_acceptors(&m), 3);
    }

    #[test]
    fn sp3_fractions() {
        assert_eq!(sp3_fraction(&mol("c1ccccc1")), 0.0);
        assert_eq!(sp3_fraction(&mol("CCCC")), 1.0);
        assert_eq!(sp3_fraction(&mol("CC=C")), 1.0 / 3.0);
        assert_eq!(sp3_fraction(&mol("O")), 0.0);
    }
}
