use super::{BondOrder, Molecule};
use crate::elements;
use crate::error::{Error, Result};

fn is_metal_acceptor(z: u8) -> bool {
    matches!(z, 7 | 8 | 9 | 15 | 16 | 17 | 34 | 35 | 53)
}

/// Break metal–heteroatom bonds, moving the bond's electrons onto the heteroatom.
fn disconnect_metals(m: &mut Molecule) {
    let mut keep = Vec::with_capacity(m.bonds.len());
    for b in std::mem::take(&mut m.bonds) {
        let (za, zb) = (m.atoms[b.a].element, m.atoms[b.b].element);
        let (metal, other) = if elements::is_metal(za) && is_metal_acceptor(zb) {
            (b.a, b.b)
        } else if elements::is_metal(zb) && is_metal_acceptor(za) {
            (b.b, b.a)
        } else {
            keep.push(b);
            continue;
        };
        let n = b.order.valence() as i8;
        m.atoms[metal].formal_charge += n;
        m.atoms[other].formal_charge -= n;
    }
    m.bonds = keep;
}

/// Fold explicit hydrogens attached to one heavy atom into that atom's count.
fn fold_hydrogens(m: &mut Molecule) {
    let adj = m.adjacency();
    let mut drop = vec![false; m.atoms.len()];
    for i in 0..m.atoms.len() {
        let a = &m.atoms[i];
        if a.element != 1 || a.formal_charge != 0 || adj[i].len() != 1 {
            continue;
        }
        let (heavy, bi) = adj[i][0];
        if m.atoms[heavy].element == 1 || m.bonds[bi].order != BondOrder::Single {
            continue;
        }
        m.atoms[heavy].implicit_h = m.atoms[heavy].implicit_h.saturating_add(1);
        drop[i] = true;
    }
    if drop.iter().any(|&d| d) {
        let keep: Vec<usize> = (0..m.atoms.len()).filter(|&i| !drop[i]).collect();
        *m = m.subgraph(&keep);
    }
}

fn keep_largest_fragment(m: &mut Molecule) {
    let frags = m.fragments();
    if frags.len() <= 1 {
        return;
    }
    let heavy = |f: &Vec<usize>| f.iter().filter(|&&i| m.atoms[i].element != 1).count();
    let mut best = 0;
    for (k, f) in frags.iter().enumerate() {
        if heavy(f) > heavy(&frags[best]) {
            best = k;
        }
    }
    *m = m.subgraph(&frags[best]);
}

/// Nitro `N(=O)=O` → `[N+](=O)[O-]`; azide `N=N=N` → `N=[N+]=[N-]`.
fn normalize_charges(m: &mut Molecule) {
    let adj = m.adjacency();
    for i in 0..m.atoms.len() {
        if m.atoms[i].element != 7 || m.atoms[i].formal_charge != 0 {
            continue;
        }
        let doubles: Vec<(usize, usize)> = adj[i]
            .iter()
            .copied()
            .filter(|&(_, bi)| m.bonds[bi].order == BondOrder::Double)
            .collect();
        if doubles.len() != 2 {
            continue;
        }
        let terminal_o: Vec<(usize, usize)> = doubles
            .iter()
            .copied()
            .filter(|&(j, _)| {
                m.atoms[j].element == 8 && adj[j].len() == 1 && m.atoms[j].formal_charge == 0
            })
            .collect();
        if terminal_o.len() == 2 {
            let (o, bi) = terminal_o[1];
            m.bonds[bi].order = BondOrder::Single;
            m.atoms[o].formal_charge = -1;
            m.atoms[i].formal_charge = 1;
            continue;
        }
        let terminal_n: Vec<usize> = doubles
            .iter()
            .map(|&(j, _)| j)
            .filter(|&j| {
                m.atoms[j].element == 7 && adj[j].len() == 1 && m.atoms[j].formal_charge == 0
            })
            .collect();
        let inner_n = doubles
            .iter()
            .any(|&(j, _)| m.atoms[j].element == 7 && adj[j].len() == 2);
        if terminal_n.len() == 1 && inner_n {
            m.atoms[i].formal_charge = 1;
            m.atoms[i].implicit_h = 0;
            m.atoms[terminal_n[0]].formal_charge = -1;
            m.atoms[terminal_n[0]].implicit_h = 0;
        }
    }
}

/// Standardize a parsed molecule: disconnect metals, fold explicit
/// hydrogens, keep the fragment with the most heavy atoms (first on ties),
/// and normalize nitro/azide charge patterns. Reionization is a no-op.
/// Idempotent.
pub fn standardize(m: &Molecule) -> Result<Molecule> {
    let mut out = m.clone();
    disconnect_metals(&mut out);
    fold_hydrogens(&mut out);
    keep_largest_fragment(&mut out);
    normalize_charges(&mut out);
    if out.heavy_atom_count() == 0 || out.atoms.iter().any(|a| a.element == 1) {
        return Err(Error::EmptyMolecule);
    }
    out.perceive();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn std_smiles(s: &str) -> Molecule {
        standardize(&parse_smiles(s).unwrap()).unwrap()
    }

    #[test]
    fn hydrogens_folded() {
        let m = std_smiles("[H]C([H])([H])[H]");
        assert_eq!(m.atoms.len(), 1);
        assert_eq!(m.atoms[0].implicit_h, 4);
    }

    #[test]
    fn salt_artifact_removed() {
        let m = std_smiles("CC(=O)Nc1ccccc1.[H+].[Cl-]");
        assert_eq!(m.atoms.len(), 10);
        assert!(m.atoms.iter().all(|a| a.element != 17));
    }

    #[test]
    fn already_standard() {
        let raw = parse_smiles("CCO").unwrap();
        assert_eq!(standardize(&raw).unwrap(), raw);
    }

    #[test]
    fn ties_keep_first_fragment() {
        let m = std_smiles("CO.CN");
        assert_eq!(m.atoms[1].element, 8);
    }

    #[test]
    fn metals_disconnected() {
        let m = std_smiles("CC(=O)O[Na]");
        assert_eq!(m.atoms.len(), 4);
        assert_eq!(m.atoms[3].formal_charge, -1);
    }

    #[test]
    fn nitro_and_azide_normalized() {
        let nitro = std_smiles("CN(=O)=O");
        let charges: Vec<i8> = nitro.atoms.iter().map(|a| a.formal_charge).collect();
        assert_eq!(charges.iter().filter(|&&c| c == 1).count(), 1);
        assert_eq!(charges.iter().filter(|&&c| c == -1).count(), 1);
        let charged = std_smiles("C[N+](=O)[O-]");
        assert_eq!(nitro.atoms, charged.atoms);
        assert_eq!(nitro.bonds, charged.bonds);
        let azide = std_smiles("CN=N=N");
        assert_eq!(azide.atoms[2].formal_charge, 1);
        assert_eq!(azide.atoms[3].formal_charge, -1);
    }

    #[test]
    fn idempotent() {
        for s in [
            "CC(=O)O[Na]",
            "CN(=O)=O",
            "[H]OC([H])C.Cl",
            "c1ccc2[nH]ccc2c1",
            "CN=N=N",
            "O=C(O)c1ccccc1.[K+]",
        ] {
            let once = std_smiles(s);
            let twice = standardize(&once).unwrap();
            assert_eq!(once, twice, "{s}");
        }
    }

    #[test]
    fn empty_after_stripping() {
        let m = parse_smiles("[H][H]").unwrap();
        assert!(matches!(standardize(&m), Err(Error::EmptyMolecule)));
    }
}
