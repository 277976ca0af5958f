//! Randomized (non-canonical) SMILES output used for minority-class augmentation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::perceive::implicit_hydrogens;
use super::{BondOrder, Molecule};

fn organic_symbol(z: u8, aromatic: bool) -> Option<&'static str> {
    Some(match (z, aromatic) {
        (5, false) => "B",
        (6, false) => "C",
        (7, false) => "N",
        (8, false) => "O",
        (15, false) => "P",
        (16, false) => "S",
        (9, false) => "F",
        (17, false) => "Cl",
        (35, false) => "Br",
        (53, false) => "I",
        (5, true) => "b",
        (6, true) => "c",
        (7, true) => "n",
        (8, true) => "o",
        (15, true) => "p",
        (16, true) => "s",
        _ => return None,
    })
}

fn atom_token(m: &Molecule, i: usize) -> String {
    let a = &m.atoms[i];
    if a.formal_charge == 0 {
        if let Some(sym) = organic_symbol(a.element, a.aromatic) {
            if implicit_hydrogens(m, i) == Ok(a.implicit_h) {
                return sym.to_string();
            }
        }
    }
    let sym = match (a.element, a.aromatic) {
        (34, true) => "se".to_string(),
        (33, true) => "as".to_string(),
        (52, true) => "te".to_string(),
        (z, true) => organic_symbol(z, true)
            .map(str::to_string)
            .unwrap_or_else(|| a.symbol().to_string()),
        _ => a.symbol().to_string(),
    };
    let mut t = format!("[{sym}");
    match a.implicit_h {
        0 => {}
        1 => t.push('H'),
        h => t.push_str(&format!("H{h}")),
    }
    match a.formal_charge {
        0 => {}
        1 => t.push('+'),
        -1 => t.push('-'),
        c if c > 0 => t.push_str(&format!("+{c}")),
        c => t.push_str(&format!("-{}", -c)),
    }
    t.push(']');
    t
}

fn bond_token(m: &Molecule, bi: usize) -> &'static str {
    let b = &m.bonds[bi];
    let both_aromatic = m.atoms[b.a].aromatic && m.atoms[b.b].aromatic;
    match b.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

struct Plan {
    /// Neighbor visit order per atom after shuffling.
    order: Vec<Vec<(usize, usize)>>,
    children: Vec<Vec<(usize, usize)>>,
    /// Ring-closure bonds incident to each atom, in the order they are written.
    closures: Vec<Vec<usize>>,
}

fn plan(m: &Molecule, start: usize, rng: &mut ChaCha8Rng, visited: &mut [bool], plan: &mut Plan) {
    // iterative DFS that mirrors the recursive write order
    let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(start, None, 0)];
    visited[start] = true;
    let mut tree_bond = vec![false; m.bonds.len()];
    let mut closure_bond = vec![false; m.bonds.len()];
    while let Some((u, parent_bond, k)) = stack.pop() {
        if k == 0 {
            plan.order[u].shuffle(rng);
            // closures are discovered in neighbor order before descending
            let nbrs = plan.order[u].clone();
            for (v, bi) in nbrs {
                if Some(bi) == parent_bond || tree_bond[bi] || closure_bond[bi] {
                    continue;
                }
                if visited[v] {
                    closure_bond[bi] = true;
                    plan.closures[v].push(bi);
                    plan.closures[u].push(bi);
                }
            }
        }
        if k < plan.order[u].len() {
            stack.push((u, parent_bond, k + 1));
            let (v, bi) = plan.order[u][k];
            if !visited[v] && Some(bi) != parent_bond {
                visited[v] = true;
                tree_bond[bi] = true;
                plan.children[u].push((v, bi));
                stack.push((v, Some(bi), 0));
            }
        }
    }
}

/// Emit a valid SMILES for `m` by depth-first traversal from a seed-chosen
/// start atom with seed-shuffled neighbor order. Stereo tags are not written.
pub fn randomized_smiles(m: &Molecule, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.atoms.len();
    let adj = m.adjacency();
    let mut p = Plan {
        order: adj,
        children: vec![Vec::new(); n],
        closures: vec![Vec::new(); n],
    };
    let mut visited = vec![false; n];
    let mut frags = m.fragments();
    frags.shuffle(&mut rng);
    let mut starts = Vec::new();
    for f in &frags {
        let s = f[rng.random_range(0..f.len())];
        starts.push(s);
        plan(m, s, &mut rng, &mut visited, &mut p);
    }

    let mut out = String::new();
    let mut digit_of: Vec<Option<u32>> = vec![None; m.bonds.len()];
    let mut in_use: Vec<bool> = vec![false; 100];
    for (fi, &s) in starts.iter().enumerate() {
        if fi > 0 {
            out.push('.');
        }
        // explicit stack: Enter(atom) or Text
        enum Step {
            Atom(usize),
            Text(String),
        }
        let mut stack = vec![Step::Atom(s)];
        while let Some(step) = stack.pop() {
            let u = match step {
                Step::Text(t) => {
                    out.push_str(&t);
                    continue;
                }
                Step::Atom(u) => u,
            };
            out.push_str(&atom_token(m, u));
            for &bi in &p.closures[u] {
                match digit_of[bi] {
                    Some(d) => {
                        in_use[d as usize] = false;
                        push_label(&mut out, d);
                    }
                    None => {
                        let d = (1..100).find(|&d| !in_use[d]).expect("fewer than 99 open rings") as u32;
                        in_use[d as usize] = true;
                        digit_of[bi] = Some(d);
                        out.push_str(bond_token(m, bi));
                        push_label(&mut out, d);
                    }
                }
            }
            let kids = &p.children[u];
            // push in reverse so the first child is written first
            for (k, &(v, bi)) in kids.iter().enumerate().rev() {
                let last = k + 1 == kids.len();
                if !last {
                    stack.push(Step::Text(")".into()));
                }
                stack.push(Step::Atom(v));
                let mut prefix = String::new();
                if !last {
                    prefix.push('(');
                }
                prefix.push_str(bond_token(m, bi));
                stack.push(Step::Text(prefix));
            }
        }
    }
    out
}

fn push_label(out: &mut String, d: u32) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push_str(&format!("%{d:02}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{parse_smiles, standardize};

    fn same_graph_stats(a: &Molecule, b: &Molecule) {
        assert_eq!(a.atoms.len(), b.atoms.len());
        assert_eq!(a.bonds.len(), b.bonds.len());
        let mut ea: Vec<_> = a
            .atoms
            .iter()
            .map(|x| (x.element, x.aromatic, x.implicit_h, x.formal_charge))
            .collect();
        let mut eb: Vec<_> = b
            .atoms
            .iter()
            .map(|x| (x.element, x.aromatic, x.implicit_h, x.formal_charge))
            .collect();
        ea.sort();
        eb.sort();
        assert_eq!(ea, eb);
    }

    #[test]
    fn ethanol_two_seeds() {
        let m = standardize(&parse_smiles("CCO").unwrap()).unwrap();
        for seed in [1, 2] {
            let s = randomized_smiles(&m, seed);
            let back = parse_smiles(&s).unwrap();
            assert_eq!(back.heavy_atom_count(), 3);
            assert_eq!(back.bonds.len(), 2);
        }
    }

    #[test]
    fn benzene_stays_aromatic() {
        let m = parse_smiles("c1ccccc1").unwrap();
        for seed in 0..5 {
            let back = parse_smiles(&randomized_smiles(&m, seed)).unwrap();
            assert_eq!(
                back.bonds
                    .iter()
                    .filter(|b| b.order == BondOrder::Aromatic)
                    .count(),
                6
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = parse_smiles("CC(C)Cc1ccc(cc1)C(C)C(=O)O").unwrap();
        assert_eq!(randomized_smiles(&m, 9), randomized_smiles(&m, 9));
        let variants: std::collections::BTreeSet<String> =
            (0..20).map(|s| randomized_smiles(&m, s)).collect();
        assert!(variants.len() > 1);
    }

    #[test]
    fn tricky_atoms_round_trip() {
        for smi in [
            "c1cc[nH]c1",
            "C[N+](=O)[O-]",
            "c1ccc2c(c1)[nH]c1ccccc12",
            "c1ccccc1-c1ccccc1",
            "CC#N",
            "C1CC2CCC1C2",
            "O=c1cccc[nH]1",
            "[NH4+]",
            "CS(=O)(=O)N",
            "C1=CC=CC=C1C=O",
        ] {
            let m = parse_smiles(smi).unwrap();
            for seed in 0..8 {
                let s = randomized_smiles(&m, seed);
                let back = parse_smiles(&s).unwrap_or_else(|e| panic!("{smi} -> {s}: {e}"));
                same_graph_stats(&m, &back);
            }
        }
    }
}
