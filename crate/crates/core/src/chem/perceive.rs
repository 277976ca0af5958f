use super::rings::{smallest_ring_sizes, sssr};
use super::{BondOrder, Hybridization, Molecule};
use crate::elements;

/// Standard valences, ascending.
pub(crate) fn default_valences(z: u8) -> &'static [u32] {
    match z {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3, 5],
        8 => &[2],
        9 | 17 | 35 | 53 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 | 34 => &[2, 4, 6],
        _ => &[],
    }
}

/// Valences shifted by formal charge: N+ behaves like C (4), O- like F (1), C- like N (3).
pub(crate) fn charged_valences(z: u8, charge: i8) -> Vec<u32> {
    let base = default_valences(z);
    if charge == 0 {
        return base.to_vec();
    }
    let c = charge as i32;
    base.iter()
        .filter_map(|&v| {
            let v = v as i32;
            let shifted = match z {
                5 | 6 | 14 => v - c.abs(),
                7 | 8 | 15 | 16 | 34 => v + c,
                _ => v - c.abs(),
            };
            (shifted >= 0).then_some(shifted as u32)
        })
        .collect()
}

/// Sum of bond valences around `i`, aromatic bonds counted once plus one
/// for the atom's π contribution.
pub(crate) fn bond_valence_sum(m: &Molecule, i: usize) -> u32 {
    let mut sum = 0;
    let mut any_aromatic = false;
    for b in m.bonds.iter().filter(|b| b.a == i || b.b == i) {
        sum += b.order.valence();
        any_aromatic |= b.order == BondOrder::Aromatic;
    }
    if m.atoms[i].aromatic && any_aromatic {
        sum += 1;
    }
    sum
}

/// Implicit hydrogens for an atom with no explicit count. `Err(sum)` on overflow.
pub(crate) fn implicit_hydrogens(m: &Molecule, i: usize) -> Result<u8, u32> {
    let atom = &m.atoms[i];
    let sum = bond_valence_sum(m, i);
    let valences = charged_valences(atom.element, atom.formal_charge);
    if valences.is_empty() {
        return Ok(0);
    }
    match valences.iter().find(|&&v| v >= sum) {
        Some(&v) => Ok((v - sum) as u8),
        None if atom.aromatic => Ok(0),
        None => Err(sum),
    }
}

pub(super) fn perceive(m: &mut Molecule) {
    let sizes = smallest_ring_sizes(m);
    for (b, s) in m.bonds.iter_mut().zip(sizes) {
        b.smallest_ring_size = s;
    }
    perceive_aromaticity(m);
    assign_hybridization(m);
    assign_conjugation(m);
}

fn has_lone_pair_donor(m: &Molecule, i: usize, adj: &[Vec<(usize, usize)>]) -> bool {
    let a = &m.atoms[i];
    let connections = adj[i].len() + a.implicit_h as usize;
    match a.element {
        7 | 15 => a.formal_charge == 0 && connections == 3,
        8 | 16 | 34 => a.formal_charge == 0 && connections == 2,
        6 => a.formal_charge == -1,
        _ => false,
    }
}

/// π electrons an atom contributes to `ring`, or `None` when it cannot be aromatic.
fn pi_electrons(
    m: &Molecule,
    i: usize,
    ring_atoms: &[usize],
    ring_bonds: &[usize],
    in_any_ring: &[bool],
    adj: &[Vec<(usize, usize)>],
) -> Option<u32> {
    let atom = &m.atoms[i];
    if !matches!(atom.element, 5 | 6 | 7 | 8 | 15 | 16 | 34) {
        return None;
    }
    let mut ring_multiple = false;
    let mut fused_multiple = false;
    let mut exo_hetero_double = false;
    for &(j, bi) in &adj[i] {
        let bond = &m.bonds[bi];
        match bond.order {
            BondOrder::Aromatic if ring_bonds.contains(&bi) => ring_multiple = true,
            BondOrder::Double if ring_bonds.contains(&bi) => ring_multiple = true,
            BondOrder::Double | BondOrder::Aromatic => {
                if ring_atoms.contains(&j) {
                    ring_multiple = true;
                } else if in_any_ring[j] && m.atoms[j].element == 6 {
                    fused_multiple = true;
                } else {
                    exo_hetero_double = true;
                }
            }
            BondOrder::Triple => return None,
            BondOrder::Single => {}
        }
    }
    if ring_multiple || fused_multiple {
        return Some(1);
    }
    if atom.aromatic && atom.element != 6 && has_lone_pair_donor(m, i, adj) {
        return Some(2);
    }
    if exo_hetero_double {
        return Some(0);
    }
    if has_lone_pair_donor(m, i, adj) {
        return Some(2);
    }
    if atom.element == 6 && atom.formal_charge == 1 {
        return Some(0);
    }
    None
}

fn perceive_aromaticity(m: &mut Molecule) {
    let rings = sssr(m);
    if rings.is_empty() {
        return;
    }
    let adj = m.adjacency();
    let mut in_any_ring = vec![false; m.atoms.len()];
    for r in &rings {
        for &a in &r.atoms {
            in_any_ring[a] = true;
        }
    }
    let mut aromatic_rings = Vec::new();
    for r in rings.iter().filter(|r| r.len() == 5 || r.len() == 6) {
        if r.bonds.iter().all(|&b| m.bonds[b].order == BondOrder::Aromatic) {
            continue;
        }
        let mut total = 0;
        let mut ok = true;
        for &a in &r.atoms {
            match pi_electrons(m, a, &r.atoms, &r.bonds, &in_any_ring, &adj) {
                Some(e) => total += e,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && total >= 2 && (total - 2) % 4 == 0 {
            aromatic_rings.push(r.clone());
        }
    }
    for r in aromatic_rings {
        for &a in &r.atoms {
            m.atoms[a].aromatic = true;
        }
        for &b in &r.bonds {
            m.bonds[b].order = BondOrder::Aromatic;
        }
    }
}

fn assign_hybridization(m: &mut Molecule) {
    let adj = m.adjacency();
    for i in 0..m.atoms.len() {
        let mut doubles = 0;
        let mut triples = 0;
        let mut aromatic_bond = false;
        for &(_, bi) in &adj[i] {
            match m.bonds[bi].order {
                BondOrder::Double => doubles += 1,
                BondOrder::Triple => triples += 1,
                BondOrder::Aromatic => aromatic_bond = true,
                BondOrder::Single => {}
            }
        }
        let atom = &m.atoms[i];
        let connections = adj[i].len() + atom.implicit_h as usize;
        m.atoms[i].hybridization = if triples > 0 || doubles >= 2 {
            Hybridization::Sp
        } else if atom.aromatic || aromatic_bond || doubles == 1 {
            Hybridization::Sp2
        } else if elements::is_metal(atom.element) || connections > 4 {
            Hybridization::Other
        } else {
            Hybridization::Sp3
        };
    }
}

fn assign_conjugation(m: &mut Molecule) {
    let adj = m.adjacency();
    let n = m.atoms.len();
    // atom -> bond indices of its multiple/aromatic bonds
    let mut unsaturated: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (bi, b) in m.bonds.iter().enumerate() {
        if b.order != BondOrder::Single {
            unsaturated[b.a].push(bi);
            unsaturated[b.b].push(bi);
        }
    }
    let donor: Vec<bool> = (0..n).map(|i| has_lone_pair_donor(m, i, &adj)).collect();
    // π-capable through some bond other than `skip`
    let pi_capable = |i: usize, skip: usize| -> bool {
        unsaturated[i].iter().any(|&b| b != skip) || (donor[i] && unsaturated[i].is_empty())
    };
    let flags: Vec<bool> = m
        .bonds
        .iter()
        .enumerate()
        .map(|(bi, b)| match b.order {
            BondOrder::Aromatic => true,
            BondOrder::Double | BondOrder::Triple => {
                adj[b.a].iter().any(|&(j, bj)| bj != bi && pi_capable(j, bj))
                    || adj[b.b].iter().any(|&(j, bj)| bj != bi && pi_capable(j, bj))
            }
            BondOrder::Single => {
                let ua = !unsaturated[b.a].is_empty();
                let ub = !unsaturated[b.b].is_empty();
                (ua && ub) || (ua && donor[b.b]) || (ub && donor[b.a])
            }
        })
        .collect();
    for (b, f) in m.bonds.iter_mut().zip(flags) {
        b.conjugated = f;
    }
}
