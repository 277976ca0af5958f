//! Ring perception: smallest cycle per bond and an SSSR basis.

use std::collections::VecDeque;

use super::Molecule;

/// Shortest path length (in bonds) from `from` to `to` that does not use bond `skip`.
fn shortest_path_avoiding(
    adj: &[Vec<(usize, usize)>],
    from: usize,
    to: usize,
    skip: usize,
) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    seen[from] = true;
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &(v, bi) in &adj[u] {
            if bi == skip || seen[v] {
                continue;
            }
            seen[v] = true;
            prev[v] = u;
            queue.push_back(v);
        }
    }
    None
}

/// Size of the smallest cycle containing each bond (0 for acyclic bonds).
pub fn smallest_ring_sizes(m: &Molecule) -> Vec<usize> {
    let adj = m.adjacency();
    m.bonds
        .iter()
        .enumerate()
        .map(|(bi, b)| {
            shortest_path_avoiding(&adj, b.a, b.b, bi)
                .map(|p| p.len())
                .unwrap_or(0)
        })
        .collect()
}

/// A ring as an ordered cycle of atom indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    pub atoms: Vec<usize>,
    pub bonds: Vec<usize>,
}

impl Ring {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Smallest set of smallest rings by iterative shortest-cycle extraction:
/// candidate cycles (the shortest cycle through each bond) are taken in
/// ascending size and kept when independent over GF(2) of those already kept.
pub fn sssr(m: &Molecule) -> Vec<Ring> {
    let n_frag = m.fragments().len();
    let target = (m.bonds.len() + n_frag).saturating_sub(m.atoms.len());
    if target == 0 {
        return Vec::new();
    }
    let adj = m.adjacency();
    let mut candidates: Vec<Ring> = Vec::new();
    let mut seen_keys = std::collections::HashSet::new();
    let mut add = |atoms: Vec<usize>, bonds: Vec<usize>, candidates: &mut Vec<Ring>| {
        let mut key = bonds.clone();
        key.sort_unstable();
        if seen_keys.insert(key) {
            candidates.push(Ring { atoms, bonds });
        }
    };
    let path_bonds = |path: &[usize]| -> Vec<usize> {
        path.windows(2)
            .map(|w| m.bond_between(w[0], w[1]).expect("path follows bonds"))
            .collect()
    };
    // shortest cycle through each bond
    for (bi, b) in m.bonds.iter().enumerate() {
        let Some(path) = shortest_path_avoiding(&adj, b.a, b.b, bi) else {
            continue;
        };
        let mut bonds = path_bonds(&path);
        bonds.push(bi);
        add(path, bonds, &mut candidates);
    }
    // Horton candidates: root, BFS paths to both ends of a bond, and the bond
    let n = m.atoms.len();
    for root in 0..n {
        let mut prev = vec![usize::MAX; n];
        let mut dist = vec![usize::MAX; n];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let path_to = |mut x: usize| {
            let mut p = vec![x];
            while x != root {
                x = prev[x];
                p.push(x);
            }
            p.reverse();
            p
        };
        for (bi, b) in m.bonds.iter().enumerate() {
            if dist[b.a] == usize::MAX || dist[b.b] == usize::MAX {
                continue;
            }
            let pa = path_to(b.a);
            let pb = path_to(b.b);
            if pa[1..].iter().any(|x| pb[1..].contains(x)) {
                continue;
            }
            let mut atoms = pa.clone();
            atoms.extend(pb[1..].iter().rev());
            let mut bonds = path_bonds(&pa);
            bonds.push(bi);
            let mut back = path_bonds(&pb);
            back.reverse();
            bonds.extend(back);
            if atoms.len() >= 3 {
                add(atoms, bonds, &mut candidates);
            }
        }
    }
    candidates.sort_by(|x, y| {
        let mut kx = x.atoms.clone();
        let mut ky = y.atoms.clone();
        kx.sort_unstable();
        ky.sort_unstable();
        x.len().cmp(&y.len()).then(kx.cmp(&ky))
    });

    let words = m.bonds.len().div_ceil(64);
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new(); // (pivot bit, row)
    let mut rings = Vec::new();
    for ring in candidates {
        let mut row = vec![0u64; words];
        for &bi in &ring.bonds {
            row[bi / 64] ^= 1 << (bi % 64);
        }
        for (pivot, brow) in &basis {
            if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (r, b) in row.iter_mut().zip(brow) {
                    *r ^= b;
                }
            }
        }
        let Some(pivot) = (0..m.bonds.len()).find(|&k| row[k / 64] >> (k % 64) & 1 == 1) else {
            continue;
        };
        // keep the basis reduced so later pivots stay valid
        for (_, brow) in basis.iter_mut() {
            if brow[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (b, r) in brow.iter_mut().zip(&row) {
                    *b ^= r;
                }
            }
        }
        basis.push((pivot, row));
        rings.push(ring);
        if rings.len() == target {
            break;
        }
    }
    rings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    /// Brute force: enumerate every simple cycle by DFS and record, per bond,
    /// the smallest one containing it.
    fn brute_force_ring_sizes(m: &Molecule) -> Vec<usize> {
        let adj = m.adjacency();
        let n = m.atoms.len();
        let mut best = vec![0usize; m.bonds.len()];
        fn dfs(
            adj: &[Vec<(usize, usize)>],
            start: usize,
            u: usize,
            on_path: &mut Vec<bool>,
            bonds: &mut Vec<usize>,
            best: &mut [usize],
        ) {
            for &(v, bi) in &adj[u] {
                if bonds.last() == Some(&bi) {
                    continue;
                }
                if v == start && bonds.len() >= 2 {
                    let len = bonds.len() + 1;
                    for &b in bonds.iter().chain(std::iter::once(&bi)) {
                        if best[b] == 0 || len < best[b] {
                            best[b] = len;
                        }
                    }
                } else if v > start && !on_path[v] {
                    on_path[v] = true;
                    bonds.push(bi);
                    dfs(adj, start, v, on_path, bonds, best);
                    bonds.pop();
                    on_path[v] = false;
                }
            }
        }
        for s in 0..n {
            let mut on_path = vec![false; n];
            on_path[s] = true;
            dfs(&adj, s, s, &mut on_path, &mut Vec::new(), &mut best);
        }
        best
    }

    #[test]
    fn benzene_and_cyclopropane() {
        let b = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(smallest_ring_sizes(&b), vec![6; 6]);
        assert_eq!(sssr(&b).len(), 1);
        let c = parse_smiles("C1CC1").unwrap();
        assert_eq!(smallest_ring_sizes(&c), vec![3; 3]);
    }

    #[test]
    fn fused_and_bridged_against_brute_force() {
        for smi in [
            "c1ccc2ccccc2c1",
            "C1CC2CCC1C2",
            "C12C3C4C1C5C2C3C45",
            "C1CCC2(CC1)CCCC2",
            "c1ccc2[nH]ccc2c1",
            "CC(C)C1CCC(C)CC1O",
            "C1CC2CC1CC2",
        ] {
            let m = parse_smiles(smi).unwrap();
            assert!(m.atoms.len() <= 12);
            assert_eq!(smallest_ring_sizes(&m), brute_force_ring_sizes(&m), "{smi}");
        }
    }

    proptest::proptest! {
        #[test]
        fn random_graphs_against_brute_force(
            n in 3usize..=12,
            edges in proptest::collection::vec((0usize..12, 0usize..12), 0..20),
        ) {
            let mut m = Molecule::default();
            for _ in 0..n {
                m.atoms.push(crate::chem::Atom::new(6));
            }
            for (a, b) in edges {
                let (a, b) = (a % n, b % n);
                if a != b && m.bond_between(a, b).is_none() {
                    m.bonds.push(crate::chem::Bond::new(a, b, crate::chem::BondOrder::Single));
                }
            }
            proptest::prop_assert_eq!(smallest_ring_sizes(&m), brute_force_ring_sizes(&m));
            let cyclomatic = m.bonds.len() + m.fragments().len() - m.atoms.len();
            proptest::prop_assert_eq!(sssr(&m).len(), cyclomatic);
        }
    }

    #[test]
    fn sssr_counts() {
        for (smi, n) in [
            ("CCO", 0),
            ("c1ccc2ccccc2c1", 2),
            ("C12C3C4C1C5C2C3C45", 5),
            ("C1CCC2(CC1)CCCC2", 2),
        ] {
            let m = parse_smiles(smi).unwrap();
            let rings = sssr(&m);
            assert_eq!(rings.len(), n, "{smi}");
        }
        let naph = sssr(&parse_smiles("c1ccc2ccccc2c1").unwrap());
        assert!(naph.iter().all(|r| r.len() == 6));
    }
}
