use crate::chem::Molecule;
use crate::elements;
use crate::error::Result;

pub const BURIED_RADIUS: f64 = 3.5;
pub const GRID_SPACING: f64 = 0.5;

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Fraction of grid nodes inside the sphere of radius `r` around atom `i`
/// that also lie within the van der Waals radius of any atom (the centre
/// atom included). Without coordinates, falls back to `heavy_degree / 4`.
pub fn buried_volume(m: &Molecule, i: usize, r: f64, spacing: f64) -> Result<f64> {
    let Some(pos) = m.positions().filter(|_| m.has_3d) else {
        return Ok(m.heavy_degree(i) as f64 / 4.0);
    };
    let center = pos[i];
    let mut spheres = Vec::new();
    for (a, p) in m.atoms.iter().zip(&pos) {
        let rv = elements::lookup(a.element)?.vdw_radius_angstrom();
        let reach = r + rv;
        if dist2(*p, center) <= reach * reach {
            spheres.push((*p, rv * rv));
        }
    }
    let steps = (r / spacing).ceil() as i64;
    let (mut total, mut occupied) = (0usize, 0usize);
    for ix in -steps..=steps {
        for iy in -steps..=steps {
            for iz in -steps..=steps {
                let off = [ix as f64 * spacing, iy as f64 * spacing, iz as f64 * spacing];
                if off[0] * off[0] + off[1] * off[1] + off[2] * off[2] > r * r {
                    continue;
                }
                total += 1;
                let node = [center[0] + off[0], center[1] + off[1], center[2] + off[2]];
                if spheres.iter().any(|&(p, rv2)| dist2(node, p) <= rv2) {
                    occupied += 1;
                }
            }
        }
    }
    Ok(occupied as f64 / total as f64)
}

/// Mass-weighted RMS distance from the centre of mass.
pub fn radius_of_gyration(masses: &[f64], pos: &[[f64; 3]]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut cm = [0.0; 3];
    for (m, p) in masses.iter().zip(pos) {
        for k in 0..3 {
            cm[k] += m * p[k];
        }
    }
    for c in cm.iter_mut() {
        *c /= total;
    }
    let s: f64 = masses.iter().zip(pos).map(|(m, p)| m * dist2(*p, cm)).sum();
    (s / total).sqrt()
}

/// Radius of gyration over heavy atoms; uses a deterministic graph layout
/// when the molecule carries no coordinates.
pub fn molecule_radius_of_gyration(m: &Molecule) -> Result<f64> {
    let pos = match m.positions().filter(|_| m.has_3d) {
        Some(p) => p,
        None => crate::layout::embed(m, 3),
    };
    let masses = m
        .atoms
        .iter()
        .map(|a| elements::lookup(a.element).map(|r| r.atomic_mass))
        .collect::<Result<Vec<_>>>()?;
    Ok(radius_of_gyration(&masses, &pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{Atom, Molecule};

    fn atoms_at(spec: &[(u8, [f64; 3])]) -> Molecule {
        Molecule {
            atoms: spec
                .iter()
                .map(|&(z, p)| Atom {
                    position: Some(p),
                    ..Atom::new(z)
                })
                .collect(),
            has_3d: true,
            ..Default::default()
        }
    }

    #[test]
    fn isolated_atom_matches_sphere_ratio() {
        for z in [6u8, 7, 8, 17, 35] {
            let m = atoms_at(&[(z, [0.1, -0.2, 0.3])]);
            let rv = elements::lookup(z).unwrap().vdw_radius_angstrom();
            let expect = (rv / BURIED_RADIUS).powi(3);
            let got = buried_volume(&m, 0, BURIED_RADIUS, GRID_SPACING).unwrap();
            assert!((got - expect).abs() / expect < 0.15, "Z={z}: {got} vs {expect}");
        }
    }

    #[test]
    fn fully_occupied_when_radius_small() {
        let m = atoms_at(&[(6, [0.0; 3])]);
        assert_eq!(buried_volume(&m, 0, 1.0, 0.25).unwrap(), 1.0);
    }

    #[test]
    fn far_atoms_are_local() {
        let lone = atoms_at(&[(8, [0.0; 3])]);
        let pair = atoms_at(&[(8, [0.0; 3]), (6, [20.0, 0.0, 0.0])]);
        let a = buried_volume(&lone, 0, BURIED_RADIUS, GRID_SPACING).unwrap();
        let b = buried_volume(&pair, 0, BURIED_RADIUS, GRID_SPACING).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_d_fallback_is_degree_quarter() {
        let m = crate::chem::parse_smiles("CC(C)(C)C").unwrap();
        assert_eq!(buried_volume(&m, 1, BURIED_RADIUS, GRID_SPACING).unwrap(), 1.0);
        assert_eq!(buried_volume(&m, 0, BURIED_RADIUS, GRID_SPACING).unwrap(), 0.25);
    }

    #[test]
    fn diatomic_gyration_is_half_length() {
        let d = 1.37;
        let m = atoms_at(&[(6, [0.0; 3]), (6, [d, 0.0, 0.0])]);
        assert!((molecule_radius_of_gyration(&m).unwrap() - d / 2.0).abs() < 1e-12);
    }

    fn rotate(p: [f64; 3], (a, b, c): (f64, f64, f64), t: [f64; 3]) -> [f64; 3] {
        let (sa, ca, sb, cb, sc, cc) = (a.sin(), a.cos(), b.sin(), b.cos(), c.sin(), c.cos());
        let r = [
            [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
            [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
            [-sb, cb * sc, cb * cc],
        ];
        let mut out = t;
        for i in 0..3 {
            for j in 0..3 {
                out[i] += r[i][j] * p[j];
            }
        }
        out
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn rigid_motion_invariance(
            a in 0.0..6.3f64, b in 0.0..6.3f64, c in 0.0..6.3f64,
            t in proptest::array::uniform3(-5.0..5.0f64),
        ) {
            let base = atoms_at(&[
                (6, [0.0, 0.0, 0.0]),
                (6, [1.52, 0.0, 0.0]),
                (8, [2.05, 1.35, 0.0]),
                (7, [-0.5, -0.9, 1.2]),
            ]);
            let mut moved = base.clone();
            for at in moved.atoms.iter_mut() {
                at.position = Some(rotate(at.position.unwrap(), (a, b, c), t));
            }
            let rg0 = molecule_radius_of_gyration(&base).unwrap();
            let rg1 = molecule_radius_of_gyration(&moved).unwrap();
            proptest::prop_assert!((rg0 - rg1).abs() < 1e-9);
            for i in 0..4 {
                let v0 = buried_volume(&base, i, BURIED_RADIUS, GRID_SPACING).unwrap();
                let v1 = buried_volume(&moved, i, BURIED_RADIUS, GRID_SPACING).unwrap();
                proptest::prop_assert!((v0 - v1).abs() <= 0.02, "{} vs {}", v0, v1);
            }
        }
    }
}
