//! Periodic-table constants used by the featurizer.
//!
//! Column sources, one literature table each:
//! - electronegativity: Pauling scale (CRC Handbook, 97th ed.); noble gases
//!   without a Pauling value use the Allen scale, marked per row.
//! - dipole polarizability: Schwerdtfeger & Nagle, Mol. Phys. 117 (2019)
//!   1200, recommended values in atomic units (Bohr³).
//! - van der Waals radius: Alvarez, Dalton Trans. 42 (2013) 8617, in pm.
//! - covalent radius: Cordero et al., Dalton Trans. (2008) 2832, in Å
//!   (sp3 value for carbon).
//! - atomic mass: IUPAC 2013 conventional standard atomic weights, in u.

use crate::error::{Error, Result};

/// Constants for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementRecord {
    pub z: u8,
    pub symbol: &'static str,
    /// Pauling electronegativity.
    pub electronegativity: f64,
    /// Static dipole polarizability, Bohr³.
    pub dipole_polarizability: f64,
    /// van der Waals radius, pm.
    pub vdw_radius: f64,
    /// Single-bond covalent radius, Å.
    pub covalent_radius: f64,
    /// Atomic mass, u.
    pub atomic_mass: f64,
}

impl ElementRecord {
    /// van der Waals radius in Å.
    pub fn vdw_radius_angstrom(&self) -> f64 {
        self.vdw_radius / 100.0
    }

    pub fn is_metal(&self) -> bool {
        is_metal(self.z)
    }
}

const fn rec(
    z: u8,
    symbol: &'static str,
    electronegativity: f64,
    dipole_polarizability: f64,
    vdw_radius: f64,
    covalent_radius: f64,
    atomic_mass: f64,
) -> ElementRecord {
    ElementRecord {
        z,
        symbol,
        electronegativity,
        dipole_polarizability,
        vdw_radius,
        covalent_radius,
        atomic_mass,
    }
}

// z, symbol, chi (Pauling), alpha (Bohr^3), r_vdw (pm), r_cov (Å), mass (u)
static TABLE: &[ElementRecord] = &[
    rec(1, "H", 2.20, 4.50711, 120.0, 0.31, 1.008),
    rec(2, "He", 4.16, 1.38375, 143.0, 0.28, 4.0026), // chi: Allen scale
    rec(3, "Li", 0.98, 164.1125, 212.0, 1.28, 6.94),
    rec(4, "Be", 1.57, 37.74, 198.0, 0.96, 9.0122),
    rec(5, "B", 2.04, 20.5, 191.0, 0.84, 10.81),
    rec(6, "C", 2.55, 11.3, 177.0, 0.76, 12.011),
    rec(7, "N", 3.04, 7.4, 166.0, 0.71, 14.007),
    rec(8, "O", 3.44, 5.3, 150.0, 0.66, 15.999),
    rec(9, "F", 3.98, 3.74, 146.0, 0.57, 18.998),
    rec(10, "Ne", 4.79, 2.6611, 158.0, 0.58, 20.180), // chi: Allen scale
    rec(11, "Na", 0.93, 162.7, 250.0, 1.66, 22.990),
    rec(12, "Mg", 1.31, 71.2, 251.0, 1.41, 24.305),
    rec(13, "Al", 1.61, 57.8, 225.0, 1.21, 26.982),
    rec(14, "Si", 1.90, 37.3, 219.0, 1.11, 28.085),
    rec(15, "P", 2.19, 25.0, 190.0, 1.07, 30.974),
    rec(16, "S", 2.58, 19.4, 189.0, 1.05, 32.06),
    rec(17, "Cl", 3.16, 14.6, 182.0, 1.02, 35.45),
    rec(18, "Ar", 3.24, 11.083, 183.0, 1.06, 39.948), // chi: Allen scale
    rec(19, "K", 0.82, 289.7, 273.0, 2.03, 39.098),
    rec(20, "Ca", 1.00, 160.8, 262.0, 1.76, 40.078),
    rec(21, "Sc", 1.36, 97.0, 258.0, 1.70, 44.956),
    rec(22, "Ti", 1.54, 100.0, 246.0, 1.60, 47.867),
    rec(23, "V", 1.63, 87.0, 242.0, 1.53, 50.942),
    rec(24, "Cr", 1.66, 83.0, 245.0, 1.39, 51.996),
    rec(25, "Mn", 1.55, 68.0, 245.0, 1.39, 54.938),
    rec(26, "Fe", 1.83, 62.0, 244.0, 1.32, 55.845),
    rec(27, "Co", 1.88, 55.0, 240.0, 1.26, 58.933),
    rec(28, "Ni", 1.91, 49.0, 240.0, 1.24, 58.693),
    rec(29, "Cu", 1.90, 46.5, 238.0, 1.32, 63.546),
    rec(30, "Zn", 1.65, 38.67, 239.0, 1.22, 65.38),
    rec(31, "Ga", 1.81, 50.0, 232.0, 1.22, 69.723),
    rec(32, "Ge", 2.01, 40.0, 229.0, 1.20, 72.630),
    rec(33, "As", 2.18, 30.0, 188.0, 1.19, 74.922),
    rec(34, "Se", 2.55, 28.9, 182.0, 1.20, 78.971),
    rec(35, "Br", 2.96, 21.0, 186.0, 1.20, 79.904),
    rec(36, "Kr", 3.00, 16.78, 225.0, 1.16, 83.798),
    rec(37, "Rb", 0.82, 319.8, 321.0, 2.20, 85.468),
    rec(38, "Sr", 0.95, 197.2, 284.0, 1.95, 87.62),
    rec(39, "Y", 1.22, 162.0, 275.0, 1.90, 88.906),
    rec(40, "Zr", 1.33, 112.0, 252.0, 1.75, 91.224),
    rec(41, "Nb", 1.60, 98.0, 256.0, 1.64, 92.906),
    rec(42, "Mo", 2.16, 87.0, 245.0, 1.54, 95.95),
    rec(43, "Tc", 1.90, 79.0, 244.0, 1.47, 98.0),
    rec(44, "Ru", 2.20, 72.0, 246.0, 1.46, 101.07),
    rec(45, "Rh", 2.28, 66.0, 244.0, 1.42, 102.91),
    rec(46, "Pd", 2.20, 26.14, 215.0, 1.39, 106.42),
    rec(47, "Ag", 1.93, 55.0, 253.0, 1.45, 107.87),
    rec(48, "Cd", 1.69, 46.0, 249.0, 1.44, 112.41),
    rec(49, "In", 1.78, 65.0, 243.0, 1.42, 114.82),
    rec(50, "Sn", 1.96, 53.0, 242.0, 1.39, 118.71),
    rec(51, "Sb", 2.05, 43.0, 247.0, 1.39, 121.76),
    rec(52, "Te", 2.10, 38.0, 199.0, 1.38, 127.60),
    rec(53, "I", 2.66, 32.9, 204.0, 1.39, 126.90),
    rec(54, "Xe", 2.60, 27.32, 206.0, 1.40, 131.29),
    rec(55, "Cs", 0.79, 400.9, 348.0, 2.44, 132.91),
    rec(56, "Ba", 0.89, 272.0, 303.0, 2.15, 137.33),
    rec(78, "Pt", 2.28, 48.0, 229.0, 1.36, 195.08),
    rec(79, "Au", 2.54, 36.0, 232.0, 1.36, 196.97),
    rec(80, "Hg", 2.00, 33.91, 245.0, 1.32, 200.59),
    rec(82, "Pb", 2.33, 47.0, 260.0, 1.46, 207.2),
];

/// Look up the record for atomic number `z`.
pub fn lookup(z: u8) -> Result<&'static ElementRecord> {
    TABLE
        .iter()
        .find(|r| r.z == z)
        .ok_or(Error::UnknownElement(z))
}

/// Look up an element by its symbol (case-sensitive, e.g. `"Cl"`).
pub fn by_symbol(symbol: &str) -> Option<&'static ElementRecord> {
    TABLE.iter().find(|r| r.symbol == symbol)
}

pub fn symbol(z: u8) -> &'static str {
    lookup(z).map(|r| r.symbol).unwrap_or("*")
}

/// Alkali, alkaline-earth, transition and post-transition metals in the table.
pub fn is_metal(z: u8) -> bool {
    matches!(z, 3 | 4 | 11 | 12 | 13 | 19..=31 | 37..=50 | 55 | 56 | 78..=82)
}

pub fn all() -> &'static [ElementRecord] {
    TABLE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carbon_mass() {
        let c = lookup(6).unwrap();
        assert!((c.atomic_mass - 12.011).abs() < 1e-3);
        assert_eq!(c.symbol, "C");
    }

    #[test]
    fn hydrogen_polarizability() {
        let h = lookup(1).unwrap();
        assert!((h.dipole_polarizability - 4.5).abs() < 0.01);
    }

    #[test]
    fn zero_is_unknown() {
        assert!(matches!(lookup(0), Err(Error::UnknownElement(0))));
    }

    #[test]
    fn sanity_anchors() {
        let chi = |z| lookup(z).unwrap().electronegativity;
        assert!(chi(9) > chi(8) && chi(8) > chi(7) && chi(7) > chi(6));
        assert!(lookup(53).unwrap().vdw_radius > lookup(9).unwrap().vdw_radius);
    }

    #[test]
    fn table_is_complete_and_positive() {
        for z in 1..=53u8 {
            let r = lookup(z).unwrap();
            assert_eq!(r.z, z);
            for v in [
                r.electronegativity,
                r.dipole_polarizability,
                r.vdw_radius,
                r.covalent_radius,
                r.atomic_mass,
            ] {
                assert!(v > 0.0, "{} has nonpositive constant", r.symbol);
            }
        }
        let mut zs: Vec<u8> = TABLE.iter().map(|r| r.z).collect();
        zs.dedup();
        assert_eq!(zs.len(), TABLE.len());
        assert_eq!(by_symbol("Br").unwrap().z, 35);
    }
}
