//! SMILES reader.
//!
//! Supports the organic subset, bracket atoms (isotope, chirality, hydrogen
//! count, charge, atom class), branches, ring closures (`1`–`9`, `%nn`),
//! explicit bonds `- = # : / \` and dot-disconnected fragments.

use std::collections::BTreeMap;

use super::perceive::implicit_hydrogens;
use super::{Atom, Bond, BondOrder, BondStereo, Chirality, Molecule};
use crate::elements;
use crate::error::SmilesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

impl BondSym {
    fn order(self) -> BondOrder {
        match self {
            BondSym::Single | BondSym::Up | BondSym::Down => BondOrder::Single,
            BondSym::Double => BondOrder::Double,
            BondSym::Triple => BondOrder::Triple,
            BondSym::Aromatic => BondOrder::Aromatic,
        }
    }

    fn stereo(self) -> BondStereo {
        match self {
            BondSym::Up => BondStereo::Up,
            BondSym::Down => BondStereo::Down,
            _ => BondStereo::None,
        }
    }
}

struct OpenRing {
    atom: usize,
    bond: Option<BondSym>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    mol: Molecule,
    /// Atom offsets and whether the hydrogen count was given explicitly.
    atom_offsets: Vec<usize>,
    explicit_h: Vec<bool>,
}

const ORGANIC_TWO: [(&str, u8); 2] = [("Cl", 17), ("Br", 35)];

fn organic_one(c: u8) -> Option<(u8, bool)> {
    Some(match c {
        b'B' => (5, false),
        b'C' => (6, false),
        b'N' => (7, false),
        b'O' => (8, false),
        b'P' => (15, false),
        b'S' => (16, false),
        b'F' => (9, false),
        b'I' => (53, false),
        b'b' => (5, true),
        b'c' => (6, true),
        b'n' => (7, true),
        b'o' => (8, true),
        b'p' => (15, true),
        b's' => (16, true),
        _ => return None,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn char_at(&self, offset: usize) -> char {
        // callers only report positions that hold ASCII or the start of a char
        std::str::from_utf8(&self.text[offset..])
            .ok()
            .and_then(|s| s.chars().next())
            .unwrap_or(self.text[offset] as char)
    }

    fn push_atom(&mut self, atom: Atom, offset: usize, explicit_h: bool) -> usize {
        self.mol.atoms.push(atom);
        self.atom_offsets.push(offset);
        self.explicit_h.push(explicit_h);
        self.mol.atoms.len() - 1
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut v: u32 = 0;
        while let Some(c @ b'0'..=b'9') = self.peek() {
            v = v.saturating_mul(10).saturating_add((c - b'0') as u32);
            self.pos += 1;
        }
        (self.pos > start).then_some(v)
    }

    fn parse_bracket(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        self.pos += 1; // '['
        let _isotope = self.digits();
        let sym_start = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(c) if c.is_ascii_uppercase() => {
                self.pos += 1;
                let two = self
                    .peek()
                    .filter(|c| c.is_ascii_lowercase())
                    .map(|c2| [c, c2]);
                match two
                    .and_then(|t| std::str::from_utf8(&t).ok().and_then(elements::by_symbol))
                {
                    Some(rec) => {
                        self.pos += 1;
                        (rec.z, false)
                    }
                    None => {
                        let s = (c as char).to_string();
                        let rec = elements::by_symbol(&s).ok_or(SmilesError::UnknownElement {
                            symbol: s,
                            offset: sym_start,
                        })?;
                        (rec.z, false)
                    }
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                let rest = &self.text[self.pos..];
                let (z, len) = if rest.starts_with(b"se") {
                    (34, 2)
                } else if rest.starts_with(b"as") {
                    (33, 2)
                } else if rest.starts_with(b"te") {
                    (52, 2)
                } else {
                    match organic_one(c) {
                        Some((z, true)) => (z, 1),
                        _ => {
                            return Err(SmilesError::UnknownElement {
                                symbol: (c as char).to_string(),
                                offset: sym_start,
                            })
                        }
                    }
                };
                self.pos += len;
                (z, true)
            }
            None => {
                return Err(SmilesError::Unbalanced {
                    what: "bracket",
                    offset: open,
                })
            }
            Some(_) => {
                return Err(SmilesError::UnknownElement {
                    symbol: self.char_at(sym_start).to_string(),
                    offset: sym_start,
                })
            }
        };
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        if self.peek() == Some(b'@') {
            self.pos += 1;
            atom.chirality = Chirality::CounterClockwise;
            if self.peek() == Some(b'@') {
                self.pos += 1;
                atom.chirality = Chirality::Clockwise;
            }
            // extended tags such as @TH1 are accepted and ignored
            while let Some(c) = self.peek() {
                if c.is_ascii_uppercase() && c != b'H' || c.is_ascii_digit() {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            atom.implicit_h = self.digits().unwrap_or(1).min(u8::MAX as u32) as u8;
        }
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let unit: i32 = if sign == b'+' { 1 } else { -1 };
            let mut charge = unit;
            if let Some(n) = self.digits() {
                charge = unit * n.min(15) as i32;
            } else {
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
            atom.formal_charge = charge.clamp(-15, 15) as i8;
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.digits();
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            None => {
                return Err(SmilesError::Unbalanced {
                    what: "bracket",
                    offset: open,
                })
            }
            Some(_) => {
                return Err(SmilesError::Unexpected {
                    ch: self.char_at(self.pos),
                    offset: self.pos,
                })
            }
        }
        Ok(self.push_atom(atom, open, true))
    }

    fn parse_organic(&mut self) -> Result<Option<usize>, SmilesError> {
        let start = self.pos;
        let rest = &self.text[self.pos..];
        for (sym, z) in ORGANIC_TWO {
            if rest.starts_with(sym.as_bytes()) {
                self.pos += 2;
                return Ok(Some(self.push_atom(Atom::new(z), start, false)));
            }
        }
        let Some(c) = self.peek() else { return Ok(None) };
        match organic_one(c) {
            Some((z, aromatic)) => {
                self.pos += 1;
                let mut atom = Atom::new(z);
                atom.aromatic = aromatic;
                Ok(Some(self.push_atom(atom, start, false)))
            }
            None if c.is_ascii_alphabetic() || c == b'*' => Err(SmilesError::UnknownElement {
                symbol: self.char_at(start).to_string(),
                offset: start,
            }),
            None => Ok(None),
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        sym: Option<BondSym>,
        offset: usize,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(SmilesError::RingBond {
                reason: "atom bonded to itself",
                offset,
            });
        }
        if self.mol.bond_between(a, b).is_some() {
            return Err(SmilesError::RingBond {
                reason: "duplicate bond",
                offset,
            });
        }
        let both_aromatic = self.mol.atoms[a].aromatic && self.mol.atoms[b].aromatic;
        let order = match sym {
            Some(s) => s.order(),
            None if both_aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        };
        let mut bond = Bond::new(a, b, order);
        bond.stereo = sym.map(BondSym::stereo).unwrap_or_default();
        self.mol.bonds.push(bond);
        Ok(())
    }

    fn run(mut self) -> Result<Molecule, SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSym, usize)> = None;
        let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
        let mut rings: BTreeMap<u32, OpenRing> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let offset = self.pos;
            let bond_sym = match c {
                b'-' => Some(BondSym::Single),
                b'=' => Some(BondSym::Double),
                b'#' => Some(BondSym::Triple),
                b':' => Some(BondSym::Aromatic),
                b'/' => Some(BondSym::Up),
                b'\\' => Some(BondSym::Down),
                _ => None,
            };
            if let Some(sym) = bond_sym {
                if pending.is_some() || prev.is_none() {
                    return Err(SmilesError::Unexpected { ch: c as char, offset });
                }
                pending = Some((sym, offset));
                self.pos += 1;
                continue;
            }
            match c {
                b'(' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(SmilesError::Unbalanced {
                            what: "parenthesis",
                            offset,
                        });
                    }
                    branches.push((prev, offset));
                    self.pos += 1;
                }
                b')' => {
                    let Some((p, _)) = branches.pop() else {
                        return Err(SmilesError::Unbalanced {
                            what: "parenthesis",
                            offset,
                        });
                    };
                    if pending.is_some() {
                        return Err(SmilesError::Unexpected { ch: ')', offset });
                    }
                    prev = p;
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() {
                        return Err(SmilesError::Unexpected { ch: '.', offset });
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(atom) = prev else {
                        return Err(SmilesError::Unexpected {
                            ch: c as char,
                            offset,
                        });
                    };
                    let label = if c == b'%' {
                        self.pos += 1;
                        let d = &self.text[self.pos..];
                        if d.len() < 2 || !d[0].is_ascii_digit() || !d[1].is_ascii_digit() {
                            return Err(SmilesError::Unexpected { ch: '%', offset });
                        }
                        self.pos += 2;
                        ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32
                    } else {
                        self.pos += 1;
                        (c - b'0') as u32
                    };
                    let sym = pending.take().map(|(s, _)| s);
                    match rings.remove(&label) {
                        Some(open) => {
                            let sym = match (open.bond, sym) {
                                (Some(x), Some(y)) if x.order() != y.order() => {
                                    return Err(SmilesError::RingBond {
                                        reason: "conflicting ring-closure bond orders",
                                        offset,
                                    })
                                }
                                (x, y) => y.or(x),
                            };
                            self.add_bond(open.atom, atom, sym, offset)?;
                        }
                        None => {
                            rings.insert(
                                label,
                                OpenRing {
                                    atom,
                                    bond: sym,
                                    offset,
                                },
                            );
                        }
                    }
                }
                b'[' => {
                    let idx = self.parse_bracket()?;
                    if let Some(p) = prev {
                        let sym = pending.take().map(|(s, _)| s);
                        self.add_bond(p, idx, sym, offset)?;
                    }
                    prev = Some(idx);
                }
                b']' => {
                    return Err(SmilesError::Unbalanced {
                        what: "bracket",
                        offset,
                    })
                }
                _ => match self.parse_organic()? {
                    Some(idx) => {
                        if let Some(p) = prev {
                            let sym = pending.take().map(|(s, _)| s);
                            self.add_bond(p, idx, sym, offset)?;
                        }
                        prev = Some(idx);
                    }
                    None => {
                        return Err(SmilesError::Unexpected {
                            ch: self.char_at(offset),
                            offset,
                        })
                    }
                },
            }
        }
        if let Some((_, offset)) = pending {
            return Err(SmilesError::Unexpected {
                ch: self.char_at(offset),
                offset,
            });
        }
        if let Some((_, offset)) = branches.pop() {
            return Err(SmilesError::Unbalanced {
                what: "parenthesis",
                offset,
            });
        }
        if let Some((&label, open)) = rings.iter().next() {
            return Err(SmilesError::UnclosedRing {
                label,
                offset: open.offset,
            });
        }
        if self.mol.atoms.is_empty() {
            return Err(SmilesError::Empty);
        }

        for i in 0..self.mol.atoms.len() {
            if self.explicit_h[i] {
                continue;
            }
            match implicit_hydrogens(&self.mol, i) {
                Ok(h) => self.mol.atoms[i].implicit_h = h,
                Err(bonds) => {
                    return Err(SmilesError::ValenceOverflow {
                        symbol: self.mol.atoms[i].symbol().to_string(),
                        bonds,
                        offset: self.atom_offsets[i],
                    })
                }
            }
        }
        self.mol.perceive();
        Ok(self.mol)
    }
}

/// Parse a SMILES string into a molecular graph with implicit hydrogens,
/// ring sizes, aromaticity, hybridization and conjugation assigned.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::Empty);
    }
    let parser = Parser {
        text: trimmed.as_bytes(),
        pos: 0,
        mol: Molecule {
            source_smiles: trimmed.to_string(),
            ..Molecule::default()
        },
        atom_offsets: Vec::new(),
        explicit_h: Vec::new(),
    };
    parser.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::Hybridization;
    use proptest::prelude::*;

    #[test]
    fn methane() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(m.atoms.len(), 1);
        assert_eq!(m.bonds.len(), 0);
        assert_eq!(m.atoms[0].element, 6);
        assert_eq!(m.atoms[0].implicit_h, 4);
        assert_eq!(m.atoms[0].hybridization, Hybridization::Sp3);
    }

    #[test]
    fn benzene() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atoms.len(), 6);
        assert!(m.atoms.iter().all(|a| a.aromatic && a.element == 6 && a.implicit_h == 1));
        assert_eq!(m.bonds.len(), 6);
        assert!(m
            .bonds
            .iter()
            .all(|b| b.order == BondOrder::Aromatic && b.smallest_ring_size == 6));
    }

    #[test]
    fn cyclopropane() {
        let m = parse_smiles("C1CC1").unwrap();
        assert_eq!((m.atoms.len(), m.bonds.len()), (3, 3));
        assert!(m.bonds.iter().all(|b| b.smallest_ring_size == 3));
    }

    #[test]
    fn implicit_hydrogen_valences() {
        let cases = [
            ("CCO", vec![3, 2, 1]),
            ("C=O", vec![2, 0]),
            ("C#N", vec![1, 0]),
            ("CS(=O)(=O)C", vec![3, 0, 0, 0, 3]),
            ("CP(=O)(O)O", vec![3, 0, 0, 1, 1]),
            ("ClCBr", vec![0, 2, 0]),
            ("c1ccncc1", vec![1, 1, 1, 0, 1, 1]),
            ("c1cc[nH]c1", vec![1, 1, 1, 1, 1]),
            ("c1ccoc1", vec![1, 1, 1, 0, 1]),
            ("[NH4+]", vec![4]),
            ("C[N+](C)(C)C", vec![3, 0, 3, 3, 3]),
        ];
        for (smi, hs) in cases {
            let m = parse_smiles(smi).unwrap();
            let got: Vec<u8> = m.atoms.iter().map(|a| a.implicit_h).collect();
            let want: Vec<u8> = hs.iter().map(|&h| h as u8).collect();
            assert_eq!(got, want, "{smi}");
        }
    }

    #[test]
    fn bracket_atoms() {
        let m = parse_smiles("[13CH3][C@@H](N)[O-]").unwrap();
        assert_eq!(m.atoms[0].implicit_h, 3);
        assert_eq!(m.atoms[1].chirality, Chirality::Clockwise);
        assert_eq!(m.atoms[3].formal_charge, -1);
        let fe = parse_smiles("[Fe+++]").unwrap();
        assert_eq!(fe.atoms[0].formal_charge, 3);
        let z = parse_smiles("[Zn+2]").unwrap();
        assert_eq!(z.atoms[0].formal_charge, 2);
    }

    #[test]
    fn two_digit_ring_and_stereo_bonds() {
        let m = parse_smiles("C%10CC%10").unwrap();
        assert_eq!(m.bonds.len(), 3);
        let m = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(m.bonds[0].stereo, BondStereo::Up);
        assert_eq!(m.bonds[1].order, BondOrder::Double);
    }

    #[test]
    fn fragments() {
        let m = parse_smiles("CCO.[Na+].[Cl-]").unwrap();
        assert_eq!(m.fragments().len(), 3);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            parse_smiles("C1CC"),
            Err(SmilesError::UnclosedRing { label: 1, offset: 1 })
        );
        assert_eq!(
            parse_smiles("CC(C"),
            Err(SmilesError::Unbalanced {
                what: "parenthesis",
                offset: 2
            })
        );
        assert_eq!(
            parse_smiles("CC)C"),
            Err(SmilesError::Unbalanced {
                what: "parenthesis",
                offset: 2
            })
        );
        assert!(matches!(
            parse_smiles("C[Xx]"),
            Err(SmilesError::UnknownElement { offset: 2, .. })
        ));
        assert!(parse_smiles("C[Cx]").is_err());
        assert!(matches!(
            parse_smiles("CQ"),
            Err(SmilesError::UnknownElement { offset: 1, .. })
        ));
        assert!(matches!(
            parse_smiles("C[CH3"),
            Err(SmilesError::Unbalanced { what: "bracket", offset: 1 })
        ));
        assert!(matches!(
            parse_smiles("CC(C)(C)(C)(C)C"),
            Err(SmilesError::ValenceOverflow { offset: 1, .. })
        ));
        assert_eq!(parse_smiles("  "), Err(SmilesError::Empty));
        assert!(matches!(parse_smiles("C=1CC-1"), Err(SmilesError::RingBond { .. })));
        assert!(matches!(parse_smiles("C11"), Err(SmilesError::RingBond { .. })));
    }

    proptest! {
        #[test]
        fn never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let text = String::from_utf8_lossy(&bytes);
            let _ = parse_smiles(&text);
        }

        #[test]
        fn never_panics_on_smiles_alphabet(s in "[CNOcnos()=#\\[\\]1-3%@+H.\\-]{0,30}") {
            if let Err(e) = parse_smiles(&s) {
                // every error message renders and carries a position where relevant
                let _ = e.to_string();
            }
        }
    }
}
