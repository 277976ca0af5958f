//! MOL V2000 / SDF reader.

use std::collections::BTreeMap;

use super::perceive::implicit_hydrogens;
use super::{Atom, Bond, BondOrder, BondStereo, Molecule};
use crate::elements;
use crate::error::SdfError;

/// One SDF record: the molecule plus its `> <field>` data items.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfRecord {
    pub molecule: Molecule,
    pub fields: BTreeMap<String, String>,
}

fn charge_code(code: i32) -> i8 {
    match code {
        1 => 3,
        2 => 2,
        3 => 1,
        5 => -1,
        6 => -2,
        7 => -3,
        _ => 0,
    }
}

fn fixed_usize(line: &str, range: std::ops::Range<usize>) -> Option<usize> {
    line.get(range)?.trim().parse().ok()
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, SdfError> {
        let l = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or(SdfError::Truncated { line: self.pos + 1 })?;
        self.pos += 1;
        Ok(l)
    }

    /// 1-based number of the line most recently returned.
    fn line_no(&self) -> usize {
        self.pos
    }

    fn at_end(&self) -> bool {
        self.lines[self.pos..].iter().all(|l| l.trim().is_empty())
    }
}

fn parse_record(lines: &mut Lines<'_>) -> Result<SdfRecord, SdfError> {
    let name = lines.next()?.trim().to_string();
    lines.next()?;
    lines.next()?;
    let counts = lines.next()?;
    let counts_line = lines.line_no();
    if counts.contains("V3000") {
        return Err(SdfError::Version {
            line: counts_line,
            version: "V3000".into(),
        });
    }
    let n_atoms = fixed_usize(counts, 0..3).ok_or(SdfError::CountsLine { line: counts_line })?;
    let n_bonds = fixed_usize(counts, 3..6).ok_or(SdfError::CountsLine { line: counts_line })?;

    let mut mol = Molecule {
        name,
        has_3d: true,
        ..Molecule::default()
    };
    for _ in 0..n_atoms {
        let l = lines.next()?;
        let line = lines.line_no();
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() < 4 {
            return Err(SdfError::Truncated { line });
        }
        let mut pos = [0.0; 3];
        for (k, p) in pos.iter_mut().enumerate() {
            *p = tok[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or(SdfError::Field {
                    line,
                    field: "coordinate",
                })?;
        }
        let symbol = tok[3];
        let rec = elements::by_symbol(symbol).ok_or_else(|| SdfError::UnknownElement {
            line,
            symbol: symbol.to_string(),
        })?;
        let mut atom = Atom::new(rec.z);
        atom.position = Some(pos);
        if let Some(code) = tok.get(5).and_then(|c| c.parse::<i32>().ok()) {
            atom.formal_charge = charge_code(code);
        }
        mol.atoms.push(atom);
    }
    for _ in 0..n_bonds {
        let l = lines.next()?;
        let line = lines.line_no();
        let a = fixed_usize(l, 0..3).ok_or(SdfError::Field { line, field: "bond atom" })?;
        let b = fixed_usize(l, 3..6).ok_or(SdfError::Field { line, field: "bond atom" })?;
        let t = fixed_usize(l, 6..9).ok_or(SdfError::Field { line, field: "bond type" })?;
        for atom in [a, b] {
            if atom == 0 || atom > n_atoms {
                return Err(SdfError::BondIndex { line, atom });
            }
        }
        if a == b {
            return Err(SdfError::BondIndex { line, atom: a });
        }
        let order = match t {
            1 => BondOrder::Single,
            2 => BondOrder::Double,
            3 => BondOrder::Triple,
            4 => BondOrder::Aromatic,
            _ => return Err(SdfError::Field { line, field: "bond type" }),
        };
        if order == BondOrder::Aromatic {
            mol.atoms[a - 1].aromatic = true;
            mol.atoms[b - 1].aromatic = true;
        }
        let mut bond = Bond::new(a - 1, b - 1, order);
        bond.stereo = match fixed_usize(l, 9..12) {
            Some(1) => BondStereo::Up,
            Some(6) => BondStereo::Down,
            _ => BondStereo::None,
        };
        mol.bonds.push(bond);
    }

    // properties block
    let mut charges: Option<Vec<(usize, i8)>> = None;
    loop {
        let l = lines.next()?;
        let line = lines.line_no();
        if l.starts_with("M  END") {
            break;
        }
        if l.starts_with("$$$$") {
            return Err(SdfError::Truncated { line });
        }
        if l.starts_with("M  CHG") {
            let tok: Vec<&str> = l.split_whitespace().collect();
            let n: usize = tok
                .get(2)
                .and_then(|t| t.parse().ok())
                .ok_or(SdfError::Field { line, field: "M  CHG count" })?;
            let list = charges.get_or_insert_with(Vec::new);
            for k in 0..n {
                let atom: usize = tok
                    .get(3 + 2 * k)
                    .and_then(|t| t.parse().ok())
                    .ok_or(SdfError::Field { line, field: "M  CHG atom" })?;
                let value: i8 = tok
                    .get(4 + 2 * k)
                    .and_then(|t| t.parse().ok())
                    .ok_or(SdfError::Field { line, field: "M  CHG value" })?;
                if atom == 0 || atom > n_atoms {
                    return Err(SdfError::BondIndex { line, atom });
                }
                list.push((atom - 1, value));
            }
        }
    }
    if let Some(list) = charges {
        // M  CHG supersedes atom-block charge codes
        for a in &mut mol.atoms {
            a.formal_charge = 0;
        }
        for (i, c) in list {
            mol.atoms[i].formal_charge = c;
        }
    }

    // data items
    let mut fields = BTreeMap::new();
    while lines.pos < lines.lines.len() {
        let l = lines.next()?;
        if l.starts_with("$$$$") {
            break;
        }
        if let Some(rest) = l.trim_start().strip_prefix('>') {
            let key = match (rest.find('<'), rest.find('>')) {
                (Some(s), Some(e)) if e > s => rest[s + 1..e].to_string(),
                _ => continue,
            };
            let mut value = Vec::new();
            while lines.pos < lines.lines.len() {
                let v = lines.lines[lines.pos];
                if v.trim().is_empty() || v.starts_with("$$$$") {
                    break;
                }
                value.push(v.trim_end());
                lines.pos += 1;
            }
            fields.insert(key, value.join("\n"));
        }
    }

    for i in 0..mol.atoms.len() {
        mol.atoms[i].implicit_h = implicit_hydrogens(&mol, i).unwrap_or(0);
    }
    mol.perceive();
    Ok(SdfRecord { molecule: mol, fields })
}

/// Parse every record of an SDF stream, keeping data items.
pub fn parse_sdf_records(bytes: &[u8]) -> Result<Vec<SdfRecord>, SdfError> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = Lines {
        lines: text.lines().collect(),
        pos: 0,
    };
    let mut out = Vec::new();
    while !lines.at_end() {
        out.push(parse_record(&mut lines)?);
    }
    Ok(out)
}

/// Parse every record of an SDF stream into molecules with 3D coordinates.
pub fn parse_sdf(bytes: &[u8]) -> Result<Vec<Molecule>, SdfError> {
    Ok(parse_sdf_records(bytes)?
        .into_iter()
        .map(|r| r.molecule)
        .collect())
}

/// Write molecules as a V2000 SDF stream (coordinates default to the origin).
pub fn write_sdf(mols: &[(Molecule, BTreeMap<String, String>)]) -> String {
    let mut out = String::new();
    for (m, fields) in mols {
        out.push_str(&m.name);
        out.push_str("\n  bmpnn\n\n");
        out.push_str(&format!(
            "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000\n",
            m.atoms.len(),
            m.bonds.len()
        ));
        let mut chg = Vec::new();
        for (i, a) in m.atoms.iter().enumerate() {
            let p = a.position.unwrap_or([0.0; 3]);
            out.push_str(&format!(
                "{:>10.4}{:>10.4}{:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0\n",
                p[0],
                p[1],
                p[2],
                a.symbol()
            ));
            if a.formal_charge != 0 {
                chg.push((i + 1, a.formal_charge));
            }
        }
        for b in &m.bonds {
            let t = match b.order {
                BondOrder::Single => 1,
                BondOrder::Double => 2,
                BondOrder::Triple => 3,
                BondOrder::Aromatic => 4,
            };
            out.push_str(&format!("{:>3}{:>3}{:>3}  0\n", b.a + 1, b.b + 1, t));
        }
        for chunk in chg.chunks(8) {
            out.push_str(&format!("M  CHG{:>3}", chunk.len()));
            for (i, c) in chunk {
                out.push_str(&format!(" {i:>3} {c:>3}"));
            }
            out.push('\n');
        }
        out.push_str("M  END\n");
        for (k, v) in fields {
            out.push_str(&format!("> <{k}>\n{v}\n\n"));
        }
        out.push_str("$$$$\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_ATOM: &str = "\
methane
  test

  1  0  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
M  END
$$$$
";

    const ETHANE: &str = "\
ethane
  test

  2  1  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    1.5400    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0  0  0  0
M  END
> <label>
1

$$$$
";

    #[test]
    fn single_atom_at_origin() {
        let mols = parse_sdf(ONE_ATOM.as_bytes()).unwrap();
        assert_eq!(mols.len(), 1);
        assert_eq!(mols[0].atoms[0].position, Some([0.0, 0.0, 0.0]));
        assert!(mols[0].has_3d);
        assert_eq!(mols[0].atoms[0].implicit_h, 4);
        assert_eq!(mols[0].name, "methane");
    }

    #[test]
    fn coordinates_read_verbatim() {
        let recs = parse_sdf_records(ETHANE.as_bytes()).unwrap();
        let m = &recs[0].molecule;
        assert_eq!(m.atoms[1].position, Some([1.54, 0.0, 0.0]));
        assert_eq!(m.bonds.len(), 1);
        assert_eq!(recs[0].fields["label"], "1");
    }

    #[test]
    fn two_records() {
        let text = format!("{ONE_ATOM}{ETHANE}");
        assert_eq!(parse_sdf(text.as_bytes()).unwrap().len(), 2);
    }

    #[test]
    fn charge_lines() {
        let text = "\
ammonium
  test

  1  0  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 N   0  0  0  0  0  0  0  0  0  0  0  0
M  CHG  1   1   1
M  END
$$$$
";
        let m = &parse_sdf(text.as_bytes()).unwrap()[0];
        assert_eq!(m.atoms[0].formal_charge, 1);
        assert_eq!(m.atoms[0].implicit_h, 4);
    }

    #[test]
    fn errors() {
        let bad_counts = ONE_ATOM.replace("  1  0  0  0", " xx  0  0  0");
        assert!(matches!(
            parse_sdf(bad_counts.as_bytes()),
            Err(SdfError::CountsLine { line: 4 })
        ));
        let bad_coord = ONE_ATOM.replace("    0.0000    0.0000    0.0000 C", "    0.0000    abc    0.0000 C");
        assert!(matches!(
            parse_sdf(bad_coord.as_bytes()),
            Err(SdfError::Field { line: 5, .. })
        ));
        let truncated: String = ETHANE.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            parse_sdf(truncated.as_bytes()),
            Err(SdfError::Truncated { .. })
        ));
    }

    #[test]
    fn writer_round_trip() {
        let m = crate::chem::parse_smiles("C[N+](C)(C)C").unwrap();
        let text = write_sdf(&[(m.clone(), BTreeMap::new())]);
        let back = &parse_sdf(text.as_bytes()).unwrap()[0];
        assert_eq!(back.atoms.len(), 5);
        assert_eq!(back.atoms[1].formal_charge, 1);
        let hs: Vec<u8> = back.atoms.iter().map(|a| a.implicit_h).collect();
        assert_eq!(hs, vec![3, 0, 3, 3, 3]);
    }
}
