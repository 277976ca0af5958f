//! Relevance depictions: 2D layout, atoms filled on a fixed colormap, score
//! labels on the highest-scoring atoms.

use std::fmt::Write;

use bmpnn_core::chem::{BondOrder, Molecule};
use bmpnn_core::layout;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;
const TOP_LABELS: usize = 5;

// Viridis, sampled at five stops.
const STOPS: [(f64, [u8; 3]); 5] = [
    (0.00, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.50, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.00, [253, 231, 37]),
];

pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    for w in STOPS.windows(2) {
        let ((t0, c0), (t1, c1)) = (w[0], w[1]);
        if t <= t1 {
            let f = (t - t0) / (t1 - t0);
            let mut c = [0u8; 3];
            for k in 0..3 {
                c[k] = (c0[k] as f64 + f * (c1[k] as f64 - c0[k] as f64)).round() as u8;
            }
            return c;
        }
    }
    STOPS[4].1
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Indices of the `k` highest scores, ties to the lower index.
pub fn top_atoms(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn render(m: &Molecule, scores: &[f64], title: &str) -> String {
    let mut flat = m.clone();
    flat.has_3d = false;
    for a in &mut flat.atoms {
        a.position = None;
    }
    let pos = layout::embed(&flat, 2);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pos {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let centre = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let xy = |i: usize| {
        (
            SIZE / 2.0 + (pos[i][0] - centre[0]) * scale,
            SIZE / 2.0 - (pos[i][1] - centre[1]) * scale,
        )
    };
    let radius = (0.28 * scale).clamp(6.0, 18.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    for b in &m.bonds {
        let (x1, y1) = xy(b.a);
        let (x2, y2) = xy(b.b);
        let lines = match b.order {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        };
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = dx.hypot(dy).max(1e-9);
        let (nx, ny) = (-dy / len * 3.0, dx / len * 3.0);
        for k in 0..lines {
            let off = k as f64 - (lines - 1) as f64 / 2.0;
            let dash = if b.order == BondOrder::Aromatic { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#444" stroke-width="2"{dash}/>"##,
                x1 + nx * off,
                y1 + ny * off,
                x2 + nx * off,
                y2 + ny * off
            );
        }
    }
    for (i, a) in m.atoms.iter().enumerate() {
        let (x, y) = xy(i);
        let [r, g, b] = colormap(scores.get(i).copied().unwrap_or(0.0));
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.1}" cy="{y:.1}" r="{radius:.1}" fill="rgb({r},{g},{b})" stroke="#222"/>"##
        );
        let ink = if (r as u32 + g as u32 + b as u32) > 380 { "black" } else { "white" };
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle" fill="{ink}">{}</text>"#,
            y + 4.0,
            a.symbol()
        );
    }
    for i in top_atoms(scores, TOP_LABELS) {
        let (x, y) = xy(i);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="black">{:.2}</text>"#,
            x + radius,
            y - radius,
            scores[i]
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use bmpnn_core::chem::parse_smiles;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [68, 1, 84]);
        assert_eq!(colormap(1.0), [253, 231, 37]);
        assert_eq!(colormap(f64::NAN), [68, 1, 84]);
    }

    #[test]
    fn labels_top_five() {
        let m = parse_smiles("CCCCCCCO").unwrap();
        let scores: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let svg = render(&m, &scores, "heptanol");
        assert_eq!(svg.matches("<circle").count(), 8);
        assert!(svg.contains(">1.00<"));
        assert!(!svg.contains(">0.29<"));
        assert_eq!(top_atoms(&[0.5, 0.5, 0.9], 2), vec![2, 0]);
    }
}
