//! Deterministic coordinate layout from the bond graph.
//!
//! Target distances are shortest-path sums of covalent-radius bond lengths;
//! classical MDS provides the start and weighted stress majorization refines
//! it. Used for 2D depictions and the coordinate-free radius of gyration.

use crate::chem::Molecule;
use crate::elements;

const STRESS_ITERS: usize = 300;

fn target_distances(m: &Molecule) -> Vec<Vec<f64>> {
    let n = m.atoms.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let radius = |z: u8| elements::lookup(z).map(|r| r.covalent_radius).unwrap_or(0.77);
    for b in &m.bonds {
        let len = radius(m.atoms[b.a].element) + radius(m.atoms[b.b].element);
        d[b.a][b.b] = len;
        d[b.b][b.a] = len;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k][j];
                if cand < d[i][j] {
                    d[i][j] = cand;
                }
            }
        }
    }
    // separate disconnected fragments by a fixed gap beyond the widest span
    let span = d
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, &b| a.max(b));
    for row in d.iter_mut() {
        for v in row.iter_mut() {
            if !v.is_finite() {
                *v = span + 3.0;
            }
        }
    }
    d
}

/// Top `k` eigenpairs of a symmetric matrix by deflated power iteration.
fn top_eigen(mut a: Vec<Vec<f64>>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let n = a.len();
    let mut out = Vec::new();
    for comp in 0..k {
        let mut v: Vec<f64> = (0..n)
            .map(|i| ((i * (comp + 2) + 1) as f64 * 0.7531).sin() + 0.01 * (i as f64))
            .collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut w = vec![0.0; n];
            for i in 0..n {
                w[i] = a[i].iter().zip(&v).map(|(x, y)| x * y).sum();
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                lambda = 0.0;
                break;
            }
            for x in w.iter_mut() {
                *x /= norm;
            }
            let delta: f64 = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).sum();
            v = w;
            lambda = norm;
            if delta < 1e-12 {
                break;
            }
        }
        // Rayleigh quotient keeps the sign for indefinite matrices
        let av: Vec<f64> = (0..n)
            .map(|i| a[i].iter().zip(&v).map(|(x, y)| x * y).sum())
            .collect();
        let rq: f64 = av.iter().zip(&v).map(|(x, y)| x * y).sum();
        if rq > 0.0 {
            lambda = rq;
        } else {
            lambda = lambda.min(0.0);
        }
        for i in 0..n {
            for j in 0..n {
                a[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

/// Lay out all atoms in `dim` (2 or 3) dimensions; unused axes are zero.
pub fn embed(m: &Molecule, dim: usize) -> Vec<[f64; 3]> {
    let n = m.atoms.len();
    let dim = dim.clamp(1, 3);
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![[0.0; 3]];
    }
    let d = target_distances(m);

    // classical MDS start
    let d2: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|x| x * x).collect()).collect();
    let row_mean: Vec<f64> = d2.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let total_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| -0.5 * (d2[i][j] - row_mean[i] - row_mean[j] + total_mean))
                .collect()
        })
        .collect();
    let eig = top_eigen(b, dim);
    let mut x = vec![[0.0f64; 3]; n];
    for (k, (lambda, v)) in eig.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            x[i][k] = v[i] * s;
        }
    }
    // break exact symmetry so the refinement can move collapsed points apart
    for (i, p) in x.iter_mut().enumerate() {
        for (k, c) in p.iter_mut().enumerate().take(dim) {
            *c += 1e-3 * (((i * 7 + k * 13) as f64) * 0.37).sin();
        }
    }

    // weighted stress majorization (w = d⁻²), localized Gauss–Seidel updates
    for _ in 0..STRESS_ITERS {
        for i in 0..n {
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = 1.0 / (d[i][j] * d[i][j]);
                let dist = (0..dim).map(|k| (x[i][k] - x[j][k]).powi(2)).sum::<f64>().sqrt();
                let ratio = if dist > 1e-12 { d[i][j] / dist } else { 0.0 };
                for k in 0..dim {
                    acc[k] += w * (x[j][k] + ratio * (x[i][k] - x[j][k]));
                }
                wsum += w;
            }
            for k in 0..dim {
                x[i][k] = acc[k] / wsum;
            }
        }
    }
    // center
    for k in 0..dim {
        let mean = x.iter().map(|p| p[k]).sum::<f64>() / n as f64;
        for p in x.iter_mut() {
            p[k] -= mean;
        }
    }
    x
}
