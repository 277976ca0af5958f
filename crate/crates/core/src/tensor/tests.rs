use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Compare analytic gradients of `f` w.r.t. every input against central
/// differences with step 1e-5. `f` builds a scalar from the given leaves.
fn check_grad(
    inputs: &[(usize, usize, Vec<f64>)],
    f: impl Fn(&mut Tape, &[Var]) -> Var,
    tol: f64,
) {
    let build = |vals: &[Vec<f64>]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .zip(vals)
            .map(|(&(r, c, _), v)| t.variable(r, c, v.clone()).unwrap())
            .collect();
        let out = f(&mut t, &vars);
        (t, vars, out)
    };
    let base: Vec<Vec<f64>> = inputs.iter().map(|i| i.2.clone()).collect();
    let (tape, vars, out) = build(&base);
    let grads = tape.backward(out).unwrap();
    let h = 1e-5;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; base[k].len()]);
        for i in 0..base[k].len() {
            let mut plus = base.clone();
            plus[k][i] += h;
            let mut minus = base.clone();
            minus[k][i] -= h;
            let (tp, _, op) = build(&plus);
            let (tm, _, om) = build(&minus);
            let numeric = (tp.scalar(op) - tm.scalar(om)) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-3);
            let rel = (analytic[i] - numeric).abs() / denom;
            assert!(rel < tol, "input {k}[{i}]: analytic {} numeric {numeric}", analytic[i]);
        }
    }
}

/// Weighted sum so every output element contributes a distinct gradient.
fn probe(t: &mut Tape, v: Var, seed: u64) -> Var {
    let (r, c) = t.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(r, c, rand_vec(&mut rng, r * c)).unwrap();
    let p = t.mul(v, w).unwrap();
    t.sum(p)
}

#[test]
fn square_derivative() {
    let mut t = Tape::new();
    let x = t.variable(1, 1, vec![3.0]).unwrap();
    let y = t.mul(x, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[6.0]);
}

#[test]
fn dense_identity() {
    let mut t = Tape::new();
    let x = t.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let w = t.constant(3, 3, eye).unwrap();
    let b = t.constant(1, 3, vec![0.0; 3]).unwrap();
    let y = t.dense(x, w, b).unwrap();
    assert_eq!(t.value(y), t.value(x));
    assert!(t.matmul(x, x).is_err());
}

#[test]
fn dropout_zero_rate_and_eval_are_identity() {
    let mut t = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = t.constant(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
    assert_eq!(t.dropout(x, 0.0, &mut rng, true), x);
    assert_eq!(t.dropout(x, 0.5, &mut rng, false), x);
    let d = t.dropout(x, 0.5, &mut rng, true);
    for (o, i) in t.value(d).iter().zip(t.value(x)) {
        assert!(*o == 0.0 || *o == 2.0 * i);
    }
}

#[test]
fn batch_norm_constant_column() {
    let mut t = Tape::new();
    let x = t.constant(3, 1, vec![4.0; 3]).unwrap();
    let g = t.constant(1, 1, vec![1.0]).unwrap();
    let b = t.constant(1, 1, vec![0.0]).unwrap();
    let mut rs = RunningStats::new(1);
    let y = t.batch_norm(x, g, b, &mut rs, 1e-5, true).unwrap();
    assert!(t.value(y).iter().all(|v| v.abs() < 1e-12));
    assert!((rs.mean[0] - 0.4).abs() < 1e-12);
    assert!((rs.var[0] - 0.9).abs() < 1e-12);
}

#[test]
fn segment_max_cases() {
    let mut t = Tape::new();
    let x = t.constant(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap();
    let r = t.segment_max(x, &[0, 0], 1).unwrap();
    assert_eq!(t.value(r.value), &[3.0, 5.0]);
    assert_eq!(r.argmax, vec![Some(1), Some(0)]);
    let id = t.segment_max(x, &[0, 1], 2).unwrap();
    assert_eq!(t.value(id.value), t.value(x));
    let e = t.segment_max(x, &[0, 2], 3).unwrap();
    assert_eq!(&t.value(e.value)[2..4], &[0.0, 0.0]);
    assert_eq!(e.empty, vec![false, true, false]);
    assert!(matches!(t.segment_max(x, &[0, 3], 3), Err(Error::SegmentId { id: 3, n: 3 })));
}

#[test]
fn segment_max_ties_go_to_first() {
    let mut t = Tape::new();
    let x = t.variable(3, 1, vec![2.0, 2.0, 1.0]).unwrap();
    let r = t.segment_max(x, &[0, 0, 0], 1).unwrap();
    let s = t.sum(r.value);
    let g = t.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0, 0.0, 0.0]);
}

#[test]
fn segment_ops_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let rows = rng.random_range(1..12);
        let cols = rng.random_range(1..4);
        let n = rng.random_range(1..5);
        let seg: Vec<usize> = (0..rows).map(|_| rng.random_range(0..n)).collect();
        let vals = rand_vec(&mut rng, rows * cols);
        let mut t = Tape::new();
        let x = t.constant(rows, cols, vals.clone()).unwrap();
        let mx = t.segment_max(x, &seg, n).unwrap();
        let mean = t.segment_mean(x, &seg, n).unwrap();
        let sm = t.segment_softmax(x, &seg, n).unwrap();
        for s in 0..n {
            let members: Vec<usize> = (0..rows).filter(|&r| seg[r] == s).collect();
            for k in 0..cols {
                let col: Vec<f64> = members.iter().map(|&r| vals[r * cols + k]).collect();
                let want_max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let want_max = if col.is_empty() { 0.0 } else { want_max };
                assert_eq!(t.value(mx.value)[s * cols + k], want_max);
                let want_mean = if col.is_empty() {
                    0.0
                } else {
                    col.iter().sum::<f64>() / col.len() as f64
                };
                assert!((t.value(mean)[s * cols + k] - want_mean).abs() < 1e-15);
                let z: f64 = col.iter().map(|v| v.exp()).sum();
                let mut total = 0.0;
                for &r in &members {
                    let got = t.value(sm)[r * cols + k];
                    assert!((got - vals[r * cols + k].exp() / z).abs() < 1e-12);
                    assert!(got >= 0.0);
                    total += got;
                }
                if !members.is_empty() {
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn softmax_small_cases() {
    let mut t = Tape::new();
    let x = t.constant(3, 1, vec![7.0, 0.3, 0.3]).unwrap();
    let s = t.segment_softmax(x, &[0, 1, 1], 2).unwrap();
    assert_eq!(t.value(s), &[1.0, 0.5, 0.5]);
}

#[test]
fn losses() {
    let mut t = Tape::new();
    let z = t.constant(1, 1, vec![0.0]).unwrap();
    let l = t.bce_with_logits(z, &[0.5], None).unwrap();
    assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
    let big = t.constant(1, 1, vec![800.0]).unwrap();
    let l = t.bce_with_logits(big, &[1.0], None).unwrap();
    assert!(t.scalar(l).is_finite() && t.scalar(l) < 1e-300);
    let p = t.constant(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let m = t.mse(p, &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(t.scalar(m), 0.0);
    assert!(t.mse(p, &[1.0]).is_err());
}

#[test]
fn backward_requires_scalar() {
    let mut t = Tape::new();
    let x = t.variable(2, 1, vec![1.0, 2.0]).unwrap();
    assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn finite_differences_per_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tol = 1e-6;
    for trial in 0..5u64 {
        let n = rng.random_range(2..5);
        let k = rng.random_range(1..4);
        let m = rng.random_range(1..4);
        let a = rand_vec(&mut rng, n * k);
        let b = rand_vec(&mut rng, k * m);
        let bias = rand_vec(&mut rng, m);
        let c = rand_vec(&mut rng, n * k);
        check_grad(&[(n, k, a.clone()), (k, m, b.clone()), (1, m, bias.clone())], |t, v| {
            let y = t.dense(v[0], v[1], v[2]).unwrap();
            probe(t, y, trial)
        }, tol);
        check_grad(&[(n, k, a.clone()), (n, k, c.clone())], |t, v| {
            let s = t.add(v[0], v[1]).unwrap();
            let d = t.sub(s, v[1]).unwrap();
            let p = t.mul(d, v[1]).unwrap();
            let q = t.scale(p, -1.7);
            probe(t, q, trial)
        }, tol);
        check_grad(&[(n, k, a.clone())], |t, v| {
            let r = t.relu(v[0]);
            let l = t.leaky_relu(v[0], 0.2);
            let s = t.sigmoid(v[0]);
            let c = t.concat(&[r, l, s]).unwrap();
            probe(t, c, trial)
        }, tol);
        check_grad(&[(n, k, a.clone())], |t, v| {
            let g = t.gather_rows(v[0], &[0, n - 1, 0, 1]).unwrap();
            let seg = [0, 1, 1, 0];
            let mx = t.segment_max(g, &seg, 3).unwrap().value;
            let mean = t.segment_mean(g, &seg, 3).unwrap();
            let sum = t.segment_sum(g, &seg, 3).unwrap();
            let sm = t.segment_softmax(g, &seg, 3).unwrap();
            let c = t.concat(&[mx, mean, sum]).unwrap();
            let p1 = probe(t, c, trial);
            let p2 = probe(t, sm, trial + 100);
            t.add(p1, p2).unwrap()
        }, tol);
        let w: Vec<f64> = rand_vec(&mut rng, n);
        check_grad(&[(n, k, a.clone()), (n, 1, w.clone())], |t, v| {
            let f: Vec<f64> = (0..n).map(|i| 0.5 + i as f64).collect();
            let r = t.row_scale(v[0], &f).unwrap();
            let mc = t.mul_col(r, v[1]).unwrap();
            let col = t.columns(mc, k - 1, 1).unwrap();
            let c = t.concat(&[mc, col]).unwrap();
            probe(t, c, trial)
        }, tol);
        let gamma = rand_vec(&mut rng, k);
        let beta = rand_vec(&mut rng, k);
        for training in [true, false] {
            check_grad(&[(n, k, a.clone()), (1, k, gamma.clone()), (1, k, beta.clone())], |t, v| {
                let mut rs = RunningStats {
                    mean: vec![0.1; k],
                    var: vec![0.7; k],
                };
                let y = t.batch_norm(v[0], v[1], v[2], &mut rs, 1e-5, training).unwrap();
                probe(t, y, trial)
            }, 1e-5);
        }
        let targets: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let weights: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        check_grad(&[(n, 1, w.clone())], |t, v| {
            let b = t.bce_with_logits(v[0], &targets, Some(&weights)).unwrap();
            let m = t.mse(v[0], &targets).unwrap();
            let mean = t.mean(v[0]);
            let s = t.add(b, m).unwrap();
            t.add(s, mean).unwrap()
        }, tol);
    }
}

#[test]
fn dropout_gradient_uses_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = Tape::new();
    let x = t.variable(4, 4, vec![1.0; 16]).unwrap();
    let d = t.dropout(x, 0.5, &mut rng, true);
    let s = t.sum(d);
    let g = t.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), t.value(d));
}

#[test]
fn params_gradients_and_zeroing() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParameterStore::new();
    let w = store.add("w", 2, 1, Init::Uniform { fan_in: 2 }, &mut rng);
    let run = |store: &mut ParameterStore| {
        store.zero_grad();
        let mut t = Tape::new();
        let x = t.constant(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let wv = t.param(store, w);
        let y = t.matmul(x, wv).unwrap();
        let l = t.mse(y, &[1.0, 0.0, -1.0]).unwrap();
        t.backward_into(l, store).unwrap();
        store.get(w).grad.clone()
    };
    let g1 = run(&mut store);
    let g2 = run(&mut store);
    assert_eq!(g1, g2);
    assert!(g1.iter().any(|g| *g != 0.0));
}

#[test]
fn clipping_halves_norm_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParameterStore::new();
    let a = store.add("a", 1, 2, Init::Zeros, &mut rng);
    let b = store.add("b", 1, 2, Init::Zeros, &mut rng);
    store.accumulate(a, &[1.0, 1.0]);
    store.accumulate(b, &[1.0, -1.0]);
    assert_eq!(clip_grad_norm(&mut store, 1.0), 2.0);
    assert_eq!(store.get(a).grad, vec![0.5, 0.5]);
    assert_eq!(store.get(b).grad, vec![0.5, -0.5]);
    assert_eq!(clip_grad_norm(&mut store, 5.0), 1.0);
    assert_eq!(store.get(a).grad, vec![0.5, 0.5]);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParameterStore::new();
    let a = store.add("a", 1, 3, Init::Zeros, &mut rng);
    store.accumulate(a, &[2.0, -0.1, 0.0]);
    adam_step(&mut store, 0.01, AdamConfig::default());
    let v = &store.get(a).value;
    // bias-corrected first step is lr · sign(g)
    assert!((v[0] + 0.01).abs() < 1e-9);
    assert!((v[1] - 0.01).abs() < 1e-9);
    assert_eq!(v[2], 0.0);
    assert_eq!(store.step, 1);
}

#[test]
fn adam_minimizes_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParameterStore::new();
    let x = store.add("x", 1, 1, Init::Ones, &mut rng);
    for _ in 0..2000 {
        store.zero_grad();
        let mut t = Tape::new();
        let xv = t.param(&store, x);
        let d = t.mse(xv, &[-3.0]).unwrap();
        t.backward_into(d, &mut store).unwrap();
        adam_step(&mut store, 0.05, AdamConfig::default());
    }
    assert!((store.get(x).value[0] + 3.0).abs() < 1e-3);
}

#[test]
fn plateau_halves_after_patience() {
    let mut s = PlateauScheduler::new(0.01);
    assert_eq!(s.step(1.0), 0.01);
    for _ in 0..4 {
        assert_eq!(s.step(1.0), 0.01);
    }
    assert_eq!(s.step(1.0), 0.005);
    let mut floor = PlateauScheduler::with(2e-5, 0.5, 0, 1e-5);
    floor.step(1.0);
    assert_eq!(floor.step(2.0), 1e-5);
    assert_eq!(floor.step(2.0), 1e-5);
}

#[test]
fn relu_propagates_nan() {
    let mut t = Tape::new();
    let a = t.constant(1, 3, vec![-1.0, f64::NAN, 2.0]).unwrap();
    let r = t.relu(a);
    let v = t.value(r);
    assert_eq!(v[0], 0.0);
    assert!(v[1].is_nan());
    assert_eq!(v[2], 2.0);
}
