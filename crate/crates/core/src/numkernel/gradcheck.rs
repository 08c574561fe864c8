//! Central-difference checks of every differentiable tape op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::Result;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

type Build = dyn for<'a> Fn(&mut Tape<'a>, &[Var]) -> Result<Var>;

fn weighted_loss<'a>(tape: &mut Tape<'a>, out: Var, weights: &'a Tensor) -> Var {
    let w = tape.constant(weights);
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

fn eval(build: &Build, inputs: &[Tensor], weights: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t)).collect();
    let out = build(&mut tape, &vars).unwrap();
    let loss = weighted_loss(&mut tape, out, weights);
    tape.value(loss).item()
}

/// Largest norm-wise relative error between autograd and central
/// differences across all inputs.
fn max_rel_error(build: &Build, inputs: Vec<Tensor>, rng: &mut ChaCha8Rng) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = build(&mut tape, &vars).unwrap();
    let shape = tape.value(out).shape().to_vec();
    let weights = Tensor::randn(&shape, 1.0, rng);
    let loss = weighted_loss(&mut tape, out, &weights);
    tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (idx, var) in vars.iter().enumerate() {
        let auto = tape.grad(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[idx].numel()]);
        let mut numeric = vec![0.0; auto.len()];
        for e in 0..auto.len() {
            let mut plus = inputs.clone();
            plus[idx].data_mut()[e] += H;
            let mut minus = inputs.clone();
            minus[idx].data_mut()[e] -= H;
            numeric[e] = (eval(build, &plus, &weights) - eval(build, &minus, &weights)) / (2.0 * H);
        }
        let diff: f64 = auto.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = norm(&auto).max(norm(&numeric));
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

struct Case {
    name: &'static str,
    build: Box<Build>,
    inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            build: Box::new(|t, v| t.matmul(v[0], v[1])),
            inputs: |r| vec![randn(&[3, 4], r), randn(&[4, 5], r)],
        },
        Case {
            name: "matmul_nt",
            build: Box::new(|t, v| t.matmul_nt(v[0], v[1])),
            inputs: |r| vec![randn(&[6, 4], r), randn(&[3, 4], r)],
        },
        Case {
            name: "transpose",
            build: Box::new(|t, v| t.transpose(v[0])),
            inputs: |r| vec![randn(&[2, 5], r)],
        },
        Case {
            name: "add_sub_mul",
            build: Box::new(|t, v| {
                let s = t.add(v[0], v[1])?;
                let d = t.sub(s, v[2])?;
                t.mul(d, v[1])
            }),
            inputs: |r| vec![randn(&[3, 3], r), randn(&[3, 3], r), randn(&[3, 3], r)],
        },
        Case {
            name: "scale_mul_const",
            build: Box::new(|t, v| {
                let s = t.scale(v[0], -1.7);
                t.mul_const(s, vec![0.0, 2.0, 1.0, 0.5, 0.0, 3.0])
            }),
            inputs: |r| vec![randn(&[2, 3], r)],
        },
        Case {
            name: "gather",
            build: Box::new(|t, v| t.gather(v[0], &[2, 0, 2, 1])),
            inputs: |r| vec![randn(&[4, 3], r)],
        },
        Case {
            name: "rms_norm",
            build: Box::new(|t, v| t.rms_norm(v[0], v[1])),
            inputs: |r| vec![randn(&[3, 5], r), randn(&[5], r)],
        },
        Case {
            name: "silu",
            build: Box::new(|t, v| Ok(t.silu(v[0]))),
            inputs: |r| vec![randn(&[4, 4], r)],
        },
        Case {
            name: "softmax_rows",
            build: Box::new(|t, v| t.softmax_rows(v[0])),
            inputs: |r| vec![randn(&[3, 6], r)],
        },
        Case {
            name: "causal_attention",
            build: Box::new(|t, v| {
                let segs = [Segment { start: 0, len: 3 }, Segment { start: 3, len: 4 }];
                t.causal_attention(v[0], v[1], v[2], 4, 2, &segs)
            }),
            inputs: |r| vec![randn(&[7, 8], r), randn(&[7, 4], r), randn(&[7, 4], r)],
        },
        Case {
            name: "cross_entropy",
            build: Box::new(|t, v| t.cross_entropy(v[0], &[Some(1), None, Some(4), Some(0)])),
            inputs: |r| vec![randn(&[4, 5], r)],
        },
        Case {
            name: "sum",
            build: Box::new(|t, v| Ok(t.sum(v[0]))),
            inputs: |r| vec![randn(&[3, 2], r)],
        },
    ]
}

#[test]
fn every_op_matches_central_differences() {
    let cases = cases();
    let trials = 100;
    for trial in 0..trials {
        let case = &cases[trial % cases.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(trial as u64);
        let inputs = (case.inputs)(&mut rng);
        let err = max_rel_error(&*case.build, inputs, &mut rng);
        assert!(err <= TOL, "{} (trial {trial}): relative error {err:e}", case.name);
    }
}

#[test]
fn backward_rejects_non_scalar() {
    let z = Tensor::zeros(&[2, 2]);
    let mut tape = Tape::new();
    let x = tape.param(&z);
    assert!(matches!(tape.backward(x), Err(crate::Error::Contract(_))));
}

#[test]
fn sum_gradient_is_ones_and_accumulates() {
    let w0 = Tensor::full(&[2, 3], 0.3);
    let mut tape = Tape::new();
    let w = tape.param(&w0);
    let s = tape.sum(w);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(w).unwrap(), &[1.0; 6]);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(w).unwrap(), &[2.0; 6]);
}

#[test]
fn constant_loss_has_zero_gradient() {
    let (w0, c0) = (Tensor::full(&[2, 2], 1.0), Tensor::full(&[2, 2], 5.0));
    let mut tape = Tape::new();
    let w = tape.param(&w0);
    let c = tape.constant(&c0);
    let z = tape.scale(w, 0.0);
    let y = tape.add(z, c).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(w).unwrap(), &[0.0; 4]);
}

#[test]
fn linear_sum_gradient_is_outer_product() {
    // loss = sum(W x) for fixed x: dL/dW[i][j] = x[j].
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = Tensor::randn(&[3, 4], 1.0, &mut rng);
    let x = Tensor::randn(&[1, 4], 1.0, &mut rng);
    let mut tape = Tape::new();
    let wv = tape.param(&w);
    let xv = tape.constant(&x);
    let h = tape.matmul_nt(xv, wv).unwrap();
    let s = tape.sum(h);
    tape.backward(s).unwrap();
    let g = tape.grad(wv).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            assert!((g[i * 4 + j] - x.data()[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = Tensor::randn(&[4, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[4, 4], 1.0, &mut rng);
        let c = Tensor::randn(&[4, 4], 1.0, &mut rng);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-9);
    }
}

#[test]
fn attention_is_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = Tensor::randn(&[5, 4], 1.0, &mut rng);
    let k = Tensor::randn(&[5, 2], 1.0, &mut rng);
    let v = Tensor::randn(&[5, 2], 1.0, &mut rng);
    let run = |k: &Tensor, v: &Tensor| {
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.constant(&q), t.constant(k), t.constant(v));
        let o = t.causal_attention(qv, kv, vv, 2, 1, &[Segment { start: 0, len: 5 }]).unwrap();
        t.value(o).clone()
    };
    let base = run(&k, &v);
    let mut k2 = k.clone();
    let mut v2 = v.clone();
    k2.data_mut()[4 * 2] += rng.random::<f64>() + 1.0;
    v2.data_mut()[4 * 2 + 1] -= 2.0;
    let edited = run(&k2, &v2);
    assert_eq!(&base.data()[..4 * 4], &edited.data()[..4 * 4]);
    assert_ne!(&base.data()[4 * 4..], &edited.data()[4 * 4..]);
}
