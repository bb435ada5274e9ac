//! Independent oracles shared by the integration tests: a naive O(n²) DFT and
//! central finite differences.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_edit::autodiff::{Tape, Var};
use spectral_edit::numerics::Tensor;
use spectral_edit::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// `rows × n` tensor with `n` drawn from `cols`; a vector when `rows == 1`.
pub fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: std::ops::Range<usize>) -> Tensor<f64> {
    let n = rng.random_range(cols);
    if rows == 1 {
        random_tensor(rng, &[n])
    } else {
        random_tensor(rng, &[rows, n])
    }
}

/// Unitary 3-D DFT over the first three axes of `h × w × τ × c`, evaluated
/// directly from the definition. Returns interleaved `(re, im)` per bin.
pub fn naive_dft3(x: &Tensor<f64>) -> Vec<(f64, f64)> {
    let s = x.shape();
    let (h, w, tau, c) = (s[0], s[1], s[2], s[3]);
    let norm = 1.0 / ((h * w * tau) as f64).sqrt();
    let mut out = vec![(0.0, 0.0); x.len()];
    for (a, b, k) in itertools(h, w, tau) {
        for ch in 0..c {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, j, l) in itertools(h, w, tau) {
                let phase = -2.0
                    * std::f64::consts::PI
                    * ((a * i) as f64 / h as f64 + (b * j) as f64 / w as f64 + (k * l) as f64 / tau as f64);
                let v = x.data()[((i * w + j) * tau + l) * c + ch];
                re += v * phase.cos();
                im += v * phase.sin();
            }
            out[((a * w + b) * tau + k) * c + ch] = (re * norm, im * norm);
        }
    }
    out
}

fn itertools(h: usize, w: usize, tau: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..h).flat_map(move |a| (0..w).flat_map(move |b| (0..tau).map(move |k| (a, b, k))))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute error when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|y| y * y).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64) -> Tensor<f64> {
    let mut g = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Builds an op's output from its inputs on a fresh tape.
pub type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// One gradient-check case: inputs plus the op under test.
pub struct OpCase {
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

/// Worst relative error between taped and finite-difference gradients of
/// `Σ w ⊙ op(inputs)` over every input, with `w` drawn from `rng`.
pub fn check_case(case: &OpCase, rng: &mut ChaCha8Rng) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = (case.build)(&mut tape, &vars).expect("op builds");
    let weights = random_tensor(rng, tape.shape(out));
    let scalar = |tape: &mut Tape<f64>, out: Var| -> Var {
        let w = tape.constant(weights.clone());
        let m = tape.mul(out, w).expect("weights match output");
        tape.sum(m).expect("sum")
    };
    let loss = scalar(&mut tape, out);
    let grads = tape.gradients(loss).expect("backward");
    let mut worst = 0.0f64;
    for (i, x) in case.inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        let f = |probe: &Tensor<f64>| -> f64 {
            let mut t = Tape::new();
            let vs: Vec<Var> = case
                .inputs
                .iter()
                .enumerate()
                .map(|(j, v)| t.leaf(if j == i { probe.clone() } else { v.clone() }))
                .collect();
            let o = (case.build)(&mut t, &vs).expect("op builds");
            let l = scalar(&mut t, o);
            t.value(l).item().expect("scalar loss")
        };
        let numeric = fd_gradient(&f, x, 1e-5);
        worst = worst.max(rel_err(analytic.data(), numeric.data()));
    }
    worst
}

fn unary(x: Tensor<f64>, build: impl Fn(&mut Tape<f64>, Var) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        inputs: vec![x],
        build: Box::new(move |t, v| build(t, v[0])),
    }
}

fn binary(a: Tensor<f64>, b: Tensor<f64>, build: impl Fn(&mut Tape<f64>, Var, Var) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        inputs: vec![a, b],
        build: Box::new(move |t, v| build(t, v[0], v[1])),
    }
}

/// Every differentiable tape op with a generator of random instances.
pub fn op_catalog() -> Vec<(&'static str, fn(&mut ChaCha8Rng) -> OpCase)> {
    vec![
        ("matmul", |r| {
            let (m, k, n) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
            let (ta, tb) = (r.random_bool(0.5), r.random_bool(0.5));
            let a = random_tensor(r, &if ta { [k, m] } else { [m, k] });
            let b = random_tensor(r, &if tb { [n, k] } else { [k, n] });
            binary(a, b, move |t, a, b| t.matmul(a, b, ta, tb))
        }),
        ("add", |r| {
            let s = [r.random_range(1..4), r.random_range(1..5)];
            binary(random_tensor(r, &s), random_tensor(r, &s), |t, a, b| t.add(a, b))
        }),
        ("add_bias", |r| {
            let (n, d) = (r.random_range(1..5), r.random_range(1..5));
            binary(random_tensor(r, &[n, d]), random_tensor(r, &[d]), |t, a, b| t.add_bias(a, b))
        }),
        ("sub", |r| {
            let s = [r.random_range(1..4), r.random_range(1..5)];
            binary(random_tensor(r, &s), random_tensor(r, &s), |t, a, b| t.sub(a, b))
        }),
        ("scale", |r| {
            let c = r.random_range(-2.0..2.0);
            unary(random_rows(r, 1, 1..6), move |t, x| t.scale(x, c))
        }),
        ("mul", |r| {
            let s = [r.random_range(1..4), r.random_range(1..5)];
            binary(random_tensor(r, &s), random_tensor(r, &s), |t, a, b| t.mul(a, b))
        }),
        ("softmax", |r| {
            let s = [r.random_range(1..4), r.random_range(2..6)];
            let x = random_tensor(r, &s).scale(3.0);
            unary(x, |t, x| t.softmax(x))
        }),
        ("layer_norm", |r| {
            let (n, d) = (r.random_range(1..4), r.random_range(2..6));
            OpCase {
                inputs: vec![random_tensor(r, &[n, d]), random_tensor(r, &[d]), random_tensor(r, &[d])],
                build: Box::new(|t, v| t.layer_norm(v[0], v[1], v[2])),
            }
        }),
        ("gelu", |r| unary(random_rows(r, 1, 1..8).scale(3.0), |t, x| t.gelu(x))),
        ("reshape", |r| {
            let (a, b) = (r.random_range(1..4), r.random_range(1..4));
            unary(random_tensor(r, &[a, b]), move |t, x| t.reshape(x, &[b, a]))
        }),
        ("permute", |r| {
            let s = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..4)];
            unary(random_tensor(r, &s), |t, x| t.permute(x, &[2, 0, 1]))
        }),
        ("dft3", |r| {
            let s = [r.random_range(1..4), r.random_range(1..4), r.random_range(1..5), r.random_range(1..3)];
            unary(random_tensor(r, &s), |t, x| t.dft3(x))
        }),
        ("lowpass", |r| {
            let s = [r.random_range(2..5), r.random_range(2..5), r.random_range(2..6), 2];
            let mask = spectral_edit::numerics::FilterSpec::default().mask(s[0], s[1], s[2]).expect("mask");
            unary(random_tensor(r, &s), move |t, x| {
                let f = t.dft3(x)?;
                t.lowpass(f, &mask)
            })
        }),
        ("squared_norm", |r| unary(random_rows(r, 1, 1..7), |t, x| t.squared_norm(x))),
        ("sum", |r| unary(random_rows(r, 2, 1..5), |t, x| t.sum(x))),
        ("embedding", |r| {
            let (n, d) = (r.random_range(2..5), r.random_range(1..4));
            let ids: Vec<usize> = (0..r.random_range(1..6)).map(|_| r.random_range(0..n)).collect();
            unary(random_tensor(r, &[n, d]), move |t, x| t.embedding(x, &ids))
        }),
        ("slice", |r| {
            let n = r.random_range(2..6);
            let a = r.random_range(0..n - 1);
            unary(random_tensor(r, &[3, n]), move |t, x| t.slice(x, 1, a..n))
        }),
        ("slice_rect", |r| {
            let (n, m) = (r.random_range(2..5), r.random_range(2..5));
            let (a, b) = (r.random_range(0..n - 1), r.random_range(0..m - 1));
            unary(random_tensor(r, &[n, m]), move |t, x| t.slice_rect(x, a..n, b..m))
        }),
        ("concat", |r| {
            let axis = r.random_range(0..2);
            let (n, m) = (r.random_range(1..4), r.random_range(1..4));
            let s2 = if axis == 0 { [r.random_range(1..3), m] } else { [n, r.random_range(1..3)] };
            binary(random_tensor(r, &[n, m]), random_tensor(r, &s2), move |t, a, b| t.concat(&[a, b], axis))
        }),
    ]
}

/// Worst error per op over `instances` random cases.
pub fn gradient_report(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    op_catalog()
        .into_iter()
        .map(|(name, gen)| {
            let worst = (0..instances).map(|_| check_case(&gen(&mut r), &mut r)).fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}
