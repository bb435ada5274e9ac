mod common;

use common::{naive_dft3, random_tensor, rng};
use proptest::prelude::*;
use rand::Rng;
use spectral_edit::numerics::{dft3, idft3, lowpass, FilterSpec, Tensor};

fn oracle_error(x: &Tensor<f64>) -> f64 {
    let fast = dft3(&x.cast::<f32>()).unwrap();
    let slow = naive_dft3(x);
    let a: Vec<f64> = fast.data().iter().flat_map(|c| [c.re as f64, c.im as f64]).collect();
    let b: Vec<f64> = slow.iter().flat_map(|&(re, im)| [re, im]).collect();
    common::rel_err(&a, &b)
}

#[test]
fn matches_naive_dft_on_odd_and_prime_sizes() {
    let mut r = rng(21);
    for shape in [[3, 5, 7, 1], [1, 1, 13, 2], [6, 10, 9, 1], [8, 4, 2, 3]] {
        let x = random_tensor(&mut r, &shape);
        assert!(oracle_error(&x) < 1e-5, "{shape:?}");
    }
}

#[test]
fn delta_has_flat_spectrum() {
    let x = Tensor::<f64>::from_fn(&[4, 4, 4, 1], |i| if i == 0 { 1.0 } else { 0.0 });
    for c in dft3(&x).unwrap().data() {
        assert!((c.norm() - 0.125).abs() < 1e-12);
    }
}

#[test]
fn random_shapes_satisfy_parseval_in_f64() {
    let mut r = rng(5);
    for _ in 0..20 {
        let s = [r.random_range(1..9), r.random_range(1..9), r.random_range(1..9), r.random_range(1..3)];
        let x = random_tensor(&mut r, &s);
        let e = dft3(&x).unwrap().sq_norm();
        assert!((e - x.sq_norm()).abs() <= 1e-10 * x.sq_norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn roundtrip_and_linearity(h in 1usize..7, w in 1usize..7, tau in 1usize..9, seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, &[h, w, tau, 2]);
        let y = random_tensor(&mut r, &[h, w, tau, 2]);
        let back = idft3(&dft3(&x).unwrap()).unwrap();
        prop_assert!(back.rel_err(&x).unwrap() < 1e-12);
        let lhs = dft3(&x.scale(a).add(&y).unwrap()).unwrap();
        let fx = dft3(&x).unwrap();
        let fy = dft3(&y).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(fx.data()).zip(fy.data()) {
            prop_assert!((l - (p * a + q)).norm() < 1e-10);
        }
    }

    #[test]
    fn lowpass_is_idempotent(h in 1usize..7, w in 1usize..7, tau in 1usize..9, rho in 0.0f64..1.0, seed in any::<u64>()) {
        let x = random_tensor(&mut rng(seed), &[h, w, tau, 1]);
        let f = FilterSpec::uniform(rho);
        let once = lowpass(&dft3(&x).unwrap(), &f).unwrap();
        let twice = lowpass(&once, &f).unwrap();
        prop_assert_eq!(once.data(), twice.data());
    }
}
