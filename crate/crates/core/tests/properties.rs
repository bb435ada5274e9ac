mod common;

use common::{random_tensor, rng};
use proptest::prelude::*;
use rand::Rng;
use spectral_edit::analysis::diagonality;
use spectral_edit::data::io::{decode_tensor, encode_tensor};
use spectral_edit::data::{decode_class, render, Archive, Motion, ShapeKind, SyntheticSpec};
use spectral_edit::diffusion::{NoiseSchedule, ScheduleKind};
use spectral_edit::metrics::{mask_psnr, psnr};
use spectral_edit::numerics::Tensor;

fn kind_strategy() -> impl Strategy<Value = ScheduleKind> {
    prop_oneof![Just(ScheduleKind::Cosine), Just(ScheduleKind::LinearBeta)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_are_variance_preserving_and_monotone(steps in 1usize..200, kind in kind_strategy()) {
        let s = NoiseSchedule::new(steps, kind).unwrap();
        prop_assert_eq!((s.alpha(0), s.sigma(0)), (1.0, 0.0));
        for t in 0..=steps {
            prop_assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-12);
            if t > 0 {
                prop_assert!(s.alpha(t) < s.alpha(t - 1));
                prop_assert!(s.sigma(t) > s.sigma(t - 1));
            }
        }
    }

    #[test]
    fn psnr_is_symmetric_and_zero_mask_is_full(seed in any::<u64>(), frames in 1usize..4) {
        let mut r = rng(seed);
        let a = random_tensor(&mut r, &[frames, 4, 4, 3]).cast::<f32>();
        let b = random_tensor(&mut r, &[frames, 4, 4, 3]).cast::<f32>();
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let m = Tensor::<f32>::zeros(&[frames, 4, 4]);
        prop_assert!((mask_psnr(&a, &b, &m).unwrap() - psnr(&a, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tensor_file_roundtrip_is_bitwise(seed in any::<u64>(), dims in proptest::collection::vec(1usize..5, 0..4)) {
        let x = random_tensor(&mut rng(seed), &dims);
        prop_assert_eq!(decode_tensor::<f64>(&encode_tensor(&x)).unwrap(), x.clone());
        let y = x.cast::<f32>();
        prop_assert_eq!(decode_tensor::<f32>(&encode_tensor(&y)).unwrap(), y);
    }

    #[test]
    fn archive_roundtrip(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let mut a = Archive::new();
        let tensors: Vec<Tensor<f32>> = (0..n).map(|i| random_tensor(&mut r, &[i + 1, 2]).cast()).collect();
        for (i, t) in tensors.iter().enumerate() {
            a.push(format!("t{i}"), t.clone());
        }
        a.push_bytes("meta", vec![1, 2, 3]);
        let back = Archive::decode(&a.encode().unwrap()).unwrap();
        for (i, t) in tensors.iter().enumerate() {
            prop_assert_eq!(&back.tensor::<f32>(&format!("t{i}")).unwrap(), t);
        }
        prop_assert_eq!(back.bytes("meta").unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn diagonality_survives_frame_order_reversal(seed in any::<u64>(), tpf in 1usize..5, frames in 1usize..5, band in 0usize..3) {
        let n = tpf * frames;
        let mut r = rng(seed);
        let m = Tensor::<f64>::from_fn(&[n, n], |_| r.random_range(0.0..1.0));
        let p = |i: usize| (frames - 1 - i / tpf) * tpf + i % tpf;
        let mp = Tensor::from_fn(&[n, n], |k| m.data()[p(k / n) * n + p(k % n)]);
        let (a, b) = (diagonality(&m, tpf, band).unwrap(), diagonality(&mp, tpf, band).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn class_ids_roundtrip(kind in 0usize..3, color in 0usize..4, motion in 0usize..5) {
        let spec = SyntheticSpec {
            kind: ShapeKind::ALL[kind],
            color,
            start: (4, 4),
            motion: Motion::ALL[motion],
            speed: usize::from(motion != 0),
            size: 4,
            background: 0,
            frames: 4,
            height: 16,
            width: 16,
        };
        prop_assert_eq!(decode_class(spec.class_id()).unwrap(), (spec.kind, spec.color, spec.motion));
    }
}

#[test]
fn square_translates_exactly_and_keeps_its_area() {
    let spec = SyntheticSpec {
        kind: ShapeKind::Square,
        color: 1,
        start: (3, 2),
        motion: Motion::Right,
        speed: 1,
        size: 5,
        background: 2,
        frames: 6,
        height: 16,
        width: 16,
    };
    let (video, mask) = render(&spec).unwrap();
    let (h, w) = (16, 16);
    let area = |f: usize| mask.data()[f * h * w..(f + 1) * h * w].iter().sum::<f32>();
    for f in 1..6 {
        assert_eq!(area(f), area(0));
        for r in 0..h {
            for c in f..w {
                for ch in 0..3 {
                    let at = |fr: usize, cc: usize| video.data()[((fr * h + r) * w + cc) * 3 + ch];
                    assert_eq!(at(f, c), at(0, c - f));
                }
            }
        }
    }
}
