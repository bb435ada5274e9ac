mod common;

use common::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use spectral_edit::diffusion::{
    ddim_invert_step, ddim_step, sample, sample_trajectory, train, NoiseSchedule, ScheduleKind, TrainExample,
    TrainerConfig,
};
use spectral_edit::data::{synthesize, ClipShape};
use spectral_edit::model::{Condition, Model, ModelConfig, Weights};
use spectral_edit::numerics::Tensor;

const GOLDEN_SAMPLE: &str = "e8ba6a3c0a122b4912d9507844def82524c3f27017b924b0263761cc5f1ba538";

fn noise(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.sample::<f32, _>(StandardNormal))
}

#[test]
fn affine_inverse_holds_for_every_step_and_kind() {
    for kind in [ScheduleKind::Cosine, ScheduleKind::LinearBeta] {
        let s = NoiseSchedule::new(50, kind).unwrap();
        let mut r = rng(1);
        let z = Tensor::<f64>::from_fn(&[64], |_| r.random_range(-1.0..1.0));
        let eps = Tensor::<f64>::from_fn(&[64], |_| r.random_range(-1.0..1.0));
        for t in 0..50 {
            let up = ddim_invert_step(&s, &z, &eps, t).unwrap();
            let back = ddim_step(&s, &up, &eps, t + 1).unwrap();
            assert!(back.rel_err(&z).unwrap() <= 1e-6, "{kind:?} t={t}");
        }
    }
}

#[test]
fn sampling_is_deterministic_and_golden() {
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), Weights::random(&cfg, &mut rng(77)).unwrap()).unwrap();
    let s = NoiseSchedule::new(cfg.timesteps, ScheduleKind::Cosine).unwrap();
    let z = noise(&cfg.video_shape(), 78);
    let y = Condition::new(9, 0);
    let a = sample(&model, &s, &z, y).unwrap();
    let b = sample(&model, &s, &z, y).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.content_hash(), GOLDEN_SAMPLE);
}

#[test]
fn single_step_schedule_takes_one_step() {
    let cfg = ModelConfig {
        timesteps: 1,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg.clone(), Weights::random(&cfg, &mut rng(3)).unwrap()).unwrap();
    let s = NoiseSchedule::new(1, ScheduleKind::Cosine).unwrap();
    let z = noise(&cfg.video_shape(), 4);
    let traj = sample_trajectory(&model, &s, &z, Condition::new(0, 0)).unwrap();
    assert_eq!(traj.len(), 2);
    let (eps, _) = model.forward(&z, 1, Condition::new(0, 0), &[]).unwrap();
    assert_eq!(traj.at(0), &ddim_step(&s, &z, &eps, 1).unwrap());
}

#[test]
fn zero_predictor_loss_is_element_count() {
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), Weights::init(&cfg, &mut rng(5)).unwrap()).unwrap();
    let s = NoiseSchedule::new(cfg.timesteps, ScheduleKind::Cosine).unwrap();
    let clips = synthesize(16, 6, ClipShape::default()).unwrap();
    let mut r = rng(7);
    let ts: Vec<usize> = (0..16).map(|_| r.random_range(0..=50)).collect();
    let eps: Vec<Tensor<f32>> = (0..16).map(|i| noise(&cfg.video_shape(), 100 + i)).collect();
    let z: Vec<Tensor<f32>> = clips
        .iter()
        .zip(&ts)
        .zip(&eps)
        .map(|((c, &t), e)| spectral_edit::diffusion::q_sample(&s, &c.video, t, e).unwrap())
        .collect();
    let ys: Vec<Condition> = clips.iter().map(|c| c.y_src()).collect();
    let (loss, _) = model.loss_and_grads(&z, &ts, &ys, &eps).unwrap();
    let n = cfg.video_shape().iter().product::<usize>() as f64;
    assert!((loss / n - 1.0).abs() < 0.05, "loss {loss}");
}

#[test]
fn short_training_is_bitwise_reproducible() {
    let cfg = ModelConfig {
        blocks: 2,
        d_model: 16,
        sketch_blocks: 1,
        ..ModelConfig::default()
    };
    let s = NoiseSchedule::new(cfg.timesteps, ScheduleKind::Cosine).unwrap();
    let corpus: Vec<TrainExample> = synthesize(8, 1, ClipShape::default())
        .unwrap()
        .into_iter()
        .map(|c| TrainExample {
            condition: c.y_src(),
            video: c.video,
        })
        .collect();
    let tc = TrainerConfig {
        steps: 4,
        batch: 4,
        checkpoint_every: 2,
        ..TrainerConfig::default()
    };
    let mut calls = Vec::new();
    let a = train(&corpus, &cfg, &tc, &s, |step, _| {
        calls.push(step);
        Ok(())
    })
    .unwrap();
    let b = train(&corpus, &cfg, &tc, &s, |_, _| Ok(())).unwrap();
    assert_eq!(calls, vec![2, 4]);
    assert_eq!(a.losses, b.losses);
    for ((n, x), (_, y)) in a.weights.named().iter().zip(b.weights.named()) {
        assert_eq!(*x, y, "{n}");
    }
}
