mod common;

use common::{gradient_report, rel_err, rng};
use rand::Rng;
use spectral_edit::autodiff::Tape;
use spectral_edit::model::{Condition, Model, ModelConfig, Weights};
use spectral_edit::numerics::Tensor;

#[test]
fn every_op_matches_finite_differences() {
    for (name, worst) in gradient_report(20, 11) {
        assert!(worst <= 1e-6, "{name}: relative error {worst:.3e}");
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        blocks: 2,
        d_model: 8,
        heads: 2,
        frames: 2,
        height: 8,
        width: 8,
        sketch_blocks: 1,
        ..ModelConfig::default()
    }
}

#[test]
fn attention_output_energy_gradient_matches_finite_differences() {
    let cfg = small_config();
    let mut r = rng(3);
    let model = Model::new(cfg.clone(), Weights::<f64>::random(&cfg, &mut r).unwrap()).unwrap();
    let z = Tensor::from_fn(&cfg.video_shape(), |_| r.random_range(-1.0..1.0));
    let y = Condition::new(4, 1);
    let energy = |z: &Tensor<f64>| -> f64 { model.forward_prefix(z, 7, y, 1).unwrap().sq_norm() };
    let mut tape = Tape::new();
    let v = tape.leaf(z.clone());
    let f = model.forward_prefix_var(&mut tape, v, 7, y, 1).unwrap();
    let loss = tape.squared_norm(f).unwrap();
    let analytic = tape.backward(loss, v).unwrap();
    let numeric = common::fd_gradient(&energy, &z, 1e-5);
    let err = rel_err(analytic.data(), numeric.data());
    assert!(err < 1e-6, "relative error {err:.3e}");
}

#[test]
fn epsilon_prediction_gradient_matches_finite_differences() {
    let cfg = small_config();
    let mut r = rng(4);
    let model = Model::new(cfg.clone(), Weights::<f64>::random(&cfg, &mut r).unwrap()).unwrap();
    let z = Tensor::from_fn(&cfg.video_shape(), |_| r.random_range(-1.0..1.0));
    let y = Condition::new(2, 0);
    let f = |z: &Tensor<f64>| -> f64 { model.forward(z, 20, y, &[]).unwrap().0.sum() };
    let mut tape = Tape::new();
    let v = tape.leaf(z.clone());
    let eps = model.forward_var(&mut tape, v, 20, y).unwrap();
    let loss = tape.sum(eps).unwrap();
    let analytic = tape.backward(loss, v).unwrap();
    let numeric = common::fd_gradient(&f, &z, 1e-5);
    let err = rel_err(analytic.data(), numeric.data());
    assert!(err < 1e-6, "relative error {err:.3e}");
}
