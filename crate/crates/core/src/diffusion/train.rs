use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ddim::q_sample;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::model::{Condition, Model, ModelConfig, Weights};
use crate::numerics::Tensor;

/// Optimizer and loop settings. The optimizer scales each parameter's step
/// by a running RMS of its gradient (no momentum).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` at the end of the cosine decay.
    pub min_lr_frac: f64,
    pub warmup: usize,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Probability of replacing a condition with the null id.
    pub cond_dropout: f64,
    /// Checkpoint interval in steps; 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch: 16,
            lr: 1e-3,
            min_lr_frac: 0.0,
            warmup: 100,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 0.0,
            cond_dropout: 0.1,
            checkpoint_every: 1000,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::Config("steps and batch must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("lr and eps must be positive, beta2 in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) || !(0.0..=1.0).contains(&self.min_lr_frac) {
            return Err(Error::Config("cond_dropout and min_lr_frac must lie in [0, 1]".into()));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::Config("clip_norm must be nonnegative".into()));
        }
        Ok(())
    }

    /// Learning rate at 0-based `step`: linear warmup, then cosine decay.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warm = if self.warmup == 0 {
            1.0
        } else {
            ((step + 1) as f64 / self.warmup as f64).min(1.0)
        };
        let progress = step as f64 / self.steps.max(1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr * warm * (self.min_lr_frac + (1.0 - self.min_lr_frac) * cos)
    }
}

/// A clean training video and its condition.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub video: Tensor<f32>,
    pub condition: Condition,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
}

pub struct TrainOutcome {
    pub weights: Weights<f32>,
    pub losses: Vec<LossRecord>,
}

impl TrainOutcome {
    /// Mean loss over the last `window` steps.
    pub fn tail_loss(&self, window: usize) -> f64 {
        let n = window.clamp(1, self.losses.len().max(1));
        let tail = &self.losses[self.losses.len().saturating_sub(n)..];
        tail.iter().map(|r| r.loss).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for r in &self.losses {
            s.push_str(&format!("{},{:.6}\n", r.step, r.loss));
        }
        s
    }
}

/// Minimizes `E‖ε − ε_θ(z_t, t, y)‖²` over random steps `t ∈ [0, T]`.
///
/// Deterministic for a fixed seed. `on_checkpoint` is called with the
/// 1-based step count every `checkpoint_every` steps.
pub fn train(
    corpus: &[TrainExample],
    model_cfg: &ModelConfig,
    cfg: &TrainerConfig,
    schedule: &NoiseSchedule,
    mut on_checkpoint: impl FnMut(usize, &Weights<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if schedule.steps() != model_cfg.timesteps {
        return Err(Error::Config(format!(
            "schedule has T = {}, model expects {}",
            schedule.steps(),
            model_cfg.timesteps
        )));
    }
    for (i, ex) in corpus.iter().enumerate() {
        if ex.video.shape() != model_cfg.video_shape() {
            return Err(Error::Dimension(format!(
                "corpus sample {i} has shape {:?}, model expects {:?}",
                ex.video.shape(),
                model_cfg.video_shape()
            )));
        }
        ex.condition.validate(model_cfg)?;
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut model = Model::new(model_cfg.clone(), Weights::init(model_cfg, &mut init_rng)?)?;
    let mut second: Vec<Vec<f32>> = model.weights().named().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    let shape = model_cfg.video_shape();
    let null = model_cfg.null_class();

    for step in 0..cfg.steps {
        let mut z_t = Vec::with_capacity(cfg.batch);
        let mut ts = Vec::with_capacity(cfg.batch);
        let mut ys = Vec::with_capacity(cfg.batch);
        let mut eps = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let ex = &corpus[rng.random_range(0..corpus.len())];
            let t = rng.random_range(0..=schedule.steps());
            let e = Tensor::from_fn(&shape, |_| rng.sample::<f32, _>(StandardNormal));
            let mut y = ex.condition;
            if rng.random::<f64>() < cfg.cond_dropout {
                y.class = null;
            }
            z_t.push(q_sample(schedule, &ex.video, t, &e)?);
            ts.push(t);
            ys.push(y);
            eps.push(e);
        }
        let (loss, grads) = model.loss_and_grads(&z_t, &ts, &ys, &eps)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {loss} at step {} (lr {:.3e}); last finite loss {:?}",
                step + 1,
                cfg.lr_at(step),
                losses.last().map(|r: &LossRecord| r.loss)
            )));
        }
        losses.push(LossRecord { step: step + 1, loss });

        let grads = grads.named();
        let gnorm = grads
            .iter()
            .map(|(_, g)| g.sq_norm() as f64)
            .sum::<f64>()
            .sqrt();
        let clip = if cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm {
            cfg.clip_norm / gnorm
        } else {
            1.0
        };
        let lr = cfg.lr_at(step);
        let correction = 1.0 - cfg.beta2.powi(step as i32 + 1);
        let (b2, eps_opt) = (cfg.beta2 as f32, cfg.eps as f32);
        for (((_, p), (_, g)), v) in model.weights_mut().named_mut().into_iter().zip(&grads).zip(&mut second) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                let gv = gv * clip as f32;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let denom = (*vv as f64 / correction).sqrt() as f32 + eps_opt;
                *pv -= (lr as f32) * gv / denom;
            }
        }
        if log::log_enabled!(log::Level::Debug) && (step + 1) % 100 == 0 {
            log::debug!("step {} loss {loss:.3} grad-norm {gnorm:.3} lr {lr:.2e}", step + 1);
        }
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps {
            model.weights().ensure_finite()?;
            on_checkpoint(step + 1, model.weights())?;
        }
    }
    let weights = model.into_weights();
    weights.ensure_finite()?;
    on_checkpoint(cfg.steps, &weights)?;
    Ok(TrainOutcome { weights, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_shape() {
        let c = TrainerConfig {
            steps: 100,
            warmup: 10,
            ..Default::default()
        };
        assert!((c.lr_at(0) - 1e-4).abs() < 1e-12);
        assert!(c.lr_at(9) > c.lr_at(50));
        assert!(c.lr_at(99) < 1e-5);
    }

    #[test]
    fn invalid_settings_rejected() {
        let c = TrainerConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
