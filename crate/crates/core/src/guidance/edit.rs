use serde::{Deserialize, Serialize};

use super::config::GuidanceConfig;
use super::spectrum::{guidance_gradient, spectrum_guidance};
use super::step::{apply_modulation, mask_blend, token_mask};
use crate::diffusion::{clip_unit, ddim_step, invert, NoiseSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Condition, Model};
use crate::numerics::{Scalar, Tensor};

/// A source clip, its condition, the target condition and an optional
/// editable-region mask (`f × H × W`, 1 = editable).
#[derive(Clone, Debug)]
pub struct EditRequest<T: Scalar = f32> {
    pub video: Tensor<T>,
    pub y_src: Condition,
    pub y_tgt: Condition,
    pub mask: Option<Tensor<T>>,
    pub config: GuidanceConfig,
}

impl<T: Scalar> EditRequest<T> {
    pub fn validate(&self, model: &Model<T>) -> Result<()> {
        let mcfg = model.config();
        self.config.validate_for(mcfg)?;
        self.y_src.validate(mcfg)?;
        self.y_tgt.validate(mcfg)?;
        if self.video.shape() != mcfg.video_shape() {
            return Err(Error::Dimension(format!(
                "video {:?} does not match model shape {:?}",
                self.video.shape(),
                mcfg.video_shape()
            )));
        }
        if let Some(m) = &self.mask {
            if m.shape() != &self.video.shape()[..3] {
                return Err(Error::Dimension(format!(
                    "mask {:?} does not match video frames {:?}",
                    m.shape(),
                    &self.video.shape()[..3]
                )));
            }
            if m.data().iter().any(|&v| v != T::zero() && v != T::one()) {
                return Err(Error::Contract("mask values must be 0 or 1".into()));
            }
        }
        Ok(())
    }
}

/// Per-step instrumentation of an edit run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub guided: bool,
    pub blended: bool,
    /// G_t at the current latent; present on guided steps.
    pub g: Option<f64>,
    pub g_aux: Option<f64>,
    pub grad_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub config: GuidanceConfig,
    pub y_src: Condition,
    pub y_tgt: Condition,
    pub masked: bool,
    pub blocks: Vec<usize>,
    pub steps: Vec<StepRecord>,
    /// `‖LP(DFT(F₀)) − LP(DFT(F₀*))‖²` between the output and the source at t = 0.
    pub final_deviation: f64,
    pub output_hash: String,
}

pub struct EditOutcome<T: Scalar = f32> {
    pub video: Tensor<T>,
    pub report: EditReport,
    /// Unclipped latents of the edit branch, `z_0..z_T`.
    pub trajectory: Trajectory<T>,
}

/// Low-pass spectral deviation of the guided blocks' attention outputs
/// between two clean clips, both under `y`.
pub fn final_deviation<T: Scalar>(
    model: &Model<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    y: Condition,
    cfg: &GuidanceConfig,
) -> Result<f64> {
    let blocks = cfg.guided_blocks(model.config());
    let feats = |z: &Tensor<T>| -> Result<Tensor<T>> {
        let mut tape = crate::autodiff::Tape::new();
        let v = tape.constant(z.clone());
        let f = model.attention_outputs_var(&mut tape, v, 0, y, &blocks)?;
        Ok(tape.value(f).clone())
    };
    spectrum_guidance(&feats(a)?, &feats(b)?, &cfg.filter)
}

/// Dual-branch edit: starts at `z_T*`, applies the modulated DDIM step with
/// `y_tgt` for `t = T..1` (guidance only for `t ≤ g·T`), blends the
/// inversion branch outside the mask for `t − 1 ≤ m·T`, and clips `z_0`.
///
/// `trajectory` is the inversion of the source under `y_src`; it is computed
/// when absent.
pub fn edit<T: Scalar>(
    request: &EditRequest<T>,
    model: &Model<T>,
    schedule: &NoiseSchedule,
    trajectory: Option<&Trajectory<T>>,
) -> Result<EditOutcome<T>> {
    request.validate(model)?;
    let steps = schedule.steps();
    let owned;
    let inv = match trajectory {
        Some(tr) => tr,
        None => {
            owned = invert(model, schedule, &request.video, request.y_src)?;
            &owned
        }
    };
    if inv.steps() != steps {
        return Err(Error::Contract(format!(
            "inversion trajectory has {} steps, schedule has {steps}",
            inv.steps()
        )));
    }
    if inv.at(0).shape() != request.video.shape() {
        return Err(Error::Dimension(format!(
            "inversion latents {:?} do not match video {:?}",
            inv.at(0).shape(),
            request.video.shape()
        )));
    }
    if inv.condition != request.y_src {
        return Err(Error::Contract(format!(
            "trajectory was inverted under {:?}, request source is {:?}",
            inv.condition, request.y_src
        )));
    }
    let cfg = &request.config;
    let patch = model.config().patch;
    let mask = request.mask.as_ref().map(|m| token_mask(m, patch)).transpose()?;

    let mut z = inv.terminal().clone();
    let mut latents = vec![z.clone()];
    let mut records = Vec::with_capacity(steps);
    for t in (1..=steps).rev() {
        let guided = cfg.lambda > 0.0 && cfg.in_guidance_interval(t, steps);
        let eval = if guided {
            Some(guidance_gradient(model, &z, inv.at(t), t, request.y_src, cfg)?)
        } else {
            None
        };
        let (eps, _) = model.forward(&z, t, request.y_tgt, &[])?;
        let next = ddim_step(schedule, &z, &eps, t)?;
        let mut next = apply_modulation(next, eval.as_ref().map(|e| &e.grad), cfg, Some(patch))?;
        let blended = mask.is_some() && cfg.in_mask_interval(t - 1, steps);
        if let Some(m) = &mask {
            next = mask_blend(&next, inv.at(t - 1), m, t - 1, steps, cfg)?;
        }
        next.ensure_finite("edit latent")?;
        records.push(StepRecord {
            t,
            guided,
            blended,
            g: eval.as_ref().map(|e| e.g),
            g_aux: eval.as_ref().filter(|_| cfg.lambda_aux > 0.0).map(|e| e.g_aux),
            grad_norm: eval.as_ref().map(|e| e.grad.norm().to_f64_lossy()),
        });
        z = next;
        latents.push(z.clone());
    }
    latents.reverse();
    let video = clip_unit(&z);
    let final_dev = final_deviation(model, &video, &request.video, request.y_src, cfg)?;
    let report = EditReport {
        config: cfg.clone(),
        y_src: request.y_src,
        y_tgt: request.y_tgt,
        masked: mask.is_some(),
        blocks: cfg.guided_blocks(model.config()),
        steps: records,
        final_deviation: final_dev,
        output_hash: video.content_hash(),
    };
    let trajectory = Trajectory::new(crate::diffusion::Branch::Edit, request.y_tgt, latents)?;
    Ok(EditOutcome {
        video,
        report,
        trajectory,
    })
}
