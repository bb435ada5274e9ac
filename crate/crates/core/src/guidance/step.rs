use super::config::GuidanceConfig;
use super::spectrum::normalize;
use crate::diffusion::{ddim_step, NoiseSchedule};
use crate::error::{Error, Result};
use crate::model::{Condition, Model};
use crate::numerics::{Scalar, Tensor};

/// `ddim_step(z_t, ε_θ(z_t, t, y_tgt), t) − λ·s·Norm(grad)` with `s` from
/// [`GuidanceConfig::step_scale`].
///
/// With `λ = 0`, no gradient, or a gradient norm below `δ`, the result is
/// bitwise the plain DDIM step.
pub fn modulated_step<T: Scalar>(
    model: &Model<T>,
    schedule: &NoiseSchedule,
    z_t: &Tensor<T>,
    t: usize,
    y_tgt: Condition,
    grad: Option<&Tensor<T>>,
    cfg: &GuidanceConfig,
) -> Result<Tensor<T>> {
    if t == 0 {
        return Err(Error::Config("modulated_step needs t ≥ 1".into()));
    }
    let (eps, _) = model.forward(z_t, t, y_tgt, &[])?;
    let next = ddim_step(schedule, z_t, &eps, t)?;
    apply_modulation(next, grad, cfg, Some(model.config().patch))
}

/// Subtracts `λ·s·Norm(grad)` from an already computed DDIM update.
pub fn apply_modulation<T: Scalar>(
    mut next: Tensor<T>,
    grad: Option<&Tensor<T>>,
    cfg: &GuidanceConfig,
    patch: Option<usize>,
) -> Result<Tensor<T>> {
    let Some(g) = grad else { return Ok(next) };
    if cfg.lambda == 0.0 {
        return Ok(next);
    }
    g.same_shape(&next, "guidance gradient")?;
    if let Some(n) = normalize(g, cfg.norm, cfg.delta, patch) {
        let scale = cfg.lambda * cfg.step_scale(next.len());
        next.axpy(T::from_f64_lossy(-scale), &n)?;
    }
    Ok(next)
}

/// Nearest-neighbor resampling of an `f × H × W` pixel mask to token
/// resolution (one sample at each patch center), expanded back to pixels.
pub fn token_mask<T: Scalar>(mask: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    if mask.rank() != 3 {
        return Err(Error::Dimension(format!("mask must be f×H×W, got {:?}", mask.shape())));
    }
    let (h, w) = (mask.shape()[1], mask.shape()[2]);
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Dimension(format!("mask {h}x{w} not divisible by patch {patch}")));
    }
    if mask.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::Contract("mask values must be 0 or 1".into()));
    }
    let c = patch / 2;
    Ok(Tensor::from_fn(mask.shape(), |i| {
        let (fr, r, col) = (i / (h * w), (i / w) % h, i % w);
        let (sr, sc) = ((r / patch) * patch + c, (col / patch) * patch + c);
        mask.data()[(fr * h + sr) * w + sc]
    }))
}

/// Inside the mask interval, keeps `z_edit` where the (token-resolution)
/// mask is 1 and takes `z_star` elsewhere; outside it returns `z_edit`.
pub fn mask_blend<T: Scalar>(
    z_edit: &Tensor<T>,
    z_star: &Tensor<T>,
    mask: &Tensor<T>,
    t: usize,
    steps: usize,
    cfg: &GuidanceConfig,
) -> Result<Tensor<T>> {
    z_edit.same_shape(z_star, "mask blend branches")?;
    if !cfg.in_mask_interval(t, steps) {
        return Ok(z_edit.clone());
    }
    let s = z_edit.shape();
    if s.len() != 4 || mask.shape() != &s[..3] {
        return Err(Error::Dimension(format!(
            "mask {:?} does not match latent {:?}",
            mask.shape(),
            s
        )));
    }
    let ch = s[3];
    let mut out = z_edit.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if mask.data()[i / ch] == T::zero() {
            *v = z_star.data()[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_extremes_and_half_plane() {
        let cfg = GuidanceConfig::default();
        let a = Tensor::<f32>::from_fn(&[2, 4, 4, 3], |i| i as f32);
        let b = Tensor::<f32>::from_fn(&[2, 4, 4, 3], |i| -(i as f32));
        let ones = Tensor::<f32>::ones(&[2, 4, 4]);
        let zeros = Tensor::<f32>::zeros(&[2, 4, 4]);
        assert_eq!(mask_blend(&a, &b, &ones, 5, 50, &cfg).unwrap(), a);
        assert_eq!(mask_blend(&a, &b, &zeros, 5, 50, &cfg).unwrap(), b);
        assert_eq!(mask_blend(&a, &b, &zeros, 45, 50, &cfg).unwrap(), a);
        let half = Tensor::<f32>::from_fn(&[2, 4, 4], |i| if i % 4 < 2 { 1.0 } else { 0.0 });
        let out = mask_blend(&a, &b, &half, 0, 50, &cfg).unwrap();
        for (i, &v) in out.data().iter().enumerate() {
            let col = (i / 3) % 4;
            assert_eq!(v, if col < 2 { a.data()[i] } else { b.data()[i] });
        }
    }

    #[test]
    fn token_mask_samples_patch_centers() {
        let mut m = Tensor::<f32>::zeros(&[1, 4, 4]);
        m.data_mut()[5] = 1.0;
        let t = token_mask(&m, 2).unwrap();
        let want: Vec<f32> = (0..16).map(|i| if i / 4 < 2 && i % 4 < 2 { 1.0 } else { 0.0 }).collect();
        assert_eq!(t.data(), &want[..]);
        let mut corner = Tensor::<f32>::zeros(&[1, 4, 4]);
        corner.data_mut()[0] = 1.0;
        assert!(token_mask(&corner, 2).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lambda_and_zero_grad_leave_step_unchanged() {
        let next = Tensor::<f32>::from_fn(&[2, 3], |i| i as f32 * 0.1);
        let g = Tensor::<f32>::ones(&[2, 3]);
        let off = GuidanceConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert_eq!(apply_modulation(next.clone(), Some(&g), &off, None).unwrap(), next);
        let on = GuidanceConfig::default();
        let z = Tensor::<f32>::zeros(&[2, 3]);
        assert_eq!(apply_modulation(next.clone(), Some(&z), &on, None).unwrap(), next);
        let moved = apply_modulation(next.clone(), Some(&g), &on, None).unwrap();
        let want = 12.5 * on.step_scale(next.len());
        assert!((moved.sub(&next).unwrap().norm() as f64 - want).abs() < 1e-6);
        let unscaled = GuidanceConfig { reference_elements: 0.0, ..on };
        let moved = apply_modulation(next.clone(), Some(&g), &unscaled, None).unwrap();
        assert!((moved.sub(&next).unwrap().norm() - 12.5).abs() < 1e-4);
    }
}
