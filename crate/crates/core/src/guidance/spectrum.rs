use super::config::{GuidanceConfig, NormMode};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{Condition, Model};
use crate::numerics::{dft3, lowpass, FilterSpec, LowpassMask, Scalar, Tensor};

/// `‖LP(DFT(F)) − LP(DFT(F*))‖²` for two `h × w × τ × c` feature tensors.
pub fn spectrum_guidance<T: Scalar>(f: &Tensor<T>, f_star: &Tensor<T>, filter: &FilterSpec) -> Result<f64> {
    f.same_shape(f_star, "spectrum guidance")?;
    let a = lowpass(&dft3(f)?, filter)?;
    let b = lowpass(&dft3(f_star)?, filter)?;
    Ok(a.sub(&b)?.sq_norm().to_f64_lossy())
}

/// Records `‖LP(DFT(F)) − S*‖²` on the tape, where `S*` is a precomputed
/// constant interleaved low-pass spectrum.
fn spectral_distance<T: Scalar>(tape: &mut Tape<T>, f: Var, target: &Tensor<T>, mask: &LowpassMask) -> Result<Var> {
    let s = tape.dft3(f)?;
    let s = tape.lowpass(s, mask)?;
    let c = tape.constant(target.clone());
    let d = tape.sub(s, c)?;
    tape.squared_norm(d)
}

fn lowpassed_spectrum<T: Scalar>(f: &Tensor<T>, mask: &LowpassMask) -> Result<Tensor<T>> {
    let spec = crate::numerics::filter::apply_mask(&dft3(f)?, mask)?;
    Ok(spec.to_interleaved())
}

/// Guidance objective and its gradient with respect to `z_t`.
#[derive(Clone, Debug)]
pub struct GuidanceEval<T: Scalar> {
    /// Sketching-block term G_t.
    pub g: f64,
    /// Auxiliary last-block term (zero when disabled).
    pub g_aux: f64,
    pub grad: Tensor<T>,
}

impl<T: Scalar> GuidanceEval<T> {
    /// `G_t + λ_aux·G_aux`.
    pub fn total(&self, lambda_aux: f64) -> f64 {
        self.g + lambda_aux * self.g_aux
    }
}

/// Evaluates the guidance objective at `z_t` against the inversion latent
/// `z_t_star`; both branches use the source condition. Gradients flow
/// only through `z_t` and only through the blocks up to the deepest one
/// compared; `F*` is a constant.
pub fn guidance_gradient<T: Scalar>(
    model: &Model<T>,
    z_t: &Tensor<T>,
    z_t_star: &Tensor<T>,
    t: usize,
    y_src: Condition,
    cfg: &GuidanceConfig,
) -> Result<GuidanceEval<T>> {
    z_t.same_shape(z_t_star, "guidance branches")?;
    let mcfg = model.config();
    cfg.validate_for(mcfg)?;
    let mut blocks = cfg.guided_blocks(mcfg);
    let last = mcfg.blocks - 1;
    let aux = cfg.lambda_aux > 0.0;
    if aux {
        blocks.push(last);
    }
    let d = mcfg.d_model;
    let (h, w, tau) = mcfg.grid();
    let mask = cfg.filter.mask(h, w, tau)?;
    let main = cfg.guided_blocks(mcfg).len();

    let mut tape = Tape::new();
    let star_in = tape.constant(z_t_star.clone());
    let f_star_all = model.attention_outputs_var(&mut tape, star_in, t, y_src, &blocks)?;
    let f_star_all = tape.value(f_star_all).clone();

    let z = tape.leaf(z_t.clone());
    let f_all = model.attention_outputs_var(&mut tape, z, t, y_src, &blocks)?;
    let f_main = if aux { tape.slice(f_all, 3, 0..main * d)? } else { f_all };
    let star_main = f_star_all.slice_axis(3, 0..main * d)?;
    let g_main = spectral_distance(&mut tape, f_main, &lowpassed_spectrum(&star_main, &mask)?, &mask)?;
    let g_value = tape.value(g_main).item()?.to_f64_lossy();
    let (objective, g_aux) = if aux {
        let f_last = tape.slice(f_all, 3, main * d..(main + 1) * d)?;
        let star_last = f_star_all.slice_axis(3, main * d..(main + 1) * d)?;
        let ga = spectral_distance(&mut tape, f_last, &lowpassed_spectrum(&star_last, &mask)?, &mask)?;
        let ga_value = tape.value(ga).item()?.to_f64_lossy();
        let weighted = tape.scale(ga, T::from_f64_lossy(cfg.lambda_aux))?;
        (tape.add(g_main, weighted)?, ga_value)
    } else {
        (g_main, 0.0)
    };
    let grad = tape.backward(objective, z)?;
    if !grad.is_finite() || !g_value.is_finite() {
        return Err(Error::NonFinite(format!("guidance gradient at t = {t}")));
    }
    Ok(GuidanceEval {
        g: g_value,
        g_aux,
        grad,
    })
}

/// Normalized gradient, or `None` when its norm is below `delta`
/// (the modulation term is then exactly zero).
pub fn normalize<T: Scalar>(grad: &Tensor<T>, mode: NormMode, delta: f64, patch: Option<usize>) -> Option<Tensor<T>> {
    let norm = grad.norm().to_f64_lossy();
    if !(norm >= delta) {
        return None;
    }
    match (mode, patch) {
        (NormMode::PerToken, Some(p)) if grad.rank() == 4 => {
            let tokens = crate::model::patchify(grad, p).ok()?;
            let (n, dp) = (tokens.shape()[0], tokens.shape()[1]);
            let scale = 1.0 / (n as f64).sqrt();
            let mut out = tokens.clone();
            for row in out.data_mut().chunks_exact_mut(dp) {
                let rn = row.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
                let c = T::from_f64_lossy(scale / rn.max(delta));
                row.iter_mut().for_each(|v| *v *= c);
            }
            crate::model::unpatchify(&out, p, grad.shape()).ok()
        }
        _ => Some(grad.scale(T::from_f64_lossy(1.0 / norm))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_features_give_zero() {
        let f = Tensor::<f64>::from_fn(&[4, 4, 8, 2], |i| (i as f64).sin());
        assert_eq!(spectrum_guidance(&f, &f, &FilterSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn normalization_floor() {
        let g = Tensor::<f64>::full(&[2, 2], 1e-10);
        assert!(normalize(&g, NormMode::Global, 1e-8, None).is_none());
        let g = Tensor::<f64>::from_fn(&[3, 5], |i| i as f64 - 7.0);
        let n = normalize(&g, NormMode::Global, 1e-8, None).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_token_norm_bounded_by_one() {
        let g = Tensor::<f64>::from_fn(&[2, 4, 4, 3], |i| ((i * 7) % 11) as f64 - 5.0);
        let n = normalize(&g, NormMode::PerToken, 1e-8, Some(2)).unwrap();
        assert!(n.norm() <= 1.0 + 1e-12);
    }
}
