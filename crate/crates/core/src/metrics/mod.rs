//! PSNR, Mask-PSNR and an object-consistency analog computed from the toy
//! model's own features.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{Condition, Model};
use crate::numerics::{Scalar, Tensor};

/// Value reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

/// Scale from the `[-1, 1]` pipeline range to 8-bit units.
const TO_255: f64 = 127.5;

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

/// PSNR of raw values against `peak`.
pub fn psnr_with_peak<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    a.same_shape(b, "psnr")?;
    if !(peak > 0.0) {
        return Err(Error::Config(format!("peak {peak} must be positive")));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.to_f64_lossy() - y.to_f64_lossy()).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

/// PSNR of `[-1, 1]` videos on the 0–255 scale.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.same_shape(b, "psnr")?;
    let mse = masked_mse(a, b, None)?.0;
    Ok(psnr_from_mse(mse, 255.0))
}

/// Mean squared 0–255 error over elements whose pixel has mask 0, and the count.
fn masked_mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, mask: Option<&Tensor<T>>) -> Result<(f64, usize)> {
    let ch = if let Some(m) = mask {
        let s = a.shape();
        if s.len() != 4 || m.shape() != &s[..3] {
            return Err(Error::Dimension(format!("mask {:?} does not match video {s:?}", m.shape())));
        }
        s[3]
    } else {
        1
    };
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        if mask.is_some_and(|m| m.data()[i / ch] != T::zero()) {
            continue;
        }
        let d = (x.to_f64_lossy() - y.to_f64_lossy()) * TO_255;
        sum += d * d;
        n += 1;
    }
    Ok((if n == 0 { 0.0 } else { sum / n as f64 }, n))
}

/// PSNR over the region that should stay unchanged (`mask == 0`).
pub fn mask_psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, mask: &Tensor<T>) -> Result<f64> {
    a.same_shape(b, "mask psnr")?;
    let (mse, n) = masked_mse(a, b, Some(mask))?;
    if n == 0 {
        return Err(Error::Contract("mask leaves no unedited region".into()));
    }
    Ok(psnr_from_mse(mse, 255.0))
}

fn frame<T: Scalar>(t: &Tensor<T>, f: usize) -> Result<Tensor<T>> {
    t.slice_axis(0, f..f + 1)
}

/// Cross-frame variance of mask-pooled mid-block features, averaged over
/// channels. Each frame's feature vector comes from a clip that repeats
/// that frame, so identical frames give identical features regardless of
/// temporal position. Lower means more consistent object appearance.
/// This is a toy-model analog, not the published semantic-variance metric.
pub fn osv_analog<T: Scalar>(
    video: &Tensor<T>,
    mask: &Tensor<T>,
    model: &Model<T>,
    block: usize,
    t_probe: usize,
    y: Condition,
) -> Result<f64> {
    let cfg = model.config();
    let s = video.shape();
    if s.len() != 4 || mask.shape() != &s[..3] {
        return Err(Error::Dimension(format!("mask {:?} does not match video {s:?}", mask.shape())));
    }
    let (frames, p) = (s[0], cfg.patch);
    let (h, w, _) = cfg.grid();
    let d = cfg.d_model;
    let mut feats: Vec<Vec<f64>> = Vec::with_capacity(frames);
    for f in 0..frames {
        let fr = frame(video, f)?;
        let mf = frame(mask, f)?;
        let repeated = Tensor::concat(&vec![&fr; frames], 0)?;
        let mut tape = Tape::new();
        let z = tape.constant(repeated);
        let out = model.attention_outputs_var(&mut tape, z, t_probe, y, &[block])?;
        let out = tape.value(out);
        // Token weight: fraction of the patch covered by the mask.
        let mut weights = vec![0.0f64; h * w];
        for r in 0..s[1] {
            for c in 0..s[2] {
                weights[(r / p) * w + c / p] += mf.data()[r * s[2] + c].to_f64_lossy();
            }
        }
        let total: f64 = weights.iter().sum::<f64>() * frames as f64;
        if total == 0.0 {
            return Err(Error::Contract(format!("mask is empty in frame {f}")));
        }
        let mut pooled = vec![0.0f64; d];
        for (i, row) in out.data().chunks_exact(d).enumerate() {
            // Layout h × w × τ × d.
            let wgt = weights[i / frames];
            if wgt > 0.0 {
                for (acc, &v) in pooled.iter_mut().zip(row) {
                    *acc += wgt * v.to_f64_lossy();
                }
            }
        }
        feats.push(pooled.into_iter().map(|v| v / total).collect());
    }
    let n = frames as f64;
    let mut acc = 0.0;
    for c in 0..d {
        let mean = feats.iter().map(|f| f[c]).sum::<f64>() / n;
        acc += feats.iter().map(|f| (f[c] - mean).powi(2)).sum::<f64>() / n;
    }
    Ok(acc / d as f64)
}

/// Label attached to every reported OSV analog value.
pub const OSV_LABEL: &str = "osv-analog: toy-model feature variance, not comparable to published OSV";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub mask_psnr: Option<f64>,
    pub osv_analog: Option<f64>,
    pub osv_label: String,
    pub per_frame_psnr: Vec<f64>,
    pub per_frame_mask_psnr: Vec<Option<f64>>,
    /// Reserved; needs a pretrained text-image network.
    pub clip_score: Option<f64>,
    /// Reserved; needs a pretrained perceptual network.
    pub lpips: Option<f64>,
}

/// Full report for an edited clip against its source. The OSV analog is
/// computed over the mask's object region when a model is supplied.
pub fn report<T: Scalar>(
    source: &Tensor<T>,
    edited: &Tensor<T>,
    mask: Option<&Tensor<T>>,
    osv: Option<(&Model<T>, Condition)>,
) -> Result<MetricReport> {
    source.same_shape(edited, "metric report")?;
    let frames = source.shape().first().copied().unwrap_or(0);
    let mut per_frame_psnr = Vec::with_capacity(frames);
    let mut per_frame_mask_psnr = Vec::with_capacity(frames);
    for f in 0..frames {
        let (a, b) = (frame(source, f)?, frame(edited, f)?);
        per_frame_psnr.push(psnr(&a, &b)?);
        if let Some(m) = mask {
            let (mse, n) = masked_mse(&a, &b, Some(&frame(m, f)?))?;
            per_frame_mask_psnr.push((n > 0).then(|| psnr_from_mse(mse, 255.0)));
        }
    }
    let mask_psnr_value = mask.map(|m| mask_psnr(source, edited, m)).transpose()?;
    let osv_value = match (osv, mask) {
        (Some((model, y)), Some(m)) => Some(osv_analog(edited, m, model, model.config().blocks / 2, 1, y)?),
        _ => None,
    };
    Ok(MetricReport {
        psnr: psnr(source, edited)?,
        mask_psnr: mask_psnr_value,
        osv_analog: osv_value,
        osv_label: OSV_LABEL.to_string(),
        per_frame_psnr,
        per_frame_mask_psnr,
        clip_score: None,
        lpips: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_hit_cap() {
        let a = Tensor::<f32>::from_fn(&[2, 4, 4, 3], |i| (i as f32 * 0.1).sin());
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    }

    #[test]
    fn unit_difference_on_255_scale() {
        let a = Tensor::<f64>::zeros(&[10]);
        let b = Tensor::<f64>::ones(&[10]);
        let p = psnr_with_peak(&a, &b, 255.0).unwrap();
        assert!((p - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn symmetric_and_all_zero_mask_matches_full() {
        let a = Tensor::<f64>::from_fn(&[2, 4, 4, 3], |i| (i as f64 * 0.3).sin());
        let b = Tensor::<f64>::from_fn(&[2, 4, 4, 3], |i| (i as f64 * 0.31).cos() * 0.5);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let zero = Tensor::<f64>::zeros(&[2, 4, 4]);
        assert!((mask_psnr(&a, &b, &zero).unwrap() - psnr(&a, &b).unwrap()).abs() < 1e-9);
        let ones = Tensor::<f64>::ones(&[2, 4, 4]);
        assert!(matches!(mask_psnr(&a, &b, &ones), Err(Error::Contract(_))));
    }
}
