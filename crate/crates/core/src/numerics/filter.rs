use serde::{Deserialize, Serialize};

use super::complex::ComplexTensor;
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    #[default]
    HardMask,
}

/// Low-pass cutoff per axis, as a fraction of the centered half band.
///
/// A bin on an axis of length `n` is kept iff its centered frequency
/// satisfies `|f| ≤ ρ·n/2`. The support is rectangular and symmetric about DC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub rho_h: f64,
    pub rho_w: f64,
    pub rho_tau: f64,
    #[serde(default)]
    pub mode: FilterMode,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self::uniform(2.0 / 3.0)
    }
}

impl FilterSpec {
    pub fn uniform(rho: f64) -> Self {
        Self {
            rho_h: rho,
            rho_w: rho,
            rho_tau: rho,
            mode: FilterMode::HardMask,
        }
    }

    /// Keep-all filter used by the "no filter" ablation.
    pub fn all_pass() -> Self {
        Self::uniform(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [("rho_h", self.rho_h), ("rho_w", self.rho_w), ("rho_tau", self.rho_tau)] {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!("{name} = {rho} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Binary mask for an `h × w × τ` grid.
    pub fn mask(&self, h: usize, w: usize, tau: usize) -> Result<LowpassMask> {
        self.validate()?;
        Ok(LowpassMask {
            dims: [h, w, tau],
            keep: [
                axis_keep(h, self.rho_h),
                axis_keep(w, self.rho_w),
                axis_keep(tau, self.rho_tau),
            ],
        })
    }
}

fn axis_keep(n: usize, rho: f64) -> Vec<bool> {
    let limit = rho * n as f64 / 2.0;
    (0..n)
        .map(|k| {
            let f = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            // Tolerance absorbs rounding in ρ·n/2 (e.g. 2/3 · 3 = 2).
            f.abs() <= limit + 1e-9
        })
        .collect()
}

/// Separable binary frequency mask over the first three axes.
#[derive(Clone, Debug, PartialEq)]
pub struct LowpassMask {
    dims: [usize; 3],
    keep: [Vec<bool>; 3],
}

impl LowpassMask {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn keeps(&self, a: usize, b: usize, c: usize) -> bool {
        self.keep[0][a] && self.keep[1][b] && self.keep[2][c]
    }

    pub fn kept_bins(&self) -> usize {
        self.keep.iter().map(|k| k.iter().filter(|&&b| b).count()).product()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_bins() as f64 / (self.dims[0] * self.dims[1] * self.dims[2]) as f64
    }

    /// Per-element keep flags for a `h × w × τ × c` layout.
    pub fn flags(&self, channels: usize) -> Vec<bool> {
        let [h, w, t] = self.dims;
        let mut out = Vec::with_capacity(h * w * t * channels);
        for a in 0..h {
            for b in 0..w {
                for c in 0..t {
                    let k = self.keeps(a, b, c);
                    out.extend(std::iter::repeat_n(k, channels));
                }
            }
        }
        out
    }

    pub fn check_shape(&self, shape: &[usize]) -> Result<usize> {
        if shape.len() != 4 || shape[..3] != self.dims {
            return Err(Error::Dimension(format!(
                "mask for grid {:?} applied to shape {shape:?}",
                self.dims
            )));
        }
        Ok(shape[3])
    }
}

/// Zeroes every bin outside the mask; kept bins are copied verbatim.
pub fn lowpass<T: Scalar>(x: &ComplexTensor<T>, filter: &FilterSpec) -> Result<ComplexTensor<T>> {
    if x.rank() != 4 {
        return Err(Error::Dimension(format!(
            "lowpass needs an h×w×τ×c spectrum, got {:?}",
            x.shape()
        )));
    }
    let s = x.shape();
    let mask = filter.mask(s[0], s[1], s[2])?;
    apply_mask(x, &mask)
}

pub fn apply_mask<T: Scalar>(x: &ComplexTensor<T>, mask: &LowpassMask) -> Result<ComplexTensor<T>> {
    let channels = mask.check_shape(x.shape())?;
    let mut out = x.clone();
    let zero = num_complex::Complex::new(T::zero(), T::zero());
    for (v, keep) in out.data_mut().iter_mut().zip(mask.flags(channels)) {
        if !keep {
            *v = zero;
        }
    }
    Ok(out)
}
