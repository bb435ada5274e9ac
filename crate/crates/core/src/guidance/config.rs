use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::FilterSpec;

/// How the guidance gradient is normalized before scaling by λ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// `g / max(‖g‖₂, δ)` over the whole tensor.
    #[default]
    Global,
    /// Each token's slice scaled to norm `1/√tokens`, so the total norm is at most 1.
    PerToken,
}

/// Spectrum-guidance settings for one edit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub lambda: f64,
    /// Number of leading (sketching) blocks whose attention outputs are compared.
    pub k: usize,
    /// Compare every block instead of the leading `k`.
    pub all_blocks: bool,
    pub filter: FilterSpec,
    /// Guidance applies for `t ≤ g_frac·T`.
    pub g_frac: f64,
    /// Mask blending applies for `t ≤ m_frac·T`.
    pub m_frac: f64,
    /// Weight of the auxiliary last-block term; 0 disables it.
    pub lambda_aux: f64,
    /// Gradient-norm floor.
    pub delta: f64,
    pub norm: NormMode,
    /// Latent element count the λ range is calibrated for. The modulation is
    /// scaled by `√(n / reference_elements)` so the per-element step size does
    /// not depend on latent size; 0 disables the scaling.
    pub reference_elements: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lambda: 12.5,
            k: 2,
            all_blocks: false,
            filter: FilterSpec::default(),
            g_frac: 0.6,
            m_frac: 0.8,
            lambda_aux: 0.0,
            delta: 1e-8,
            norm: NormMode::Global,
            reference_elements: REFERENCE_ELEMENTS,
        }
    }
}

/// A 13 × 60 × 90 × 16 latent.
pub const REFERENCE_ELEMENTS: f64 = 1_123_200.0;

/// Recommended λ range; values outside it are accepted with a warning.
pub const LAMBDA_RANGE: (f64, f64) = (10.0, 15.0);

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda {} must be finite and ≥ 0", self.lambda));
        }
        if !(self.lambda_aux >= 0.0) || !self.lambda_aux.is_finite() {
            return bad(format!("lambda_aux {} must be finite and ≥ 0", self.lambda_aux));
        }
        for (name, v) in [("g_frac", self.g_frac), ("m_frac", self.m_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta {} must be positive", self.delta));
        }
        if !(self.reference_elements >= 0.0) || !self.reference_elements.is_finite() {
            return bad(format!("reference_elements {} must be finite and ≥ 0", self.reference_elements));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        self.filter.validate()
    }

    pub fn validate_for(&self, model: &ModelConfig) -> Result<()> {
        self.validate()?;
        if self.k > model.blocks {
            return Err(Error::Config(format!(
                "k = {} exceeds the model's {} blocks",
                self.k, model.blocks
            )));
        }
        if self.lambda > 0.0 && (self.lambda < LAMBDA_RANGE.0 || self.lambda > LAMBDA_RANGE.1) {
            log::warn!(
                "lambda {} outside the recommended range [{}, {}]",
                self.lambda,
                LAMBDA_RANGE.0,
                LAMBDA_RANGE.1
            );
        }
        Ok(())
    }

    /// Blocks whose attention outputs enter the guidance term.
    pub fn guided_blocks(&self, model: &ModelConfig) -> Vec<usize> {
        if self.all_blocks {
            (0..model.blocks).collect()
        } else {
            (0..self.k.min(model.blocks)).collect()
        }
    }

    /// Multiplier on `λ·Norm(grad)` for a latent of `elements` entries.
    pub fn step_scale(&self, elements: usize) -> f64 {
        if self.reference_elements == 0.0 {
            1.0
        } else {
            (elements as f64 / self.reference_elements).sqrt()
        }
    }

    pub fn in_guidance_interval(&self, t: usize, steps: usize) -> bool {
        t as f64 <= self.g_frac * steps as f64 + 1e-9
    }

    pub fn in_mask_interval(&self, t: usize, steps: usize) -> bool {
        t as f64 <= self.m_frac * steps as f64 + 1e-9
    }
}
