//! Spectrum-guided editing.
//!
//! At each guided step the attention outputs of the leading blocks are
//! computed for the edit latent and for the inversion latent (both under
//! the source condition), transformed with a 3-D DFT, low-pass filtered and
//! compared. The gradient of that distance with respect to the edit latent,
//! normalized and scaled by λ, is subtracted from the DDIM update.

mod config;
mod edit;
mod spectrum;
mod step;

pub use config::{GuidanceConfig, NormMode, LAMBDA_RANGE, REFERENCE_ELEMENTS};
pub use edit::{edit, final_deviation, EditOutcome, EditReport, EditRequest, StepRecord};
pub use spectrum::{guidance_gradient, normalize, spectrum_guidance, GuidanceEval};
pub use step::{apply_modulation, mask_blend, modulated_step, token_mask};
