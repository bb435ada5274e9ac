//! Toy video diffusion transformer.
//!
//! Each block runs one joint full attention over the condition token, the
//! fps token and all video tokens, followed by a feed-forward layer. Blocks
//! can report their attention maps `M` and attention outputs `F = M·V`
//! (taken before the output projection).

mod config;
mod dit;
mod patch;
mod weights;

pub use config::{Condition, ModelConfig, PREFIX_TOKENS};
pub use dit::{AttentionCapture, Model};
pub use patch::{patchify, unpatchify};
pub use weights::{BlockWeights, Weights};
