use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and size of the toy video diffusion transformer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub blocks: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Spatial patch edge in pixels.
    pub patch: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Number of real condition classes; id `num_classes` is the null condition.
    pub num_classes: usize,
    pub fps_vocab: usize,
    /// Leading blocks treated as sketching blocks.
    pub sketch_blocks: usize,
    pub ffn_mult: usize,
    /// Diffusion steps T; the timestep table has T + 1 rows.
    pub timesteps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            blocks: 6,
            d_model: 64,
            heads: 4,
            patch: 4,
            frames: 8,
            height: 16,
            width: 16,
            channels: 3,
            num_classes: crate::data::NUM_CLASSES,
            fps_vocab: 4,
            sketch_blocks: 2,
            ffn_mult: 4,
            timesteps: 50,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.blocks == 0 || self.d_model == 0 || self.heads == 0 || self.patch == 0 {
            return fail("blocks, d_model, heads and patch must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return fail(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
        }
        if self.height % self.patch != 0 || self.width % self.patch != 0 {
            return fail(format!(
                "frame {}x{} not divisible by patch {}",
                self.height, self.width, self.patch
            ));
        }
        if self.frames == 0 || self.channels == 0 || self.timesteps == 0 || self.fps_vocab == 0 {
            return fail("frames, channels, timesteps and fps_vocab must be positive".into());
        }
        if self.sketch_blocks == 0 || self.sketch_blocks > self.blocks {
            return fail(format!(
                "sketch_blocks {} outside [1, {}]",
                self.sketch_blocks, self.blocks
            ));
        }
        if self.ffn_mult == 0 {
            return fail("ffn_mult must be positive".into());
        }
        Ok(())
    }

    /// Token grid `(h, w, τ)`.
    pub fn grid(&self) -> (usize, usize, usize) {
        (self.height / self.patch, self.width / self.patch, self.frames)
    }

    pub fn tokens_per_frame(&self) -> usize {
        let (h, w, _) = self.grid();
        h * w
    }

    pub fn video_tokens(&self) -> usize {
        self.tokens_per_frame() * self.frames
    }

    /// Condition token + fps token + video tokens.
    pub fn seq_len(&self) -> usize {
        PREFIX_TOKENS + self.video_tokens()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn video_shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    pub fn null_class(&self) -> usize {
        self.num_classes
    }
}

/// Rows ahead of the video tokens in every sequence.
pub const PREFIX_TOKENS: usize = 2;

/// Conditioning signal standing in for a text prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub class: usize,
    pub fps: usize,
}

impl Condition {
    pub fn new(class: usize, fps: usize) -> Self {
        Self { class, fps }
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.class > cfg.num_classes {
            return Err(Error::Config(format!(
                "unknown condition id {} (vocabulary {} + null)",
                self.class, cfg.num_classes
            )));
        }
        if self.fps >= cfg.fps_vocab {
            return Err(Error::Config(format!(
                "fps tag {} outside vocabulary of {}",
                self.fps, cfg.fps_vocab
            )));
        }
        Ok(())
    }
}
