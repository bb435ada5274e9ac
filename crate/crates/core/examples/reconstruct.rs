//! Deterministic inversion of a clip to noise and reconstruction back.
//! Pass a checkpoint from the `train` example; untrained weights still
//! show the mechanics but reconstruct poorly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_edit::data::{load_checkpoint, synthesize, ClipShape};
use spectral_edit::diffusion::{drift, invert, sample_trajectory, NoiseSchedule, ScheduleKind};
use spectral_edit::metrics::psnr;
use spectral_edit::model::{Model, ModelConfig, Weights};

fn main() -> spectral_edit::error::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path)?,
        None => {
            let cfg = ModelConfig::default();
            Model::new(cfg.clone(), Weights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?)?
        }
    };
    let schedule = NoiseSchedule::new(model.config().timesteps, ScheduleKind::Cosine)?;
    for clip in synthesize(3, 1234, ClipShape::default())? {
        let inversion = invert(&model, &schedule, &clip.video, clip.y_src())?;
        let recon = sample_trajectory(&model, &schedule, inversion.terminal(), clip.y_src())?;
        let video = recon.at(0).clip(-1.0, 1.0);
        let worst = drift(&recon, &inversion)?.into_iter().fold(0.0, f64::max);
        println!(
            "clip {}: reconstruction {:.2} dB, largest latent drift {worst:.3}",
            clip.id,
            psnr(&clip.video, &video)?
        );
    }
    Ok(())
}
