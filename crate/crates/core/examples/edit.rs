//! Changes a clip's condition with and without spectral guidance and
//! compares how much of the source structure survives.
//!
//! `cargo run --release --example edit -- target/toy.fada`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_edit::data::{load_checkpoint, synthesize, ClipShape};
use spectral_edit::diffusion::{invert, NoiseSchedule, ScheduleKind};
use spectral_edit::guidance::{edit, EditRequest, GuidanceConfig};
use spectral_edit::metrics::mask_psnr;
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
    let clip = synthesize(1, 1234, ClipShape::default())?.remove(0);
    println!("clip 0: {:?} edit, condition {:?} -> {:?}", clip.edit, clip.y_src(), clip.y_tgt());

    let traj = invert(&model, &schedule, &clip.video, clip.y_src())?;
    let mask = clip.edit_mask();
    for (name, lambda) in [("unguided", 0.0), ("guided", GuidanceConfig::default().lambda)] {
        let req = EditRequest {
            video: clip.video.clone(),
            y_src: clip.y_src(),
            y_tgt: clip.y_tgt(),
            mask: None,
            config: GuidanceConfig { lambda, ..GuidanceConfig::default() },
        };
        let out = edit(&req, &model, &schedule, Some(&traj))?;
        let guided = out.report.steps.iter().filter(|s| s.guided).count();
        println!(
            "{name:>9}: {guided} guided steps, Mask-PSNR {:.2} dB, spectral deviation {:.3}",
            mask_psnr(&clip.video, &out.video, &mask)?,
            out.report.final_deviation
        );
    }
    Ok(())
}
