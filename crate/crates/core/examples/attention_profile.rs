//! Per-block low-frequency energy of attention outputs, the rank
//! agreement across noise levels and the suggested number of leading
//! blocks to guide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_edit::analysis::{
    block_energy_profile, default_timesteps, fractions_at, min_cross_timestep_correlation, recommend_k, DEFAULT_BAND,
};
use spectral_edit::data::{load_checkpoint, synthesize, ClipShape};
use spectral_edit::diffusion::{NoiseSchedule, ScheduleKind};
use spectral_edit::model::{Model, ModelConfig, Weights};
use spectral_edit::numerics::FilterSpec;

fn main() -> spectral_edit::error::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path)?,
        None => {
            let cfg = ModelConfig::default();
            Model::new(cfg.clone(), Weights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?)?
        }
    };
    let schedule = NoiseSchedule::new(model.config().timesteps, ScheduleKind::Cosine)?;
    let clips: Vec<_> = synthesize(4, 5, ClipShape::default())?
        .into_iter()
        .map(|c| (c.video.clone(), c.y_src()))
        .collect();
    let timesteps = default_timesteps(schedule.steps());
    let profiles = block_energy_profile(&model, &schedule, &clips, &timesteps, &FilterSpec::default(), DEFAULT_BAND, 99)?;

    println!("block {}", timesteps.iter().map(|t| format!("  t={t:<4}")).collect::<String>());
    for b in 0..model.config().blocks {
        let row: String = profiles
            .iter()
            .filter(|p| p.block == b)
            .map(|p| format!("  {:.4}", p.low_freq_fraction))
            .collect();
        println!("{b:>5} {row}");
    }
    println!("min rank correlation across t: {:.3}", min_cross_timestep_correlation(&profiles)?);
    println!("suggested k: {}", recommend_k(&fractions_at(&profiles, timesteps[0]), 0.95)?);
    Ok(())
}
