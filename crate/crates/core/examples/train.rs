//! Trains the toy video transformer on synthetic clips and saves a
//! checkpoint. The default budget is short; pass a step count to train
//! longer.
//!
//! `cargo run --release --example train -- 400 target/toy.fada`

use spectral_edit::data::{save_checkpoint, synthesize, ClipShape};
use spectral_edit::diffusion::{train, NoiseSchedule, ScheduleKind, TrainExample, TrainerConfig};
use spectral_edit::model::ModelConfig;

fn main() -> spectral_edit::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let out = args.next().unwrap_or_else(|| "target/toy.fada".into());

    let cfg = ModelConfig::default();
    let schedule = NoiseSchedule::new(cfg.timesteps, ScheduleKind::Cosine)?;
    let corpus: Vec<TrainExample> = synthesize(256, 7, ClipShape::default())?
        .into_iter()
        .map(|s| TrainExample { condition: s.y_src(), video: s.video })
        .collect();
    let trainer = TrainerConfig { steps, checkpoint_every: 0, ..TrainerConfig::default() };
    let outcome = train(&corpus, &cfg, &trainer, &schedule, |_, _| Ok(()))?;

    for rec in outcome.losses.iter().step_by((steps / 10).max(1)) {
        println!("step {:>5}  loss {:>10.2}", rec.step, rec.loss);
    }
    save_checkpoint(&out, &cfg, &outcome.weights)?;
    println!("saved {out}");
    Ok(())
}
