use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::Archive;
use crate::diffusion::{Branch, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Condition, Model, ModelConfig, Weights};

const CONFIG_ENTRY: &str = "model_config.json";
const TRAJ_META: &str = "trajectory.json";

pub fn checkpoint_archive(cfg: &ModelConfig, weights: &Weights<f32>) -> Result<Archive> {
    let mut a = Archive::new();
    a.push_bytes(CONFIG_ENTRY, serde_json::to_vec(cfg)?);
    for (name, t) in weights.named() {
        a.push(name, t.clone());
    }
    Ok(a)
}

pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &ModelConfig, weights: &Weights<f32>) -> Result<()> {
    checkpoint_archive(cfg, weights)?.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let mut a = Archive::load(path)?;
    let cfg: ModelConfig = serde_json::from_slice(&a.bytes(CONFIG_ENTRY)?)?;
    let weights = Weights::from_named(&cfg, |name| a.take(name).and_then(|s| s.into_tensor().ok()))?;
    Model::new(cfg, weights)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryMeta {
    branch: Branch,
    condition: Condition,
    steps: usize,
}

fn latent_name(t: usize) -> String {
    format!("z.{t:04}")
}

pub fn save_trajectory(path: impl AsRef<Path>, traj: &Trajectory<f32>) -> Result<()> {
    let mut a = Archive::new();
    let meta = TrajectoryMeta {
        branch: traj.branch,
        condition: traj.condition,
        steps: traj.steps(),
    };
    a.push_bytes(TRAJ_META, serde_json::to_vec(&meta)?);
    for (t, z) in traj.latents().iter().enumerate() {
        a.push(latent_name(t), z.clone());
    }
    a.save(path)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory<f32>> {
    let a = Archive::load(path)?;
    let meta: TrajectoryMeta = serde_json::from_slice(&a.bytes(TRAJ_META)?)?;
    let latents = (0..=meta.steps)
        .map(|t| a.tensor(&latent_name(t)))
        .collect::<Result<Vec<_>>>()?;
    if a.len() != meta.steps + 2 {
        return Err(Error::Format(format!(
            "trajectory archive holds {} entries, expected {}",
            a.len(),
            meta.steps + 2
        )));
    }
    Trajectory::new(meta.branch, meta.condition, latents)
}
