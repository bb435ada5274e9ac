use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::model::{Condition, Model};
use crate::numerics::{Scalar, Tensor};

/// `α·z_0 + σ·ε` with explicit coefficients.
pub fn q_sample_with<T: Scalar>(z0: &Tensor<T>, eps: &Tensor<T>, alpha: f64, sigma: f64) -> Result<Tensor<T>> {
    let (a, s) = (T::from_f64_lossy(alpha), T::from_f64_lossy(sigma));
    z0.zip_map(eps, |z, e| a * z + s * e)
}

/// Forward diffusion `z_t = α_t·z_0 + σ_t·ε`.
pub fn q_sample<T: Scalar>(schedule: &NoiseSchedule, z0: &Tensor<T>, t: usize, eps: &Tensor<T>) -> Result<Tensor<T>> {
    schedule.check_step(t)?;
    q_sample_with(z0, eps, schedule.alpha(t), schedule.sigma(t))
}

/// Deterministic DDIM move between noise levels `from = (α, σ)` and `to`.
pub fn ddim_update<T: Scalar>(
    z: &Tensor<T>,
    eps: &Tensor<T>,
    from: (f64, f64),
    to: (f64, f64),
) -> Result<Tensor<T>> {
    let ratio = to.0 / from.0;
    let a = T::from_f64_lossy(ratio);
    let b = T::from_f64_lossy(to.1 - ratio * from.1);
    z.zip_map(eps, |zv, ev| a * zv + b * ev)
}

/// `z_{t−1}` from `z_t` and the predicted noise.
pub fn ddim_step<T: Scalar>(schedule: &NoiseSchedule, z_t: &Tensor<T>, eps: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
    if t == 0 {
        return Err(Error::Config("ddim_step needs t ≥ 1".into()));
    }
    schedule.check_step(t)?;
    let s = schedule;
    ddim_update(z_t, eps, (s.alpha(t), s.sigma(t)), (s.alpha(t - 1), s.sigma(t - 1)))
}

/// `z_{t+1}` from `z_t` and the noise predicted at `z_t`.
pub fn ddim_invert_step<T: Scalar>(
    schedule: &NoiseSchedule,
    z_t: &Tensor<T>,
    eps: &Tensor<T>,
    t: usize,
) -> Result<Tensor<T>> {
    if t >= schedule.steps() {
        return Err(Error::Config(format!(
            "ddim_invert_step needs t < T = {}",
            schedule.steps()
        )));
    }
    let s = schedule;
    ddim_update(z_t, eps, (s.alpha(t), s.sigma(t)), (s.alpha(t + 1), s.sigma(t + 1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Inversion,
    Edit,
}

/// Latents `z_0..z_T` of one branch, indexed by step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Scalar = f32> {
    pub branch: Branch,
    pub condition: Condition,
    latents: Vec<Tensor<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(branch: Branch, condition: Condition, latents: Vec<Tensor<T>>) -> Result<Self> {
        let Some(first) = latents.first() else {
            return Err(Error::Contract("trajectory needs at least one latent".into()));
        };
        for (t, z) in latents.iter().enumerate() {
            if z.shape() != first.shape() {
                return Err(Error::Dimension(format!(
                    "latent at step {t} has shape {:?}, expected {:?}",
                    z.shape(),
                    first.shape()
                )));
            }
        }
        Ok(Self {
            branch,
            condition,
            latents,
        })
    }

    /// Number of stored latents (T + 1).
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.latents.len() - 1
    }

    pub fn at(&self, t: usize) -> &Tensor<T> {
        &self.latents[t]
    }

    pub fn latents(&self) -> &[Tensor<T>] {
        &self.latents
    }

    pub fn terminal(&self) -> &Tensor<T> {
        self.latents.last().expect("non-empty")
    }
}

fn check_model(model: &Model<impl Scalar>, schedule: &NoiseSchedule) -> Result<()> {
    if model.config().timesteps != schedule.steps() {
        return Err(Error::Config(format!(
            "model trained for T = {}, schedule has T = {}",
            model.config().timesteps,
            schedule.steps()
        )));
    }
    Ok(())
}

/// DDIM inversion of a clean video under condition `y`.
pub fn invert<T: Scalar>(
    model: &Model<T>,
    schedule: &NoiseSchedule,
    video: &Tensor<T>,
    y: Condition,
) -> Result<Trajectory<T>> {
    check_model(model, schedule)?;
    video.ensure_finite("video")?;
    let lim = T::from_f64_lossy(1.0 + 1e-6);
    if video.data().iter().any(|v| v.abs() > lim) {
        return Err(Error::Contract("video values must lie in [-1, 1]".into()));
    }
    let mut latents = Vec::with_capacity(schedule.steps() + 1);
    latents.push(video.clone());
    for t in 0..schedule.steps() {
        let z = latents.last().expect("non-empty");
        let (eps, _) = model.forward(z, t, y, &[])?;
        let next = ddim_invert_step(schedule, z, &eps, t)?;
        next.ensure_finite("inversion latent")?;
        latents.push(next);
    }
    Trajectory::new(Branch::Inversion, y, latents)
}

/// Plain DDIM sampling from `z_end = z_T`, returning every latent.
pub fn sample_trajectory<T: Scalar>(
    model: &Model<T>,
    schedule: &NoiseSchedule,
    z_end: &Tensor<T>,
    y: Condition,
) -> Result<Trajectory<T>> {
    check_model(model, schedule)?;
    let steps = schedule.steps();
    let mut rev = Vec::with_capacity(steps + 1);
    rev.push(z_end.clone());
    for t in (1..=steps).rev() {
        let z = rev.last().expect("non-empty");
        let (eps, _) = model.forward(z, t, y, &[])?;
        let prev = ddim_step(schedule, z, &eps, t)?;
        prev.ensure_finite("sample latent")?;
        rev.push(prev);
    }
    rev.reverse();
    Trajectory::new(Branch::Edit, y, rev)
}

/// Plain DDIM sampling; the result is clipped to `[-1, 1]`.
pub fn sample<T: Scalar>(model: &Model<T>, schedule: &NoiseSchedule, z_end: &Tensor<T>, y: Condition) -> Result<Tensor<T>> {
    let traj = sample_trajectory(model, schedule, z_end, y)?;
    Ok(clip_unit(traj.at(0)))
}

pub fn clip_unit<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.clip(-T::one(), T::one())
}

/// Per-step drift `‖recon_t − inv_t‖ / ‖inv_t‖` between a sampled and an inverted trajectory.
pub fn drift<T: Scalar>(recon: &Trajectory<T>, inversion: &Trajectory<T>) -> Result<Vec<f64>> {
    if recon.len() != inversion.len() {
        return Err(Error::Length {
            expected: inversion.len(),
            found: recon.len(),
        });
    }
    recon
        .latents()
        .iter()
        .zip(inversion.latents())
        .map(|(a, b)| a.rel_err(b))
        .collect()
}
