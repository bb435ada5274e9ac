//! Noise schedules, DDIM sampling and inversion, and the training loop.

mod ddim;
mod schedule;
mod train;

pub use ddim::{
    clip_unit, ddim_invert_step, ddim_step, ddim_update, drift, invert, q_sample, q_sample_with, sample,
    sample_trajectory, Branch, Trajectory,
};
pub use schedule::{NoiseSchedule, ScheduleKind, COSINE_BETA_MAX};
pub use train::{train, LossRecord, TrainExample, TrainOutcome, TrainerConfig};
