use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    LinearBeta,
    #[default]
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-beta" => Ok(Self::LinearBeta),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::Config(format!(
                "unknown schedule kind {other:?} (expected linear-beta or cosine)"
            ))),
        }
    }
}

/// Per-step β ceiling of the cosine schedule. A lower ceiling bounds the
/// ratio α_{t−1}/α_t by √2, which keeps inversion steps near t = T stable.
pub const COSINE_BETA_MAX: f64 = 0.5;
const COSINE_OFFSET: f64 = 0.008;

/// Variance-preserving coefficients `(α_t, σ_t)` for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, kind: ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::LinearBeta => {
                let scale = 1000.0 / steps as f64;
                let (lo, hi) = (1e-4 * scale, 0.02 * scale);
                (1..=steps)
                    .map(|i| {
                        let b = if steps == 1 {
                            hi
                        } else {
                            lo + (hi - lo) * (i - 1) as f64 / (steps - 1) as f64
                        };
                        b.min(0.999)
                    })
                    .collect()
            }
            ScheduleKind::Cosine => {
                let f = |t: usize| {
                    let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                    (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
                };
                (1..=steps)
                    .map(|t| (1.0 - f(t) / f(t - 1)).clamp(1e-8, COSINE_BETA_MAX))
                    .collect()
            }
        };
        let mut abar = 1.0f64;
        let mut alpha = vec![1.0];
        let mut sigma = vec![0.0];
        for b in betas {
            abar *= 1.0 - b;
            alpha.push(abar.sqrt());
            sigma.push((1.0 - abar).sqrt());
        }
        Ok(Self { kind, alpha, sigma })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Total steps T.
    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::Config(format!("timestep {t} outside [0, {}]", self.steps())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_hold_for_both_kinds() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::LinearBeta] {
            for steps in [1, 2, 7, 50, 1000] {
                let s = NoiseSchedule::new(steps, kind).unwrap();
                assert_eq!(s.alpha(0), 1.0);
                assert_eq!(s.sigma(0), 0.0);
                for t in 0..=steps {
                    let vp = s.alpha(t).powi(2) + s.sigma(t).powi(2);
                    assert!((vp - 1.0).abs() < 1e-12);
                    if t > 0 {
                        assert!(s.alpha(t) < s.alpha(t - 1), "{kind:?} T={steps} t={t}");
                        assert!(s.sigma(t) > s.sigma(t - 1));
                    }
                }
            }
        }
    }

    #[test]
    fn cosine_endpoint_is_nearly_pure_noise() {
        let s = NoiseSchedule::new(50, ScheduleKind::Cosine).unwrap();
        assert!(s.alpha(50) < 0.05);
        for t in 1..=50 {
            assert!(s.alpha(t - 1) / s.alpha(t) <= 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("sigmoid".parse::<ScheduleKind>(), Err(Error::Config(_))));
        assert_eq!("cosine".parse::<ScheduleKind>().unwrap(), ScheduleKind::Cosine);
        assert!(NoiseSchedule::new(0, ScheduleKind::Cosine).is_err());
    }
}
