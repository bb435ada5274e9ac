//! Block-role diagnostics: how diagonal each block's attention is, and how
//! much of its attention-output energy sits inside the low-pass band.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{q_sample, NoiseSchedule};
use crate::error::{Error, Result};
use crate::model::{AttentionCapture, Condition, Model, PREFIX_TOKENS};
use crate::numerics::{dft3, FilterSpec, Scalar, Tensor};

/// Default half-width of the diagonal bands, in tokens.
pub const DEFAULT_BAND: usize = 1;

/// Fraction of attention mass within `±band` of the main diagonal or of any
/// diagonal offset by a multiple of `tokens_per_frame`.
pub fn diagonality<T: Scalar>(map: &Tensor<T>, tokens_per_frame: usize, band: usize) -> Result<f64> {
    let s = map.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::Dimension(format!("diagonality needs a square map, got {s:?}")));
    }
    if tokens_per_frame == 0 {
        return Err(Error::Config("tokens_per_frame must be positive".into()));
    }
    let n = s[0];
    let (mut inside, mut total) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let v = map.data()[i * n + j].to_f64_lossy();
            total += v;
            let r = (j + n * tokens_per_frame - i) % tokens_per_frame;
            if r.min(tokens_per_frame - r) <= band {
                inside += v;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::Contract("attention map has no mass".into()));
    }
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Head-averaged map restricted to video tokens.
pub fn video_attention<T: Scalar>(capture: &AttentionCapture<T>) -> Result<Tensor<T>> {
    let mean = capture.mean_map();
    let l = capture.seq_len();
    let n = l - PREFIX_TOKENS;
    let rows = mean.slice_axis(0, PREFIX_TOKENS..l)?;
    let out = rows.slice_axis(1, PREFIX_TOKENS..l)?;
    debug_assert_eq!(out.shape(), &[n, n]);
    Ok(out)
}

/// Share of spectral energy of an `h × w × τ × c` tensor inside the low-pass mask.
pub fn low_frequency_fraction<T: Scalar>(f: &Tensor<T>, filter: &FilterSpec) -> Result<f64> {
    let spec = dft3(f)?;
    let s = spec.shape();
    let mask = filter.mask(s[0], s[1], s[2])?;
    let flags = mask.flags(s[3]);
    let (mut low, mut total) = (0.0f64, 0.0f64);
    for (c, keep) in spec.data().iter().zip(flags) {
        let e = c.norm_sqr().to_f64_lossy();
        total += e;
        if keep {
            low += e;
        }
    }
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok(low / total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockProfile {
    pub block: usize,
    pub timestep: usize,
    pub low_freq_fraction: f64,
    pub diagonality: f64,
}

/// Default probe steps `{0.2T, 0.4T, 0.6T}`.
pub fn default_timesteps(steps: usize) -> Vec<usize> {
    [0.2, 0.4, 0.6]
        .iter()
        .map(|f| ((f * steps as f64).round() as usize).clamp(1, steps))
        .collect()
}

/// Per-block low-frequency fraction and diagonality, averaged over clips.
/// Each clip is noised to step `t` with noise drawn from `seed` and the clip index.
pub fn block_energy_profile<T: Scalar>(
    model: &Model<T>,
    schedule: &NoiseSchedule,
    clips: &[(Tensor<T>, Condition)],
    timesteps: &[usize],
    filter: &FilterSpec,
    band: usize,
    seed: u64,
) -> Result<Vec<BlockProfile>> {
    if clips.is_empty() || timesteps.is_empty() {
        return Err(Error::Config("profile needs at least one clip and one timestep".into()));
    }
    let cfg = model.config();
    if let Some(&t) = timesteps.iter().find(|&&t| t == 0 || t > schedule.steps()) {
        return Err(Error::Config(format!("timestep {t} outside [1, {}]", schedule.steps())));
    }
    let blocks: Vec<usize> = (0..cfg.blocks).collect();
    let mut out = Vec::with_capacity(timesteps.len() * cfg.blocks);
    for &t in timesteps {
        let per_clip: Vec<Result<Vec<(f64, f64)>>> = clips
            .par_iter()
            .enumerate()
            .map(|(i, (video, y))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((i as u64) << 20) ^ t as u64);
                let eps = Tensor::from_fn(video.shape(), |_| {
                    T::from_f64_lossy(StandardNormal.sample(&mut rng))
                });
                let z = q_sample(schedule, video, t, &eps)?;
                let (_, caps) = model.forward(&z, t, *y, &blocks)?;
                caps.iter()
                    .map(|c| {
                        let lf = low_frequency_fraction(&c.video_output(cfg)?, filter)?;
                        let dg = diagonality(&video_attention(c)?, cfg.tokens_per_frame(), band)?;
                        Ok((lf, dg))
                    })
                    .collect()
            })
            .collect();
        let per_clip = per_clip.into_iter().collect::<Result<Vec<_>>>()?;
        let n = per_clip.len() as f64;
        for b in 0..cfg.blocks {
            let lf = per_clip.iter().map(|v| v[b].0).sum::<f64>() / n;
            let dg = per_clip.iter().map(|v| v[b].1).sum::<f64>() / n;
            out.push(BlockProfile {
                block: b,
                timestep: t,
                low_freq_fraction: lf,
                diagonality: dg,
            });
        }
    }
    Ok(out)
}

pub fn profiles_csv(profiles: &[BlockProfile]) -> String {
    let mut s = String::from("block,timestep,low_freq_fraction,diagonality\n");
    for p in profiles {
        s.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            p.block, p.timestep, p.low_freq_fraction, p.diagonality
        ));
    }
    s
}

/// Longest prefix of blocks whose low-frequency fraction exceeds `threshold`,
/// clamped to `[1, N − 1]`.
pub fn recommend_k(fractions: &[f64], threshold: f64) -> Result<usize> {
    if fractions.is_empty() {
        return Err(Error::Config("recommend_k needs at least one block".into()));
    }
    let prefix = fractions.iter().take_while(|&&f| f > threshold).count();
    let hi = fractions.len().saturating_sub(1).max(1);
    Ok(prefix.clamp(1, hi))
}

/// Low-frequency fractions at timestep `t`, ordered by block.
pub fn fractions_at(profiles: &[BlockProfile], t: usize) -> Vec<f64> {
    let mut v: Vec<&BlockProfile> = profiles.iter().filter(|p| p.timestep == t).collect();
    v.sort_by_key(|p| p.block);
    v.into_iter().map(|p| p.low_freq_fraction).collect()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Length {
            expected: a.len().max(2),
            found: b.len(),
        });
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(if va == vb { 1.0 } else { 0.0 });
    }
    Ok(cov / (va * vb).sqrt())
}

/// Smallest pairwise rank correlation of block orderings across timesteps.
pub fn min_cross_timestep_correlation(profiles: &[BlockProfile]) -> Result<f64> {
    let mut ts: Vec<usize> = profiles.iter().map(|p| p.timestep).collect();
    ts.sort_unstable();
    ts.dedup();
    let mut worst = 1.0f64;
    for (i, &a) in ts.iter().enumerate() {
        for &b in &ts[i + 1..] {
            worst = worst.min(rank_correlation(&fractions_at(profiles, a), &fractions_at(profiles, b))?);
        }
    }
    Ok(worst)
}

/// Binary PGM (P5) rendering of a 2-D tensor, min–max normalized.
pub fn pgm_bytes<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    if img.rank() != 2 {
        return Err(Error::Dimension(format!("heatmap needs a 2-D tensor, got {:?}", img.shape())));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let vals: Vec<f64> = img.data().iter().map(|v| v.to_f64_lossy()).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(vals.iter().map(|v| (((v - lo) / span) * 255.0).round() as u8));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_offset_diagonals_score_one() {
        let id = Tensor::<f64>::from_fn(&[12, 12], |i| if i / 12 == i % 12 { 1.0 } else { 0.0 });
        assert_eq!(diagonality(&id, 4, 0).unwrap(), 1.0);
        let off = Tensor::<f64>::from_fn(&[12, 12], |i| if i % 12 == i / 12 + 4 { 1.0 } else { 0.0 });
        assert_eq!(diagonality(&off, 4, 0).unwrap(), 1.0);
    }

    #[test]
    fn uniform_map_counts_cells() {
        let n = 8;
        let u = Tensor::<f64>::full(&[n, n], 1.0 / n as f64);
        let covered = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                let r = (j + 4 * n - i) % 4;
                r.min(4 - r) <= 1
            })
            .count();
        let want = covered as f64 / (n * n) as f64;
        assert!((diagonality(&u, 4, 1).unwrap() - want).abs() < 1e-12);
        assert!(diagonality(&Tensor::<f64>::ones(&[2, 3]), 4, 1).is_err());
    }

    #[test]
    fn recommend_k_prefix_rule() {
        assert_eq!(recommend_k(&[0.9, 0.85, 0.4, 0.3, 0.3, 0.2], 0.6).unwrap(), 2);
        assert_eq!(recommend_k(&[0.9; 6], 0.6).unwrap(), 5);
        assert_eq!(recommend_k(&[0.1; 6], 0.6).unwrap(), 1);
        assert!(recommend_k(&[], 0.6).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((rank_correlation(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((rank_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_features_are_all_low_frequency() {
        let f = Tensor::<f64>::full(&[4, 4, 8, 3], 0.7);
        assert!((low_frequency_fraction(&f, &FilterSpec::default()).unwrap() - 1.0).abs() < 1e-12);
    }
}
