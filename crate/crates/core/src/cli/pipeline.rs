//! Shared stages of the command surface, including the one-shot reproduction run.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{write_artifact, write_resolved, RunConfig};
use crate::analysis::{
    block_energy_profile, default_timesteps, fractions_at, min_cross_timestep_correlation, pgm_bytes,
    profiles_csv, recommend_k, video_attention, BlockProfile,
};
use crate::data::io::write_file;
use crate::data::{checkpoint_archive, make_corpus, synthesize, Archive, CorpusSample, EditKind};
use crate::diffusion::{invert, q_sample, sample, train, NoiseSchedule, TrainExample};
use crate::error::{Error, Result};
use crate::guidance::{edit, final_deviation, EditRequest, GuidanceConfig};
use crate::metrics::{mask_psnr, osv_analog, psnr, report};
use crate::model::{Condition, Model};
use crate::numerics::{FilterSpec, Tensor};

/// Training steps of the pinned reproduction budget.
pub const PINNED_TRAIN_STEPS: usize = 3000;

/// Seed used by `reproduce` when none is given.
pub const PINNED_SEED: u64 = 7;

/// Configuration of the pinned reproduction run.
pub fn pinned_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = PINNED_SEED;
    cfg.trainer.seed = PINNED_SEED;
    cfg.trainer.steps = PINNED_TRAIN_STEPS;
    cfg
}

/// The compared edit settings: guided, unguided and the two ablations.
pub fn variants(base: &GuidanceConfig) -> Vec<(&'static str, GuidanceConfig)> {
    let unguided = GuidanceConfig { lambda: 0.0, ..base.clone() };
    let no_filter = GuidanceConfig { filter: FilterSpec::all_pass(), ..base.clone() };
    let all_blocks = GuidanceConfig { all_blocks: true, ..base.clone() };
    vec![
        ("guided", base.clone()),
        ("unguided", unguided),
        ("no-filter", no_filter),
        ("all-blocks", all_blocks),
    ]
}

/// How far an edit moved the masked region toward the ground-truth target:
/// `mse(src, target) − mse(edited, target)` over `mask == 1`.
pub fn consistency_gap(src: &Tensor<f32>, edited: &Tensor<f32>, target: &Tensor<f32>, mask: &Tensor<f32>) -> Result<f64> {
    src.same_shape(edited, "consistency gap")?;
    src.same_shape(target, "consistency gap")?;
    let ch = src.shape().last().copied().unwrap_or(1);
    if mask.len() * ch != src.len() {
        return Err(Error::Dimension(format!(
            "mask {:?} does not cover video {:?}",
            mask.shape(),
            src.shape()
        )));
    }
    let (mut before, mut after, mut n) = (0.0f64, 0.0f64, 0usize);
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for c in i * ch..(i + 1) * ch {
            let tgt = target.data()[c] as f64;
            before += (src.data()[c] as f64 - tgt).powi(2);
            after += (edited.data()[c] as f64 - tgt).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Contract("edit region is empty".into()));
    }
    Ok((before - after) / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub mask_psnr: f64,
    /// Low-pass deviation of the sketching-block outputs from the source at t = 0.
    pub deviation: f64,
    pub osv_analog: f64,
    pub consistency_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: usize,
    pub edit: EditKind,
    pub y_src: Condition,
    pub y_tgt: Condition,
    pub recon_psnr: f64,
    pub variants: Vec<(String, VariantMetrics)>,
}

/// Inverts, reconstructs and edits one clip under every variant.
/// Edits run without mask blending; the edit mask only scopes the metrics.
pub fn evaluate_sample(
    model: &Model<f32>,
    schedule: &NoiseSchedule,
    s: &CorpusSample,
    base: &GuidanceConfig,
) -> Result<(SampleRow, Vec<Tensor<f32>>)> {
    let traj = invert(model, schedule, &s.video, s.y_src())?;
    let recon = sample(model, schedule, traj.terminal(), s.y_src())?;
    let mask = s.edit_mask();
    let mut rows = Vec::new();
    let mut videos = Vec::new();
    for (name, cfg) in variants(base) {
        let req = EditRequest {
            video: s.video.clone(),
            y_src: s.y_src(),
            y_tgt: s.y_tgt(),
            mask: None,
            config: cfg,
        };
        let out = edit(&req, model, schedule, Some(&traj))?;
        let m = VariantMetrics {
            mask_psnr: mask_psnr(&s.video, &out.video, &mask)?,
            deviation: final_deviation(model, &out.video, &s.video, s.y_src(), base)?,
            osv_analog: osv_analog(&out.video, &mask, model, model.config().blocks / 2, 1, s.y_tgt())?,
            consistency_gap: consistency_gap(&s.video, &out.video, &s.target_video, &mask)?,
        };
        rows.push((name.to_string(), m));
        videos.push(out.video);
    }
    let row = SampleRow {
        id: s.id,
        edit: s.edit,
        y_src: s.y_src(),
        y_tgt: s.y_tgt(),
        recon_psnr: psnr(&s.video, &recon)?,
        variants: rows,
    };
    Ok((row, videos))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rounds to six decimals so summaries diff cleanly.
fn r6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub lambda: f64,
    pub k: usize,
    pub all_blocks: bool,
    pub filtered: bool,
    pub mask_psnr_median: f64,
    pub deviation_median: f64,
    pub osv_analog_median: f64,
    pub consistency_gap_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub initial_loss: f64,
    /// Mean loss over the last 100 steps.
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub samples: usize,
    pub psnr_median: f64,
    pub psnr_min: f64,
    pub fraction_at_least_25db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub timesteps: Vec<usize>,
    pub profiles: Vec<BlockProfile>,
    pub recommended_k: usize,
    pub min_rank_correlation: f64,
    pub sketching_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub config_sha256: String,
    pub checkpoint_sha256: String,
    pub train: TrainSummary,
    pub reconstruction: ReconSummary,
    pub methods: Vec<MethodRow>,
    pub analysis: ProfileSummary,
}

impl Summary {
    pub fn method(&self, name: &str) -> Option<&MethodRow> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Plain-text table of the method rows.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<11} {:>7} {:>2} {:>10} {:>11} {:>10} {:>8}\n",
            "method", "lambda", "k", "mask_psnr", "deviation", "osv_analog", "gap"
        );
        for m in &self.methods {
            let k = if m.all_blocks { "N".to_string() } else { m.k.to_string() };
            s.push_str(&format!(
                "{:<11} {:>7.2} {:>2} {:>10.3} {:>11.4} {:>10.5} {:>8.4}\n",
                m.method, m.lambda, k, m.mask_psnr_median, m.deviation_median, m.osv_analog_median,
                m.consistency_gap_median
            ));
        }
        s.push_str(&format!(
            "\ntrain: {} steps, loss {:.2} -> {:.2}\nreconstruction: median {:.2} dB, min {:.2} dB, {:.0}% >= 25 dB\n",
            self.train.steps,
            self.train.initial_loss,
            self.train.final_loss,
            self.reconstruction.psnr_median,
            self.reconstruction.psnr_min,
            100.0 * self.reconstruction.fraction_at_least_25db
        ));
        s.push_str(&format!(
            "analysis: recommended k {}, min rank correlation {:.3}, sketching margin {:.4}\n",
            self.analysis.recommended_k, self.analysis.min_rank_correlation, self.analysis.sketching_margin
        ));
        s
    }
}

/// Mean low-frequency fraction of the sketching blocks minus that of the rest.
pub fn sketching_margin(profiles: &[BlockProfile], sketch_blocks: usize) -> f64 {
    let mean = |sel: &dyn Fn(usize) -> bool| {
        let v: Vec<f64> = profiles.iter().filter(|p| sel(p.block)).map(|p| p.low_freq_fraction).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    mean(&|b| b < sketch_blocks) - mean(&|b| b >= sketch_blocks)
}

/// Profiles, CSV and heatmaps for `clips`; files go under `out`.
pub fn run_analysis(
    model: &Model<f32>,
    schedule: &NoiseSchedule,
    clips: &[(Tensor<f32>, Condition)],
    cfg: &RunConfig,
    out: &Path,
    config_hash: &str,
) -> Result<ProfileSummary> {
    let a = &cfg.analysis;
    let timesteps = if a.timesteps.is_empty() {
        default_timesteps(schedule.steps())
    } else {
        a.timesteps.clone()
    };
    let filter = &cfg.guidance.filter;
    let profiles = block_energy_profile(model, schedule, clips, &timesteps, filter, a.band, a.noise_seed)?;
    write_artifact(&out.join("profile.csv"), profiles_csv(&profiles).as_bytes(), config_hash)?;
    let heat = out.join("heatmaps");
    std::fs::create_dir_all(&heat).map_err(|e| Error::io(&heat, e))?;
    let (video, y) = &clips[0];
    let blocks: Vec<usize> = (0..model.config().blocks).collect();
    for &t in &timesteps {
        let mut rng = ChaCha8Rng::seed_from_u64(a.noise_seed ^ t as u64);
        let eps = Tensor::from_fn(video.shape(), |_| StandardNormal.sample(&mut rng));
        let (_, caps) = model.forward(&q_sample(schedule, video, t, &eps)?, t, *y, &blocks)?;
        for c in &caps {
            write_file(
                &heat.join(format!("attn_b{}_t{t:02}.pgm", c.block)),
                &pgm_bytes(&video_attention(c)?)?,
            )?;
            let f = c.video_output(model.config())?;
            write_file(
                &heat.join(format!("feat_b{}_t{t:02}.pgm", c.block)),
                &pgm_bytes(&frame_energy_strip(&f)?)?,
            )?;
        }
    }
    let k = recommend_k(&fractions_at(&profiles, timesteps[0]), a.threshold)?;
    let min_rank_correlation = if timesteps.len() > 1 {
        min_cross_timestep_correlation(&profiles)?
    } else {
        1.0
    };
    Ok(ProfileSummary {
        sketching_margin: r6(sketching_margin(&profiles, model.config().sketch_blocks)),
        timesteps,
        profiles: profiles
            .into_iter()
            .map(|p| BlockProfile {
                low_freq_fraction: r6(p.low_freq_fraction),
                diagonality: r6(p.diagonality),
                ..p
            })
            .collect(),
        recommended_k: k,
        min_rank_correlation: r6(min_rank_correlation),
    })
}

/// Per-token feature energy of an `h × w × τ × d` tensor laid out as `h × (w·τ)`,
/// one frame per horizontal tile.
fn frame_energy_strip(f: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = f.shape();
    let (h, w, tau, d) = (s[0], s[1], s[2], s[3]);
    Ok(Tensor::from_fn(&[h, w * tau], |i| {
        let (r, col) = (i / (w * tau), i % (w * tau));
        let (frame, c) = (col / w, col % w);
        let base = ((r * w + c) * tau + frame) * d;
        f.data()[base..base + d].iter().map(|v| v * v).sum()
    }))
}

/// gen-data → train → invert → edit (every variant) → analyze → metrics.
/// Everything but wall-clock timings is deterministic for a fixed config.
pub fn reproduce(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = write_resolved(out, cfg)?;
    let clock = std::time::Instant::now();
    let mut timings = Vec::new();
    let schedule = NoiseSchedule::new(cfg.model.timesteps, cfg.schedule)?;

    let data_dir = out.join("data");
    make_corpus(cfg.corpus.eval_n, cfg.corpus.eval_seed, cfg.corpus.shape, &data_dir)?;
    let eval = synthesize(cfg.corpus.eval_n, cfg.corpus.eval_seed, cfg.corpus.shape)?;
    let train_set: Vec<TrainExample> = synthesize(cfg.corpus.train_n, cfg.seed, cfg.corpus.shape)?
        .into_iter()
        .map(|s| TrainExample {
            condition: s.y_src(),
            video: s.video,
        })
        .collect();
    timings.push(("gen-data", clock.elapsed().as_secs_f64()));

    log::info!("training {} steps on {} clips", cfg.trainer.steps, train_set.len());
    let outcome = train(&train_set, &cfg.model, &cfg.trainer, &schedule, |step, _| {
        log::info!("step {step}");
        Ok(())
    })?;
    let ckpt_bytes = checkpoint_archive(&cfg.model, &outcome.weights)?.encode()?;
    write_artifact(&out.join("checkpoint.fada"), &ckpt_bytes, &hash)?;
    write_artifact(&out.join("loss.csv"), outcome.loss_csv().as_bytes(), &hash)?;
    let train_summary = TrainSummary {
        steps: cfg.trainer.steps,
        initial_loss: r6(outcome.losses.first().map_or(f64::NAN, |r| r.loss)),
        final_loss: r6(outcome.tail_loss(100)),
    };
    let model = Model::new(cfg.model.clone(), outcome.weights)?;
    timings.push(("train", clock.elapsed().as_secs_f64()));

    let evaluated: Vec<Result<(SampleRow, Vec<Tensor<f32>>)>> = eval
        .par_iter()
        .map(|s| evaluate_sample(&model, &schedule, s, &cfg.guidance))
        .collect();
    let evaluated = evaluated.into_iter().collect::<Result<Vec<_>>>()?;
    timings.push(("invert+edit", clock.elapsed().as_secs_f64()));

    let names: Vec<&str> = variants(&cfg.guidance).iter().map(|(n, _)| *n).collect();
    let edits_dir = out.join("edits");
    for (vi, name) in names.iter().enumerate() {
        let mut archive = Archive::new();
        for (row, videos) in &evaluated {
            archive.push(format!("{:04}", row.id), videos[vi].clone());
        }
        std::fs::create_dir_all(&edits_dir).map_err(|e| Error::io(&edits_dir, e))?;
        write_artifact(&edits_dir.join(format!("{name}.fada")), &archive.encode()?, &hash)?;
    }
    let rows: Vec<SampleRow> = evaluated.iter().map(|(r, _)| r.clone()).collect();
    write_artifact(&out.join("samples.csv"), samples_csv(&rows).as_bytes(), &hash)?;

    let recon: Vec<f64> = rows.iter().map(|r| r.recon_psnr).collect();
    let reconstruction = ReconSummary {
        samples: recon.len(),
        psnr_median: r6(median(&recon)),
        psnr_min: r6(recon.iter().copied().fold(f64::INFINITY, f64::min)),
        fraction_at_least_25db: r6(recon.iter().filter(|&&p| p >= 25.0).count() as f64 / recon.len() as f64),
    };
    let methods = variants(&cfg.guidance)
        .into_iter()
        .enumerate()
        .map(|(vi, (name, g))| {
            let col = |f: fn(&VariantMetrics) -> f64| -> f64 {
                r6(median(&rows.iter().map(|r| f(&r.variants[vi].1)).collect::<Vec<_>>()))
            };
            MethodRow {
                method: name.to_string(),
                lambda: g.lambda,
                k: g.k,
                all_blocks: g.all_blocks,
                filtered: g.filter != FilterSpec::all_pass(),
                mask_psnr_median: col(|m| m.mask_psnr),
                deviation_median: col(|m| m.deviation),
                osv_analog_median: col(|m| m.osv_analog),
                consistency_gap_median: col(|m| m.consistency_gap),
            }
        })
        .collect();

    let clips: Vec<(Tensor<f32>, Condition)> = eval
        .iter()
        .take(cfg.analysis.clips)
        .map(|s| (s.video.clone(), s.y_src()))
        .collect();
    let analysis = run_analysis(&model, &schedule, &clips, cfg, &out.join("analysis"), &hash)?;
    timings.push(("analyze", clock.elapsed().as_secs_f64()));

    let first = &eval[0];
    let guided_first = &evaluated[0].1[0];
    let metric = report(&first.video, guided_first, Some(&first.edit_mask()), Some((&model, first.y_tgt())))?;
    write_artifact(&out.join("metrics.json"), serde_json::to_string_pretty(&metric)?.as_bytes(), &hash)?;

    let summary = Summary {
        seed: cfg.seed,
        config_sha256: hash.clone(),
        checkpoint_sha256: super::config::sha256_hex(&ckpt_bytes),
        train: train_summary,
        reconstruction,
        methods,
        analysis,
    };
    write_artifact(&out.join("summary.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(), &hash)?;
    write_artifact(&out.join("summary.txt"), summary.table().as_bytes(), &hash)?;
    timings.push(("total", clock.elapsed().as_secs_f64()));
    let t: serde_json::Map<String, serde_json::Value> =
        timings.into_iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect();
    write_file(&out.join("timings.json"), serde_json::to_string_pretty(&t)?.as_bytes())?;
    Ok(summary)
}

fn samples_csv(rows: &[SampleRow]) -> String {
    let mut s = String::from("id,edit,variant,recon_psnr,mask_psnr,deviation,osv_analog,consistency_gap\n");
    for r in rows {
        for (name, m) in &r.variants {
            s.push_str(&format!(
                "{},{:?},{name},{:.4},{:.4},{:.6},{:.6},{:.6}\n",
                r.id, r.edit, r.recon_psnr, m.mask_psnr, m.deviation, m.osv_analog, m.consistency_gap
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_is_positive_when_moving_toward_target() {
        let src = Tensor::<f32>::zeros(&[1, 2, 2, 3]);
        let tgt = Tensor::<f32>::ones(&[1, 2, 2, 3]);
        let half = Tensor::<f32>::full(&[1, 2, 2, 3], 0.5);
        let mask = Tensor::<f32>::ones(&[1, 2, 2]);
        assert!((consistency_gap(&src, &half, &tgt, &mask).unwrap() - 0.75).abs() < 1e-9);
        assert_eq!(consistency_gap(&src, &src, &tgt, &mask).unwrap(), 0.0);
        assert!(consistency_gap(&src, &src, &tgt, &Tensor::zeros(&[1, 2, 2])).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn margin_splits_at_sketch_blocks() {
        let p = |block, f| BlockProfile {
            block,
            timestep: 10,
            low_freq_fraction: f,
            diagonality: 0.5,
        };
        let v = [p(0, 0.9), p(1, 0.7), p(2, 0.3), p(3, 0.1)];
        assert!((sketching_margin(&v, 2) - 0.6).abs() < 1e-12);
    }
}
