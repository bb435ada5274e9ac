//! Command-line surface. The `specedit` binary is a thin wrapper around [`main_with`].
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime and numeric failures. Errors go to stderr as one JSON line.

mod config;
mod pipeline;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::{sha256_hex, sidecar, write_artifact, write_resolved, AnalysisConfig, CorpusConfig, Paths, RunConfig};
pub use pipeline::{
    consistency_gap, evaluate_sample, median, pinned_config, reproduce, run_analysis, sketching_margin, variants,
    MethodRow, ProfileSummary, ReconSummary, SampleRow, Summary, TrainSummary, VariantMetrics, PINNED_SEED,
    PINNED_TRAIN_STEPS,
};

use crate::data::{
    load_checkpoint, load_corpus, load_tensor, load_trajectory, make_corpus, save_tensor,
    save_trajectory, checkpoint_archive,
};
use crate::diffusion::{invert, sample, train, NoiseSchedule, TrainExample};
use crate::error::{Error, Result};
use crate::guidance::{edit, EditRequest};
use crate::metrics::report;
use crate::model::Condition;
use crate::numerics::{FilterSpec, Tensor};

#[derive(Parser, Debug)]
#[command(name = "specedit", version, about = "Spectrum-guided editing on a toy video diffusion transformer")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (falls back to FADE_THREADS, then 1).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic corpus with masks and edit targets.
    GenData {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy model; writes checkpoint.fada and loss.csv.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert a clip into a trajectory archive.
    Invert {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        video: PathBuf,
        /// Condition as CLASS or CLASS:FPS.
        #[arg(long)]
        cond: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the plain reconstruction from z_T.
        #[arg(long)]
        recon: Option<PathBuf>,
    },
    /// Spectrum-guided edit; writes edited.fadt and report.json.
    Edit(EditArgs),
    /// Per-block spectral profiles and attention heatmaps.
    Analyze {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated probe steps; defaults to 0.2T, 0.4T, 0.6T.
        #[arg(long, value_delimiter = ',')]
        timesteps: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR, Mask-PSNR and the OSV analog as JSON.
    Metrics {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        edited: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, requires = "cond")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        cond: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline with a deterministic summary.
    Reproduce {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct EditArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, conflicts_with = "video", required_unless_present = "video")]
    pub traj: Option<PathBuf>,
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long, required_unless_present = "traj")]
    pub src_cond: Option<String>,
    #[arg(long)]
    pub tgt_cond: String,
    /// Editable region, f×H×W with 1 = editable.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub g_frac: Option<f64>,
    #[arg(long)]
    pub m_frac: Option<f64>,
    /// Compare full spectra instead of the low-pass band.
    #[arg(long)]
    pub no_filter: bool,
    /// Compare every block instead of the leading k.
    #[arg(long)]
    pub all_blocks: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `CLASS` or `CLASS:FPS`.
pub fn parse_condition(s: &str) -> Result<Condition> {
    let bad = || Error::Config(format!("condition {s:?} is not CLASS or CLASS:FPS"));
    let mut parts = s.split(':');
    let class = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let fps = match parts.next() {
        Some(f) => f.trim().parse().map_err(|_| bad())?,
        None => 0,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(Condition::new(class, fps))
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("FADE_THREADS") {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("FADE_THREADS={v:?} is not a count")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn echo(cfg: &RunConfig) -> Result<()> {
    eprintln!("{}", json!({ "resolved_config": cfg }));
    Ok(())
}

/// Runs one parsed command and returns a JSON result for stdout.
pub fn run(cli: Cli) -> Result<serde_json::Value> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let base = match (&cli.command, cli.config.as_deref()) {
        (Command::Reproduce { .. }, None) => pinned_config(),
        (_, path) => RunConfig::load_or_default(path)?,
    };
    pool.install(|| dispatch(cli.command, base))
}

fn dispatch(command: Command, mut cfg: RunConfig) -> Result<serde_json::Value> {
    match command {
        Command::GenData { n, seed, out } => {
            if let Some(n) = n {
                cfg.corpus.eval_n = n;
            }
            if let Some(s) = seed {
                cfg.corpus.eval_seed = s;
            }
            cfg.paths.out = Some(out.clone());
            cfg.validate()?;
            echo(&cfg)?;
            mkdir(&out)?;
            let hash = write_resolved(&out, &cfg)?;
            let m = make_corpus(cfg.corpus.eval_n, cfg.corpus.eval_seed, cfg.corpus.shape, &out)?;
            sidecar(&out.join(crate::data::MANIFEST_NAME), &hash)?;
            Ok(json!({ "samples": m.samples.len(), "out": out }))
        }
        Command::Train { data, steps, seed, out } => {
            if let Some(s) = steps {
                cfg.trainer.steps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.trainer.seed = s;
            }
            if data.is_some() {
                cfg.paths.data = data;
            }
            cfg.paths.out = Some(out.clone());
            cfg.validate()?;
            echo(&cfg)?;
            mkdir(&out)?;
            let hash = write_resolved(&out, &cfg)?;
            let corpus: Vec<TrainExample> = match &cfg.paths.data {
                Some(dir) => load_corpus(dir)?.1,
                None => crate::data::synthesize(cfg.corpus.train_n, cfg.seed, cfg.corpus.shape)?,
            }
            .into_iter()
            .map(|s| TrainExample {
                condition: s.y_src(),
                video: s.video,
            })
            .collect();
            let schedule = NoiseSchedule::new(cfg.model.timesteps, cfg.schedule)?;
            let ckpt = out.join("checkpoint.fada");
            let outcome = train(&corpus, &cfg.model, &cfg.trainer, &schedule, |step, w| {
                log::info!("checkpoint at step {step}");
                checkpoint_archive(&cfg.model, w)?.save(&ckpt)
            })?;
            sidecar(&ckpt, &hash)?;
            write_artifact(&out.join("loss.csv"), outcome.loss_csv().as_bytes(), &hash)?;
            Ok(json!({ "checkpoint": ckpt, "final_loss": outcome.tail_loss(100) }))
        }
        Command::Invert { ckpt, video, cond, out, recon } => {
            let y = parse_condition(&cond)?;
            cfg.paths.ckpt = Some(ckpt.clone());
            cfg.paths.out = Some(out.clone());
            let model = load_checkpoint(&ckpt)?;
            cfg.model = model.config().clone();
            cfg.validate()?;
            echo(&cfg)?;
            let dir = parent_dir(&out);
            mkdir(&dir)?;
            let hash = write_resolved(&dir, &cfg)?;
            let schedule = NoiseSchedule::new(cfg.model.timesteps, cfg.schedule)?;
            let v: Tensor<f32> = load_tensor(&video)?;
            let traj = invert(&model, &schedule, &v, y)?;
            save_trajectory(&out, &traj)?;
            sidecar(&out, &hash)?;
            if let Some(r) = &recon {
                save_tensor(r, &sample(&model, &schedule, traj.terminal(), y)?)?;
                sidecar(r, &hash)?;
            }
            Ok(json!({ "trajectory": out, "steps": traj.steps(), "reconstruction": recon }))
        }
        Command::Edit(a) => run_edit(a, cfg),
        Command::Analyze { ckpt, data, timesteps, out } => {
            if let Some(ts) = timesteps {
                cfg.analysis.timesteps = ts;
            }
            cfg.paths.ckpt = Some(ckpt.clone());
            cfg.paths.data = Some(data.clone());
            cfg.paths.out = Some(out.clone());
            let model = load_checkpoint(&ckpt)?;
            cfg.model = model.config().clone();
            cfg.validate()?;
            echo(&cfg)?;
            mkdir(&out)?;
            let hash = write_resolved(&out, &cfg)?;
            let schedule = NoiseSchedule::new(cfg.model.timesteps, cfg.schedule)?;
            let (_, samples) = load_corpus(&data)?;
            let clips: Vec<(Tensor<f32>, Condition)> = samples
                .iter()
                .take(cfg.analysis.clips)
                .map(|s| (s.video.clone(), s.y_src()))
                .collect();
            let summary = run_analysis(&model, &schedule, &clips, &cfg, &out, &hash)?;
            Ok(json!({
                "profile": out.join("profile.csv"),
                "recommended_k": summary.recommended_k,
                "min_rank_correlation": summary.min_rank_correlation,
            }))
        }
        Command::Metrics { src, edited, mask, ckpt, cond, out } => {
            cfg.paths.ckpt = ckpt.clone();
            cfg.paths.out = Some(out.clone());
            let model = ckpt.as_ref().map(load_checkpoint).transpose()?;
            if let Some(m) = &model {
                cfg.model = m.config().clone();
            }
            cfg.validate()?;
            echo(&cfg)?;
            let dir = parent_dir(&out);
            mkdir(&dir)?;
            let hash = write_resolved(&dir, &cfg)?;
            let a: Tensor<f32> = load_tensor(&src)?;
            let b: Tensor<f32> = load_tensor(&edited)?;
            let m: Option<Tensor<f32>> = mask.as_ref().map(load_tensor).transpose()?;
            let y = cond.as_deref().map(parse_condition).transpose()?;
            let osv = match (&model, y) {
                (Some(model), Some(y)) => Some((model, y)),
                _ => None,
            };
            let r = report(&a, &b, m.as_ref(), osv)?;
            write_artifact(&out, serde_json::to_string_pretty(&r)?.as_bytes(), &hash)?;
            Ok(json!({ "psnr": r.psnr, "mask_psnr": r.mask_psnr, "osv_analog": r.osv_analog }))
        }
        Command::Reproduce { seed, steps, out } => {
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.trainer.seed = s;
            }
            if let Some(s) = steps {
                cfg.trainer.steps = s;
            }
            // The output location stays out of the config so summaries do not depend on it.
            echo(&cfg)?;
            let summary = reproduce(&cfg, &out)?;
            print!("{}", summary.table());
            Ok(json!({ "summary": out.join("summary.json") }))
        }
    }
}

fn run_edit(a: EditArgs, mut cfg: RunConfig) -> Result<serde_json::Value> {
    let g = &mut cfg.guidance;
    if let Some(v) = a.lambda {
        g.lambda = v;
    }
    if let Some(v) = a.k {
        g.k = v;
    }
    if let Some(rho) = a.rho {
        g.filter = FilterSpec::uniform(rho);
    }
    if let Some(v) = a.g_frac {
        g.g_frac = v;
    }
    if let Some(v) = a.m_frac {
        g.m_frac = v;
    }
    if a.no_filter {
        g.filter = FilterSpec::all_pass();
    }
    g.all_blocks |= a.all_blocks;
    cfg.paths.ckpt = Some(a.ckpt.clone());
    cfg.paths.out = Some(a.out.clone());
    let model = load_checkpoint(&a.ckpt)?;
    cfg.model = model.config().clone();
    cfg.validate()?;
    echo(&cfg)?;
    mkdir(&a.out)?;
    let hash = write_resolved(&a.out, &cfg)?;
    let schedule = NoiseSchedule::new(cfg.model.timesteps, cfg.schedule)?;

    let traj = a.traj.as_ref().map(load_trajectory).transpose()?;
    let video: Tensor<f32> = match (&traj, &a.video) {
        (Some(t), _) => t.at(0).clone(),
        (None, Some(v)) => load_tensor(v)?,
        (None, None) => return Err(Error::Config("edit needs --traj or --video".into())),
    };
    let y_src = match (&a.src_cond, &traj) {
        (Some(s), _) => parse_condition(s)?,
        (None, Some(t)) => t.condition,
        (None, None) => return Err(Error::Config("edit needs --src-cond".into())),
    };
    let request = EditRequest {
        video,
        y_src,
        y_tgt: parse_condition(&a.tgt_cond)?,
        mask: a.mask.as_ref().map(load_tensor).transpose()?,
        config: cfg.guidance.clone(),
    };
    let outcome = edit(&request, &model, &schedule, traj.as_ref())?;
    let video_path = a.out.join("edited.fadt");
    save_tensor(&video_path, &outcome.video)?;
    sidecar(&video_path, &hash)?;
    write_artifact(
        &a.out.join("report.json"),
        serde_json::to_string_pretty(&outcome.report)?.as_bytes(),
        &hash,
    )?;
    Ok(json!({
        "edited": video_path,
        "final_deviation": outcome.report.final_deviation,
        "output_hash": outcome.report.output_hash,
    }))
}

/// Single-line JSON error for stderr.
pub fn error_json(e: &Error) -> String {
    json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let usage = e.render().to_string();
            let message = usage.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": message, "usage": usage }));
            return 1;
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_parsing() {
        assert_eq!(parse_condition("12:1").unwrap(), Condition::new(12, 1));
        assert_eq!(parse_condition("7").unwrap(), Condition::new(7, 0));
        assert!(parse_condition("x").is_err());
        assert!(parse_condition("1:2:3").is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(main_with(["specedit", "gen-data", "--bogus", "--out", "x"]), 1);
        assert_eq!(main_with(["specedit", "frobnicate"]), 1);
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(thread_count(Some(0)).is_err());
        assert_eq!(thread_count(Some(3)).unwrap(), 3);
    }
}
