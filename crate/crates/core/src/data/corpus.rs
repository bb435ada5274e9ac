use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{load_tensor, save_tensor, write_file};
use super::synthetic::{random_edit, random_spec, render, EditKind, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::Condition;
use crate::numerics::Tensor;

/// Frame geometry of generated clips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for ClipShape {
    fn default() -> Self {
        Self {
            frames: 8,
            height: 16,
            width: 16,
        }
    }
}

/// One source clip with its designated edit.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSample {
    pub id: usize,
    pub spec: SyntheticSpec,
    pub target: SyntheticSpec,
    pub edit: EditKind,
    pub video: Tensor<f32>,
    /// Source object mask, `f × H × W`.
    pub mask: Tensor<f32>,
    /// Ground-truth rendering of the target condition.
    pub target_video: Tensor<f32>,
    pub target_mask: Tensor<f32>,
}

impl CorpusSample {
    pub fn y_src(&self) -> Condition {
        self.spec.condition()
    }

    pub fn y_tgt(&self) -> Condition {
        self.target.condition()
    }

    /// Editable region: union of source and target object masks.
    pub fn edit_mask(&self) -> Tensor<f32> {
        self.mask
            .zip_map(&self.target_mask, f32::max)
            .expect("masks share a shape")
    }
}

/// Deterministic corpus of `n` samples.
pub fn synthesize(n: usize, seed: u64, shape: ClipShape) -> Result<Vec<CorpusSample>> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let spec = random_spec(&mut rng, shape.frames, shape.height, shape.width)?;
            let (edit, target) = random_edit(&mut rng, &spec);
            let (video, mask) = render(&spec)?;
            let (target_video, target_mask) = render(&target)?;
            Ok(CorpusSample {
                id,
                spec,
                target,
                edit,
                video,
                mask,
                target_video,
                target_mask,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: usize,
    pub video_path: String,
    pub mask_path: String,
    pub edit_mask_path: String,
    pub target_video_path: String,
    pub target_mask_path: String,
    pub y_src: Condition,
    pub y_tgt: Condition,
    pub edit: EditKind,
    pub spec: SyntheticSpec,
    pub target: SyntheticSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub shape: ClipShape,
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Renders `n` samples into `out` as tensor files plus `manifest.json`.
pub fn make_corpus(n: usize, seed: u64, shape: ClipShape, out: &Path) -> Result<Manifest> {
    let samples = synthesize(n, seed, shape)?;
    let mut entries = Vec::with_capacity(n);
    for s in &samples {
        let stem = format!("{:04}", s.id);
        let files = [
            (format!("{stem}_video.fadt"), &s.video),
            (format!("{stem}_mask.fadt"), &s.mask),
            (format!("{stem}_target_video.fadt"), &s.target_video),
            (format!("{stem}_target_mask.fadt"), &s.target_mask),
        ];
        for (name, t) in &files {
            save_tensor(out.join(name), *t)?;
        }
        let edit_mask = format!("{stem}_edit_mask.fadt");
        save_tensor(out.join(&edit_mask), &s.edit_mask())?;
        entries.push(ManifestEntry {
            id: s.id,
            video_path: files[0].0.clone(),
            mask_path: files[1].0.clone(),
            edit_mask_path: edit_mask,
            target_video_path: files[2].0.clone(),
            target_mask_path: files[3].0.clone(),
            y_src: s.y_src(),
            y_tgt: s.y_tgt(),
            edit: s.edit,
            spec: s.spec,
            target: s.target,
        });
    }
    let manifest = Manifest {
        version: 1,
        seed,
        shape,
        samples: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_file(&out.join(MANIFEST_NAME), json.as_bytes())?;
    Ok(manifest)
}

/// Resolves a corpus location: a directory holding `manifest.json` or the manifest itself.
fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

/// Loads a corpus written by [`make_corpus`], checking every file.
pub fn load_corpus(path: &Path) -> Result<(Manifest, Vec<CorpusSample>)> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let dir = mpath.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        e.spec.validate()?;
        e.target.validate()?;
        if e.y_src != e.spec.condition() || e.y_tgt != e.target.condition() {
            return Err(Error::Format(format!("sample {}: conditions disagree with specs", e.id)));
        }
        let video = load_tensor(dir.join(&e.video_path))?;
        let mask: Tensor<f32> = load_tensor(dir.join(&e.mask_path))?;
        let target_video = load_tensor(dir.join(&e.target_video_path))?;
        let target_mask: Tensor<f32> = load_tensor(dir.join(&e.target_mask_path))?;
        for (name, m) in [("mask", &mask), ("target mask", &target_mask)] {
            if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Format(format!("sample {}: {name} is not binary", e.id)));
            }
        }
        samples.push(CorpusSample {
            id: e.id,
            spec: e.spec,
            target: e.target,
            edit: e.edit,
            video,
            mask,
            target_video,
            target_mask,
        });
    }
    Ok((manifest, samples))
}
