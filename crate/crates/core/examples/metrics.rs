//! Fidelity metrics between a source clip and a perturbed copy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_edit::data::{synthesize, ClipShape};
use spectral_edit::metrics::report;
use spectral_edit::model::{Model, ModelConfig, Weights};
use spectral_edit::numerics::Tensor;

fn main() -> spectral_edit::error::Result<()> {
    let clip = synthesize(1, 3, ClipShape::default())?.remove(0);
    let mask = clip.edit_mask();
    // Darken the object only, leaving the background untouched.
    let ch = clip.video.shape()[3];
    let edited = Tensor::from_fn(clip.video.shape(), |i| clip.video.data()[i] - 0.3 * clip.mask.data()[i / ch]);

    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), Weights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?)?;
    let r = report(&clip.video, &edited, Some(&mask), Some((&model, clip.y_src())))?;
    println!("PSNR {:.2} dB", r.psnr);
    println!("Mask-PSNR {:.2} dB", r.mask_psnr.unwrap_or(f64::NAN));
    println!("{} {:.5}", r.osv_label, r.osv_analog.unwrap_or(f64::NAN));
    println!("per-frame PSNR {:?}", r.per_frame_psnr.iter().map(|p| format!("{p:.1}")).collect::<Vec<_>>());
    Ok(())
}
