//! 3-D spectrum of a feature volume and the share of energy a low-pass
//! filter keeps. A smooth volume concentrates its energy at low
//! frequencies while white noise spreads it evenly across bins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_edit::analysis::low_frequency_fraction;
use spectral_edit::numerics::{dft3, idft3, lowpass, FilterSpec, Tensor};

fn main() -> spectral_edit::error::Result<()> {
    let shape = [4, 4, 8, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Tensor::<f64>::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let smooth = Tensor::<f64>::from_fn(&shape, |i| {
        let tau = (i / shape[3]) % shape[2];
        (tau as f64 * std::f64::consts::TAU / shape[2] as f64).cos() + 0.5
    });

    let filter = FilterSpec::default();
    let kept = filter.mask(shape[0], shape[1], shape[2])?.kept_fraction();
    println!("filter keeps {:.1}% of the bins", 100.0 * kept);
    for (name, x) in [("white noise", &noise), ("smooth", &smooth)] {
        println!("{name:>12}: low-frequency energy {:.3}", low_frequency_fraction(x, &filter)?);
    }

    let spec = dft3(&noise)?;
    let back = idft3(&spec)?;
    println!("inverse transform error {:.2e}", back.rel_err(&noise)?);
    let once = lowpass(&spec, &filter)?;
    let twice = lowpass(&once, &filter)?;
    println!("filtering twice changes nothing: {}", once.data() == twice.data());
    Ok(())
}
