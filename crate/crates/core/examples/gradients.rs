//! Reverse-mode gradient of a spectral loss, checked against central
//! differences.

use spectral_edit::autodiff::Tape;
use spectral_edit::numerics::{FilterSpec, Tensor};

fn loss(x: &Tensor<f64>, w: &Tensor<f64>) -> spectral_edit::error::Result<(f64, Tensor<f64>)> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = tape.constant(w.clone());
    let h = tape.matmul(xv, wv, false, false)?;
    let h = tape.gelu(h)?;
    let h = tape.reshape(h, &[2, 3, 4, 2])?;
    let spec = tape.dft3(h)?;
    let mask = FilterSpec::uniform(0.5).mask(2, 3, 4)?;
    let low = tape.lowpass(spec, &mask)?;
    let l = tape.squared_norm(low)?;
    let value = tape.value(l).item()?;
    Ok((value, tape.backward(l, xv)?))
}

fn main() -> spectral_edit::error::Result<()> {
    let x = Tensor::<f64>::from_fn(&[24, 3], |i| (i as f64 * 0.7).sin());
    let w = Tensor::<f64>::from_fn(&[3, 2], |i| 0.3 * i as f64 - 0.5);
    let (value, grad) = loss(&x, &w)?;

    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut up, mut down) = (x.clone(), x.clone());
        up.data_mut()[i] += h;
        down.data_mut()[i] -= h;
        let fd = (loss(&up, &w)?.0 - loss(&down, &w)?.0) / (2.0 * h);
        worst = worst.max((fd - grad.data()[i]).abs() / grad.max_abs().max(1e-12));
    }
    println!("loss {value:.6}, gradient norm {:.6}", grad.norm());
    println!("largest deviation from finite differences {worst:.2e}");
    Ok(())
}
