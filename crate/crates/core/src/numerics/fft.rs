//! Unitary 3-D discrete Fourier transforms.
//!
//! Power-of-two lengths use an iterative radix-2 kernel; every other length
//! goes through Bluestein's chirp-z reduction onto a power-of-two convolution.
//! Transforms run over the first three axes of an `h × w × τ × c` tensor,
//! independently per channel, and are scaled by `1/√n` per axis so that the
//! forward transform is unitary and its adjoint is the inverse.

use std::f64::consts::PI;

use num_complex::Complex;

use super::complex::ComplexTensor;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

/// Precomputed unnormalized 1-D transform for one length and direction.
#[derive(Clone, Debug)]
pub struct FftPlan<T: Scalar> {
    len: usize,
    kind: PlanKind<T>,
}

#[derive(Clone, Debug)]
enum PlanKind<T: Scalar> {
    Identity,
    Radix2 {
        twiddles: Vec<Complex<T>>,
        bitrev: Vec<usize>,
    },
    Bluestein {
        chirp: Vec<Complex<T>>,
        kernel_spectrum: Vec<Complex<T>>,
        forward: Box<FftPlan<T>>,
        inverse: Box<FftPlan<T>>,
    },
}

fn cis<T: Scalar>(angle: f64) -> Complex<T> {
    Complex::new(T::from_f64_lossy(angle.cos()), T::from_f64_lossy(angle.sin()))
}

impl<T: Scalar> FftPlan<T> {
    pub fn new(len: usize, dir: Direction) -> Self {
        assert!(len > 0, "fft length must be positive");
        let kind = if len == 1 {
            PlanKind::Identity
        } else if len.is_power_of_two() {
            let bits = len.trailing_zeros();
            let bitrev = (0..len)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            let twiddles = (0..len / 2)
                .map(|k| cis(dir.sign() * 2.0 * PI * k as f64 / len as f64))
                .collect();
            PlanKind::Radix2 { twiddles, bitrev }
        } else {
            let m = (2 * len - 1).next_power_of_two();
            // k² mod 2n keeps the chirp phase exact for large k.
            let chirp: Vec<Complex<T>> = (0..len)
                .map(|k| {
                    let k2 = (k * k) % (2 * len);
                    cis(dir.sign() * PI * k2 as f64 / len as f64)
                })
                .collect();
            let mut kernel = vec![Complex::new(T::zero(), T::zero()); m];
            kernel[0] = chirp[0].conj();
            for k in 1..len {
                kernel[k] = chirp[k].conj();
                kernel[m - k] = chirp[k].conj();
            }
            let forward = FftPlan::new(m, Direction::Forward);
            let inverse = FftPlan::new(m, Direction::Inverse);
            forward.process(&mut kernel);
            PlanKind::Bluestein {
                chirp,
                kernel_spectrum: kernel,
                forward: Box::new(forward),
                inverse: Box::new(inverse),
            }
        };
        Self { len, kind }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place unnormalized transform of `buf` (length must equal the plan's).
    pub fn process(&self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.len);
        match &self.kind {
            PlanKind::Identity => {}
            PlanKind::Radix2 { twiddles, bitrev } => {
                for (i, &j) in bitrev.iter().enumerate() {
                    if i < j {
                        buf.swap(i, j);
                    }
                }
                let n = self.len;
                let mut half = 1;
                while half < n {
                    let step = n / (2 * half);
                    for start in (0..n).step_by(2 * half) {
                        for k in 0..half {
                            let w = twiddles[k * step];
                            let a = buf[start + k];
                            let b = buf[start + k + half] * w;
                            buf[start + k] = a + b;
                            buf[start + k + half] = a - b;
                        }
                    }
                    half *= 2;
                }
            }
            PlanKind::Bluestein {
                chirp,
                kernel_spectrum,
                forward,
                inverse,
            } => {
                let m = forward.len;
                let mut work = vec![Complex::new(T::zero(), T::zero()); m];
                for k in 0..self.len {
                    work[k] = buf[k] * chirp[k];
                }
                forward.process(&mut work);
                for (w, &k) in work.iter_mut().zip(kernel_spectrum) {
                    *w *= k;
                }
                inverse.process(&mut work);
                let inv_m = T::from_f64_lossy(1.0 / m as f64);
                for k in 0..self.len {
                    buf[k] = work[k] * chirp[k] * inv_m;
                }
            }
        }
    }
}

/// Unnormalized transform of one axis of a complex array, in place.
fn transform_axis<T: Scalar>(data: &mut [Complex<T>], shape: &[usize], axis: usize, plan: &FftPlan<T>) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut line = vec![Complex::new(T::zero(), T::zero()); n];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * inner + i];
            }
            plan.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[base + k * inner + i] = *v;
            }
        }
    }
}

/// Unitary transform over the first three axes of a 4-D complex array.
pub fn fft3_inplace<T: Scalar>(x: &mut ComplexTensor<T>, dir: Direction) -> Result<()> {
    if x.rank() != 4 {
        return Err(Error::Dimension(format!(
            "3-D transform needs an h×w×τ×c tensor, got shape {:?}",
            x.shape()
        )));
    }
    let shape = x.shape().to_vec();
    for axis in 0..3 {
        let plan = FftPlan::new(shape[axis], dir);
        transform_axis(x.data_mut(), &shape, axis, &plan);
    }
    let scale = T::from_f64_lossy(1.0 / ((shape[0] * shape[1] * shape[2]) as f64).sqrt());
    for v in x.data_mut() {
        *v = *v * scale;
    }
    Ok(())
}

/// Forward unitary 3-D DFT of a real `h × w × τ × c` tensor.
pub fn dft3<T: Scalar>(x: &Tensor<T>) -> Result<ComplexTensor<T>> {
    if x.rank() != 4 {
        return Err(Error::Dimension(format!(
            "dft3 needs an h×w×τ×c tensor, got shape {:?}",
            x.shape()
        )));
    }
    let mut out = ComplexTensor::from_real(x);
    fft3_inplace(&mut out, Direction::Forward)?;
    Ok(out)
}

/// Real part of the inverse unitary transform, without residue checks.
///
/// This is the adjoint of [`dft3`] viewed as a real-linear map into
/// (re, im) pairs, which is what backpropagation needs.
pub fn idft3_real_part<T: Scalar>(x: &ComplexTensor<T>) -> Result<Tensor<T>> {
    let mut work = x.clone();
    fft3_inplace(&mut work, Direction::Inverse)?;
    Ok(work.re())
}

/// Inverse unitary 3-D DFT back to a real tensor.
///
/// The imaginary residue is discarded; a warning is logged when it exceeds
/// the dtype's roundtrip tolerance relative to the signal scale.
pub fn idft3<T: Scalar>(x: &ComplexTensor<T>) -> Result<Tensor<T>> {
    let mut work = x.clone();
    fft3_inplace(&mut work, Direction::Inverse)?;
    let re = work.re();
    let scale = re.max_abs().to_f64_lossy().max(1.0);
    let residue = work.max_abs_im().to_f64_lossy();
    if residue > T::ROUNDTRIP_TOL * scale {
        log::warn!(
            "idft3 discarded imaginary residue {residue:.3e} (tolerance {:.1e}); input spectrum is not Hermitian",
            T::ROUNDTRIP_TOL * scale
        );
    }
    Ok(re)
}
