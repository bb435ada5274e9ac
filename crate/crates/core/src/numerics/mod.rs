//! Dense tensors, complex spectra, unitary 3-D Fourier transforms and
//! frequency-domain low-pass masks.

mod complex;
pub mod fft;
pub mod filter;
mod scalar;
mod tensor;

pub use complex::ComplexTensor;
pub use fft::{dft3, idft3};
pub use filter::{lowpass, FilterMode, FilterSpec, LowpassMask};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
pub(crate) use tensor::gemm_into;
