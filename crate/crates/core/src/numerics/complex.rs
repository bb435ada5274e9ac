use num_complex::Complex;

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Dense row-major complex array; `Complex<T>` is laid out as an interleaved
/// (real, imaginary) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<Complex<T>>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "complex shape {shape:?} does not match {} elements",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![Complex::new(T::zero(), T::zero()); shape.iter().product()],
        }
    }

    pub fn from_real(x: &Tensor<T>) -> Self {
        Self {
            shape: x.shape().to_vec(),
            data: x.data().iter().map(|&v| Complex::new(v, T::zero())).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn re(&self) -> Tensor<T> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|c| c.re).collect())
            .expect("shape preserved")
    }

    pub fn max_abs_im(&self) -> T {
        self.data.iter().fold(T::zero(), |m, c| m.max(c.im.abs()))
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "complex sub: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Real view with a trailing axis of 2 holding (re, im).
    pub fn to_interleaved(&self) -> Tensor<T> {
        let mut shape = self.shape.clone();
        shape.push(2);
        let data = self.data.iter().flat_map(|c| [c.re, c.im]).collect();
        Tensor::new(shape, data).expect("interleaved shape")
    }

    pub fn from_interleaved(x: &Tensor<T>) -> Result<Self> {
        match x.shape().split_last() {
            Some((2, rest)) if !rest.is_empty() => Ok(Self {
                shape: rest.to_vec(),
                data: x
                    .data()
                    .chunks_exact(2)
                    .map(|p| Complex::new(p[0], p[1]))
                    .collect(),
            }),
            _ => Err(Error::Dimension(format!(
                "interleaved complex needs a trailing axis of 2, got {:?}",
                x.shape()
            ))),
        }
    }
}
