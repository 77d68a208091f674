//! Row-major dense tensors.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NumericsError;

/// Scalar type for all model math. f32 by default; the `f64` feature swaps
/// in doubles for tighter gradient-oracle tolerances.
#[cfg(not(feature = "f64"))]
pub type Float = f32;
#[cfg(feature = "f64")]
pub type Float = f64;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Float>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![1.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: Float) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<Float>) -> Result<Self, NumericsError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NumericsError::ShapeLenMismatch {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Normal(0, std) entries from the given rng.
    pub fn randn<R: Rng>(shape: &[usize], std: Float, rng: &mut R) -> Self {
        let normal = Normal::new(0.0f64, std as f64).expect("std must be finite");
        let data = (0..shape.iter().product())
            .map(|_| normal.sample(rng) as Float)
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Float] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Float] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn item(&self) -> Float {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize), NumericsError> {
        if self.shape.len() != 2 {
            return Err(NumericsError::BadArgument {
                op,
                reason: format!("expected 2-D tensor, got shape {:?}", self.shape),
            });
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &str) -> Result<(), NumericsError> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(NumericsError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn fill(&mut self, v: Float) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// self += other, elementwise. Shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
