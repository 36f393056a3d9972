//! Dense row-major f64 tensors. Shapes are plain dimension lists; the value
//! count always equals the shape product.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    /// Operand shapes disagree with the layer's contract.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Class label outside the logit range.
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    /// A forward or backward pass produced NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    /// Training aborted because the loss left the reals.
    #[error("loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}

/// Row-major tensor. `data.len()` equals the product of `shape`; construct
/// through the checked constructors to keep that true.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, NnError> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} wants {want} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar_like(&self, fill: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: vec![fill; self.data.len()],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Flat offset of [i, j] in a 2-D tensor with `cols` columns.
    #[inline]
    pub fn at2(i: usize, j: usize, cols: usize) -> usize {
        i * cols + j
    }

    /// Flat offset of [i, j, k] in a 3-D tensor with trailing dims (d1, d2).
    #[inline]
    pub fn at3(i: usize, j: usize, k: usize, d1: usize, d2: usize) -> usize {
        (i * d1 + j) * d2 + k
    }

    pub fn assert_finite(&self, context: &str) -> Result<(), NnError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NnError::NonFinite(context.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_enforce_shape_product() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.numel(), 24);
        assert!(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).is_ok());
        assert!(Tensor::from_vec(&[2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn flat_offsets_are_row_major() {
        assert_eq!(Tensor::at2(1, 2, 5), 7);
        assert_eq!(Tensor::at3(1, 0, 3, 2, 4), 11);
        assert_eq!(Tensor::at3(0, 1, 2, 2, 4), 6);
    }

    #[test]
    fn finiteness_check_catches_nan() {
        let mut t = Tensor::zeros(&[3]);
        assert!(t.assert_finite("ok").is_ok());
        t.data[1] = f64::NAN;
        assert!(matches!(t.assert_finite("bad"), Err(NnError::NonFinite(_))));
    }
}
