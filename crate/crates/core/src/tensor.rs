//! Dense row-major `f32` arrays with an optional gradient buffer.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; len],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::shape(
                format!("{len} values for shape {shape:?}"),
                format!("{} values", values.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Gradient buffer, if one has been allocated.
    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Returns the gradient buffer, allocating a zeroed one on first use.
    pub fn grad_mut(&mut self) -> &mut [f32] {
        let len = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; len])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[f32]) -> Result<()> {
        if delta.len() != self.values.len() {
            return Err(Error::shape(
                format!("gradient of {} values", self.values.len()),
                format!("{} values", delta.len()),
            ));
        }
        for (g, d) in self.grad_mut().iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(format!("{expected:?}"), format!("{:?}", self.shape)));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
