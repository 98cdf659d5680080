//! Minimal reverse-mode autodiff over dense `f64` tensors.
//!
//! Values are row-major. Everything the rankers need is two-dimensional
//! except convolution kernels (`[width, in, out]`).

mod checkpoint;
mod optim;
mod tape;

use crate::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use optim::{adam_step, ranknet_grad, ranknet_loss, AdamState};
pub use tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    /// A `[1, n]` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, values.len()],
            data: values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    /// The single value of a `[1, 1]` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// Named trainable tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its slot.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Zero-filled gradient buffers matching every tensor.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }
}
