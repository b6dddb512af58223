//! Dense f32 tensors with a define-by-run reverse-mode tape.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! take [`Var`] handles, record how they were computed, and
//! [`Tape::backward`] replays the records in reverse to accumulate
//! gradients on the leaves that asked for them. A fresh tape is built for
//! each forward pass.

mod ops;
mod tape;

pub use tape::{LinearMap, Tape, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} holds {} values but {} were supplied",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_slice(shape: &[usize], data: &[f32]) -> Result<Self> {
        Self::new(shape.to_vec(), data.to_vec())
    }

    /// Marks the tensor as a gradient-collecting leaf.
    pub fn requiring_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn accumulate_grad(&mut self, g: &[f32]) {
        debug_assert!(self.requires_grad);
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Splits a `[N, C, H, W]` tensor into channels `0..c1` and `c1..C`.
    pub fn split_channels(&self, c1: usize) -> Result<(Tensor, Tensor)> {
        let [n, c, h, w] = dims4(&self.shape, "split_channels")?;
        if c1 > c {
            return Err(Error::InvalidArgument(format!("cannot split {c} channels at {c1}")));
        }
        let plane = h * w;
        let mut a = Vec::with_capacity(n * c1 * plane);
        let mut b = Vec::with_capacity(n * (c - c1) * plane);
        for chunk in self.data.chunks(c * plane) {
            a.extend_from_slice(&chunk[..c1 * plane]);
            b.extend_from_slice(&chunk[c1 * plane..]);
        }
        Ok((
            Tensor::new(vec![n, c1, h, w], a)?,
            Tensor::new(vec![n, c - c1, h, w], b)?,
        ))
    }
}

pub(crate) fn dims4(shape: &[usize], op: &'static str) -> Result<[usize; 4]> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::InvalidArgument(format!(
            "{op} expects a rank-4 tensor, got shape {shape:?}"
        ))),
    }
}

#[cfg(test)]
mod tests;
