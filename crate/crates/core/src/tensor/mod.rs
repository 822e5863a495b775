//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable n-d array of `f32` or `f64` values. Tensors
//! created directly are constants; tensors registered on a [`Tape`] (or
//! produced by ops involving one) carry a node reference, and
//! [`Tape::backward`] replays the recorded graph in exact reverse execution
//! order, so gradients are bit-identical across runs.

mod binary;
mod conv;
mod matmul;
mod reduce;
mod sample;
mod shape_ops;
mod shuffle;
mod tape;
#[cfg(test)]
mod tests;
mod unary;

pub use conv::Padding;
pub use sample::grid_sample_2d;
pub use tape::{Gradients, Tape};

use std::fmt;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

use crate::error::{Error, Result};
use tape::NodeRef;

/// Scalar element type: `f32` for all production paths, `f64` for the
/// tightened gradient-check mode.
pub trait Elem:
    Float + FromPrimitive + ToPrimitive + NumAssign + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    fn from_f64_val(v: f64) -> Self {
        Self::from(v).expect("finite f64 converts to element type")
    }

    fn to_f64_val(self) -> f64 {
        self.to_f64().expect("element converts to f64")
    }
}

impl Elem for f32 {}
impl Elem for f64 {}

/// Immutable dense tensor. Cloning is cheap (shared storage).
#[derive(Clone)]
pub struct Tensor<E: Elem = f32> {
    shape: Vec<usize>,
    data: Arc<Vec<E>>,
    node: Option<NodeRef<E>>,
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl<E: Elem> Tensor<E> {
    /// Constant tensor from explicit data. Fails if `data.len()` does not
    /// match the shape's element count.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<E>) -> Result<Self> {
        let shape = shape.into();
        if numel_of(&shape) != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                numel_of(&shape),
                data.len()
            )));
        }
        Ok(Tensor { shape, data: Arc::new(data), node: None })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = numel_of(&shape);
        Tensor { shape, data: Arc::new(vec![E::zero(); n]), node: None }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: E) -> Self {
        let shape = shape.into();
        let n = numel_of(&shape);
        Tensor { shape, data: Arc::new(vec![value; n]), node: None }
    }

    /// Rank-1 single-element tensor, the canonical scalar shape.
    pub fn scalar(value: E) -> Self {
        Tensor::full(vec![1], value)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.data.to_vec()
    }

    /// Scalar extraction; errors unless the tensor holds exactly one element.
    pub fn item(&self) -> Result<E> {
        if self.data.len() != 1 {
            return Err(Error::dim(format!("item() on shape {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    /// Element at a full multi-index (tests and plain math only).
    pub fn at(&self, index: &[usize]) -> E {
        debug_assert_eq!(index.len(), self.shape.len());
        let strides = strides_of(&self.shape);
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off += ix * strides[i];
        }
        self.data[off]
    }

    /// True when this tensor participates in gradient recording.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, detached from any tape.
    pub fn detach(&self) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.clone(), node: None }
    }

    /// Metadata-only reshape; shares storage and the tape node, so gradients
    /// flow through for free.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if numel_of(&shape) != self.data.len() {
            return Err(Error::dim(format!(
                "reshape {:?} -> {:?} changes element count",
                self.shape, shape
            )));
        }
        Ok(Tensor { shape, data: self.data.clone(), node: self.node.clone() })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Lossy precision cast; output is a constant.
    pub fn cast<F: Elem>(&self) -> Tensor<F> {
        let data = self.data.iter().map(|v| F::from_f64_val(v.to_f64_val())).collect();
        Tensor { shape: self.shape.clone(), data: Arc::new(data), node: None }
    }

    pub(crate) fn node(&self) -> Option<&NodeRef<E>> {
        self.node.as_ref()
    }

    pub(crate) fn with_node(shape: Vec<usize>, data: Vec<E>, node: Option<NodeRef<E>>) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len());
        Tensor { shape, data: Arc::new(data), node }
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<E>> {
        self.data.clone()
    }
}

impl<E: Elem> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", &self.data[..])?;
        } else {
            write!(f, " [{} elements]", self.data.len())?;
        }
        if self.node.is_some() {
            write!(f, " (on tape)")?;
        }
        Ok(())
    }
}
