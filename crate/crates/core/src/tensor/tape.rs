//! Wengert-list gradient tape.
//!
//! Every op that touches a taped tensor appends one node holding the parent
//! indices and a backward closure. `backward` seeds the loss with 1 and walks
//! nodes in strictly decreasing index order, so accumulation order (and the
//! resulting float rounding) is identical on every run.

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

type BackFn<E> = Box<dyn Fn(&[E], &mut BackCtx<'_, E>) + Send + Sync>;

struct Node<E: Elem> {
    /// One slot per op input; `None` marks a constant input that receives no
    /// gradient.
    parents: Vec<Option<usize>>,
    parent_numels: Vec<usize>,
    /// Leaves have no backward closure.
    back: Option<BackFn<E>>,
}

struct TapeInner<E: Elem> {
    nodes: Mutex<Vec<Node<E>>>,
}

/// Gradient tape. Cheap to clone (shared interior).
pub struct Tape<E: Elem = f32> {
    inner: Arc<TapeInner<E>>,
}

impl<E: Elem> Clone for Tape<E> {
    fn clone(&self) -> Self {
        Tape { inner: self.inner.clone() }
    }
}

impl<E: Elem> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle tying a tensor to a tape node.
pub(crate) struct NodeRef<E: Elem> {
    tape: Arc<TapeInner<E>>,
    index: usize,
}

impl<E: Elem> Clone for NodeRef<E> {
    fn clone(&self) -> Self {
        NodeRef { tape: self.tape.clone(), index: self.index }
    }
}

/// Accumulation view handed to backward closures. `grad(k)` returns the
/// gradient buffer of the op's k-th input, or `None` for constants.
pub(crate) struct BackCtx<'a, E: Elem> {
    slots: &'a mut [Option<Vec<E>>],
    parents: &'a [Option<usize>],
    numels: &'a [usize],
}

impl<E: Elem> BackCtx<'_, E> {
    pub(crate) fn grad(&mut self, k: usize) -> Option<&mut [E]> {
        let idx = self.parents[k]?;
        let buf = self.slots[idx].get_or_insert_with(|| vec![E::zero(); self.numels[k]]);
        Some(buf.as_mut_slice())
    }
}

impl<E: Elem> Tape<E> {
    pub fn new() -> Self {
        Tape { inner: Arc::new(TapeInner { nodes: Mutex::new(Vec::new()) }) }
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.inner.nodes.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register `t`'s values as a differentiable leaf on this tape. The
    /// returned tensor shares storage with `t`.
    pub fn leaf(&self, t: &Tensor<E>) -> Tensor<E> {
        let mut nodes = self.inner.nodes.lock().unwrap();
        let index = nodes.len();
        nodes.push(Node { parents: Vec::new(), parent_numels: Vec::new(), back: None });
        drop(nodes);
        let node = NodeRef { tape: self.inner.clone(), index };
        Tensor::with_node(t.shape().to_vec(), t.to_vec(), Some(node))
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every leaf
    /// the loss depends on.
    pub fn backward(&self, loss: &Tensor<E>) -> Result<Gradients<E>> {
        let node = loss
            .node()
            .ok_or_else(|| Error::usage("backward target is not on any tape"))?;
        if !Arc::ptr_eq(&node.tape, &self.inner) {
            return Err(Error::usage("backward target was recorded on a different tape"));
        }
        if loss.numel() != 1 {
            return Err(Error::dim(format!("backward target must be scalar, got {:?}", loss.shape())));
        }
        let loss_idx = node.index;
        let nodes = self.inner.nodes.lock().unwrap();
        let mut slots: Vec<Option<Vec<E>>> = (0..nodes.len()).map(|_| None).collect();
        slots[loss_idx] = Some(vec![E::one()]);
        for i in (0..=loss_idx).rev() {
            let Some(back) = nodes[i].back.as_ref() else { continue };
            let Some(dy) = slots[i].take() else { continue };
            let mut ctx = BackCtx {
                slots: &mut slots,
                parents: &nodes[i].parents,
                numels: &nodes[i].parent_numels,
            };
            back(&dy, &mut ctx);
        }
        Ok(Gradients { tape: self.inner.clone(), slots })
    }
}

/// Result of a backward sweep; query with the leaf tensors themselves.
pub struct Gradients<E: Elem = f32> {
    tape: Arc<TapeInner<E>>,
    slots: Vec<Option<Vec<E>>>,
}

impl<E: Elem> Gradients<E> {
    /// Gradient of the swept loss w.r.t. `t`, shaped like `t`. `None` when
    /// `t` is constant, off-tape, or unreachable from the loss.
    pub fn get(&self, t: &Tensor<E>) -> Option<Tensor<E>> {
        let node = t.node()?;
        if !Arc::ptr_eq(&node.tape, &self.tape) {
            return None;
        }
        let buf = self.slots.get(node.index)?.as_ref()?;
        Some(Tensor::from_vec(t.shape().to_vec(), buf.clone()).expect("gradient shape matches leaf"))
    }

    /// Like `get`, but zeros when the leaf is unreachable from the loss.
    pub fn get_or_zeros(&self, t: &Tensor<E>) -> Result<Tensor<E>> {
        if t.node().is_none() {
            return Err(Error::usage("gradient requested for a constant tensor"));
        }
        Ok(self.get(t).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
    }
}

/// Record one op. Exactly one distinct tape may appear among the inputs; with
/// none, the output is a constant and `back` is dropped unused.
pub(crate) fn record<E: Elem>(
    inputs: &[&Tensor<E>],
    out_shape: Vec<usize>,
    out_data: Vec<E>,
    back: impl Fn(&[E], &mut BackCtx<'_, E>) + Send + Sync + 'static,
) -> Result<Tensor<E>> {
    let mut tape: Option<&Arc<TapeInner<E>>> = None;
    for t in inputs {
        if let Some(node) = t.node() {
            match tape {
                None => tape = Some(&node.tape),
                Some(existing) if Arc::ptr_eq(existing, &node.tape) => {}
                Some(_) => {
                    return Err(Error::usage("op mixes tensors from two different tapes"));
                }
            }
        }
    }
    let Some(tape) = tape else {
        return Ok(Tensor::with_node(out_shape, out_data, None));
    };
    let parents: Vec<Option<usize>> = inputs.iter().map(|t| t.node().map(|n| n.index)).collect();
    let parent_numels: Vec<usize> = inputs.iter().map(|t| t.numel()).collect();
    let tape = Arc::clone(tape);
    let mut nodes = tape.nodes.lock().unwrap();
    let index = nodes.len();
    nodes.push(Node { parents, parent_numels, back: Some(Box::new(back)) });
    drop(nodes);
    let node = NodeRef { tape, index };
    Ok(Tensor::with_node(out_shape, out_data, Some(node)))
}
