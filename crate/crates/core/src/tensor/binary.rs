//! Elementwise binary ops with right-aligned broadcasting.

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{numel_of, Elem, Tensor};

/// Broadcast result shape under numpy rules, or a dim error.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::dim(format!("cannot broadcast {:?} with {:?}", a, b)));
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` embedded into a broadcast output of rank
/// `out_rank`, with zero stride on broadcast dimensions.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let own = super::strides_of(shape);
    let mut out = vec![0usize; rank];
    for i in 0..shape.len() {
        let o = rank - shape.len() + i;
        out[o] = if shape[i] == 1 && out_shape[o] != 1 { 0 } else { own[i] };
    }
    out
}

/// Visit every output element in row-major order, yielding the flat input
/// offsets `(ia, ib)` under broadcasting.
fn for_each_pair(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n = numel_of(out_shape);
    if n == 0 {
        return;
    }
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for o in 0..n {
        f(o, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

/// Shared skeleton: forward map plus gradient factors per input.
fn binary_op<E: Elem>(
    a: &Tensor<E>,
    b: &Tensor<E>,
    fwd: impl Fn(E, E) -> E,
    // (dy, a_val, b_val) -> (da contribution, db contribution)
    bwd: impl Fn(E, E, E) -> (E, E) + Send + Sync + 'static,
) -> Result<Tensor<E>> {
    let out_shape = broadcast_shape(a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let (da_ref, db_ref) = (a.data(), b.data());
    let mut out = vec![E::zero(); numel_of(&out_shape)];
    for_each_pair(&out_shape, &sa, &sb, |o, ia, ib| {
        out[o] = fwd(da_ref[ia], db_ref[ib]);
    });
    let (av, bv) = (a.data_arc(), b.data_arc());
    let shape_for_back = out_shape.clone();
    record(&[a, b], out_shape, out, move |dy, ctx| {
        // Two passes keep the borrow of each gradient buffer simple; both
        // iterate in identical row-major order.
        if let Some(ga) = ctx.grad(0) {
            for_each_pair(&shape_for_back, &sa, &sb, |o, ia, ib| {
                let (d, _) = bwd(dy[o], av[ia], bv[ib]);
                ga[ia] += d;
            });
        }
        if let Some(gb) = ctx.grad(1) {
            for_each_pair(&shape_for_back, &sa, &sb, |o, ia, ib| {
                let (_, d) = bwd(dy[o], av[ia], bv[ib]);
                gb[ib] += d;
            });
        }
    })
}

impl<E: Elem> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary_op(self, other, |x, y| x + y, |dy, _, _| (dy, dy))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary_op(self, other, |x, y| x - y, |dy, _, _| (dy, E::zero() - dy))
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary_op(self, other, |x, y| x * y, |dy, x, y| (dy * y, dy * x))
    }

    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary_op(self, other, |x, y| x / y, |dy, x, y| (dy / y, E::zero() - dy * x / (y * y)))
    }

    /// Mean over all elements of the smooth-L1 distance between `self` and
    /// `target`: `0.5 r^2 / beta` for `|r| < beta`, else `|r| - 0.5 beta`.
    pub fn smooth_l1_mean(&self, target: &Tensor<E>, beta: f64) -> Result<Tensor<E>> {
        if self.shape() != target.shape() {
            return Err(Error::dim(format!(
                "smooth_l1 shapes {:?} vs {:?}",
                self.shape(),
                target.shape()
            )));
        }
        if beta <= 0.0 {
            return Err(Error::usage("smooth_l1 beta must be positive"));
        }
        let beta = E::from_f64_val(beta);
        let half = E::from_f64_val(0.5);
        let n = E::from_f64_val(self.numel() as f64);
        let mut acc = E::zero();
        for (x, t) in self.data().iter().zip(target.data()) {
            let r = *x - *t;
            acc += if r.abs() < beta { half * r * r / beta } else { r.abs() - half * beta };
        }
        let (av, tv) = (self.data_arc(), target.data_arc());
        record(&[self, target], vec![1], vec![acc / n], move |dy, ctx| {
            let dy = dy[0] / n;
            for k in 0..2 {
                let Some(g) = ctx.grad(k) else { continue };
                let sign = if k == 0 { E::one() } else { E::zero() - E::one() };
                for i in 0..av.len() {
                    let r = av[i] - tv[i];
                    let d = if r.abs() < beta { r / beta } else { r.signum() };
                    g[i] += dy * d * sign;
                }
            }
        })
    }
}
