//! 2-D matrix multiplication.
//!
//! Kernels parallelize over disjoint output row blocks with a fixed inner
//! summation order, so results are bit-identical for any thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{Elem, Tensor};

const PAR_THRESHOLD: usize = 1 << 14;

/// `a [m,k] @ b [k,n]`.
pub(crate) fn mm_nn<E: Elem>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    let row = |i: usize, row: &mut [E]| {
        for kk in 0..k {
            let av = a[i * k + kk];
            let brow = &b[kk * n..kk * n + n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * *bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
    } else {
        for (i, r) in out.chunks_mut(n).enumerate() {
            row(i, r);
        }
    }
    out
}

/// `a [m,p] @ b^T` where `b` is `[n,p]`; output `[m,n]`.
pub(crate) fn mm_nt<E: Elem>(a: &[E], b: &[E], m: usize, p: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    let row = |i: usize, r: &mut [E]| {
        let arow = &a[i * p..i * p + p];
        for (j, o) in r.iter_mut().enumerate() {
            let brow = &b[j * p..j * p + p];
            let mut acc = E::zero();
            for (x, y) in arow.iter().zip(brow) {
                acc += *x * *y;
            }
            *o += acc;
        }
    };
    if m * p * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
    } else {
        for (i, r) in out.chunks_mut(n).enumerate() {
            row(i, r);
        }
    }
    out
}

/// `a^T @ b` where `a` is `[m,p]`, `b` is `[m,n]`; output `[p,n]`.
pub(crate) fn mm_tn<E: Elem>(a: &[E], b: &[E], m: usize, p: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); p * n];
    let row = |pp: usize, r: &mut [E]| {
        for i in 0..m {
            let av = a[i * p + pp];
            let brow = &b[i * n..i * n + n];
            for (o, bv) in r.iter_mut().zip(brow) {
                *o += av * *bv;
            }
        }
    };
    if m * p * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(pp, r)| row(pp, r));
    } else {
        for (pp, r) in out.chunks_mut(n).enumerate() {
            row(pp, r);
        }
    }
    out
}

impl<E: Elem> Tensor<E> {
    /// `[m,k] @ [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul {:?} @ {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = mm_nn(self.data(), rhs.data(), m, k, n);
        let (av, bv) = (self.data_arc(), rhs.data_arc());
        record(&[self, rhs], vec![m, n], out, move |dy, ctx| {
            if let Some(ga) = ctx.grad(0) {
                let da = mm_nt(dy, &bv, m, n, k);
                for (g, d) in ga.iter_mut().zip(&da) {
                    *g += *d;
                }
            }
            if let Some(gb) = ctx.grad(1) {
                let db = mm_tn(&av, dy, m, k, n);
                for (g, d) in gb.iter_mut().zip(&db) {
                    *g += *d;
                }
            }
        })
    }
}
