//! Slicing and concatenation.

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{Elem, Tensor};

fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!("axis {} out of range for shape {:?}", axis, shape)));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl<E: Elem> Tensor<E> {
    /// Contiguous slice `[start, start+len)` along `axis` (copying).
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<E>> {
        let (outer, full, inner) = split_axis(self.shape(), axis)?;
        if start + len > full || len == 0 {
            return Err(Error::dim(format!(
                "narrow [{start}, {}) out of range 0..{full}",
                start + len
            )));
        }
        let x = self.data();
        let mut out = vec![E::zero(); outer * len * inner];
        for o in 0..outer {
            let src = &x[(o * full + start) * inner..][..len * inner];
            out[o * len * inner..][..len * inner].copy_from_slice(src);
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        record(&[self], out_shape, out, move |dy, ctx| {
            if let Some(g) = ctx.grad(0) {
                for o in 0..outer {
                    let dst = &mut g[(o * full + start) * inner..][..len * inner];
                    let src = &dy[o * len * inner..][..len * inner];
                    for (gv, d) in dst.iter_mut().zip(src) {
                        *gv += *d;
                    }
                }
            }
        })
    }

    /// Concatenate along `axis`; all other dims must match.
    pub fn concat(axis: usize, parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
        let first = parts.first().ok_or_else(|| Error::usage("concat of zero tensors"))?;
        let rank = first.shape().len();
        let mut total = 0usize;
        for p in parts {
            if p.shape().len() != rank {
                return Err(Error::dim("concat rank mismatch".to_string()));
            }
            for d in 0..rank {
                if d != axis && p.shape()[d] != first.shape()[d] {
                    return Err(Error::dim(format!(
                        "concat shape mismatch: {:?} vs {:?} on axis {}",
                        p.shape(),
                        first.shape(),
                        d
                    )));
                }
            }
            total += p.shape()[axis];
        }
        let (outer, _, inner) = split_axis(first.shape(), axis)?;
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let mut out = vec![E::zero(); outer * total * inner];
        for o in 0..outer {
            let mut off = 0usize;
            for (p, &len) in parts.iter().zip(&lens) {
                let src = &p.data()[o * len * inner..][..len * inner];
                out[(o * total + off) * inner..][..len * inner].copy_from_slice(src);
                off += len;
            }
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total;
        record(parts, out_shape, out, move |dy, ctx| {
            let mut off = 0usize;
            for (k, &len) in lens.iter().enumerate() {
                if let Some(g) = ctx.grad(k) {
                    for o in 0..outer {
                        let src = &dy[(o * total + off) * inner..][..len * inner];
                        let dst = &mut g[o * len * inner..][..len * inner];
                        for (gv, d) in dst.iter_mut().zip(src) {
                            *gv += *d;
                        }
                    }
                }
                off += len;
            }
        })
    }
}
