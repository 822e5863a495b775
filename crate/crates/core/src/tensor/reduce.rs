//! Reductions and scans.

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{Elem, Tensor};

/// Decompose a shape around `axis` into (outer, len, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!("axis {} out of range for shape {:?}", axis, shape)));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl<E: Elem> Tensor<E> {
    /// Sum of all elements as a scalar tensor.
    pub fn sum_all(&self) -> Result<Tensor<E>> {
        let mut acc = E::zero();
        for &v in self.data() {
            acc += v;
        }
        record(&[self], vec![1], vec![acc], |dy, ctx| {
            if let Some(g) = ctx.grad(0) {
                for gv in g.iter_mut() {
                    *gv += dy[0];
                }
            }
        })
    }

    pub fn mean_all(&self) -> Result<Tensor<E>> {
        if self.numel() == 0 {
            return Err(Error::dim("mean of empty tensor".to_string()));
        }
        self.sum_all()?.scale(1.0 / self.numel() as f64)
    }

    /// Sum over one axis, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<E>> {
        let (outer, len, inner) = split_axis(self.shape(), axis)?;
        let x = self.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &x[(o * len + l) * inner..][..inner];
                let dst = &mut out[o * inner..][..inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += *s;
                }
            }
        }
        let mut out_shape = self.shape().to_vec();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        record(&[self], out_shape, out, move |dy, ctx| {
            if let Some(g) = ctx.grad(0) {
                for o in 0..outer {
                    let dsrc = &dy[o * inner..][..inner];
                    for l in 0..len {
                        let dst = &mut g[(o * len + l) * inner..][..inner];
                        for (gv, d) in dst.iter_mut().zip(dsrc) {
                            *gv += *d;
                        }
                    }
                }
            }
        })
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<E>> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::dim(format!("axis {} out of range for {:?}", axis, self.shape())))?;
        self.sum_axis(axis)?.scale(1.0 / len as f64)
    }

    /// Exclusive prefix sum along `axis`: `out[..,i,..] = sum_{j<i} x[..,j,..]`,
    /// with `out[..,0,..] = 0`.
    pub fn cumsum_exclusive(&self, axis: usize) -> Result<Tensor<E>> {
        let (outer, len, inner) = split_axis(self.shape(), axis)?;
        let x = self.data();
        let mut out = vec![E::zero(); x.len()];
        for o in 0..outer {
            for k in 0..inner {
                let mut acc = E::zero();
                for l in 0..len {
                    let idx = (o * len + l) * inner + k;
                    out[idx] = acc;
                    acc += x[idx];
                }
            }
        }
        record(&[self], self.shape().to_vec(), out, move |dy, ctx| {
            // d out_i / d x_j = [j < i], so dx_j = sum of dy over later slots:
            // a reversed exclusive prefix sum.
            if let Some(g) = ctx.grad(0) {
                for o in 0..outer {
                    for k in 0..inner {
                        let mut acc = E::zero();
                        for l in (0..len).rev() {
                            let idx = (o * len + l) * inner + k;
                            g[idx] += acc;
                            acc += dy[idx];
                        }
                    }
                }
            }
        })
    }

    /// `[m,n] -> [n,m]` (copying).
    pub fn transpose2d(&self) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::dim(format!("transpose2d on shape {:?}", s)));
        }
        let (m, n) = (s[0], s[1]);
        let x = self.data();
        let mut out = vec![E::zero(); x.len()];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = x[i * n + j];
            }
        }
        record(&[self], vec![n, m], out, move |dy, ctx| {
            if let Some(g) = ctx.grad(0) {
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] += dy[j * m + i];
                    }
                }
            }
        })
    }
}
