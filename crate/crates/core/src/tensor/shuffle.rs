//! Sub-pixel channel/space rearrangement (both permutations, each the
//! other's inverse and its own gradient permutation).

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{Elem, Tensor};

/// Maps flat `[N, C*r*r, H, W]` offsets to flat `[N, C, H*r, W*r]` offsets.
/// The channel index decomposes as `c*r*r + dy*r + dx`.
fn shuffle_index(n: usize, c: usize, h: usize, w: usize, r: usize, lowres_flat: usize) -> usize {
    let _ = n;
    let wlo = w;
    let hlo = h;
    let x = lowres_flat % wlo;
    let rest = lowres_flat / wlo;
    let y = rest % hlo;
    let rest = rest / hlo;
    let ch = rest % (c * r * r);
    let img = rest / (c * r * r);
    let cc = ch / (r * r);
    let dy = (ch / r) % r;
    let dx = ch % r;
    ((img * c + cc) * (h * r) + y * r + dy) * (w * r) + x * r + dx
}

impl<E: Elem> Tensor<E> {
    /// `[N, C*r^2, H, W] -> [N, C, H*r, W*r]`. With `r=2` the four channels
    /// `[a,b,c,d]` at one pixel become the 2x2 block `[[a,b],[c,d]]`.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.len() != 4 || r == 0 || s[1] % (r * r) != 0 {
            return Err(Error::dim(format!("pixel_shuffle r={} on shape {:?}", r, s)));
        }
        let (n, c, h, w) = (s[0], s[1] / (r * r), s[2], s[3]);
        let x = self.data();
        let mut out = vec![E::zero(); x.len()];
        for (i, &v) in x.iter().enumerate() {
            out[shuffle_index(n, c, h, w, r, i)] = v;
        }
        record(&[self], vec![n, c, h * r, w * r], out, move |dy, ctx| {
            if let Some(gx) = ctx.grad(0) {
                for (i, g) in gx.iter_mut().enumerate() {
                    *g += dy[shuffle_index(n, c, h, w, r, i)];
                }
            }
        })
    }

    /// Inverse of [`Tensor::pixel_shuffle`]: `[N, C, H*r, W*r] -> [N, C*r^2, H, W]`.
    pub fn space_to_depth(&self, r: usize) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.len() != 4 || r == 0 || s[2] % r != 0 || s[3] % r != 0 {
            return Err(Error::dim(format!("space_to_depth r={} on shape {:?}", r, s)));
        }
        let (n, c, h, w) = (s[0], s[1], s[2] / r, s[3] / r);
        let x = self.data();
        let mut out = vec![E::zero(); x.len()];
        for (i, o) in out.iter_mut().enumerate() {
            *o = x[shuffle_index(n, c, h, w, r, i)];
        }
        record(&[self], vec![n, c * r * r, h, w], out, move |dy, ctx| {
            if let Some(gx) = ctx.grad(0) {
                for (i, &d) in dy.iter().enumerate() {
                    gx[shuffle_index(n, c, h, w, r, i)] += d;
                }
            }
        })
    }
}
