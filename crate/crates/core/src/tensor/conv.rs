//! Direct 2-D convolution (NCHW) and average pooling.
//!
//! Parallelism is over disjoint output channels (forward, weight grad) or
//! input channels (input grad); inner loops run in a fixed order so results
//! do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{Elem, Tensor};

/// Spatial padding policy. `Zero` pads by `k/2` per side (size-preserving
/// for odd kernels at stride 1); `Valid` applies no padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Valid,
}

struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

fn conv_dims(xs: &[usize], ws: &[usize], stride: usize, padding: Padding) -> Result<ConvDims> {
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::dim(format!("conv2d wants 4-d input and kernel, got {:?} and {:?}", xs, ws)));
    }
    if xs[1] != ws[1] {
        return Err(Error::dim(format!("conv2d channel mismatch: input {:?}, kernel {:?}", xs, ws)));
    }
    if stride == 0 {
        return Err(Error::usage("conv2d stride must be >= 1"));
    }
    let (ph, pw) = match padding {
        Padding::Zero => (ws[2] / 2, ws[3] / 2),
        Padding::Valid => (0, 0),
    };
    let (h, w, kh, kw) = (xs[2], xs[3], ws[2], ws[3]);
    if h + 2 * ph < kh || w + 2 * pw < kw {
        return Err(Error::dim(format!("conv2d kernel {:?} larger than padded input {:?}", ws, xs)));
    }
    Ok(ConvDims {
        n: xs[0],
        cin: xs[1],
        h,
        w,
        cout: ws[0],
        kh,
        kw,
        stride,
        ph,
        pw,
        ho: (h + 2 * ph - kh) / stride + 1,
        wo: (w + 2 * pw - kw) / stride + 1,
    })
}

/// Valid output range `[lo, hi)` along one axis: output index `o` reads input
/// index `o*stride + k - pad`, which must land in `[0, size)`.
fn out_range(size: usize, k: usize, pad: usize, stride: usize, out_size: usize) -> (usize, usize) {
    let shift = k as isize - pad as isize;
    let lo = if shift >= 0 { 0 } else { ((-shift) as usize).div_ceil(stride) };
    let max_in = size as isize - 1 - shift;
    if max_in < 0 {
        return (0, 0);
    }
    let hi = (max_in as usize / stride + 1).min(out_size);
    (lo.min(hi), hi)
}

fn conv_forward<E: Elem>(x: &[E], w: &[E], d: &ConvDims) -> Vec<E> {
    let mut out = vec![E::zero(); d.n * d.cout * d.ho * d.wo];
    let plane = d.ho * d.wo;
    let run = |n: usize, o: usize, dst: &mut [E]| {
        for c in 0..d.cin {
            let xin = &x[(n * d.cin + c) * d.h * d.w..][..d.h * d.w];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let wv = w[((o * d.cin + c) * d.kh + ky) * d.kw + kx];
                    let (ylo, yhi) = out_range(d.h, ky, d.ph, d.stride, d.ho);
                    let (xlo, xhi) = out_range(d.w, kx, d.pw, d.stride, d.wo);
                    for oy in ylo..yhi {
                        let iy = oy * d.stride + ky - d.ph;
                        let src = &xin[iy * d.w..][..d.w];
                        let dst_row = &mut dst[oy * d.wo..][..d.wo];
                        for ox in xlo..xhi {
                            dst_row[ox] += wv * src[ox * d.stride + kx - d.pw];
                        }
                    }
                }
            }
        }
    };
    if d.n * d.cout * plane * d.cin * d.kh * d.kw >= 1 << 14 {
        out.par_chunks_mut(plane).enumerate().for_each(|(idx, dst)| {
            run(idx / d.cout, idx % d.cout, dst);
        });
    } else {
        for (idx, dst) in out.chunks_mut(plane).enumerate() {
            run(idx / d.cout, idx % d.cout, dst);
        }
    }
    out
}

fn conv_backward_x<E: Elem>(dy: &[E], w: &[E], d: &ConvDims, gx: &mut [E]) {
    let in_plane = d.h * d.w;
    let par = d.n * d.cin * in_plane * d.cout >= 1 << 14;
    let run = |n: usize, c: usize, gdst: &mut [E]| {
        for o in 0..d.cout {
            let dyp = &dy[(n * d.cout + o) * d.ho * d.wo..][..d.ho * d.wo];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let wv = w[((o * d.cin + c) * d.kh + ky) * d.kw + kx];
                    let (ylo, yhi) = out_range(d.h, ky, d.ph, d.stride, d.ho);
                    let (xlo, xhi) = out_range(d.w, kx, d.pw, d.stride, d.wo);
                    for oy in ylo..yhi {
                        let iy = oy * d.stride + ky - d.ph;
                        let grow = &mut gdst[iy * d.w..][..d.w];
                        let dyrow = &dyp[oy * d.wo..][..d.wo];
                        for ox in xlo..xhi {
                            grow[ox * d.stride + kx - d.pw] += wv * dyrow[ox];
                        }
                    }
                }
            }
        }
    };
    if par {
        gx.par_chunks_mut(in_plane).enumerate().for_each(|(idx, gdst)| {
            run(idx / d.cin, idx % d.cin, gdst);
        });
    } else {
        for (idx, gdst) in gx.chunks_mut(in_plane).enumerate() {
            run(idx / d.cin, idx % d.cin, gdst);
        }
    }
}

fn conv_backward_w<E: Elem>(dy: &[E], x: &[E], d: &ConvDims, gw: &mut [E]) {
    let wsz = d.cin * d.kh * d.kw;
    let par = d.cout * wsz * d.ho * d.wo >= 1 << 14;
    let run = |o: usize, gdst: &mut [E]| {
        for n in 0..d.n {
            let dyp = &dy[(n * d.cout + o) * d.ho * d.wo..][..d.ho * d.wo];
            for c in 0..d.cin {
                let xin = &x[(n * d.cin + c) * d.h * d.w..][..d.h * d.w];
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let (ylo, yhi) = out_range(d.h, ky, d.ph, d.stride, d.ho);
                        let (xlo, xhi) = out_range(d.w, kx, d.pw, d.stride, d.wo);
                        let mut acc = E::zero();
                        for oy in ylo..yhi {
                            let iy = oy * d.stride + ky - d.ph;
                            let src = &xin[iy * d.w..][..d.w];
                            let dyrow = &dyp[oy * d.wo..][..d.wo];
                            for ox in xlo..xhi {
                                acc += dyrow[ox] * src[ox * d.stride + kx - d.pw];
                            }
                        }
                        gdst[(c * d.kh + ky) * d.kw + kx] += acc;
                    }
                }
            }
        }
    };
    if par {
        gw.par_chunks_mut(wsz).enumerate().for_each(|(o, gdst)| run(o, gdst));
    } else {
        for (o, gdst) in gw.chunks_mut(wsz).enumerate() {
            run(o, gdst);
        }
    }
}

impl<E: Elem> Tensor<E> {
    /// 2-D convolution: `self [N,Cin,H,W]` with kernel `[Cout,Cin,kh,kw]`.
    /// Bias, when wanted, is a separate broadcast add.
    pub fn conv2d(&self, kernel: &Tensor<E>, stride: usize, padding: Padding) -> Result<Tensor<E>> {
        let d = conv_dims(self.shape(), kernel.shape(), stride, padding)?;
        let out = conv_forward(self.data(), kernel.data(), &d);
        let out_shape = vec![d.n, d.cout, d.ho, d.wo];
        let (xv, wv) = (self.data_arc(), kernel.data_arc());
        record(&[self, kernel], out_shape, out, move |dy, ctx| {
            if let Some(gx) = ctx.grad(0) {
                conv_backward_x(dy, &wv, &d, gx);
            }
            if let Some(gw) = ctx.grad(1) {
                conv_backward_w(dy, &xv, &d, gw);
            }
        })
    }

    /// Non-overlapping average pooling with window `k`; spatial dims must be
    /// divisible by `k`.
    pub fn avg_pool2d(&self, k: usize) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::dim(format!("avg_pool2d wants 4-d input, got {:?}", s)));
        }
        if k == 0 || s[2] % k != 0 || s[3] % k != 0 {
            return Err(Error::dim(format!("avg_pool2d window {} does not divide {:?}", k, s)));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (h / k, w / k);
        let inv = E::from_f64_val(1.0 / (k * k) as f64);
        let x = self.data();
        let mut out = vec![E::zero(); n * c * ho * wo];
        for p in 0..n * c {
            let src = &x[p * h * w..][..h * w];
            let dst = &mut out[p * ho * wo..][..ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = E::zero();
                    for dy in 0..k {
                        for dx in 0..k {
                            acc += src[(oy * k + dy) * w + ox * k + dx];
                        }
                    }
                    dst[oy * wo + ox] = acc * inv;
                }
            }
        }
        record(&[self], vec![n, c, ho, wo], out, move |dy, ctx| {
            if let Some(gx) = ctx.grad(0) {
                for p in 0..n * c {
                    let gplane = &mut gx[p * h * w..][..h * w];
                    let dyp = &dy[p * ho * wo..][..ho * wo];
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let g = dyp[oy * wo + ox] * inv;
                            for ddy in 0..k {
                                for ddx in 0..k {
                                    gplane[(oy * k + ddy) * w + ox * k + ddx] += g;
                                }
                            }
                        }
                    }
                }
            }
        })
    }
}
