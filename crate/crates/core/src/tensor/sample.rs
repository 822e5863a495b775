//! Bilinear plane sampling, differentiable in both the plane and the
//! sampling coordinates.

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{Elem, Tensor};

/// Sample `plane [C,H,W]` at `coords [M,2]` (each row `(u,v)` in `[-1,1]^2`,
/// `u` along width, `v` along height) giving `[M,C]`.
///
/// Align-corners convention: -1 maps to texel 0 and +1 to the last texel.
/// Out-of-range coordinates clamp to the border; the coordinate gradient is
/// zero on the clamped side.
pub fn grid_sample_2d<E: Elem>(plane: &Tensor<E>, coords: &Tensor<E>) -> Result<Tensor<E>> {
    let ps = plane.shape();
    let cs = coords.shape();
    if ps.len() != 3 {
        return Err(Error::dim(format!("grid_sample plane must be [C,H,W], got {:?}", ps)));
    }
    if cs.len() != 2 || cs[1] != 2 {
        return Err(Error::dim(format!("grid_sample coords must be [M,2], got {:?}", cs)));
    }
    let (c, h, w) = (ps[0], ps[1], ps[2]);
    if h < 2 || w < 2 {
        return Err(Error::dim("grid_sample plane must be at least 2x2".to_string()));
    }
    let m = cs[0];
    let half = E::from_f64_val(0.5);
    let one = E::one();

    // Per-row sampling footprint, reused by forward and both backward paths.
    // `sx`/`sy` are the scale factors d(texel)/d(coord), zeroed when clamped.
    let prep = move |u: E, v: E| -> (usize, usize, E, E, E, E) {
        let fx = (u + one) * half * E::from_f64_val((w - 1) as f64);
        let fy = (v + one) * half * E::from_f64_val((h - 1) as f64);
        let fx_cl = fx.max(E::zero()).min(E::from_f64_val((w - 1) as f64));
        let fy_cl = fy.max(E::zero()).min(E::from_f64_val((h - 1) as f64));
        let x0 = fx_cl.floor().to_f64_val() as usize;
        let y0 = fy_cl.floor().to_f64_val() as usize;
        let x0 = x0.min(w - 2);
        let y0 = y0.min(h - 2);
        let tx = fx_cl - E::from_f64_val(x0 as f64);
        let ty = fy_cl - E::from_f64_val(y0 as f64);
        let sx = if fx == fx_cl { half * E::from_f64_val((w - 1) as f64) } else { E::zero() };
        let sy = if fy == fy_cl { half * E::from_f64_val((h - 1) as f64) } else { E::zero() };
        (x0, y0, tx, ty, sx, sy)
    };

    let pd = plane.data();
    let cd = coords.data();
    let mut out = vec![E::zero(); m * c];
    for i in 0..m {
        let (x0, y0, tx, ty, _, _) = prep(cd[2 * i], cd[2 * i + 1]);
        for ch in 0..c {
            let base = ch * h * w + y0 * w + x0;
            let v00 = pd[base];
            let v01 = pd[base + 1];
            let v10 = pd[base + w];
            let v11 = pd[base + w + 1];
            let top = v00 + tx * (v01 - v00);
            let bot = v10 + tx * (v11 - v10);
            out[i * c + ch] = top + ty * (bot - top);
        }
    }

    let pv = plane.data_arc();
    let cv = coords.data_arc();
    record(&[plane, coords], vec![m, c], out, move |dy, ctx| {
        if let Some(gp) = ctx.grad(0) {
            for i in 0..m {
                let (x0, y0, tx, ty, _, _) = prep(cv[2 * i], cv[2 * i + 1]);
                for ch in 0..c {
                    let g = dy[i * c + ch];
                    let base = ch * h * w + y0 * w + x0;
                    gp[base] += g * (one - tx) * (one - ty);
                    gp[base + 1] += g * tx * (one - ty);
                    gp[base + w] += g * (one - tx) * ty;
                    gp[base + w + 1] += g * tx * ty;
                }
            }
        }
        if let Some(gc) = ctx.grad(1) {
            for i in 0..m {
                let (x0, y0, tx, ty, sx, sy) = prep(cv[2 * i], cv[2 * i + 1]);
                let mut du = E::zero();
                let mut dv = E::zero();
                for ch in 0..c {
                    let g = dy[i * c + ch];
                    let base = ch * h * w + y0 * w + x0;
                    let v00 = pv[base];
                    let v01 = pv[base + 1];
                    let v10 = pv[base + w];
                    let v11 = pv[base + w + 1];
                    // d value / d fx and d fy of the bilinear form.
                    du += g * ((v01 - v00) * (one - ty) + (v11 - v10) * ty);
                    dv += g * ((v10 - v00) * (one - tx) + (v11 - v01) * tx);
                }
                gc[2 * i] += du * sx;
                gc[2 * i + 1] += dv * sy;
            }
        }
    })
}
