//! Emission-absorption quadrature along ray segments.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Output of [`composite`]: per-ray color, per-sample weights, and the
/// residual transmittance past the last sample (constant, not on any tape).
pub struct Composited<E: Elem = f32> {
    pub color: Tensor<E>,
    pub weights: Tensor<E>,
    pub t_final: Tensor<E>,
}

/// Composite `colors [R,n,C]` with densities `sigmas [R,n]` over segment
/// lengths `deltas [R,n]`.
///
/// Per sample, `alpha = 1 - exp(-sigma * delta)` and the transmittance is
/// `T_i = exp(-sum_{j<i} sigma_j * delta_j)` (an exclusive prefix sum rather
/// than a running product, which keeps the backward pass simple). Weights
/// `w_i = T_i * alpha_i` telescope, so `sum_i w_i + t_final = 1` identically
/// up to rounding. The background is black: missing mass simply darkens.
pub fn composite<E: Elem>(
    sigmas: &Tensor<E>,
    colors: &Tensor<E>,
    deltas: &Tensor<E>,
) -> Result<Composited<E>> {
    let ss = sigmas.shape();
    let cs = colors.shape();
    if ss.len() != 2 || cs.len() != 3 || cs[0] != ss[0] || cs[1] != ss[1] {
        return Err(Error::dim(format!(
            "composite wants sigmas [R,n] and colors [R,n,C], got {:?} and {:?}",
            ss, cs
        )));
    }
    if deltas.shape() != ss {
        return Err(Error::dim(format!(
            "composite deltas {:?} must match sigmas {:?}",
            deltas.shape(),
            ss
        )));
    }
    if sigmas.data().iter().any(|v| !v.is_finite() || *v < E::zero()) {
        return Err(Error::usage("composite densities must be finite and non-negative"));
    }
    if deltas.data().iter().any(|v| !(*v > E::zero()) || !v.is_finite()) {
        return Err(Error::usage("composite segment lengths must be positive"));
    }
    let (r, n) = (ss[0], ss[1]);

    let s = sigmas.mul(deltas)?;
    let trans = s.cumsum_exclusive(1)?.neg_t()?.exp_t()?;
    let alpha = Tensor::scalar(E::one()).sub(&s.neg_t()?.exp_t()?)?;
    let weights = trans.mul(&alpha)?;
    let color = weights.reshape(vec![r, n, 1])?.mul(colors)?.sum_axis(1)?;

    // Residual transmittance from raw values; reporting only.
    let sd = s.data();
    let mut t_final = Vec::with_capacity(r);
    for row in 0..r {
        let mut acc = E::zero();
        for i in 0..n {
            acc += sd[row * n + i];
        }
        t_final.push((-acc).exp());
    }
    Ok(Composited { color, weights, t_final: Tensor::from_vec(vec![r], t_final)? })
}
