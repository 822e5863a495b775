//! Elementwise unary ops, scalar ops, and activations.

use crate::error::{Error, Result};
use crate::tensor::tape::record;
use crate::tensor::{strides_of, Elem, Tensor};

/// Numerically safe sigmoid: both branches keep the exponent non-positive.
pub(crate) fn sigmoid_scalar<E: Elem>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

/// Softplus `ln(1 + e^x)` written to avoid overflow for large `x`.
pub(crate) fn softplus_scalar<E: Elem>(x: E) -> E {
    x.max(E::zero()) + (-x.abs()).exp().ln_1p()
}

/// Skeleton: forward map plus derivative from saved input and output values.
fn unary_op<E: Elem>(
    x: &Tensor<E>,
    fwd: impl Fn(E) -> E,
    // (x, out) -> d out / d x
    deriv: impl Fn(E, E) -> E + Send + Sync + 'static,
) -> Result<Tensor<E>> {
    let out: Vec<E> = x.data().iter().map(|&v| fwd(v)).collect();
    let xv = x.data_arc();
    let ov = std::sync::Arc::new(out.clone());
    record(&[x], x.shape().to_vec(), out, move |dy, ctx| {
        if let Some(g) = ctx.grad(0) {
            for i in 0..dy.len() {
                g[i] += dy[i] * deriv(xv[i], ov[i]);
            }
        }
    })
}

impl<E: Elem> Tensor<E> {
    pub fn neg_t(&self) -> Result<Tensor<E>> {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor<E>> {
        let c = E::from_f64_val(c);
        unary_op(self, |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor<E>> {
        let c = E::from_f64_val(c);
        unary_op(self, |x| x + c, |_, _| E::one())
    }

    pub fn square(&self) -> Result<Tensor<E>> {
        let two = E::from_f64_val(2.0);
        unary_op(self, |x| x * x, move |x, _| two * x)
    }

    pub fn exp_t(&self) -> Result<Tensor<E>> {
        unary_op(self, |x| x.exp(), |_, o| o)
    }

    pub fn sqrt_t(&self) -> Result<Tensor<E>> {
        if self.data().iter().any(|v| *v < E::zero()) {
            return Err(Error::usage("sqrt of negative value"));
        }
        let half = E::from_f64_val(0.5);
        unary_op(self, |x| x.sqrt(), move |_, o| {
            if o > E::zero() {
                half / o
            } else {
                E::zero()
            }
        })
    }

    pub fn abs_t(&self) -> Result<Tensor<E>> {
        unary_op(
            self,
            |x| x.abs(),
            |x, _| {
                if x > E::zero() {
                    E::one()
                } else if x < E::zero() {
                    E::zero() - E::one()
                } else {
                    E::zero()
                }
            },
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor<E>> {
        unary_op(self, sigmoid_scalar, |_, o| o * (E::one() - o))
    }

    pub fn tanh_t(&self) -> Result<Tensor<E>> {
        unary_op(self, |x| x.tanh(), |_, o| E::one() - o * o)
    }

    /// Softplus with derivative `sigmoid(x)`.
    pub fn softplus(&self) -> Result<Tensor<E>> {
        unary_op(self, softplus_scalar, |x, _| sigmoid_scalar(x))
    }

    /// PReLU with a learnable per-channel slope. `alpha` has shape `[C]`
    /// where `C = self.shape()[channel_axis]`; both `x` and `alpha` receive
    /// gradients.
    pub fn prelu(&self, alpha: &Tensor<E>, channel_axis: usize) -> Result<Tensor<E>> {
        if channel_axis >= self.shape().len() {
            return Err(Error::dim(format!(
                "prelu channel axis {} out of range for shape {:?}",
                channel_axis,
                self.shape()
            )));
        }
        let c = self.shape()[channel_axis];
        if alpha.shape() != [c] {
            return Err(Error::dim(format!(
                "prelu alpha shape {:?}, expected [{}]",
                alpha.shape(),
                c
            )));
        }
        let stride = strides_of(self.shape())[channel_axis];
        let chan = move |i: usize| (i / stride) % c;
        let xv = self.data_arc();
        let av = alpha.data_arc();
        let out: Vec<E> = xv
            .iter()
            .enumerate()
            .map(|(i, &x)| if x >= E::zero() { x } else { av[chan(i)] * x })
            .collect();
        record(&[self, alpha], self.shape().to_vec(), out, move |dy, ctx| {
            if let Some(gx) = ctx.grad(0) {
                for i in 0..dy.len() {
                    let d = if xv[i] >= E::zero() { E::one() } else { av[chan(i)] };
                    gx[i] += dy[i] * d;
                }
            }
            if let Some(ga) = ctx.grad(1) {
                for i in 0..dy.len() {
                    if xv[i] < E::zero() {
                        ga[chan(i)] += dy[i] * xv[i];
                    }
                }
            }
        })
    }
}
