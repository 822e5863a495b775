//! Training objectives and the frozen proxy networks standing in for
//! pretrained perceptual/identity backbones.
//!
//! Both proxies are deterministic functions of a seed, never trained, and
//! differentiable w.r.t. their image inputs only.

use crate::error::{Error, Result};
use crate::init::{kaiming, rng_from_seed};
use crate::tensor::{Padding, Tensor};

/// Weights of the pixel/perceptual/identity terms shared by both branch
/// objectives.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub pixel: f64,
    pub perceptual: f64,
    pub identity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { pixel: 1.0, perceptual: 0.8, identity: 0.1 }
    }
}

pub fn loss_l2(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("l2 shapes {:?} vs {:?}", a.shape(), b.shape())));
    }
    a.sub(b)?.square()?.mean_all()
}

pub fn loss_smooth_l1(a: &Tensor, b: &Tensor, beta: f64) -> Result<Tensor> {
    a.smooth_l1_mean(b, beta)
}

/// Random-feature perceptual distance: three strided conv layers evaluated
/// at two scales; the loss is the mean squared feature difference, summed
/// over layers and scales. Zero iff the two inputs have identical features.
pub struct PerceptualProxy {
    pub seed: u64,
    convs: Vec<Tensor>,
    alphas: Vec<Tensor>,
}

impl PerceptualProxy {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed ^ 0x70_65_72_63);
        let dims = [(3usize, 8usize), (8, 16), (16, 16)];
        let convs = dims.iter().map(|&(ci, co)| kaiming(vec![co, ci, 3, 3], ci * 9, &mut rng)).collect();
        let alphas = dims.iter().map(|&(_, co)| Tensor::full(vec![co], 0.2)).collect();
        PerceptualProxy { seed, convs, alphas }
    }

    /// Feature maps after each layer for one `[3,H,W]` image.
    fn features(&self, img: &Tensor) -> Result<Vec<Tensor>> {
        let s = img.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::dim(format!("perceptual proxy wants [3,H,W], got {:?}", s)));
        }
        let mut x = img.reshape(vec![1, 3, s[1], s[2]])?;
        let mut out = Vec::with_capacity(self.convs.len());
        for (w, a) in self.convs.iter().zip(&self.alphas) {
            x = x.conv2d(w, 2, Padding::Zero)?.prelu(a, 1)?;
            out.push(x.clone());
        }
        Ok(out)
    }

    pub fn distance(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Error::dim(format!(
                "perceptual distance shapes {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut total: Option<Tensor> = None;
        let scales = |img: &Tensor| -> Result<[Tensor; 2]> {
            let s = img.shape().to_vec();
            let four = img.reshape(vec![1, 3, s[1], s[2]])?;
            let half = four.avg_pool2d(2)?.reshape(vec![3, s[1] / 2, s[2] / 2])?;
            Ok([img.clone(), half])
        };
        for (sa, sb) in scales(a)?.iter().zip(scales(b)?.iter()) {
            for (fa, fb) in self.features(sa)?.iter().zip(self.features(sb)?.iter()) {
                let d = fa.sub(fb)?.square()?.mean_all()?;
                total = Some(match total {
                    None => d,
                    Some(t) => t.add(&d)?,
                });
            }
        }
        total.expect("at least one layer").scale(1.0 / 6.0)
    }
}

/// Identity proxy: a frozen conv embedder ending in global average pooling
/// and L2 normalization. The identity loss is `1 - <e(a), e(b)>`, zero iff
/// the embeddings coincide.
pub struct IdentityProxy {
    pub seed: u64,
    w1: Tensor,
    a1: Tensor,
    w2: Tensor,
    a2: Tensor,
}

impl IdentityProxy {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed ^ 0x69_64_65_6e);
        IdentityProxy {
            seed,
            w1: kaiming(vec![16, 3, 3, 3], 27, &mut rng),
            a1: Tensor::full(vec![16], 0.2),
            w2: kaiming(vec![32, 16, 3, 3], 144, &mut rng),
            a2: Tensor::full(vec![32], 0.2),
        }
    }

    /// Unit-norm 32-d embedding of a `[3,H,W]` image.
    pub fn embed(&self, img: &Tensor) -> Result<Tensor> {
        let s = img.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::dim(format!("identity proxy wants [3,H,W], got {:?}", s)));
        }
        let x = img.reshape(vec![1, 3, s[1], s[2]])?;
        let x = x.conv2d(&self.w1, 2, Padding::Zero)?.prelu(&self.a1, 1)?;
        let x = x.conv2d(&self.w2, 2, Padding::Zero)?.prelu(&self.a2, 1)?;
        // Global average pool to [32].
        let e = x.mean_axis(3)?.mean_axis(2)?.reshape(vec![32])?;
        let norm = e.square()?.sum_all()?.add_scalar(1e-8)?.sqrt_t()?;
        e.div(&norm)
    }

    pub fn distance(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let dot = self.embed(a)?.mul(&self.embed(b)?)?.sum_all()?;
        Tensor::scalar(1.0).sub(&dot)
    }
}

/// Frozen proxy pair used across training and evaluation.
pub struct Proxies {
    pub perceptual: PerceptualProxy,
    pub identity: IdentityProxy,
}

impl Proxies {
    pub fn new(seed: u64) -> Self {
        Proxies { perceptual: PerceptualProxy::new(seed), identity: IdentityProxy::new(seed) }
    }
}

/// First-branch objective on the initial reconstruction: a weighted sum of
/// pixel L2, perceptual, and identity terms.
pub fn loss_first(x: &Tensor, y_hat: &Tensor, w: &LossWeights, p: &Proxies) -> Result<Tensor> {
    let pix = loss_l2(x, y_hat)?.scale(w.pixel)?;
    let perc = p.perceptual.distance(x, y_hat)?.scale(w.perceptual)?;
    let id = p.identity.distance(x, y_hat)?.scale(w.identity)?;
    pix.add(&perc)?.add(&id)
}

/// Second-branch objective on the refined reconstruction; the pixel term is
/// smooth-L1 (beta = 1), which tolerates the larger early residuals.
pub fn loss_second(x: &Tensor, y: &Tensor, w: &LossWeights, p: &Proxies) -> Result<Tensor> {
    let pix = loss_smooth_l1(x, y, 1.0)?.scale(w.pixel)?;
    let perc = p.perceptual.distance(x, y)?.scale(w.perceptual)?;
    let id = p.identity.distance(x, y)?.scale(w.identity)?;
    pix.add(&perc)?.add(&id)
}

/// Total two-branch objective: the branch losses add; no balancing schedule.
pub fn loss_total(
    x: &Tensor,
    y_hat: &Tensor,
    y: &Tensor,
    w: &LossWeights,
    p: &Proxies,
) -> Result<Tensor> {
    loss_first(x, y_hat, w, p)?.add(&loss_second(x, y, w, p)?)
}
