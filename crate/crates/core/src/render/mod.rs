//! Neural volume renderer: tri-plane field -> decoder MLP -> quadrature ->
//! super-resolution.

mod composite;
#[cfg(test)]
mod tests;

pub use composite::{composite, Composited};

use rand::Rng;

use crate::camera::Camera;
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::init::{kaiming, randn, SeedRng};
use crate::tensor::{Padding, Tensor};
use crate::triplane::TriPlane;

/// Quadrature and image-size knobs.
#[derive(Clone, Copy, Debug)]
pub struct RenderConfig {
    /// Samples per ray.
    pub n_samples: usize,
    /// Feature/raw image resolution.
    pub low_res: usize,
    /// Super-resolved output resolution (`2 * low_res`).
    pub final_res: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { n_samples: 48, low_res: 32, final_res: 64 }
    }
}

/// Two hidden layers with PReLU, then a softplus density head and a feature
/// head whose first 3 channels pass through a sigmoid (the raw RGB).
#[derive(Clone)]
pub struct DecoderMlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub a1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub a2: Tensor,
    pub w_sigma: Tensor,
    pub b_sigma: Tensor,
    pub w_feat: Tensor,
    pub b_feat: Tensor,
}

impl DecoderMlp {
    pub fn new(cfg: &ModelConfig, rng: &mut SeedRng) -> Self {
        let (c, h, f) = (cfg.plane_channels, cfg.mlp_hidden, cfg.feat_channels);
        DecoderMlp {
            w1: kaiming(vec![c, h], c, rng),
            b1: Tensor::zeros(vec![h]),
            a1: Tensor::full(vec![h], 0.25),
            w2: kaiming(vec![h, h], h, rng),
            b2: Tensor::zeros(vec![h]),
            a2: Tensor::full(vec![h], 0.25),
            w_sigma: randn(vec![h, 1], 0.2, rng),
            // Slight positive density bias so early training has mass to move.
            b_sigma: Tensor::full(vec![1], 0.5),
            w_feat: randn(vec![h, f], 0.2, rng),
            b_feat: Tensor::zeros(vec![f]),
        }
    }

    /// Named parameters in a fixed order (checkpointing, optimizers).
    pub fn params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("mlp.w1".into(), self.w1.clone()),
            ("mlp.b1".into(), self.b1.clone()),
            ("mlp.a1".into(), self.a1.clone()),
            ("mlp.w2".into(), self.w2.clone()),
            ("mlp.b2".into(), self.b2.clone()),
            ("mlp.a2".into(), self.a2.clone()),
            ("mlp.w_sigma".into(), self.w_sigma.clone()),
            ("mlp.b_sigma".into(), self.b_sigma.clone()),
            ("mlp.w_feat".into(), self.w_feat.clone()),
            ("mlp.b_feat".into(), self.b_feat.clone()),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.a1,
            &mut self.w2,
            &mut self.b2,
            &mut self.a2,
            &mut self.w_sigma,
            &mut self.b_sigma,
            &mut self.w_feat,
            &mut self.b_feat,
        ]
    }

    /// `features [M,C] -> (sigma [M,1], feats [M,F])` with RGB in the first
    /// 3 feature channels.
    pub fn decode(&self, features: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = features.matmul(&self.w1)?.add(&self.b1)?.prelu(&self.a1, 1)?;
        let h = h.matmul(&self.w2)?.add(&self.b2)?.prelu(&self.a2, 1)?;
        let sigma = h.matmul(&self.w_sigma)?.add(&self.b_sigma)?.softplus()?;
        let raw = h.matmul(&self.w_feat)?.add(&self.b_feat)?;
        let f = raw.shape()[1];
        let rgb = raw.narrow(1, 0, 3)?.sigmoid()?;
        let feats = if f > 3 {
            Tensor::concat(1, &[&rgb, &raw.narrow(1, 3, f - 3)?])?
        } else {
            rgb
        };
        Ok((sigma, feats))
    }
}

/// Super-resolution head: conv -> pixel_shuffle(2) -> conv -> sigmoid.
#[derive(Clone)]
pub struct SrParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl SrParams {
    pub fn new(cfg: &ModelConfig, rng: &mut SeedRng) -> Self {
        let (f, mid) = (cfg.feat_channels, cfg.sr_mid);
        SrParams {
            w1: kaiming(vec![4 * mid, f, 3, 3], f * 9, rng),
            b1: Tensor::zeros(vec![4 * mid]),
            w2: kaiming(vec![3, mid, 3, 3], mid * 9, rng),
            b2: Tensor::zeros(vec![3]),
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("sr.w1".into(), self.w1.clone()),
            ("sr.b1".into(), self.b1.clone()),
            ("sr.w2".into(), self.w2.clone()),
            ("sr.b2".into(), self.b2.clone()),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// `[1,F,low,low] -> [1,3,2*low,2*low]` in (0,1).
    pub fn super_resolve(&self, feat: &Tensor) -> Result<Tensor> {
        let b1 = self.b1.reshape(vec![self.b1.numel(), 1, 1])?;
        let b2 = self.b2.reshape(vec![3, 1, 1])?;
        let y = feat.conv2d(&self.w1, 1, Padding::Zero)?.add(&b1)?;
        let y = y.pixel_shuffle(2)?;
        let y = y.conv2d(&self.w2, 1, Padding::Zero)?.add(&b2)?;
        y.sigmoid()
    }
}

/// How sample positions are placed within each ray segment.
pub enum RaySampling<'a> {
    /// Deterministic segment midpoints (evaluation, inversion).
    Midpoint,
    /// Stratified: one uniform draw per segment (training).
    Jitter(&'a mut SeedRng),
}

/// A rendered feature image plus quadrature diagnostics.
pub struct FeatureImage {
    /// `[1, F, low, low]`; channels 0..3 are the raw RGB.
    pub feat: Tensor,
    /// Per-sample compositing weights `[R, n]` (detached).
    pub weights: Tensor,
    /// Residual transmittance per ray `[R]`.
    pub t_final: Tensor,
}

/// March `cfg.low_res^2` rays through the tri-plane field and composite.
///
/// Rays cover `[radius - bound*sqrt(3), radius + bound*sqrt(3)]`, the orbit
/// distances that can intersect the scene box. Differentiable w.r.t. the
/// planes and decoder parameters.
pub fn render_feature_image(
    tp: &TriPlane,
    mlp: &DecoderMlp,
    cam: &Camera,
    cfg: &RenderConfig,
    sampling: RaySampling<'_>,
) -> Result<FeatureImage> {
    let res = cfg.low_res;
    let n = cfg.n_samples;
    if n == 0 || res == 0 {
        return Err(Error::usage("render needs at least one sample and one pixel"));
    }
    let rays = cam.rays(res)?;
    let r = rays.len();
    let span = tp.bound * 3f64.sqrt();
    let near = cam.radius - span;
    let far = cam.radius + span;
    if near <= 0.0 {
        return Err(Error::usage("camera orbit intersects the scene box"));
    }
    let dt = (far - near) / n as f64;

    // Sample positions, flattened [R*n, 3]; offsets within each segment.
    let mut offsets = vec![0.5f64; r * n];
    if let RaySampling::Jitter(rng) = sampling {
        for o in offsets.iter_mut() {
            *o = rng.random::<f64>();
        }
    }
    let mut points = Vec::with_capacity(r * n * 3);
    for (ri, ray) in rays.iter().enumerate() {
        for k in 0..n {
            let t = near + (k as f64 + offsets[ri * n + k]) * dt;
            points.push((ray.origin[0] + t * ray.dir[0]) as f32);
            points.push((ray.origin[1] + t * ray.dir[1]) as f32);
            points.push((ray.origin[2] + t * ray.dir[2]) as f32);
        }
    }
    let points = Tensor::from_vec(vec![r * n, 3], points)?;

    let features = tp.sample(&points)?;
    let (sigma, feats) = mlp.decode(&features)?;
    let f = feats.shape()[1];
    let sigmas = sigma.reshape(vec![r, n])?;
    let colors = feats.reshape(vec![r, n, f])?;
    let deltas = Tensor::full(vec![r, n], dt as f32);
    let out = composite(&sigmas, &colors, &deltas)?;

    // [R,F] -> [F,R] -> [1,F,res,res]
    let feat = out.color.transpose2d()?.reshape(vec![1, f, res, res])?;
    Ok(FeatureImage { feat, weights: out.weights.detach(), t_final: out.t_final })
}

/// Full render: `(final [3, final_res, final_res], raw [3, low, low])`.
pub fn render(
    tp: &TriPlane,
    mlp: &DecoderMlp,
    sr: &SrParams,
    cam: &Camera,
    cfg: &RenderConfig,
    sampling: RaySampling<'_>,
) -> Result<(Tensor, Tensor)> {
    if cfg.final_res != 2 * cfg.low_res {
        return Err(Error::config(format!(
            "final_res {} must be twice low_res {}",
            cfg.final_res, cfg.low_res
        )));
    }
    let fi = render_feature_image(tp, mlp, cam, cfg, sampling)?;
    let raw = fi
        .feat
        .narrow(1, 0, 3)?
        .reshape(vec![3, cfg.low_res, cfg.low_res])?;
    let hi = sr
        .super_resolve(&fi.feat)?
        .reshape(vec![3, cfg.final_res, cfg.final_res])?;
    Ok((hi, raw))
}
