//! Feed-forward inversion networks.
//!
//! Two branches: a latent encoder predicting an offset from the mean
//! extended latent, and a U-Net predicting tri-plane feature offsets from
//! the first branch's reconstruction error. Both are built so the untrained
//! (zero-weight / zero-final-layer) network is exactly the identity on its
//! branch: the latent encoder yields `w_bar`, the offset net yields zeros.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::init::{kaiming, SeedRng};
use crate::render::{render, DecoderMlp, RaySampling, RenderConfig, SrParams};
use crate::tensor::{Padding, Tensor};
use crate::triplane::TriPlane;

use crate::camera::Camera;
use crate::generator::GeneratorParams;

/// Backbone channel plan of the latent encoder, input resolution 64.
const PHI_STAGES: [(usize, usize); 4] = [(3, 16), (16, 32), (32, 48), (48, 64)];
/// map2style head conv width (spatial 4 -> 2 before pooling).
const PHI_HEAD: usize = 64;

/// First-branch encoder: image -> offset from the mean latent, one
/// map2style head per latent row.
pub struct LatentEncoder {
    pub convs: Vec<Tensor>,
    pub conv_b: Vec<Tensor>,
    pub alphas: Vec<Tensor>,
    pub head_convs: Vec<Tensor>,
    pub head_conv_b: Vec<Tensor>,
    pub head_alphas: Vec<Tensor>,
    pub head_lin: Vec<Tensor>,
    pub head_lin_b: Vec<Tensor>,
    k: usize,
    d: usize,
}

impl LatentEncoder {
    pub fn new(cfg: &ModelConfig, rng: &mut SeedRng) -> Self {
        let mut convs = Vec::new();
        let mut conv_b = Vec::new();
        let mut alphas = Vec::new();
        for &(ci, co) in PHI_STAGES.iter() {
            convs.push(kaiming(vec![co, ci, 3, 3], ci * 9, rng));
            conv_b.push(Tensor::zeros(vec![co]));
            alphas.push(Tensor::full(vec![co], 0.25));
        }
        let cl = PHI_STAGES[PHI_STAGES.len() - 1].1;
        let mut head_convs = Vec::new();
        let mut head_conv_b = Vec::new();
        let mut head_alphas = Vec::new();
        let mut head_lin = Vec::new();
        let mut head_lin_b = Vec::new();
        for _ in 0..cfg.k {
            head_convs.push(kaiming(vec![PHI_HEAD, cl, 3, 3], cl * 9, rng));
            head_conv_b.push(Tensor::zeros(vec![PHI_HEAD]));
            head_alphas.push(Tensor::full(vec![PHI_HEAD], 0.25));
            // Small head init keeps early predictions near w_bar.
            head_lin.push(kaiming::<f32>(vec![PHI_HEAD, cfg.d], PHI_HEAD, rng).scale(0.1).unwrap());
            head_lin_b.push(Tensor::zeros(vec![cfg.d]));
        }
        LatentEncoder {
            convs,
            conv_b,
            alphas,
            head_convs,
            head_conv_b,
            head_alphas,
            head_lin,
            head_lin_b,
            k: cfg.k,
            d: cfg.d,
        }
    }

    /// All-zero weights: the offset vanishes identically, so the predicted
    /// latent is exactly the mean.
    pub fn zeroed(cfg: &ModelConfig) -> Self {
        let mut rng = crate::init::rng_from_seed(0);
        let mut enc = LatentEncoder::new(cfg, &mut rng);
        let mut zero = |t: &Tensor| Tensor::zeros(t.shape().to_vec());
        enc = enc.map_tensors(&mut zero);
        enc
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for i in 0..self.convs.len() {
            out.push((format!("phi.s{i}.w"), self.convs[i].clone()));
            out.push((format!("phi.s{i}.b"), self.conv_b[i].clone()));
            out.push((format!("phi.s{i}.a"), self.alphas[i].clone()));
        }
        for i in 0..self.k {
            out.push((format!("phi.h{i}.w"), self.head_convs[i].clone()));
            out.push((format!("phi.h{i}.b"), self.head_conv_b[i].clone()));
            out.push((format!("phi.h{i}.a"), self.head_alphas[i].clone()));
            out.push((format!("phi.h{i}.lin"), self.head_lin[i].clone()));
            out.push((format!("phi.h{i}.lin_b"), self.head_lin_b[i].clone()));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for ((w, b), a) in self.convs.iter_mut().zip(self.conv_b.iter_mut()).zip(self.alphas.iter_mut()) {
            out.push(w);
            out.push(b);
            out.push(a);
        }
        let heads = self
            .head_convs
            .iter_mut()
            .zip(self.head_conv_b.iter_mut())
            .zip(self.head_alphas.iter_mut())
            .zip(self.head_lin.iter_mut())
            .zip(self.head_lin_b.iter_mut());
        for ((((w, b), a), lin), lin_b) in heads {
            out.push(w);
            out.push(b);
            out.push(a);
            out.push(lin);
            out.push(lin_b);
        }
        out
    }

    pub fn map_tensors(&self, f: &mut dyn FnMut(&Tensor) -> Tensor) -> LatentEncoder {
        LatentEncoder {
            convs: self.convs.iter().map(&mut *f).collect(),
            conv_b: self.conv_b.iter().map(&mut *f).collect(),
            alphas: self.alphas.iter().map(&mut *f).collect(),
            head_convs: self.head_convs.iter().map(&mut *f).collect(),
            head_conv_b: self.head_conv_b.iter().map(&mut *f).collect(),
            head_alphas: self.head_alphas.iter().map(&mut *f).collect(),
            head_lin: self.head_lin.iter().map(&mut *f).collect(),
            head_lin_b: self.head_lin_b.iter().map(&mut *f).collect(),
            k: self.k,
            d: self.d,
        }
    }

    /// Latent offset `[k,d]` for one `[3,H,W]` image.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::dim(format!("latent encoder wants [3,H,W], got {s:?}")));
        }
        let mut h = x.reshape(vec![1, 3, s[1], s[2]])?;
        for i in 0..self.convs.len() {
            let co = self.convs[i].shape()[0];
            h = h
                .conv2d(&self.convs[i], 2, Padding::Zero)?
                .add(&self.conv_b[i].reshape(vec![co, 1, 1])?)?
                .prelu(&self.alphas[i], 1)?;
        }
        let mut rows = Vec::with_capacity(self.k);
        for i in 0..self.k {
            let hh = h
                .conv2d(&self.head_convs[i], 2, Padding::Zero)?
                .add(&self.head_conv_b[i].reshape(vec![PHI_HEAD, 1, 1])?)?
                .prelu(&self.head_alphas[i], 1)?;
            let pooled = hh.mean_axis(3)?.mean_axis(2)?.reshape(vec![1, PHI_HEAD])?;
            rows.push(pooled.matmul(&self.head_lin[i])?.add(&self.head_lin_b[i])?);
        }
        let refs: Vec<&Tensor> = rows.iter().collect();
        Tensor::concat(0, &refs)
    }

    /// `w_hat = w_bar + phi(x)`.
    pub fn encode_latent(&self, x: &Tensor, w_bar: &Tensor) -> Result<Tensor> {
        if w_bar.shape() != [self.k, self.d] {
            return Err(Error::dim(format!(
                "mean latent must be [{},{}], got {:?}",
                self.k,
                self.d,
                w_bar.shape()
            )));
        }
        self.forward(x)?.add(w_bar)
    }
}

/// Offset U-Net channel plan: three stride-2 encoder stages over the
/// 6-channel (reconstruction, residual) input.
const PSI_STAGES: [(usize, usize); 3] = [(6, 16), (16, 32), (32, 48)];

struct PsiStage {
    w: Tensor,
    b: Tensor,
    a: Tensor,
}

impl PsiStage {
    fn new(ci: usize, co: usize, rng: &mut SeedRng) -> Self {
        PsiStage {
            w: kaiming(vec![co, ci, 3, 3], ci * 9, rng),
            b: Tensor::zeros(vec![co]),
            a: Tensor::full(vec![co], 0.25),
        }
    }

    fn apply(&self, x: &Tensor, stride: usize) -> Result<Tensor> {
        let co = self.w.shape()[0];
        x.conv2d(&self.w, stride, Padding::Zero)?
            .add(&self.b.reshape(vec![co, 1, 1])?)?
            .prelu(&self.a, 1)
    }
}

/// Second-branch network: (first reconstruction, input residual) ->
/// tri-plane feature offsets. The final 1x1 projection starts at zero, so
/// an untrained net leaves the tri-plane untouched.
pub struct OffsetUnet {
    enc: Vec<PsiStage>,
    /// Sub-pixel upsampling convs (channels x4, then shuffle).
    up: Vec<PsiStage>,
    /// Post-concat fusion convs.
    fuse: Vec<PsiStage>,
    final_w: Tensor,
    final_b: Tensor,
    plane_channels: usize,
    plane_res: usize,
    bound: f64,
}

impl OffsetUnet {
    pub fn new(cfg: &ModelConfig, rng: &mut SeedRng) -> Self {
        let enc: Vec<PsiStage> = PSI_STAGES.iter().map(|&(ci, co)| PsiStage::new(ci, co, rng)).collect();
        // Decoder mirrors the top two encoder stages; the output grid is one
        // halving below the input image (64 -> 32 = plane_res).
        let up = vec![PsiStage::new(48, 32 * 4, rng), PsiStage::new(32, 16 * 4, rng)];
        let fuse = vec![PsiStage::new(64, 32, rng), PsiStage::new(32, 16, rng)];
        OffsetUnet {
            enc,
            up,
            fuse,
            final_w: Tensor::zeros(vec![3 * cfg.plane_channels, 16, 1, 1]),
            final_b: Tensor::zeros(vec![3 * cfg.plane_channels]),
            plane_channels: cfg.plane_channels,
            plane_res: cfg.plane_res,
            bound: cfg.bound,
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        let push = |prefix: String, s: &PsiStage, out: &mut Vec<(String, Tensor)>| {
            out.push((format!("{prefix}.w"), s.w.clone()));
            out.push((format!("{prefix}.b"), s.b.clone()));
            out.push((format!("{prefix}.a"), s.a.clone()));
        };
        for (i, s) in self.enc.iter().enumerate() {
            push(format!("psi.e{i}"), s, &mut out);
        }
        for (i, s) in self.up.iter().enumerate() {
            push(format!("psi.u{i}"), s, &mut out);
        }
        for (i, s) in self.fuse.iter().enumerate() {
            push(format!("psi.f{i}"), s, &mut out);
        }
        out.push(("psi.final_w".into(), self.final_w.clone()));
        out.push(("psi.final_b".into(), self.final_b.clone()));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for s in self.enc.iter_mut().chain(self.up.iter_mut()).chain(self.fuse.iter_mut()) {
            out.push(&mut s.w);
            out.push(&mut s.b);
            out.push(&mut s.a);
        }
        out.push(&mut self.final_w);
        out.push(&mut self.final_b);
        out
    }

    pub fn map_tensors(&self, f: &mut dyn FnMut(&Tensor) -> Tensor) -> OffsetUnet {
        let stage = |s: &PsiStage, f: &mut dyn FnMut(&Tensor) -> Tensor| PsiStage {
            w: f(&s.w),
            b: f(&s.b),
            a: f(&s.a),
        };
        OffsetUnet {
            enc: self.enc.iter().map(|s| stage(s, f)).collect(),
            up: self.up.iter().map(|s| stage(s, f)).collect(),
            fuse: self.fuse.iter().map(|s| stage(s, f)).collect(),
            final_w: f(&self.final_w),
            final_b: f(&self.final_b),
            plane_channels: self.plane_channels,
            plane_res: self.plane_res,
            bound: self.bound,
        }
    }

    /// Tri-plane offsets for (first reconstruction `y_hat`, residual
    /// `x - y_hat`), both `[3,H,W]` with `H = W = 2 * plane_res`.
    pub fn forward(&self, y_hat: &Tensor, residual: &Tensor) -> Result<TriPlane> {
        let s = y_hat.shape();
        if s != residual.shape() || s.len() != 3 || s[0] != 3 {
            return Err(Error::dim(format!(
                "offset net wants matching [3,H,W], got {s:?} and {:?}",
                residual.shape()
            )));
        }
        if s[1] != 2 * self.plane_res || s[2] != 2 * self.plane_res {
            return Err(Error::dim(format!(
                "offset net input must be {0}x{0} for {1}x{1} planes",
                2 * self.plane_res,
                self.plane_res
            )));
        }
        let x = Tensor::concat(0, &[y_hat, residual])?.reshape(vec![1, 6, s[1], s[2]])?;
        let e1 = self.enc[0].apply(&x, 2)?;
        let e2 = self.enc[1].apply(&e1, 2)?;
        let e3 = self.enc[2].apply(&e2, 2)?;
        let d2 = self.up[0].apply(&e3, 1)?.pixel_shuffle(2)?;
        let d2 = self.fuse[0].apply(&Tensor::concat(1, &[&d2, &e2])?, 1)?;
        let d1 = self.up[1].apply(&d2, 1)?.pixel_shuffle(2)?;
        let d1 = self.fuse[1].apply(&Tensor::concat(1, &[&d1, &e1])?, 1)?;
        let c3 = 3 * self.plane_channels;
        let out = d1
            .conv2d(&self.final_w, 1, Padding::Zero)?
            .add(&self.final_b.reshape(vec![c3, 1, 1])?)?;
        let stacked = out.reshape(vec![3, self.plane_channels, self.plane_res, self.plane_res])?;
        TriPlane::from_stacked(&stacked, self.bound)
    }
}

/// Everything the two-branch forward pass produces.
pub struct Inversion {
    pub w_hat: Tensor,
    pub tri_initial: TriPlane,
    pub tri_refined: TriPlane,
    /// First-branch reconstruction (super-resolved / raw).
    pub y_first: Tensor,
    pub y_first_raw: Tensor,
    /// Second-branch reconstruction (super-resolved / raw).
    pub y_second: Tensor,
    pub y_second_raw: Tensor,
}

/// Full two-branch inversion of one image at a known camera:
/// `w_hat = w_bar + phi(x)`, render, predict tri-plane offsets from the
/// residual, render again.
#[allow(clippy::too_many_arguments)]
pub fn invert_forward(
    x: &Tensor,
    cam: &Camera,
    phi: &LatentEncoder,
    psi: &OffsetUnet,
    gen: &GeneratorParams,
    mlp: &DecoderMlp,
    sr: &SrParams,
    w_bar: &Tensor,
    rcfg: &RenderConfig,
) -> Result<Inversion> {
    let w_hat = phi.encode_latent(x, w_bar)?;
    let tri_initial = gen.synthesize(&w_hat)?;
    let (y_first, y_first_raw) = render(&tri_initial, mlp, sr, cam, rcfg, RaySampling::Midpoint)?;
    let residual = x.sub(&y_first)?;
    let delta = psi.forward(&y_first, &residual)?;
    let tri_refined = tri_initial.apply_offsets(&delta)?;
    let (y_second, y_second_raw) = render(&tri_refined, mlp, sr, cam, rcfg, RaySampling::Midpoint)?;
    Ok(Inversion { w_hat, tri_initial, tri_refined, y_first, y_first_raw, y_second, y_second_raw })
}

/// Camera-conditioned refinement at inference time: re-run the offset net
/// on the current reconstruction's residual and add the fresh offsets to
/// the INITIAL tri-plane (they never accumulate), then re-render. Returns
/// the reconstruction after `rounds` extra passes and the final tri-plane.
#[allow(clippy::too_many_arguments)]
pub fn cttr_refine(
    x: &Tensor,
    cam: &Camera,
    inv: &Inversion,
    psi: &OffsetUnet,
    mlp: &DecoderMlp,
    sr: &SrParams,
    rcfg: &RenderConfig,
    rounds: usize,
) -> Result<(Tensor, TriPlane)> {
    let mut y = inv.y_second.clone();
    let mut tri = inv.tri_refined.clone();
    for _ in 0..rounds {
        let residual = x.sub(&y)?;
        let delta = psi.forward(&y, &residual)?;
        tri = inv.tri_initial.apply_offsets(&delta)?;
        let (y_next, _) = render(&tri, mlp, sr, cam, rcfg, RaySampling::Midpoint)?;
        y = y_next;
    }
    Ok((y, tri))
}
