//! Latent-to-tri-plane generator.
//!
//! A mapping MLP turns `z` into `k` per-layer latent rows; a style-modulated
//! conv stack grows a learned 4x4 constant to the three feature planes. The
//! generator is pretrained as an auto-decoder (per-scene latents plus shared
//! weights, pure reconstruction loss, no adversary).

use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::init::{kaiming, randn, rng_from_seed, SeedRng};
use crate::losses::Proxies;
use crate::render::{render, DecoderMlp, RaySampling, RenderConfig, SrParams};
use crate::scenes::Dataset;
use crate::tensor::{Padding, Tape, Tensor};
use crate::triplane::TriPlane;

/// One synthesis stage: per-channel style scale, 3x3 conv, optional 2x
/// sub-pixel upsample, PReLU.
#[derive(Clone)]
pub struct SynthLayer {
    pub style_w: Tensor,
    pub style_b: Tensor,
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub alpha: Tensor,
    pub up: bool,
}

#[derive(Clone)]
pub struct GeneratorParams {
    pub map_w1: Tensor,
    pub map_b1: Tensor,
    pub map_a1: Tensor,
    pub map_w2: Tensor,
    pub map_b2: Tensor,
    pub const_input: Tensor,
    pub layers: Vec<SynthLayer>,
    pub head_w: Tensor,
    pub head_b: Tensor,
    cfg: ModelConfig,
}

/// Mapping-net hidden width.
const MAP_HIDDEN: usize = 64;
/// Synthesis trunk channels.
const TRUNK: usize = 32;

impl GeneratorParams {
    pub fn new(cfg: &ModelConfig, rng: &mut SeedRng) -> Result<Self> {
        if cfg.plane_res % 8 != 0 || cfg.plane_res < 8 {
            return Err(Error::config(format!(
                "plane_res {} must be a multiple of 8 (three upsample stages from 4x4)",
                cfg.plane_res
            )));
        }
        // Three upsampling stages fix res = 32; reject other sizes early
        // rather than silently rendering the wrong resolution.
        if cfg.plane_res != 32 {
            return Err(Error::config(format!(
                "generator synthesis stack produces 32x32 planes, config wants {}",
                cfg.plane_res
            )));
        }
        if cfg.k != 6 {
            return Err(Error::config(format!("synthesis stack has 6 modulated layers, config wants k={}", cfg.k)));
        }
        let mut layers = Vec::with_capacity(cfg.k);
        for i in 0..cfg.k {
            let up = i % 2 == 0;
            let cout = if up { 4 * TRUNK } else { TRUNK };
            layers.push(SynthLayer {
                style_w: randn(vec![cfg.d, TRUNK], (1.0 / cfg.d as f64).sqrt() * 0.25, rng),
                style_b: Tensor::zeros(vec![TRUNK]),
                conv_w: kaiming(vec![cout, TRUNK, 3, 3], TRUNK * 9, rng),
                conv_b: Tensor::zeros(vec![cout]),
                alpha: Tensor::full(vec![TRUNK], 0.25),
                up,
            });
        }
        Ok(GeneratorParams {
            map_w1: kaiming(vec![cfg.dz, MAP_HIDDEN], cfg.dz, rng),
            map_b1: Tensor::zeros(vec![MAP_HIDDEN]),
            map_a1: Tensor::full(vec![MAP_HIDDEN], 0.25),
            map_w2: randn(vec![MAP_HIDDEN, cfg.k * cfg.d], (1.0 / MAP_HIDDEN as f64).sqrt(), rng),
            map_b2: Tensor::zeros(vec![cfg.k * cfg.d]),
            const_input: randn(vec![TRUNK, 4, 4], 1.0, rng),
            layers,
            head_w: randn(vec![3 * cfg.plane_channels, TRUNK, 3, 3], (0.5 / (TRUNK * 9) as f64).sqrt(), rng),
            head_b: Tensor::zeros(vec![3 * cfg.plane_channels]),
            cfg: cfg.clone(),
        })
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Mapping + synthesis parameters, fixed order.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.params_mapping();
        out.extend(self.params_synthesis());
        out
    }

    pub fn params_mapping(&self) -> Vec<(String, Tensor)> {
        vec![
            ("gen.map_w1".into(), self.map_w1.clone()),
            ("gen.map_b1".into(), self.map_b1.clone()),
            ("gen.map_a1".into(), self.map_a1.clone()),
            ("gen.map_w2".into(), self.map_w2.clone()),
            ("gen.map_b2".into(), self.map_b2.clone()),
        ]
    }

    pub fn params_synthesis(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("gen.const".to_string(), self.const_input.clone())];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("gen.l{i}.style_w"), l.style_w.clone()));
            out.push((format!("gen.l{i}.style_b"), l.style_b.clone()));
            out.push((format!("gen.l{i}.conv_w"), l.conv_w.clone()));
            out.push((format!("gen.l{i}.conv_b"), l.conv_b.clone()));
            out.push((format!("gen.l{i}.alpha"), l.alpha.clone()));
        }
        out.push(("gen.head_w".into(), self.head_w.clone()));
        out.push(("gen.head_b".into(), self.head_b.clone()));
        out
    }

    /// Rebuild with each tensor passed through `f` (tape registration,
    /// checkpoint loading).
    pub fn map_tensors(&self, f: &mut dyn FnMut(&Tensor) -> Tensor) -> GeneratorParams {
        GeneratorParams {
            map_w1: f(&self.map_w1),
            map_b1: f(&self.map_b1),
            map_a1: f(&self.map_a1),
            map_w2: f(&self.map_w2),
            map_b2: f(&self.map_b2),
            const_input: f(&self.const_input),
            layers: self
                .layers
                .iter()
                .map(|l| SynthLayer {
                    style_w: f(&l.style_w),
                    style_b: f(&l.style_b),
                    conv_w: f(&l.conv_w),
                    conv_b: f(&l.conv_b),
                    alpha: f(&l.alpha),
                    up: l.up,
                })
                .collect(),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
            cfg: self.cfg.clone(),
        }
    }

    /// Mutable views over every parameter, in `params` order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let GeneratorParams {
            map_w1,
            map_b1,
            map_a1,
            map_w2,
            map_b2,
            const_input,
            layers,
            head_w,
            head_b,
            cfg: _,
        } = self;
        let mut out: Vec<&mut Tensor> = vec![map_w1, map_b1, map_a1, map_w2, map_b2, const_input];
        for l in layers.iter_mut() {
            out.push(&mut l.style_w);
            out.push(&mut l.style_b);
            out.push(&mut l.conv_w);
            out.push(&mut l.conv_b);
            out.push(&mut l.alpha);
        }
        out.push(head_w);
        out.push(head_b);
        out
    }

    /// Mutable views over the synthesis-side parameters only (generator
    /// fine-tuning keeps the mapping frozen), in `params_synthesis` order.
    pub fn params_synthesis_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.const_input];
        for l in self.layers.iter_mut() {
            out.push(&mut l.style_w);
            out.push(&mut l.style_b);
            out.push(&mut l.conv_w);
            out.push(&mut l.conv_b);
            out.push(&mut l.alpha);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Untruncated mapping: `z [dz] -> w [k,d]`.
    pub fn map_latent_raw(&self, z: &Tensor) -> Result<Tensor> {
        if z.shape() != [self.cfg.dz] {
            return Err(Error::dim(format!("latent must be [{}], got {:?}", self.cfg.dz, z.shape())));
        }
        let h = z
            .reshape(vec![1, self.cfg.dz])?
            .matmul(&self.map_w1)?
            .add(&self.map_b1)?
            .prelu(&self.map_a1, 1)?;
        let w = h.matmul(&self.map_w2)?.add(&self.map_b2)?;
        w.reshape(vec![self.cfg.k, self.cfg.d])
    }

    /// Truncated mapping: `w_bar + psi * (map(z) - w_bar)`. `psi = 0` gives
    /// exactly `w_bar`, `psi = 1` the untruncated latent.
    pub fn map_latent(&self, z: &Tensor, w_bar: &Tensor, psi: f64) -> Result<Tensor> {
        let raw = self.map_latent_raw(z)?;
        raw.sub(w_bar)?.scale(psi)?.add(w_bar)
    }

    /// Monte-Carlo estimate of the mean latent over `n` standard-normal
    /// draws.
    pub fn estimate_w_bar(&self, n: usize, seed: u64) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::usage("w_bar estimate needs at least one sample"));
        }
        let mut rng = rng_from_seed(seed);
        let mut acc = Tensor::zeros(vec![self.cfg.k, self.cfg.d]);
        for _ in 0..n {
            let z = randn::<f32>(vec![self.cfg.dz], 1.0, &mut rng);
            acc = acc.add(&self.map_latent_raw(&z)?)?;
        }
        acc.scale(1.0 / n as f64)
    }

    /// Synthesis: `w [k,d] -> TriPlane`. Differentiable w.r.t. `w` and all
    /// synthesis parameters.
    pub fn synthesize(&self, w: &Tensor) -> Result<TriPlane> {
        if w.shape() != [self.cfg.k, self.cfg.d] {
            return Err(Error::dim(format!(
                "extended latent must be [{},{}], got {:?}",
                self.cfg.k,
                self.cfg.d,
                w.shape()
            )));
        }
        let mut x = self.const_input.reshape(vec![1, TRUNK, 4, 4])?;
        for (i, l) in self.layers.iter().enumerate() {
            let row = w.narrow(0, i, 1)?;
            // Style scale around 1 so a zero projection is identity.
            let style = row.matmul(&l.style_w)?.add(&l.style_b)?.add_scalar(1.0)?;
            x = x.mul(&style.reshape(vec![TRUNK, 1, 1])?)?;
            let cout = l.conv_w.shape()[0];
            x = x.conv2d(&l.conv_w, 1, Padding::Zero)?.add(&l.conv_b.reshape(vec![cout, 1, 1])?)?;
            if l.up {
                x = x.pixel_shuffle(2)?;
            }
            x = x.prelu(&l.alpha, 1)?;
        }
        let c3 = 3 * self.cfg.plane_channels;
        let planes = x
            .conv2d(&self.head_w, 1, Padding::Zero)?
            .add(&self.head_b.reshape(vec![c3, 1, 1])?)?;
        let p = self.cfg.plane_res;
        let stacked = planes.reshape(vec![3, self.cfg.plane_channels, p, p])?;
        TriPlane::from_stacked(&stacked, self.cfg.bound)
    }
}

/// Auto-decoder pretraining configuration (desk defaults).
#[derive(Clone, Copy, Debug)]
pub struct AutoDecConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Weight of the perceptual term at both resolutions.
    pub perc_weight: f64,
    /// Weight of the raw (low-res) reconstruction term.
    pub raw_weight: f64,
    pub seed: u64,
}

impl Default for AutoDecConfig {
    fn default() -> Self {
        AutoDecConfig { steps: 1500, batch: 4, lr: 2e-3, perc_weight: 0.1, raw_weight: 0.5, seed: 17 }
    }
}

pub struct TrainTrace {
    pub losses: Vec<f64>,
}

/// Jointly fit per-scene latents and all generator/renderer weights by
/// reconstruction. The dataset's anchor and sweep views all supervise.
/// Returns the per-step loss trajectory.
#[allow(clippy::too_many_arguments)]
pub fn fit_autodecoder(
    gen: &mut GeneratorParams,
    mlp: &mut DecoderMlp,
    sr: &mut SrParams,
    latents: &mut Tensor,
    ds: &Dataset,
    rcfg: &RenderConfig,
    proxies: &Proxies,
    cfg: &AutoDecConfig,
) -> Result<TrainTrace> {
    let n_scenes = ds.scenes.len();
    if latents.shape() != [n_scenes, gen.cfg.dz] {
        return Err(Error::dim(format!(
            "latents must be [{n_scenes},{}], got {:?}",
            gen.cfg.dz,
            latents.shape()
        )));
    }
    if ds.res != rcfg.final_res {
        return Err(Error::config(format!(
            "dataset res {} does not match renderer final_res {}",
            ds.res, rcfg.final_res
        )));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut opt = crate::optim::Adam::new(cfg.lr);
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        // Cosine decay to 10% of the base rate over the run.
        let frac = step as f64 / cfg.steps.max(1) as f64;
        opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * frac).cos()));
        let mut grad_acc: Vec<Vec<f32>> = Vec::new();
        let mut loss_acc = 0.0f64;
        for _ in 0..cfg.batch {
            let si = rng.random_range(0..n_scenes);
            let vi = rng.random_range(0..ds.scenes[si].cams.len());
            let x = &ds.scenes[si].images[vi];
            let cam = ds.scenes[si].cams[vi];

            let tape: Tape = Tape::new();
            let mut leaf = |t: &Tensor| tape.leaf(t);
            let genl = gen.map_tensors(&mut leaf);
            let mlpl = crate::state::map_mlp_tensors(mlp, &mut |t| tape.leaf(t));
            let srl = crate::state::map_sr_tensors(sr, &mut |t| tape.leaf(t));
            let latl = tape.leaf(latents);

            let z = latl.narrow(0, si, 1)?.reshape(vec![gen.cfg.dz])?;
            let w = genl.map_latent_raw(&z)?;
            let tp = genl.synthesize(&w)?;
            let (hi, raw) = render(&tp, &mlpl, &srl, &cam, rcfg, RaySampling::Jitter(&mut rng))?;

            let x32 = x
                .reshape(vec![1, 3, ds.res, ds.res])?
                .avg_pool2d(2)?
                .reshape(vec![3, rcfg.low_res, rcfg.low_res])?;
            let full = crate::losses::loss_l2(&hi, x)?
                .add(&proxies.perceptual.distance(&hi, x)?.scale(cfg.perc_weight)?)?;
            let low = crate::losses::loss_l2(&raw, &x32)?
                .add(&proxies.perceptual.distance(&raw, &x32)?.scale(cfg.perc_weight)?)?;
            let loss = full.add(&low.scale(cfg.raw_weight)?)?;
            loss_acc += loss.item()? as f64;

            let grads = tape.backward(&loss)?;
            let mut leaves: Vec<Tensor> = Vec::new();
            leaves.extend(genl.params().into_iter().map(|(_, t)| t));
            leaves.extend(mlpl.params().into_iter().map(|(_, t)| t));
            leaves.extend(srl.params().into_iter().map(|(_, t)| t));
            leaves.push(latl.clone());
            if grad_acc.is_empty() {
                grad_acc = leaves.iter().map(|t| vec![0.0; t.numel()]).collect();
            }
            for (acc, leaf) in grad_acc.iter_mut().zip(&leaves) {
                let g = grads.get_or_zeros(leaf)?;
                for (a, v) in acc.iter_mut().zip(g.data()) {
                    *a += *v;
                }
            }
        }

        let inv = 1.0 / cfg.batch as f32;
        let mut params: Vec<&mut Tensor> = collect_params_mut(gen, mlp, sr, latents);
        let grads = params
            .iter()
            .zip(&grad_acc)
            .map(|(p, acc)| Tensor::from_vec(p.shape().to_vec(), acc.iter().map(|v| v * inv).collect()))
            .collect::<Result<Vec<_>>>()?;
        opt.step(&mut params, &grads)?;
        trace.push(loss_acc / cfg.batch as f64);
    }
    Ok(TrainTrace { losses: trace })
}

/// Mutable views over every auto-decoder-trainable tensor, in the same
/// order the per-item leaf list is built.
fn collect_params_mut<'a>(
    gen: &'a mut GeneratorParams,
    mlp: &'a mut DecoderMlp,
    sr: &'a mut SrParams,
    latents: &'a mut Tensor,
) -> Vec<&'a mut Tensor> {
    let mut out: Vec<&mut Tensor> = vec![
        &mut gen.map_w1,
        &mut gen.map_b1,
        &mut gen.map_a1,
        &mut gen.map_w2,
        &mut gen.map_b2,
        &mut gen.const_input,
    ];
    for l in gen.layers.iter_mut() {
        out.push(&mut l.style_w);
        out.push(&mut l.style_b);
        out.push(&mut l.conv_w);
        out.push(&mut l.conv_b);
        out.push(&mut l.alpha);
    }
    out.push(&mut gen.head_w);
    out.push(&mut gen.head_b);
    out.push(&mut mlp.w1);
    out.push(&mut mlp.b1);
    out.push(&mut mlp.a1);
    out.push(&mut mlp.w2);
    out.push(&mut mlp.b2);
    out.push(&mut mlp.a2);
    out.push(&mut mlp.w_sigma);
    out.push(&mut mlp.b_sigma);
    out.push(&mut mlp.w_feat);
    out.push(&mut mlp.b_feat);
    out.push(&mut sr.w1);
    out.push(&mut sr.b1);
    out.push(&mut sr.w2);
    out.push(&mut sr.b2);
    out.push(latents);
    out
}
