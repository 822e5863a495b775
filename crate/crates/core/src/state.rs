//! The complete trainable state of one model: generator, renderer heads,
//! mean latent, per-scene auto-decoder latents, and both inversion
//! encoders. One [`ModelState`] is what a checkpoint stores.

use crate::config::ModelConfig;
use crate::encoders::{LatentEncoder, OffsetUnet};
use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::init::rng_from_seed;
use crate::render::{DecoderMlp, SrParams};
use crate::tensor::Tensor;

/// Draw count for the Monte-Carlo mean-latent estimate.
pub const W_BAR_SAMPLES: usize = 256;

pub struct ModelState {
    pub cfg: ModelConfig,
    pub gen: GeneratorParams,
    pub mlp: DecoderMlp,
    pub sr: SrParams,
    /// Mean extended latent `[k,d]`; anchor of truncation and of both
    /// inversion branches.
    pub w_bar: Tensor,
    /// Per-scene auto-decoder latents `[S, dz]`.
    pub latents: Tensor,
    pub phi: LatentEncoder,
    pub psi: OffsetUnet,
    /// Seed of the frozen proxy networks paired with this model.
    pub proxy_seed: u64,
    /// Seed the state was initialized from (also keys `w_bar`).
    pub seed: u64,
}

impl ModelState {
    /// Fresh randomly-initialized state for `n_scenes` auto-decoder slots.
    pub fn new(cfg: &ModelConfig, n_scenes: usize, seed: u64) -> Result<ModelState> {
        let mut rng = rng_from_seed(seed);
        let gen = GeneratorParams::new(cfg, &mut rng)?;
        let mlp = DecoderMlp::new(cfg, &mut rng);
        let sr = SrParams::new(cfg, &mut rng);
        let phi = LatentEncoder::new(cfg, &mut rng);
        let psi = OffsetUnet::new(cfg, &mut rng);
        let w_bar = gen.estimate_w_bar(W_BAR_SAMPLES, seed ^ 0xbead)?;
        let latents = crate::init::randn::<f32>(vec![n_scenes, cfg.dz], 0.3, &mut rng);
        Ok(ModelState { cfg: cfg.clone(), gen, mlp, sr, w_bar, latents, phi, psi, proxy_seed: 3, seed })
    }

    /// Re-estimate the mean latent (the mapping net has changed).
    pub fn refresh_w_bar(&mut self) -> Result<()> {
        self.w_bar = self.gen.estimate_w_bar(W_BAR_SAMPLES, self.seed ^ 0xbead)?;
        Ok(())
    }

    /// Every persistent tensor, named, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = self.gen.params();
        out.extend(self.mlp.params());
        out.extend(self.sr.params());
        out.push(("w_bar".into(), self.w_bar.clone()));
        out.push(("latents".into(), self.latents.clone()));
        out.extend(self.phi.params());
        out.extend(self.psi.params());
        out
    }

    /// Mutable slots in exactly the [`named_tensors`] order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = {
            let mut n: Vec<String> = self.gen.params().into_iter().map(|(s, _)| s).collect();
            n.extend(self.mlp.params().into_iter().map(|(s, _)| s));
            n.extend(self.sr.params().into_iter().map(|(s, _)| s));
            n.push("w_bar".into());
            n.push("latents".into());
            n.extend(self.phi.params().into_iter().map(|(s, _)| s));
            n.extend(self.psi.params().into_iter().map(|(s, _)| s));
            n
        };
        let mut slots: Vec<&mut Tensor> = self.gen.params_mut();
        slots.extend(self.mlp.params_mut());
        slots.extend(self.sr.params_mut());
        slots.push(&mut self.w_bar);
        slots.push(&mut self.latents);
        slots.extend(self.phi.params_mut());
        slots.extend(self.psi.params_mut());
        debug_assert_eq!(names.len(), slots.len());
        names.into_iter().zip(slots).collect()
    }

    /// Overwrite every tensor from `(name, tensor)` entries; every slot must
    /// be covered exactly and shapes must match, except `latents`, whose
    /// scene count may differ between runs.
    pub fn load_named(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        let mut map: std::collections::BTreeMap<&str, &Tensor> =
            entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        if map.len() != entries.len() {
            return Err(Error::data("duplicate tensor name in checkpoint"));
        }
        for (name, slot) in self.named_tensors_mut() {
            let t = map
                .remove(name.as_str())
                .ok_or_else(|| Error::data(format!("checkpoint missing tensor {name:?}")))?;
            let shape_ok = if name == "latents" {
                t.shape().len() == 2 && t.shape()[1] == slot.shape()[1]
            } else {
                t.shape() == slot.shape()
            };
            if !shape_ok {
                return Err(Error::data(format!(
                    "checkpoint tensor {name:?} has shape {:?}, model wants {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.detach();
        }
        if let Some((name, _)) = map.into_iter().next() {
            return Err(Error::data(format!("checkpoint has unknown tensor {name:?}")));
        }
        Ok(())
    }
}

/// Rebuild a decoder with each tensor passed through `f`.
pub fn map_mlp_tensors(mlp: &DecoderMlp, f: &mut dyn FnMut(&Tensor) -> Tensor) -> DecoderMlp {
    DecoderMlp {
        w1: f(&mlp.w1),
        b1: f(&mlp.b1),
        a1: f(&mlp.a1),
        w2: f(&mlp.w2),
        b2: f(&mlp.b2),
        a2: f(&mlp.a2),
        w_sigma: f(&mlp.w_sigma),
        b_sigma: f(&mlp.b_sigma),
        w_feat: f(&mlp.w_feat),
        b_feat: f(&mlp.b_feat),
    }
}

/// Rebuild a super-resolver with each tensor passed through `f`.
pub fn map_sr_tensors(sr: &SrParams, f: &mut dyn FnMut(&Tensor) -> Tensor) -> SrParams {
    SrParams { w1: f(&sr.w1), b1: f(&sr.b1), w2: f(&sr.w2), b2: f(&sr.b2) }
}
