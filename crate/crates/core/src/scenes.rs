//! Synthetic Gaussian-blob scenes: a ground-truth volume whose renders the
//! whole pipeline is validated against.
//!
//! The oracle renderer evaluates density and emission analytically but runs
//! the SAME quadrature ([`composite`]) as the neural renderer, so the only
//! difference between oracle and model images is the field itself.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::init::SeedRng;
use crate::render::composite;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub scale: f64,
    pub amplitude: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub blobs: Vec<Blob>,
}

impl SceneSpec {
    /// Random scene: 1-3 blobs, centers within radius 0.5 of the origin,
    /// scales in [0.1, 0.25], amplitudes in [20, 60].
    pub fn sample(rng: &mut SeedRng) -> SceneSpec {
        let n = rng.random_range(1..=3usize);
        let blobs = (0..n)
            .map(|_| {
                // Rejection-sample the center ball.
                let center = loop {
                    let c = [
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ];
                    if c[0] * c[0] + c[1] * c[1] + c[2] * c[2] <= 0.25 {
                        break c;
                    }
                };
                Blob {
                    center,
                    scale: rng.random_range(0.1..0.25),
                    amplitude: rng.random_range(20.0..60.0),
                    color: [
                        rng.random_range(0.15..1.0),
                        rng.random_range(0.15..1.0),
                        rng.random_range(0.15..1.0),
                    ],
                }
            })
            .collect();
        SceneSpec { blobs }
    }

    /// `sigma(p) = sum_k a_k exp(-|p - mu_k|^2 / (2 s_k^2))`.
    pub fn density(&self, p: [f64; 3]) -> f64 {
        self.blobs
            .iter()
            .map(|b| {
                let d = [p[0] - b.center[0], p[1] - b.center[1], p[2] - b.center[2]];
                b.amplitude * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * b.scale * b.scale)).exp()
            })
            .sum()
    }

    /// Density-weighted blob color and total density at `p`.
    pub fn emission(&self, p: [f64; 3]) -> ([f64; 3], f64) {
        let mut sigma = 0.0;
        let mut color = [0.0f64; 3];
        for b in &self.blobs {
            let d = [p[0] - b.center[0], p[1] - b.center[1], p[2] - b.center[2]];
            let w = b.amplitude
                * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * b.scale * b.scale)).exp();
            sigma += w;
            for c in 0..3 {
                color[c] += w * b.color[c];
            }
        }
        if sigma > 1e-12 {
            for c in color.iter_mut() {
                *c /= sigma;
            }
        }
        (color, sigma)
    }

    /// Reflection through the x = 0 plane; an involution.
    pub fn mirror_x(&self) -> SceneSpec {
        SceneSpec {
            blobs: self
                .blobs
                .iter()
                .map(|b| Blob { center: [-b.center[0], b.center[1], b.center[2]], ..b.clone() })
                .collect(),
        }
    }
}

/// Ground-truth render: analytic field, midpoint quadrature with `n_samples`
/// per ray over the same t-range as the neural renderer, composited by the
/// shared [`composite`] in f64, returned as an f32 `[3,res,res]` image.
pub fn render_scene_oracle(
    scene: &SceneSpec,
    cam: &Camera,
    res: usize,
    n_samples: usize,
    bound: f64,
) -> Result<Tensor> {
    let rays = cam.rays(res)?;
    let r = rays.len();
    let span = bound * 3f64.sqrt();
    let near = cam.radius - span;
    let far = cam.radius + span;
    if near <= 0.0 {
        return Err(Error::usage("camera orbit intersects the scene box"));
    }
    let dt = (far - near) / n_samples as f64;

    let mut sigmas = vec![0f64; r * n_samples];
    let mut colors = vec![0f64; r * n_samples * 3];
    sigmas
        .par_chunks_mut(n_samples)
        .zip(colors.par_chunks_mut(n_samples * 3))
        .enumerate()
        .for_each(|(ri, (srow, crow))| {
            let ray = rays[ri];
            for k in 0..n_samples {
                let t = near + (k as f64 + 0.5) * dt;
                let p = [
                    ray.origin[0] + t * ray.dir[0],
                    ray.origin[1] + t * ray.dir[1],
                    ray.origin[2] + t * ray.dir[2],
                ];
                let (c, s) = scene.emission(p);
                srow[k] = s;
                crow[3 * k..3 * k + 3].copy_from_slice(&c);
            }
        });

    let sigmas = Tensor::<f64>::from_vec(vec![r, n_samples], sigmas)?;
    let colors = Tensor::<f64>::from_vec(vec![r, n_samples, 3], colors)?;
    let deltas = Tensor::<f64>::full(vec![r, n_samples], dt);
    let out = composite(&sigmas, &colors, &deltas)?;
    out.color.cast::<f32>().transpose2d()?.reshape(vec![3, res, res])
}

/// One scene with its cameras and ground-truth images (`[3,res,res]` each).
#[derive(Clone)]
pub struct SceneViews {
    pub spec: SceneSpec,
    pub cams: Vec<Camera>,
    pub images: Vec<Tensor>,
}

#[derive(Clone)]
pub struct Dataset {
    pub scenes: Vec<SceneViews>,
    pub res: usize,
}

/// Oracle sample count used for ground-truth images: dense enough that the
/// quadrature error is far below the 8-bit quantization floor.
pub const ORACLE_SAMPLES: usize = 160;

/// Render a pool of generated training views: random latents through the
/// (frozen) generator at random orbit cameras. Encoder training mixes these
/// with real dataset views. Images are detached constants.
pub fn sample_generated_training(
    gen: &crate::generator::GeneratorParams,
    mlp: &crate::render::DecoderMlp,
    sr: &crate::render::SrParams,
    rcfg: &crate::render::RenderConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<(Tensor, Camera)>> {
    use crate::render::RaySampling;
    let cfg = gen.cfg();
    let mut rng = crate::init::rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = crate::init::randn::<f32>(vec![cfg.dz], 1.0, &mut rng);
        let w = gen.map_latent_raw(&z)?;
        let tri = gen.synthesize(&w)?;
        let yaw = rng.random_range(-0.85..0.85);
        let pitch = rng.random_range(-0.3..0.3);
        let cam = Camera::orbit(yaw, pitch, cfg.radius, cfg.fov_y)?;
        let (img, _) = crate::render::render(&tri, mlp, sr, &cam, rcfg, RaySampling::Midpoint)?;
        out.push((img.detach(), cam));
    }
    Ok(out)
}

/// Camera pose distribution for dataset views. View 0 is the near-frontal
/// anchor (`|yaw| < 0.3`); the rest sweep the evaluation yaw range.
pub fn sample_view_cameras(
    n_views: usize,
    radius: f64,
    fov_y: f64,
    rng: &mut SeedRng,
) -> Result<Vec<Camera>> {
    let mut cams = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let yaw = if v == 0 {
            rng.random_range(-0.29..0.29)
        } else {
            rng.random_range(-0.85..0.85)
        };
        let pitch = rng.random_range(-0.3..0.3);
        cams.push(Camera::orbit(yaw, pitch, radius, fov_y)?);
    }
    Ok(cams)
}

/// One image with its known camera pose.
#[derive(Clone)]
pub struct PosedImage {
    pub image: Tensor,
    pub cam: Camera,
    pub scene: usize,
    pub mirrored: bool,
}

/// Horizontal flip of a `[C,H,W]` image (width axis reversed).
pub fn flip_horizontal(img: &Tensor) -> Result<Tensor> {
    let shape = img.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::dim(format!("flip expects [C,H,W], got {shape:?}")));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let src = img.data();
    let mut out = vec![0f32; src.len()];
    for ci in 0..c {
        for y in 0..h {
            let row = (ci * h + y) * w;
            for x in 0..w {
                out[row + x] = src[row + (w - 1 - x)];
            }
        }
    }
    Tensor::from_vec(shape, out)
}

/// Mirror augmentation: flip the image and negate the orbit yaw. An
/// involution; the result depicts the x-reflected scene, so augmented
/// datasets pair it with [`SceneSpec::mirror_x`].
pub fn mirror(s: &PosedImage) -> Result<PosedImage> {
    Ok(PosedImage {
        image: flip_horizontal(&s.image)?,
        cam: Camera { yaw: -s.cam.yaw, ..s.cam },
        scene: s.scene,
        mirrored: !s.mirrored,
    })
}

/// Build `n_scenes` random scenes with `n_views` oracle-rendered views each.
/// With `mirror` set, every scene is doubled by its x-reflection (flipped
/// images, negated yaws) at no extra oracle cost.
pub fn build_dataset(
    n_scenes: usize,
    n_views: usize,
    res: usize,
    bound: f64,
    radius: f64,
    fov_y: f64,
    mirror: bool,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = crate::init::rng_from_seed(seed);
    let mut scenes = Vec::with_capacity(n_scenes);
    for _ in 0..n_scenes {
        let spec = SceneSpec::sample(&mut rng);
        let cams = sample_view_cameras(n_views, radius, fov_y, &mut rng)?;
        let images = cams
            .iter()
            .map(|cam| render_scene_oracle(&spec, cam, res, ORACLE_SAMPLES, bound))
            .collect::<Result<Vec<_>>>()?;
        scenes.push(SceneViews { spec, cams, images });
    }
    if mirror {
        let mirrored = scenes
            .iter()
            .map(|sv| {
                let cams: Vec<Camera> =
                    sv.cams.iter().map(|c| Camera { yaw: -c.yaw, ..*c }).collect();
                let images =
                    sv.images.iter().map(flip_horizontal).collect::<Result<Vec<_>>>()?;
                Ok(SceneViews { spec: sv.spec.mirror_x(), cams, images })
            })
            .collect::<Result<Vec<_>>>()?;
        scenes.extend(mirrored);
    }
    Ok(Dataset { scenes, res })
}

#[derive(Serialize, Deserialize)]
struct ManifestScene {
    spec: SceneSpec,
    cams: Vec<Camera>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    res: usize,
    bound: f64,
    scenes: Vec<ManifestScene>,
}

/// Persist as `manifest.json` plus one PNG per view. PNG quantization is the
/// only loss (8-bit, well below training tolerances).
pub fn save_dataset(ds: &Dataset, dir: &std::path::Path, bound: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        res: ds.res,
        bound,
        scenes: ds
            .scenes
            .iter()
            .map(|s| ManifestScene { spec: s.spec.clone(), cams: s.cams.clone() })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::data(format!("manifest encode: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    for (si, s) in ds.scenes.iter().enumerate() {
        let sdir = dir.join(format!("scene_{si:03}"));
        std::fs::create_dir_all(&sdir)?;
        for (vi, img) in s.images.iter().enumerate() {
            crate::pngio::save_png(&sdir.join(format!("view_{vi}.png")), img)?;
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &std::path::Path) -> Result<Dataset> {
    let mpath = dir.join("manifest.json");
    let text = std::fs::read_to_string(&mpath)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", mpath.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("manifest decode: {e}")))?;
    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    for (si, ms) in manifest.scenes.into_iter().enumerate() {
        let sdir = dir.join(format!("scene_{si:03}"));
        let mut images = Vec::with_capacity(ms.cams.len());
        for vi in 0..ms.cams.len() {
            let img = crate::pngio::load_png(&sdir.join(format!("view_{vi}.png")))?;
            if img.shape() != [3, manifest.res, manifest.res] {
                return Err(Error::data(format!(
                    "scene {si} view {vi}: image shape {:?} does not match manifest res {}",
                    img.shape(),
                    manifest.res
                )));
            }
            images.push(img);
        }
        scenes.push(SceneViews { spec: ms.spec, cams: ms.cams, images });
    }
    Ok(Dataset { scenes, res: manifest.res })
}
