//! Python bindings over the tri-plane stack: dataset generation, model
//! training, rendering, the seven inversion methods, image metrics, and the
//! finite-difference gradient checks.
//!
//! Images cross the boundary as `(shape, flat_f32_list)` tuples; reshape on
//! the Python side with `numpy.asarray(data, dtype=numpy.float32).reshape(shape)`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

use triplane_core::camera::Camera;
use triplane_core::ckpt::{load_checkpoint, save_checkpoint};
use triplane_core::config::ModelConfig;
use triplane_core::engines::{
    run_inversion, train_encoders as core_train_encoders, InversionMethod, InversionOpts,
    TrainSchedule,
};
use triplane_core::error::Error;
use triplane_core::generator::{fit_autodecoder, AutoDecConfig};
use triplane_core::gradcheck::{end_to_end_render_check, op_suite};
use triplane_core::init::{randn, rng_from_seed};
use triplane_core::losses::Proxies;
use triplane_core::metrics::{metric_ms_ssim, metric_psnr};
use triplane_core::pngio;
use triplane_core::render::{render, DecoderMlp, RaySampling, RenderConfig, SrParams};
use triplane_core::report::train_view_psnr;
use triplane_core::scenes::{
    build_dataset as core_build_dataset, load_dataset, sample_generated_training, save_dataset,
};
use triplane_core::state::ModelState;
use triplane_core::tensor::Tensor;
use triplane_core::triplane::TriPlane;

/// `(shape, data)` image/tensor interchange format.
type PyImage = (Vec<usize>, Vec<f32>);

fn perr(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn tensor_out(t: &Tensor) -> PyImage {
    (t.shape().to_vec(), t.data().to_vec())
}

fn tensor_in(img: PyImage) -> PyResult<Tensor> {
    Tensor::from_vec(img.0, img.1).map_err(perr)
}

fn make_rcfg(low_res: Option<usize>, samples: Option<usize>) -> RenderConfig {
    let mut rcfg = RenderConfig::default();
    if let Some(lr) = low_res {
        rcfg.low_res = lr;
        rcfg.final_res = 2 * lr;
    }
    if let Some(s) = samples {
        rcfg.n_samples = s;
    }
    rcfg
}

/// Full trainable model plus its render settings and frozen loss proxies.
#[pyclass]
struct Model {
    state: ModelState,
    rcfg: RenderConfig,
    proxies: Proxies,
}

#[pymethods]
impl Model {
    /// Fresh random model with `n_scenes` auto-decoder latent slots.
    #[new]
    #[pyo3(signature = (n_scenes=1, seed=7, low_res=None, samples=None))]
    fn new(n_scenes: usize, seed: u64, low_res: Option<usize>, samples: Option<usize>) -> PyResult<Self> {
        let cfg = ModelConfig::default();
        let state = ModelState::new(&cfg, n_scenes, seed).map_err(perr)?;
        let proxies = Proxies::new(state.proxy_seed);
        Ok(Model { state, rcfg: make_rcfg(low_res, samples), proxies })
    }

    /// Load a model from a checkpoint file.
    #[staticmethod]
    #[pyo3(signature = (path, low_res=None, samples=None))]
    fn load(path: PathBuf, low_res: Option<usize>, samples: Option<usize>) -> PyResult<Self> {
        let state = load_checkpoint(&path).map_err(perr)?;
        let proxies = Proxies::new(state.proxy_seed);
        Ok(Model { state, rcfg: make_rcfg(low_res, samples), proxies })
    }

    /// Write a checkpoint file.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.state).map_err(perr)
    }

    #[getter]
    fn n_scenes(&self) -> usize {
        self.state.latents.shape()[0]
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.state.seed
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.rcfg.final_res
    }

    /// Render the auto-decoded scene `idx` from an orbit camera.
    #[pyo3(signature = (idx, yaw=0.0, pitch=0.0))]
    fn render_scene(&self, py: Python<'_>, idx: usize, yaw: f64, pitch: f64) -> PyResult<PyImage> {
        let img = py
            .allow_threads(|| {
                let st = &self.state;
                if idx >= st.latents.shape()[0] {
                    return Err(Error::usage(format!(
                        "scene index {idx} out of range ({} latents)",
                        st.latents.shape()[0]
                    )));
                }
                let z = st.latents.narrow(0, idx, 1)?.reshape(vec![st.cfg.dz])?;
                let tri = st.gen.synthesize(&st.gen.map_latent_raw(&z)?)?;
                let cam = Camera::orbit(yaw, pitch, st.cfg.radius, st.cfg.fov_y)?;
                let (hi, _) = render(&tri, &st.mlp, &st.sr, &cam, &self.rcfg, RaySampling::Midpoint)?;
                Ok(hi)
            })
            .map_err(perr)?;
        Ok(tensor_out(&img))
    }

    /// Render a generated sample: `z ~ N(0, I)` keyed by `seed`, truncated
    /// toward the mean latent by `truncation` (1.0 = no truncation).
    #[pyo3(signature = (seed, yaw=0.0, pitch=0.0, truncation=1.0))]
    fn render_sample(&self, py: Python<'_>, seed: u64, yaw: f64, pitch: f64, truncation: f64) -> PyResult<PyImage> {
        let img = py
            .allow_threads(|| {
                let st = &self.state;
                let mut rng = rng_from_seed(seed);
                let z = randn::<f32>(vec![st.cfg.dz], 1.0, &mut rng);
                let w = st.gen.map_latent(&z, &st.w_bar, truncation)?;
                let tri = st.gen.synthesize(&w)?;
                let cam = Camera::orbit(yaw, pitch, st.cfg.radius, st.cfg.fov_y)?;
                let (hi, _) = render(&tri, &st.mlp, &st.sr, &cam, &self.rcfg, RaySampling::Midpoint)?;
                Ok(hi)
            })
            .map_err(perr)?;
        Ok(tensor_out(&img))
    }

    /// Auto-decoder fit on a dataset directory: jointly trains per-scene
    /// latents and all generator/renderer weights. Returns per-step losses.
    #[pyo3(signature = (data_dir, steps=200, batch=4, lr=2e-3, seed=17))]
    fn fit(&mut self, py: Python<'_>, data_dir: PathBuf, steps: usize, batch: usize, lr: f64, seed: u64) -> PyResult<Vec<f64>> {
        let rcfg = self.rcfg;
        let proxies = &self.proxies;
        let state = &mut self.state;
        let losses = py
            .allow_threads(move || {
                let ds = load_dataset(&data_dir)?;
                let cfg = AutoDecConfig { steps, batch, lr, seed, ..AutoDecConfig::default() };
                let ModelState { gen, mlp, sr, latents, .. } = state;
                let trace = fit_autodecoder(gen, mlp, sr, latents, &ds, &rcfg, proxies, &cfg)?;
                state.refresh_w_bar()?;
                Ok(trace.losses)
            })
            .map_err(perr)?;
        Ok(losses)
    }

    /// Train both inversion encoders against the frozen generator. Batches
    /// mix dataset views with `generated_pool` pre-rendered samples.
    #[pyo3(signature = (data_dir, total=60, second_start=10, freeze_first=40, batch=2, lr=1e-4, generated_fraction=0.5, generated_pool=8, seed=23))]
    #[allow(clippy::too_many_arguments)]
    fn train_encoders(
        &mut self,
        py: Python<'_>,
        data_dir: PathBuf,
        total: usize,
        second_start: usize,
        freeze_first: usize,
        batch: usize,
        lr: f64,
        generated_fraction: f64,
        generated_pool: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let rcfg = self.rcfg;
        let proxies = &self.proxies;
        let state = &mut self.state;
        let losses = py
            .allow_threads(move || {
                let ds = load_dataset(&data_dir)?;
                let sched = TrainSchedule {
                    total,
                    second_start,
                    freeze_first,
                    batch,
                    lr,
                    generated_fraction,
                    seed,
                };
                let ModelState { gen, mlp, sr, w_bar, phi, psi, .. } = state;
                let pool = sample_generated_training(gen, mlp, sr, &rcfg, generated_pool, seed ^ 0x9e00)?;
                let rep = core_train_encoders(phi, psi, gen, mlp, sr, w_bar, &ds, &pool, &rcfg, proxies, &sched)?;
                Ok(rep.losses)
            })
            .map_err(perr)?;
        Ok(losses)
    }

    /// Mean PSNR of auto-decoded renders against every training view.
    fn train_view_psnr(&self, py: Python<'_>, data_dir: PathBuf) -> PyResult<f64> {
        py.allow_threads(|| {
            let ds = load_dataset(&data_dir)?;
            train_view_psnr(&self.state, &ds, &self.rcfg)
        })
        .map_err(perr)
    }

    /// Invert one posed image. `method` is one of `method_names()`; the
    /// optional knobs override per-stage step counts and learning rates.
    #[pyo3(signature = (image, yaw, pitch, method="encoder", wplus_steps=None, wplus_lr=None, pti_steps=None, pti_lr=None, lbfgs_steps=None, cttr_rounds=None))]
    #[allow(clippy::too_many_arguments)]
    fn invert(
        &self,
        py: Python<'_>,
        image: PyImage,
        yaw: f64,
        pitch: f64,
        method: &str,
        wplus_steps: Option<usize>,
        wplus_lr: Option<f64>,
        pti_steps: Option<usize>,
        pti_lr: Option<f64>,
        lbfgs_steps: Option<usize>,
        cttr_rounds: Option<usize>,
    ) -> PyResult<Inversion> {
        let x = tensor_in(image)?;
        let method = InversionMethod::parse(method).map_err(perr)?;
        let mut opts = InversionOpts::default();
        if let Some(v) = wplus_steps {
            opts.wplus.steps = v;
        }
        if let Some(v) = wplus_lr {
            opts.wplus.lr = v;
        }
        if let Some(v) = pti_steps {
            opts.pti.steps = v;
        }
        if let Some(v) = pti_lr {
            opts.pti.lr = v;
        }
        if let Some(v) = lbfgs_steps {
            opts.triopt.lbfgs.max_steps = v;
        }
        if let Some(v) = cttr_rounds {
            opts.cttr_rounds = v;
        }
        let run = py
            .allow_threads(|| {
                let st = &self.state;
                let cam = Camera::orbit(yaw, pitch, st.cfg.radius, st.cfg.fov_y)?;
                run_inversion(method, &x, &cam, st, &self.rcfg, &self.proxies, &opts)
            })
            .map_err(perr)?;
        Ok(Inversion {
            tri: run.tri,
            mlp: run.mlp,
            sr: run.sr,
            image: run.image,
            stages: run.timings.iter().map(|t| (t.stage.to_string(), t.seconds)).collect(),
            rcfg: self.rcfg,
            radius: self.state.cfg.radius,
            fov_y: self.state.cfg.fov_y,
        })
    }
}

/// Result of one inversion: the same-view reconstruction plus the recovered
/// tri-plane and (possibly fine-tuned) renderer weights for novel views.
#[pyclass]
struct Inversion {
    tri: TriPlane,
    mlp: DecoderMlp,
    sr: SrParams,
    image: Tensor,
    stages: Vec<(String, f64)>,
    rcfg: RenderConfig,
    radius: f64,
    fov_y: f64,
}

#[pymethods]
impl Inversion {
    /// Same-view reconstruction.
    fn image(&self) -> PyImage {
        tensor_out(&self.image)
    }

    /// Per-stage wall-clock seconds as `(stage, seconds)` pairs.
    fn stages(&self) -> Vec<(String, f64)> {
        self.stages.clone()
    }

    /// Total wall-clock seconds across stages.
    fn seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }

    /// Render the recovered scene from a new orbit camera.
    #[pyo3(signature = (yaw, pitch=0.0))]
    fn render(&self, py: Python<'_>, yaw: f64, pitch: f64) -> PyResult<PyImage> {
        let img = py
            .allow_threads(|| {
                let cam = Camera::orbit(yaw, pitch, self.radius, self.fov_y)?;
                let (hi, _) = render(&self.tri, &self.mlp, &self.sr, &cam, &self.rcfg, RaySampling::Midpoint)?;
                Ok(hi)
            })
            .map_err(perr)?;
        Ok(tensor_out(&img))
    }
}

/// Generate a synthetic multi-view dataset on disk. Returns the number of
/// scenes written (doubled when `mirror` is set).
#[pyfunction]
#[pyo3(signature = (dir, scenes=4, views=2, res=64, mirror=false, seed=0, bound=1.0, radius=2.7, fov_y=0.8))]
#[allow(clippy::too_many_arguments)]
fn build_dataset(
    py: Python<'_>,
    dir: PathBuf,
    scenes: usize,
    views: usize,
    res: usize,
    mirror: bool,
    seed: u64,
    bound: f64,
    radius: f64,
    fov_y: f64,
) -> PyResult<usize> {
    py.allow_threads(|| {
        let ds = core_build_dataset(scenes, views, res, bound, radius, fov_y, mirror, seed)?;
        save_dataset(&ds, &dir, bound)?;
        Ok(ds.scenes.len())
    })
    .map_err(perr)
}

/// Fetch one stored dataset view as `(image, yaw, pitch)`.
#[pyfunction]
fn dataset_view(dir: PathBuf, scene: usize, view: usize) -> PyResult<(PyImage, f64, f64)> {
    let ds = load_dataset(&dir).map_err(perr)?;
    let sv = ds
        .scenes
        .get(scene)
        .ok_or_else(|| PyValueError::new_err(format!("scene {scene} out of range ({})", ds.scenes.len())))?;
    let img = sv
        .images
        .get(view)
        .ok_or_else(|| PyValueError::new_err(format!("view {view} out of range ({})", sv.images.len())))?;
    Ok((tensor_out(img), sv.cams[view].yaw, sv.cams[view].pitch))
}

/// Peak signal-to-noise ratio in dB between two equal-shape images.
#[pyfunction]
fn psnr(a: PyImage, b: PyImage) -> PyResult<f64> {
    metric_psnr(&tensor_in(a)?, &tensor_in(b)?).map_err(perr)
}

/// Multi-scale structural similarity between two `[3,H,W]` images.
#[pyfunction]
fn ms_ssim(a: PyImage, b: PyImage) -> PyResult<f64> {
    metric_ms_ssim(&tensor_in(a)?, &tensor_in(b)?).map_err(perr)
}

/// Write a `[3,H,W]` image in `[0,1]` to an 8-bit PNG.
#[pyfunction]
fn save_png(path: PathBuf, image: PyImage) -> PyResult<()> {
    pngio::save_png(&path, &tensor_in(image)?).map_err(perr)
}

/// Read an 8-bit PNG as a `[3,H,W]` image in `[0,1]`.
#[pyfunction]
fn load_png(path: PathBuf) -> PyResult<PyImage> {
    Ok(tensor_out(&pngio::load_png(&path).map_err(perr)?))
}

/// Finite-difference gradient checks: every differentiable op plus one
/// end-to-end render. Returns `(op, max_rel_err, tol, pass)` rows. The
/// default seed keeps the probes clear of activation kinks, where finite
/// differences disagree with one-sided derivatives by construction.
#[pyfunction]
#[pyo3(signature = (seed=7, instances=4))]
fn gradcheck(py: Python<'_>, seed: u64, instances: usize) -> PyResult<Vec<(String, f64, f64, bool)>> {
    py.allow_threads(|| {
        let mut checks = op_suite::<f32>(seed, instances, 1e-2, 1e-3)?;
        checks.push(end_to_end_render_check(seed ^ 0xe2e, 1e-2)?);
        Ok(checks.iter().map(|c| (c.op.to_string(), c.max_rel, c.tol, c.pass)).collect())
    })
    .map_err(perr)
}

/// Canonical names of the seven inversion methods.
#[pyfunction]
fn method_names() -> Vec<&'static str> {
    InversionMethod::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule]
fn triplane_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Inversion>()?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_view, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ms_ssim, m)?)?;
    m.add_function(wrap_pyfunction!(save_png, m)?)?;
    m.add_function(wrap_pyfunction!(load_png, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(method_names, m)?)?;
    Ok(())
}
