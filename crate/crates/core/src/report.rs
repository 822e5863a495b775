//! Method-by-method evaluation over held-out scenes: same-view
//! reconstruction quality, a novel-view yaw sweep, and per-image wall
//! clock, emitted as JSON lines plus an aligned text table.
//!
//! The JSON artifact is fully deterministic under a fixed seed, so wall
//! clock lives only in the text table.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::engines::{run_inversion, InversionMethod, InversionOpts};
use crate::error::{Error, Result};
use crate::losses::{loss_l2, Proxies};
use crate::metrics::{eval_views_at, ViewMetrics};
use crate::render::{render, RaySampling, RenderConfig};
use crate::scenes::{render_scene_oracle, Dataset, ORACLE_SAMPLES};
use crate::state::ModelState;
use crate::tensor::Tensor;

/// Mean quality at one sweep yaw.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct YawColumn {
    pub yaw: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
}

/// One comparison row: a method's metrics averaged over the evaluated
/// scenes. `seconds_per_image` is measurement, not model output, and is
/// excluded from the JSON form so seeded reports stay byte-identical.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub scenes: usize,
    pub same_l2: f64,
    pub same_psnr: f64,
    pub same_ms_ssim: f64,
    pub id_similarity: f64,
    pub novel: Vec<YawColumn>,
    pub novel_avg_psnr: f64,
    #[serde(skip)]
    pub seconds_per_image: f64,
}

/// The full comparison: one row per method, shared yaw sweep.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub yaws: Vec<f64>,
    pub rows: Vec<MethodRow>,
}

impl EvalReport {
    /// One JSON object per row, in method order. Deterministic: carries no
    /// timing and no map types.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            let line = serde_json::to_string(row)
                .map_err(|e| Error::data(format!("report encode: {e}")))?;
            out.push_str(&line);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<EvalReport> {
        let mut rows = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: MethodRow = serde_json::from_str(line)
                .map_err(|e| Error::data(format!("report decode: {e}")))?;
            rows.push(row);
        }
        let yaws = rows
            .first()
            .map(|r| r.novel.iter().map(|c| c.yaw).collect())
            .unwrap_or_default();
        Ok(EvalReport { yaws, rows })
    }

    /// Aligned text table; PSNR per sweep yaw plus the novel-view average
    /// and wall clock per image.
    pub fn to_table(&self) -> String {
        let mut head = format!(
            "{:<22} {:>8} {:>7} {:>8} {:>6}",
            "method", "L2", "PSNR", "MS-SSIM", "ID"
        );
        for y in &self.yaws {
            head.push_str(&format!(" {:>7}", format!("y{y:+.1}")));
        }
        head.push_str(&format!(" {:>7} {:>8}", "nv-avg", "sec/img"));
        let mut out = head;
        out.push('\n');
        for row in &self.rows {
            let mut line = format!(
                "{:<22} {:>8.5} {:>7.2} {:>8.4} {:>6.3}",
                row.method, row.same_l2, row.same_psnr, row.same_ms_ssim, row.id_similarity
            );
            for c in &row.novel {
                line.push_str(&format!(" {:>7.2}", c.psnr));
            }
            line.push_str(&format!(
                " {:>7.2} {:>8.3}",
                row.novel_avg_psnr, row.seconds_per_image
            ));
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

struct SceneScore {
    same_l2: f64,
    same_psnr: f64,
    same_ms_ssim: f64,
    id_similarity: f64,
    novel: Vec<ViewMetrics>,
    seconds: f64,
}

/// Score every method on one scene. Oracle ground truth for the yaw sweep
/// is rendered once and shared across methods.
fn score_scene(
    methods: &[InversionMethod],
    scene_idx: usize,
    state: &ModelState,
    ds: &Dataset,
    yaws: &[f64],
    rcfg: &RenderConfig,
    proxies: &Proxies,
    opts: &InversionOpts,
) -> Result<Vec<SceneScore>> {
    let sv = &ds.scenes[scene_idx];
    let x = &sv.images[0];
    let cam = &sv.cams[0];
    let truths: Vec<Tensor> = yaws
        .iter()
        .map(|&y| {
            let c = Camera { yaw: y, ..*cam };
            c.validate()?;
            render_scene_oracle(&sv.spec, &c, rcfg.final_res, ORACLE_SAMPLES, state.cfg.bound)
        })
        .collect::<Result<Vec<_>>>()?;

    methods
        .iter()
        .map(|&method| {
            let run = run_inversion(method, x, cam, state, rcfg, proxies, opts)?;
            let mut truth_iter = truths.iter();
            let novel = eval_views_at(
                yaws,
                cam,
                &mut |c| {
                    Ok(render(&run.tri, &run.mlp, &run.sr, c, rcfg, RaySampling::Midpoint)?.0)
                },
                &mut |_| Ok(truth_iter.next().expect("one truth per yaw").clone()),
            )?;
            Ok(SceneScore {
                same_l2: loss_l2(&run.image, x)?.data()[0] as f64,
                same_psnr: crate::metrics::metric_psnr(&run.image, x)?,
                same_ms_ssim: crate::metrics::metric_ms_ssim(&run.image, x)?,
                id_similarity: 1.0 - proxies.identity.distance(&run.image, x)?.data()[0] as f64,
                novel,
                seconds: run.total_seconds(),
            })
        })
        .collect()
}

/// Run every requested method on view 0 of every scene in `ds` and average.
/// Scenes are scored in parallel; aggregation order is fixed by scene index,
/// so the numbers do not depend on thread count.
pub fn evaluate_methods(
    state: &ModelState,
    ds: &Dataset,
    methods: &[InversionMethod],
    yaws: &[f64],
    rcfg: &RenderConfig,
    proxies: &Proxies,
    opts: &InversionOpts,
) -> Result<EvalReport> {
    if ds.scenes.is_empty() {
        return Err(Error::usage("evaluation needs at least one scene"));
    }
    if yaws.is_empty() {
        return Err(Error::usage("evaluation needs at least one sweep yaw"));
    }
    let n = ds.scenes.len();
    let per_scene: Vec<Vec<SceneScore>> = (0..n)
        .into_par_iter()
        .map(|i| score_scene(methods, i, state, ds, yaws, rcfg, proxies, opts))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(methods.len());
    for (mi, &method) in methods.iter().enumerate() {
        let scores: Vec<&SceneScore> = per_scene.iter().map(|s| &s[mi]).collect();

        let mean = |f: &dyn Fn(&SceneScore) -> f64| -> f64 {
            scores.iter().map(|s| f(s)).sum::<f64>() / n as f64
        };
        let novel: Vec<YawColumn> = (0..yaws.len())
            .map(|j| YawColumn {
                yaw: yaws[j],
                psnr: mean(&|s| s.novel[j].psnr),
                ms_ssim: mean(&|s| s.novel[j].ms_ssim),
            })
            .collect();
        let novel_avg_psnr = novel.iter().map(|c| c.psnr).sum::<f64>() / novel.len() as f64;
        rows.push(MethodRow {
            method: method.name().to_string(),
            scenes: n,
            same_l2: mean(&|s| s.same_l2),
            same_psnr: mean(&|s| s.same_psnr),
            same_ms_ssim: mean(&|s| s.same_ms_ssim),
            id_similarity: mean(&|s| s.id_similarity),
            novel,
            novel_avg_psnr,
            seconds_per_image: mean(&|s| s.seconds),
        });
    }
    Ok(EvalReport { yaws: yaws.to_vec(), rows })
}

/// Mean PSNR of the fitted auto-decoder renders over every dataset view,
/// using each scene's trained latent. The generator-pretraining quality
/// gate reads this number.
pub fn train_view_psnr(state: &ModelState, ds: &Dataset, rcfg: &RenderConfig) -> Result<f64> {
    let n = ds.scenes.len();
    if state.latents.shape()[0] != n {
        return Err(Error::dim(format!(
            "checkpoint stores {} scene latents, dataset has {n} scenes",
            state.latents.shape()[0]
        )));
    }
    let per_scene: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let z = state.latents.narrow(0, i, 1)?.reshape(vec![state.cfg.dz])?;
            let tri = state.gen.synthesize(&state.gen.map_latent_raw(&z)?)?;
            let sv = &ds.scenes[i];
            let mut acc = 0.0;
            for (cam, img) in sv.cams.iter().zip(&sv.images) {
                let (hi, _) =
                    render(&tri, &state.mlp, &state.sr, cam, rcfg, RaySampling::Midpoint)?;
                acc += crate::metrics::metric_psnr(&hi, img)?;
            }
            Ok(acc / sv.cams.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_scene.iter().sum::<f64>() / n as f64)
}
