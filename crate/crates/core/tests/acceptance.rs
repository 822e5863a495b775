//! Release gate: eight criteria covering gradients, renderer correctness,
//! structural identities, optimizer contracts, the end-to-end desk run, the
//! seven-method comparison, metric fixpoints, and persistence.
//!
//! Everything runs in one test, in order, against shared artifacts; each
//! criterion prints a single PASS/FAIL line with its key numbers. Budgets
//! (step counts, schedule) are desk-scale and recorded here next to the
//! seeds that pin them.
//!
//! Run with: `cargo test --test acceptance -- --nocapture`

use std::time::Instant;

use rand::Rng;
use triplane_core::camera::Camera;
use triplane_core::ckpt::{load_checkpoint, save_checkpoint};
use triplane_core::config::ModelConfig;
use triplane_core::encoders::{cttr_refine, invert_forward};
use triplane_core::engines::{
    finetune_generator_pti, optimize_triplane_offsets, optimize_wplus, run_inversion,
    train_encoders, InversionMethod, InversionOpts, PtiConfig, TrainSchedule, TriOptConfig,
    WplusConfig,
};
use triplane_core::error::Result;
use triplane_core::generator::{fit_autodecoder, AutoDecConfig};
use triplane_core::gradcheck::{end_to_end_render_check, op_suite};
use triplane_core::init::{rng_from_seed, uniform};
use triplane_core::losses::{loss_first, loss_second, loss_total, LossWeights, Proxies};
use triplane_core::metrics::{metric_ms_ssim, metric_psnr};
use triplane_core::optim::LbfgsConfig;
use triplane_core::render::{composite, render, RaySampling, RenderConfig};
use triplane_core::report::{evaluate_methods, train_view_psnr};
use triplane_core::scenes::{
    build_dataset, flip_horizontal, mirror, render_scene_oracle, sample_generated_training,
    Dataset, PosedImage, SceneSpec, ORACLE_SAMPLES,
};
use triplane_core::state::ModelState;
use triplane_core::tensor::Tensor;

// Recorded budgets and seeds. The desk run must clear its quality bars with
// these exact settings; raising budgets to pass is fine only if recorded.
const SEED_MODEL: u64 = 7;
const SEED_TRAIN_DATA: u64 = 11;
const SEED_HELDOUT_DATA: u64 = 13;
const SEED_FIT: u64 = 17;
const SEED_ENCODERS: u64 = 23;
const FIT_STEPS: usize = 1500;
const FIT_BATCH: usize = 4;
const FIT_LR: f64 = 2e-3;
const ENC_SCHEDULE: TrainSchedule = TrainSchedule {
    total: 600,
    second_start: 60,
    freeze_first: 300,
    batch: 3,
    lr: 1e-4,
    generated_fraction: 0.5,
    seed: SEED_ENCODERS,
};
const TRAIN_PSNR_GATE_DB: f64 = 26.0;
/// Reduced per-image budgets for the held-out comparison (full CLI defaults
/// would put the 7-method sweep over half an hour on one core).
fn eval_opts() -> InversionOpts {
    InversionOpts {
        wplus: WplusConfig { steps: 60, lr: 5e-3, weights: LossWeights::default() },
        pti: PtiConfig { steps: 30, lr: 1e-3, weights: LossWeights::default() },
        triopt: TriOptConfig {
            lbfgs: LbfgsConfig { max_steps: 8, ..LbfgsConfig::default() },
            ..TriOptConfig::default()
        },
        cttr_rounds: 1,
    }
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max)
}

fn bit_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape()
        && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Gradients: every differentiable op at 1e-3, the full image-loss-to-plane
/// chain at 1e-2, in under two minutes.
fn criterion_gradients() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let mut checks = op_suite::<f32>(SEED_MODEL, 8, 1e-2, 1e-3)?;
    checks.push(end_to_end_render_check(SEED_MODEL ^ 0xe2e, 1e-2)?);
    let ops = checks.len();
    let all_pass = checks.iter().all(|c| c.pass);
    let worst = checks.iter().max_by(|a, b| {
        (a.max_rel / a.tol).partial_cmp(&(b.max_rel / b.tol)).unwrap()
    });
    let worst = worst.map(|c| format!("{} {:.2e}/{:.0e}", c.op, c.max_rel, c.tol)).unwrap_or_default();
    let secs = t0.elapsed().as_secs_f64();
    Ok((all_pass && secs < 120.0, format!("{ops} checks, worst {worst}, {secs:.1} s")))
}

/// Renderer against closed forms: homogeneous-slab transmittance, the
/// weights + residual partition of unity, and the shared quadrature fed
/// analytic densities versus the f64 oracle image.
fn criterion_renderer_oracle() -> Result<(bool, String)> {
    // Homogeneous slab: T = exp(-sigma * L) at 64 midpoint samples.
    let n = 64;
    let length = 2.0f64;
    let mut slab_err = 0.0f64;
    for sigma in [0.5f64, 1.3, 3.0] {
        let sigmas = Tensor::<f64>::full(vec![1, n], sigma);
        let colors = Tensor::<f64>::full(vec![1, n, 3], 1.0);
        let deltas = Tensor::<f64>::full(vec![1, n], length / n as f64);
        let out = composite(&sigmas, &colors, &deltas)?;
        slab_err = slab_err.max((out.t_final.data()[0] - (-sigma * length).exp()).abs());
    }

    // sum(weights) + T_final telescopes to 1 on random rays, in f32.
    let rays = 10_000;
    let mut rng = rng_from_seed(SEED_MODEL ^ 0x7e1e);
    let sigmas = uniform::<f32>(vec![rays, 48], 0.0, 3.0, &mut rng);
    let colors = uniform::<f32>(vec![rays, 48, 3], 0.0, 1.0, &mut rng);
    let deltas = uniform::<f32>(vec![rays, 48], 0.01, 0.1, &mut rng);
    let out = composite(&sigmas, &colors, &deltas)?;
    let wsum = out.weights.sum_axis(1)?;
    let mut unity_err = 0.0f64;
    for r in 0..rays {
        let s = wsum.data()[r] as f64 + out.t_final.data()[r] as f64;
        unity_err = unity_err.max((s - 1.0).abs());
    }

    // The f32 quadrature reproduces the f64 oracle image when fed the same
    // analytic densities at the same midpoints.
    let mut rng = rng_from_seed(SEED_MODEL ^ 0x0c1e);
    let spec = SceneSpec::sample(&mut rng);
    let cfg = ModelConfig::default();
    let cam = Camera::orbit(0.35, -0.15, cfg.radius, cfg.fov_y)?;
    let (res, samples) = (16, 32);
    let truth = render_scene_oracle(&spec, &cam, res, samples, cfg.bound)?;
    let rays_v = cam.rays(res)?;
    let r = rays_v.len();
    let span = cfg.bound * 3f64.sqrt();
    let (near, far) = (cam.radius - span, cam.radius + span);
    let dt = (far - near) / samples as f64;
    let mut sig = vec![0f32; r * samples];
    let mut col = vec![0f32; r * samples * 3];
    for (ri, ray) in rays_v.iter().enumerate() {
        for k in 0..samples {
            let t = near + (k as f64 + 0.5) * dt;
            let p = [
                ray.origin[0] + t * ray.dir[0],
                ray.origin[1] + t * ray.dir[1],
                ray.origin[2] + t * ray.dir[2],
            ];
            let (c, s) = spec.emission(p);
            sig[ri * samples + k] = s as f32;
            for ch in 0..3 {
                col[(ri * samples + k) * 3 + ch] = c[ch] as f32;
            }
        }
    }
    let out = composite(
        &Tensor::<f32>::from_vec(vec![r, samples], sig)?,
        &Tensor::<f32>::from_vec(vec![r, samples, 3], col)?,
        &Tensor::<f32>::full(vec![r, samples], dt as f32),
    )?;
    let img = out.color.transpose2d()?.reshape(vec![3, res, res])?;
    let quad_err = max_abs_diff(&img, &truth);

    let pass = slab_err < 1e-3 && unity_err < 1e-5 && quad_err < 1e-5;
    Ok((pass, format!("slab {slab_err:.1e}, unity {unity_err:.1e}, quadrature {quad_err:.1e}")))
}

/// Structural identities, all bit-exact: a fresh offset net changes nothing;
/// refinement rounds always add to the initial planes; the two-branch loss
/// is the sum of its branch terms.
fn criterion_structural() -> Result<(bool, String)> {
    let cfg = ModelConfig::default();
    let rcfg = RenderConfig::default();
    let state = ModelState::new(&cfg, 1, 31)?;
    let mut rng = rng_from_seed(33);
    let spec = SceneSpec::sample(&mut rng);
    let cam = Camera::orbit(0.1, 0.05, cfg.radius, cfg.fov_y)?;
    let x = render_scene_oracle(&spec, &cam, rcfg.final_res, 64, cfg.bound)?;

    // Zero-initialized offset head: second branch == first branch, bitwise.
    let inv = invert_forward(
        &x, &cam, &state.phi, &state.psi, &state.gen, &state.mlp, &state.sr, &state.w_bar, &rcfg,
    )?;
    let zero_delta = bit_equal(&inv.y_second, &inv.y_first)
        && (0..3).all(|i| bit_equal(&inv.tri_refined.planes[i], &inv.tri_initial.planes[i]));

    // The feed-forward engine on a fresh model equals the first branch too.
    let run = run_inversion(
        InversionMethod::Encoder,
        &x,
        &cam,
        &state,
        &rcfg,
        &Proxies::new(state.proxy_seed),
        &InversionOpts::default(),
    )?;
    let engine_match = bit_equal(&run.image, &inv.y_first);

    // Sentinel: make the offset net constant (all weights zero, nonzero
    // final bias). A second refinement round then produces the same planes
    // if and only if offsets are applied to the initial tri-plane.
    let mut psi = state.psi.map_tensors(&mut |t| Tensor::zeros(t.shape().to_vec()));
    {
        let mut ps = psi.params_mut();
        let last = ps.last_mut().expect("offset net has parameters");
        let len = last.numel();
        **last = Tensor::from_vec(
            last.shape().to_vec(),
            (0..len).map(|i| 0.02 * ((i % 7) as f32 - 3.0)).collect(),
        )?;
    }
    let delta = psi.forward(&inv.y_second, &x.sub(&inv.y_second)?)?;
    let expected = inv.tri_initial.apply_offsets(&delta)?;
    let (_, tri1) = cttr_refine(&x, &cam, &inv, &psi, &state.mlp, &state.sr, &rcfg, 1)?;
    let (_, tri2) = cttr_refine(&x, &cam, &inv, &psi, &state.mlp, &state.sr, &rcfg, 2)?;
    let sentinel = (0..3).all(|i| {
        bit_equal(&tri1.planes[i], &tri2.planes[i])
            && bit_equal(&tri1.planes[i], &expected.planes[i])
    });

    // Loss additivity: total == first + second, exact in f32.
    let proxies = Proxies::new(3);
    let w = LossWeights::default();
    let mut rng = rng_from_seed(35);
    let (a, b, c) = (
        uniform::<f32>(vec![3, 64, 64], 0.0, 1.0, &mut rng),
        uniform::<f32>(vec![3, 64, 64], 0.0, 1.0, &mut rng),
        uniform::<f32>(vec![3, 64, 64], 0.0, 1.0, &mut rng),
    );
    let total = loss_total(&a, &b, &c, &w, &proxies)?.data()[0];
    let summed = loss_first(&a, &b, &w, &proxies)?.data()[0] + loss_second(&a, &c, &w, &proxies)?.data()[0];
    let additive = total.to_bits() == summed.to_bits();

    let pass = zero_delta && engine_match && sentinel && additive;
    Ok((
        pass,
        format!(
            "zero-offset {zero_delta}, engine {engine_match}, refinement-sentinel {sentinel}, additivity {additive}"
        ),
    ))
}

/// Optimizer contracts on 20 random targets: each stage's returned objective
/// never exceeds its starting objective (best-iterate / line-search rule).
fn criterion_monotonicity() -> Result<(bool, String)> {
    let cfg = ModelConfig::default();
    let rcfg = RenderConfig::default();
    let proxies = Proxies::new(3);
    let mut rng = rng_from_seed(43);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for t in 0..20 {
        let spec = SceneSpec::sample(&mut rng);
        let yaw: f64 = rng.random_range(-0.5..0.5);
        let pitch: f64 = rng.random_range(-0.25..0.25);
        let cam = Camera::orbit(yaw, pitch, cfg.radius, cfg.fov_y)?;
        let x = render_scene_oracle(&spec, &cam, rcfg.final_res, 64, cfg.bound)?;
        let mut state = ModelState::new(&cfg, 1, 100 + t)?;

        let wcfg = WplusConfig { steps: 6, lr: 5e-3, weights: LossWeights::default() };
        let wr = optimize_wplus(
            &x, &cam, &state.gen, &state.mlp, &state.sr, &state.w_bar, &rcfg, &proxies, &wcfg,
        )?;
        let (w0, w1) = (wr.trace[0], *wr.trace.last().unwrap());

        let pcfg = PtiConfig { steps: 4, lr: 1e-3, weights: LossWeights::default() };
        let pr = finetune_generator_pti(
            &x, &cam, &wr.w, &mut state.gen, &mut state.mlp, &mut state.sr, &rcfg, &proxies, &pcfg,
        )?;
        let (p0, p1) = (pr.trace[0], *pr.trace.last().unwrap());

        let tri = state.gen.synthesize(&wr.w)?;
        let (y_first, _) = render(&tri, &state.mlp, &state.sr, &cam, &rcfg, RaySampling::Midpoint)?;
        let tcfg = TriOptConfig {
            lbfgs: LbfgsConfig { max_steps: 4, ..LbfgsConfig::default() },
            ..TriOptConfig::default()
        };
        let (_, lr) = optimize_triplane_offsets(
            &x, &cam, &tri, &y_first, &state.mlp, &state.sr, &rcfg, &proxies, &tcfg,
        )?;
        let (l0, l1) = (lr.trace[0], lr.f);

        for (a, b) in [(w0, w1), (p0, p1), (l0, l1)] {
            worst = worst.max(b - a);
            if b > a {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("60 stage runs, failures {failures}, worst final-initial {worst:.1e}")))
}

struct DeskRun {
    state: ModelState,
    heldout: Dataset,
    proxies: Proxies,
    rcfg: RenderConfig,
    psnr_db: f64,
    secs: f64,
}

/// The end-to-end desk run: 64 scenes x 8 views at 64x64, auto-decoder fit
/// to the recorded PSNR gate, then the full encoder schedule.
fn criterion_desk_run() -> Result<(bool, String, DeskRun)> {
    let t0 = Instant::now();
    let cfg = ModelConfig::default();
    let rcfg = RenderConfig::default();
    let ds = build_dataset(64, 8, rcfg.final_res, cfg.bound, cfg.radius, cfg.fov_y, false, SEED_TRAIN_DATA)?;
    let mut state = ModelState::new(&cfg, ds.scenes.len(), SEED_MODEL)?;
    let proxies = Proxies::new(state.proxy_seed);

    let fit_cfg = AutoDecConfig {
        steps: FIT_STEPS,
        batch: FIT_BATCH,
        lr: FIT_LR,
        seed: SEED_FIT,
        ..AutoDecConfig::default()
    };
    {
        let ModelState { gen, mlp, sr, latents, .. } = &mut state;
        fit_autodecoder(gen, mlp, sr, latents, &ds, &rcfg, &proxies, &fit_cfg)?;
    }
    state.refresh_w_bar()?;
    let psnr_db = train_view_psnr(&state, &ds, &rcfg)?;

    let pool = sample_generated_training(&state.gen, &state.mlp, &state.sr, &rcfg, 48, SEED_MODEL ^ 0x9e00)?;
    {
        let ModelState { gen, mlp, sr, w_bar, phi, psi, .. } = &mut state;
        train_encoders(phi, psi, gen, mlp, sr, w_bar, &ds, &pool, &rcfg, &proxies, &ENC_SCHEDULE)?;
    }

    let heldout = build_dataset(32, 1, rcfg.final_res, cfg.bound, cfg.radius, cfg.fov_y, false, SEED_HELDOUT_DATA)?;
    let secs = t0.elapsed().as_secs_f64();
    let pass = psnr_db >= TRAIN_PSNR_GATE_DB && secs <= 3600.0;
    let detail = format!(
        "{FIT_STEPS} fit steps -> train-view PSNR {psnr_db:.2} dB (gate {TRAIN_PSNR_GATE_DB}), encoders {} steps, {:.1} min",
        ENC_SCHEDULE.total,
        secs / 60.0
    );
    Ok((pass, detail, DeskRun { state, heldout, proxies, rcfg, psnr_db, secs }))
}

/// The seven-method comparison on held-out scenes: full report, second
/// branch refines the first on average (hard), encoder novel-view
/// degradation vs the latent optimizer (flagged), and feed-forward timing
/// invariant to optimizer budgets (hard).
fn criterion_comparison(run: &DeskRun) -> Result<(bool, String)> {
    let DeskRun { state, heldout, proxies, rcfg, .. } = run;
    let yaws = [-0.6, -0.3, 0.3, 0.6];
    let opts = eval_opts();
    let report = evaluate_methods(state, heldout, &InversionMethod::ALL, &yaws, rcfg, proxies, &opts)?;
    println!("{}", report.to_table());

    // Second branch refines: mean same-view PSNR of the refined output must
    // not fall below the first branch's, over all held-out scenes.
    let (mut first_sum, mut second_sum) = (0.0f64, 0.0f64);
    for sv in &heldout.scenes {
        let inv = invert_forward(
            &sv.images[0], &sv.cams[0], &state.phi, &state.psi, &state.gen, &state.mlp,
            &state.sr, &state.w_bar, rcfg,
        )?;
        first_sum += metric_psnr(&inv.y_first, &sv.images[0])?;
        second_sum += metric_psnr(&inv.y_second, &sv.images[0])?;
    }
    let n = heldout.scenes.len() as f64;
    let (first_db, second_db) = (first_sum / n, second_sum / n);
    let refines = second_db >= first_db;

    // Degradation factor same-view -> |yaw|=0.6 novel views, encoder vs the
    // latent optimizer. Desk-scale magnitudes are not guaranteed: FLAG, not fail.
    let factor = |name: &str| -> f64 {
        let row = report.rows.iter().find(|r| r.method == name).expect("method row");
        let novel06: f64 = row
            .novel
            .iter()
            .filter(|c| (c.yaw.abs() - 0.6).abs() < 1e-9)
            .map(|c| c.psnr)
            .sum::<f64>()
            / 2.0;
        row.same_psnr / novel06
    };
    let (enc_factor, wplus_factor) = (factor("encoder"), factor("wplus"));
    let consistency = enc_factor < wplus_factor;

    // Feed-forward timing must not scale with optimizer step budgets.
    let sv = &heldout.scenes[0];
    let mut opts_big = eval_opts();
    opts_big.wplus.steps = 400;
    opts_big.pti.steps = 400;
    opts_big.triopt.lbfgs.max_steps = 40;
    let time_min = |opts: &InversionOpts| -> Result<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            run_inversion(InversionMethod::Encoder, &sv.images[0], &sv.cams[0], state, rcfg, proxies, opts)?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let (t_small, t_big) = (time_min(&eval_opts())?, time_min(&opts_big)?);
    let invariant = t_big / t_small < 1.5;

    let pass = refines && invariant;
    let flag = if consistency { "PASS" } else { "FLAG" };
    Ok((
        pass,
        format!(
            "refine {first_db:.2}->{second_db:.2} dB ({}), novel-view consistency {flag} (encoder x{enc_factor:.3} vs wplus x{wplus_factor:.3}), encoder timing {t_small:.2}s vs {t_big:.2}s ({})",
            if refines { "ok" } else { "VIOLATED" },
            if invariant { "invariant" } else { "SCALES" },
        ),
    ))
}

/// Metric fixpoints and mirror symmetry.
fn criterion_metrics() -> Result<(bool, String)> {
    let cfg = ModelConfig::default();
    let mut rng = rng_from_seed(51);
    let spec = SceneSpec::sample(&mut rng);
    let cam = Camera::orbit(0.3, 0.1, cfg.radius, cfg.fov_y)?;
    let x = render_scene_oracle(&spec, &cam, 32, ORACLE_SAMPLES, cfg.bound)?;

    let self_sim = (metric_ms_ssim(&x, &x)? - 1.0).abs();

    // 0.6 is not exactly representable in f32; ~2e-6 dB of rounding remains.
    let a = Tensor::full(vec![3, 32, 32], 0.5f32);
    let b = Tensor::full(vec![3, 32, 32], 0.6f32);
    let psnr_err = (metric_psnr(&a, &b)? - 20.0).abs();

    let view = PosedImage { image: x.clone(), cam, scene: 0, mirrored: false };
    let twice = mirror(&mirror(&view)?)?;
    let involution = bit_equal(&twice.image, &view.image)
        && twice.cam.yaw == view.cam.yaw
        && !twice.mirrored;

    let mcam = Camera { yaw: -cam.yaw, ..cam };
    let mirrored_oracle = render_scene_oracle(&spec.mirror_x(), &mcam, 32, ORACLE_SAMPLES, cfg.bound)?;
    let sym_err = max_abs_diff(&flip_horizontal(&x)?, &mirrored_oracle);

    let pass = self_sim < 1e-6 && psnr_err < 1e-5 && involution && sym_err < 1e-5;
    Ok((
        pass,
        format!("self-similarity err {self_sim:.1e}, psnr err {psnr_err:.1e}, involution {involution}, mirror symmetry {sym_err:.1e}"),
    ))
}

/// Persistence: checkpoint round-trip is bit-exact and a seeded evaluation
/// serializes to identical bytes, including from a reloaded checkpoint.
fn criterion_persistence(run: &DeskRun) -> Result<(bool, String)> {
    let DeskRun { state, heldout, proxies, rcfg, .. } = run;
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("model.tpnc");
    save_checkpoint(&path, state)?;
    let loaded = load_checkpoint(&path)?;
    let round_trip = state.cfg == loaded.cfg
        && state.seed == loaded.seed
        && state.proxy_seed == loaded.proxy_seed
        && state
            .named_tensors()
            .iter()
            .zip(loaded.named_tensors().iter())
            .all(|((na, ta), (nb, tb))| na == nb && bit_equal(ta, tb));

    let mini = Dataset { scenes: heldout.scenes[..2].to_vec(), res: heldout.res };
    let methods = [InversionMethod::Encoder, InversionMethod::EncoderCttr];
    let yaws = [-0.3, 0.3];
    let opts = eval_opts();
    let j1 = evaluate_methods(state, &mini, &methods, &yaws, rcfg, proxies, &opts)?.to_jsonl()?;
    let j2 = evaluate_methods(state, &mini, &methods, &yaws, rcfg, proxies, &opts)?.to_jsonl()?;
    let j3 = evaluate_methods(&loaded, &mini, &methods, &yaws, rcfg, &Proxies::new(loaded.proxy_seed), &opts)?
        .to_jsonl()?;
    let byte_identical = j1 == j2 && j1 == j3;

    Ok((
        round_trip && byte_identical,
        format!("round-trip bit-exact {round_trip}, seeded reports byte-identical {byte_identical}"),
    ))
}

#[test]
fn release_gate() {
    let mut results: Vec<(&str, bool, String)> = Vec::new();
    let mut run_criterion = |name: &'static str, out: Result<(bool, String)>, results: &mut Vec<(&str, bool, String)>| {
        let (pass, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("criterion {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        results.push((name, pass, detail));
    };

    run_criterion("1 gradients", criterion_gradients(), &mut results);
    run_criterion("2 renderer-oracle", criterion_renderer_oracle(), &mut results);
    run_criterion("3 structural", criterion_structural(), &mut results);
    run_criterion("4 monotonicity", criterion_monotonicity(), &mut results);

    match criterion_desk_run() {
        Ok((pass, detail, desk)) => {
            println!("criterion 5 desk-run: {} ({detail})", if pass { "PASS" } else { "FAIL" });
            results.push(("5 desk-run", pass, detail));
            run_criterion("6 method-comparison", criterion_comparison(&desk), &mut results);
            run_criterion("7 metrics", criterion_metrics(), &mut results);
            run_criterion("8 persistence", criterion_persistence(&desk), &mut results);
            let _ = (desk.psnr_db, desk.secs);
        }
        Err(e) => {
            println!("criterion 5 desk-run: FAIL (error: {e})");
            results.push(("5 desk-run", false, format!("error: {e}")));
            println!("criterion 6 method-comparison: SKIP (no desk artifacts)");
            println!("criterion 7 metrics: run standalone");
            run_criterion("7 metrics", criterion_metrics(), &mut results);
            println!("criterion 8 persistence: SKIP (no desk artifacts)");
            results.push(("6 method-comparison", false, "skipped".into()));
            results.push(("8 persistence", false, "skipped".into()));
        }
    }

    let failed: Vec<&str> = results.iter().filter(|(_, p, _)| !p).map(|(n, _, _)| *n).collect();
    assert!(failed.is_empty(), "criteria failed: {}", failed.join(", "));
}
