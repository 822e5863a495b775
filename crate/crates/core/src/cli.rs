//! Command-line surface: dataset generation, the two training stages,
//! single-image inversion, novel-view sweeps, the method comparison report,
//! and gradient verification.
//!
//! Option precedence is CLI flag > config file > built-in default. The
//! config file is flat UTF-8 `key = value` lines; `#` starts a comment.
//! Exit codes: 0 success, 1 usage/configuration, 2 bad data or integrity.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::camera::Camera;
use crate::ckpt::{load_checkpoint, save_checkpoint};
use crate::config::{FlatConfig, ModelConfig};
use crate::engines::{
    train_encoders, InversionMethod, InversionOpts, TrainSchedule,
};
use crate::error::{Error, Result};
use crate::generator::{fit_autodecoder, AutoDecConfig};
use crate::losses::Proxies;
use crate::metrics::NOVEL_YAWS;
use crate::pngio::{load_png, save_png};
use crate::render::{render, RaySampling, RenderConfig};
use crate::report::{evaluate_methods, train_view_psnr};
use crate::scenes::{build_dataset, load_dataset, sample_generated_training, save_dataset};
use crate::state::ModelState;

#[derive(Parser)]
#[command(
    name = "triplane",
    version,
    about = "Tri-plane scene generator with two-branch inversion",
    disable_help_subcommand = true
)]
struct Cli {
    /// Flat `key = value` config file; CLI flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for rendering, training, and evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic multi-view dataset to a directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        scenes: Option<usize>,
        /// Views per scene.
        #[arg(long)]
        views: Option<usize>,
        /// Double the dataset with x-mirrored scenes.
        #[arg(long)]
        mirror: bool,
    },
    /// Fit the generator and per-scene latents to a dataset (auto-decoder).
    TrainGenerator {
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Train the two inversion branches against a trained generator.
    TrainEncoders {
        #[arg(long)]
        data: PathBuf,
        /// Input checkpoint (from train-generator).
        #[arg(long)]
        ckpt: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        total: Option<usize>,
        /// Step at which the offset branch starts training.
        #[arg(long)]
        second_start: Option<usize>,
        /// Step at which the latent branch freezes.
        #[arg(long)]
        freeze_first: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Invert one posed image and write the reconstruction.
    Invert {
        #[arg(long)]
        ckpt: PathBuf,
        /// Input PNG.
        #[arg(long)]
        input: PathBuf,
        /// Output PNG (same-view reconstruction).
        #[arg(long)]
        out: PathBuf,
        /// One of: wplus, pti, wplus+triplane_opt, encoder, encoder+pti,
        /// encoder+triplane_opt, encoder+cttr.
        #[arg(long)]
        method: String,
        /// Refinement rounds for encoder+cttr.
        #[arg(long)]
        cttr: Option<usize>,
        /// Camera yaw of the input, radians.
        #[arg(long)]
        yaw: Option<f64>,
        /// Camera pitch of the input, radians.
        #[arg(long)]
        pitch: Option<f64>,
    },
    /// Invert one posed image, then render it across a yaw sweep.
    RenderSweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Directory for the per-yaw PNGs.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        method: Option<String>,
        /// Comma-separated yaws, radians.
        #[arg(long)]
        yaw_list: Option<String>,
        #[arg(long)]
        cttr: Option<usize>,
        #[arg(long)]
        yaw: Option<f64>,
        #[arg(long)]
        pitch: Option<f64>,
    },
    /// Score inversion methods on a held-out dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// "all" or a comma-separated subset of method names.
        #[arg(long)]
        methods: Option<String>,
        /// Comma-separated sweep yaws, radians.
        #[arg(long)]
        yaw_list: Option<String>,
        /// Where to write report.jsonl and report.txt.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Evaluate only the first N scenes.
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        /// Random cases per op.
        #[arg(long)]
        instances: Option<usize>,
    },
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    fc: FlatConfig,
    cfg: ModelConfig,
    rcfg: RenderConfig,
    seed: u64,
}

impl Ctx {
    fn new(config: Option<&Path>, seed: Option<u64>, threads: Option<usize>) -> Result<Ctx> {
        let fc = match config {
            Some(p) => FlatConfig::load(p)?,
            None => FlatConfig::default(),
        };
        let cfg = ModelConfig::default().with_overrides(&fc)?;
        let low = fc.get_usize("render.low_res", 32)?;
        let rcfg = RenderConfig {
            n_samples: fc.get_usize("render.samples", 48)?,
            low_res: low,
            final_res: 2 * low,
        };
        let seed = match seed {
            Some(s) => s,
            None => fc.get_u64("seed", 7)?,
        };
        let threads = match threads {
            Some(t) => t,
            None => fc.get_usize("threads", 0)?,
        };
        if threads > 0 {
            // Ignore the error if a pool already exists (e.g. repeat calls
            // inside one process); thread count is best-effort.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
        Ok(Ctx { fc, cfg, rcfg, seed })
    }

    fn load_state(&self, path: &Path) -> Result<ModelState> {
        let state = load_checkpoint(path)?;
        if state.cfg != self.cfg && self.fc.keys().any(|k| k.starts_with("model.")) {
            return Err(Error::config(
                "checkpoint model dimensions differ from the configured ones",
            ));
        }
        Ok(state)
    }

    fn inversion_opts(&self, cttr: Option<usize>) -> Result<InversionOpts> {
        let mut opts = InversionOpts::default();
        opts.wplus.steps = self.fc.get_usize("opt.wplus_steps", opts.wplus.steps)?;
        opts.wplus.lr = self.fc.get_f64("opt.wplus_lr", opts.wplus.lr)?;
        opts.pti.steps = self.fc.get_usize("opt.pti_steps", opts.pti.steps)?;
        opts.pti.lr = self.fc.get_f64("opt.pti_lr", opts.pti.lr)?;
        opts.triopt.lbfgs.max_steps =
            self.fc.get_usize("opt.lbfgs_steps", opts.triopt.lbfgs.max_steps)?;
        opts.cttr_rounds = match cttr {
            Some(n) => n,
            None => self.fc.get_usize("opt.cttr_rounds", opts.cttr_rounds)?,
        };
        Ok(opts)
    }

    fn input_camera(&self, yaw: Option<f64>, pitch: Option<f64>) -> Result<Camera> {
        Camera::orbit(yaw.unwrap_or(0.0), pitch.unwrap_or(0.0), self.cfg.radius, self.cfg.fov_y)
    }
}

fn parse_yaw_list(s: &str) -> Result<Vec<f64>> {
    let yaws = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::usage(format!("bad yaw `{p}` in --yaw-list")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if yaws.is_empty() {
        return Err(Error::usage("--yaw-list must name at least one yaw"));
    }
    Ok(yaws)
}

fn parse_methods(s: &str) -> Result<Vec<InversionMethod>> {
    if s.trim() == "all" {
        return Ok(InversionMethod::ALL.to_vec());
    }
    s.split(',').map(|p| InversionMethod::parse(p.trim())).collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.config.as_deref(), cli.seed, cli.threads)?;
    match cli.cmd {
        Cmd::GenData { out, scenes, views, mirror } => {
            let n_scenes = match scenes {
                Some(n) => n,
                None => ctx.fc.get_usize("data.scenes", 64)?,
            };
            let n_views = match views {
                Some(v) => v,
                None => ctx.fc.get_usize("data.views", 8)?,
            };
            let mirror = mirror || ctx.fc.get_bool("data.mirror", false)?;
            let ds = build_dataset(
                n_scenes,
                n_views,
                ctx.rcfg.final_res,
                ctx.cfg.bound,
                ctx.cfg.radius,
                ctx.cfg.fov_y,
                mirror,
                ctx.seed,
            )?;
            save_dataset(&ds, &out, ctx.cfg.bound)?;
            println!(
                "wrote {} scenes x {} views at {} px to {}",
                ds.scenes.len(),
                n_views,
                ctx.rcfg.final_res,
                out.display()
            );
            Ok(())
        }
        Cmd::TrainGenerator { data, out, steps, batch } => {
            let ds = load_dataset(&data)?;
            let mut state = ModelState::new(&ctx.cfg, ds.scenes.len(), ctx.seed)?;
            let defaults = AutoDecConfig::default();
            let adcfg = AutoDecConfig {
                steps: match steps {
                    Some(s) => s,
                    None => ctx.fc.get_usize("train.steps", defaults.steps)?,
                },
                batch: match batch {
                    Some(b) => b,
                    None => ctx.fc.get_usize("train.batch", defaults.batch)?,
                },
                lr: ctx.fc.get_f64("train.lr", defaults.lr)?,
                perc_weight: ctx.fc.get_f64("train.perc_weight", defaults.perc_weight)?,
                raw_weight: ctx.fc.get_f64("train.raw_weight", defaults.raw_weight)?,
                seed: ctx.seed ^ 0x5eed,
            };
            let proxies = Proxies::new(state.proxy_seed);
            let trace = fit_autodecoder(
                &mut state.gen,
                &mut state.mlp,
                &mut state.sr,
                &mut state.latents,
                &ds,
                &ctx.rcfg,
                &proxies,
                &adcfg,
            )?;
            state.refresh_w_bar()?;
            save_checkpoint(&out, &state)?;
            let psnr = train_view_psnr(&state, &ds, &ctx.rcfg)?;
            println!(
                "fit {} steps: loss {:.5} -> {:.5}, train-view PSNR {:.2} dB, saved {}",
                trace.losses.len(),
                trace.losses.first().copied().unwrap_or(f64::NAN),
                trace.losses.last().copied().unwrap_or(f64::NAN),
                psnr,
                out.display()
            );
            Ok(())
        }
        Cmd::TrainEncoders { data, ckpt, out, total, second_start, freeze_first, batch } => {
            let ds = load_dataset(&data)?;
            let mut state = ctx.load_state(&ckpt)?;
            let d = TrainSchedule::default();
            let sched = TrainSchedule {
                total: match total {
                    Some(t) => t,
                    None => ctx.fc.get_usize("encoders.total", d.total)?,
                },
                second_start: match second_start {
                    Some(s) => s,
                    None => ctx.fc.get_usize("encoders.second_start", d.second_start)?,
                },
                freeze_first: match freeze_first {
                    Some(f) => f,
                    None => ctx.fc.get_usize("encoders.freeze_first", d.freeze_first)?,
                },
                batch: match batch {
                    Some(b) => b,
                    None => ctx.fc.get_usize("encoders.batch", d.batch)?,
                },
                lr: ctx.fc.get_f64("encoders.lr", d.lr)?,
                generated_fraction: ctx
                    .fc
                    .get_f64("encoders.generated_fraction", d.generated_fraction)?,
                seed: ctx.seed ^ 0xec0de,
            };
            let pool = ctx.fc.get_usize("encoders.generated_pool", 48)?;
            let generated = sample_generated_training(
                &state.gen,
                &state.mlp,
                &state.sr,
                &ctx.rcfg,
                pool,
                ctx.seed ^ 0x9e00,
            )?;
            let proxies = Proxies::new(state.proxy_seed);
            let report = train_encoders(
                &mut state.phi,
                &mut state.psi,
                &state.gen,
                &state.mlp,
                &state.sr,
                &state.w_bar,
                &ds,
                &generated,
                &ctx.rcfg,
                &proxies,
                &sched,
            )?;
            save_checkpoint(&out, &state)?;
            println!(
                "trained encoders for {} steps: loss {:.5} -> {:.5}, saved {}",
                report.losses.len(),
                report.losses.first().copied().unwrap_or(f64::NAN),
                report.losses.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
            Ok(())
        }
        Cmd::Invert { ckpt, input, out, method, cttr, yaw, pitch } => {
            let method = InversionMethod::parse(&method)?;
            let state = ctx.load_state(&ckpt)?;
            let x = load_png(&input)?;
            let cam = ctx.input_camera(yaw, pitch)?;
            let opts = ctx.inversion_opts(cttr)?;
            let proxies = Proxies::new(state.proxy_seed);
            let run = crate::engines::run_inversion(
                method, &x, &cam, &state, &ctx.rcfg, &proxies, &opts,
            )?;
            save_png(&out, &run.image)?;
            let psnr = crate::metrics::metric_psnr(&run.image, &x)?;
            for t in &run.timings {
                println!("stage {:<8} {:8.3} s", t.stage, t.seconds);
            }
            println!(
                "{}: PSNR {:.2} dB in {:.3} s, wrote {}",
                method.name(),
                psnr,
                run.total_seconds(),
                out.display()
            );
            Ok(())
        }
        Cmd::RenderSweep { ckpt, input, out_dir, method, yaw_list, cttr, yaw, pitch } => {
            let method = match method {
                Some(m) => InversionMethod::parse(&m)?,
                None => InversionMethod::Encoder,
            };
            let yaws = match yaw_list {
                Some(s) => parse_yaw_list(&s)?,
                None => NOVEL_YAWS.to_vec(),
            };
            let state = ctx.load_state(&ckpt)?;
            let x = load_png(&input)?;
            let cam = ctx.input_camera(yaw, pitch)?;
            let opts = ctx.inversion_opts(cttr)?;
            let proxies = Proxies::new(state.proxy_seed);
            let run = crate::engines::run_inversion(
                method, &x, &cam, &state, &ctx.rcfg, &proxies, &opts,
            )?;
            std::fs::create_dir_all(&out_dir)?;
            for y in &yaws {
                let view = Camera { yaw: *y, ..cam };
                view.validate()?;
                let (img, _) =
                    render(&run.tri, &run.mlp, &run.sr, &view, &ctx.rcfg, RaySampling::Midpoint)?;
                let path = out_dir.join(format!("yaw{y:+.2}.png"));
                save_png(&path, &img.detach())?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Cmd::Eval { ckpt, data, methods, yaw_list, out_dir, scenes } => {
            let state = ctx.load_state(&ckpt)?;
            let mut ds = load_dataset(&data)?;
            if let Some(n) = scenes {
                if n == 0 || n > ds.scenes.len() {
                    return Err(Error::usage(format!(
                        "--scenes must be in 1..={}",
                        ds.scenes.len()
                    )));
                }
                ds.scenes.truncate(n);
            }
            let methods = match methods {
                Some(s) => parse_methods(&s)?,
                None => parse_methods(ctx.fc.get("eval.methods").unwrap_or("all"))?,
            };
            let yaws = match yaw_list {
                Some(s) => parse_yaw_list(&s)?,
                None => NOVEL_YAWS.to_vec(),
            };
            let opts = ctx.inversion_opts(None)?;
            let proxies = Proxies::new(state.proxy_seed);
            let report =
                evaluate_methods(&state, &ds, &methods, &yaws, &ctx.rcfg, &proxies, &opts)?;
            print!("{}", report.to_table());
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.jsonl"), report.to_jsonl()?)?;
                std::fs::write(dir.join("report.txt"), report.to_table())?;
                println!("wrote {}", dir.join("report.jsonl").display());
            }
            Ok(())
        }
        Cmd::Gradcheck { instances } => {
            let instances = match instances {
                Some(i) => i,
                None => ctx.fc.get_usize("gradcheck.instances", 8)?,
            };
            let mut checks =
                crate::gradcheck::op_suite::<f32>(ctx.seed, instances, 1e-2, 1e-3)?;
            checks.push(crate::gradcheck::end_to_end_render_check(ctx.seed ^ 0xe2e, 1e-2)?);
            let mut failed = 0usize;
            for c in &checks {
                println!(
                    "{:<22} max rel {:>10.3e}  tol {:>8.0e}  {}",
                    c.op,
                    c.max_rel,
                    c.tol,
                    if c.pass { "pass" } else { "FAIL" }
                );
                if !c.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Error::integrity(format!("{failed} gradient checks failed")));
            }
            println!("all {} gradient checks passed", checks.len());
            Ok(())
        }
    }
}
