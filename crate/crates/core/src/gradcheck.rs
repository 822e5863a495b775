//! Central finite-difference verification of recorded gradients.
//!
//! The checker treats the autodiff result as the claim and the symmetric
//! difference quotient as the oracle. Relative error uses
//! `|a - b| / max(|a|, |b|, 1)`; test inputs are O(1) so the floor only
//! suppresses noise on near-zero gradients.

use crate::error::{Error, Result};
use crate::init::{randn, rng_from_seed, uniform, SeedRng};
use crate::tensor::{grid_sample_2d, Elem, Padding, Tape, Tensor};

/// Max relative error between recorded gradients of `f` and central finite
/// differences, over every element of every input.
pub fn check_gradients<E: Elem>(
    f: &dyn Fn(&[Tensor<E>]) -> Result<Tensor<E>>,
    inputs: &[Tensor<E>],
    step: f64,
) -> Result<f64> {
    let tape: Tape<E> = Tape::new();
    let leaves: Vec<Tensor<E>> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&leaves)?;
    if loss.numel() != 1 {
        return Err(Error::usage("gradient check target must be scalar"));
    }
    let grads = tape.backward(&loss)?;

    let mut max_rel = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let g = grads.get_or_zeros(&leaves[k])?;
        let g = g.data();
        for j in 0..input.numel() {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.to_vec();
                data[j] = data[j] + E::from_f64_val(delta);
                let mut probe: Vec<Tensor<E>> = inputs.to_vec();
                probe[k] = Tensor::from_vec(input.shape().to_vec(), data)?;
                Ok(f(&probe)?.item()?.to_f64_val())
            };
            let fd = (eval(step)? - eval(-step)?) / (2.0 * step);
            let gv = g[j].to_f64_val();
            let rel = (gv - fd).abs() / gv.abs().max(fd.abs()).max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// One op-level check instance.
pub struct OpCheck {
    pub op: &'static str,
    pub max_rel: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Scalarize an op output with a fixed random weighting so every output
/// element influences the loss.
fn weighted_sum<E: Elem>(out: &Tensor<E>, rng: &mut SeedRng) -> Result<Tensor<E>> {
    let w = randn::<E>(out.shape().to_vec(), 1.0, rng);
    out.mul(&w)?.sum_all()
}

/// Run the full differentiable-op suite: `instances` random cases per op,
/// reporting the worst relative error per op against `tol`.
pub fn op_suite<E: Elem>(seed: u64, instances: usize, step: f64, tol: f64) -> Result<Vec<OpCheck>> {
    let mut checks: Vec<OpCheck> = Vec::new();
    let mut rng = rng_from_seed(seed);
    let mut run = |name: &'static str, f: &mut dyn FnMut(&mut SeedRng) -> Result<f64>| -> Result<()> {
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let rel = f(&mut rng)?;
            if rel > worst {
                worst = rel;
            }
        }
        checks.push(OpCheck { op: name, max_rel: worst, tol, pass: worst <= tol });
        Ok(())
    };

    run("add", &mut |rng| {
        let a = randn::<E>(vec![3, 4, 5], 1.0, rng);
        let b = randn::<E>(vec![4, 1], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].add(&xs[1])?, &mut rng_from_seed(7)), &[a, b], step)
    })?;
    run("sub", &mut |rng| {
        let a = randn::<E>(vec![2, 6], 1.0, rng);
        let b = randn::<E>(vec![6], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].sub(&xs[1])?, &mut rng_from_seed(7)), &[a, b], step)
    })?;
    run("mul", &mut |rng| {
        let a = randn::<E>(vec![3, 4], 1.0, rng);
        let b = randn::<E>(vec![3, 1], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].mul(&xs[1])?, &mut rng_from_seed(7)), &[a, b], step)
    })?;
    run("div", &mut |rng| {
        let a = randn::<E>(vec![3, 4], 1.0, rng);
        let b = uniform::<E>(vec![3, 4], 0.7, 1.8, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].div(&xs[1])?, &mut rng_from_seed(7)), &[a, b], step)
    })?;
    run("scale_add_scalar", &mut |rng| {
        let a = randn::<E>(vec![5, 2], 1.0, rng);
        check_gradients(
            &|xs| weighted_sum(&xs[0].scale(1.7)?.add_scalar(0.3)?, &mut rng_from_seed(7)),
            &[a],
            step,
        )
    })?;
    run("square", &mut |rng| {
        let a = randn::<E>(vec![4, 4], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].square()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("exp", &mut |rng| {
        let a = randn::<E>(vec![4, 3], 0.5, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].exp_t()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("sqrt", &mut |rng| {
        let a = uniform::<E>(vec![4, 3], 0.5, 2.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].sqrt_t()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("abs", &mut |rng| {
        // Keep values away from the kink, where FD is meaningless.
        let mut a = randn::<E>(vec![4, 4], 1.0, rng).to_vec();
        for v in &mut a {
            if v.abs() < E::from_f64_val(0.2) {
                *v = v.signum() * E::from_f64_val(0.5);
            }
        }
        let a = Tensor::from_vec(vec![4, 4], a)?;
        check_gradients(&|xs| weighted_sum(&xs[0].abs_t()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("sigmoid", &mut |rng| {
        let a = randn::<E>(vec![5, 3], 1.5, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].sigmoid()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("tanh", &mut |rng| {
        let a = randn::<E>(vec![5, 3], 1.5, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].tanh_t()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("softplus", &mut |rng| {
        let a = randn::<E>(vec![5, 3], 2.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].softplus()?, &mut rng_from_seed(7)), &[a], step)
    })?;
    run("prelu", &mut |rng| {
        // Nudge values off the kink at zero.
        let mut a = randn::<E>(vec![2, 3, 4, 4], 1.0, rng).to_vec();
        for v in &mut a {
            if v.abs() < E::from_f64_val(0.2) {
                *v = v.signum() * E::from_f64_val(0.4) + E::from_f64_val(0.01);
            }
        }
        let a = Tensor::from_vec(vec![2, 3, 4, 4], a)?;
        let alpha = uniform::<E>(vec![3], 0.1, 0.4, rng);
        check_gradients(
            &|xs| weighted_sum(&xs[0].prelu(&xs[1], 1)?, &mut rng_from_seed(7)),
            &[a, alpha],
            step,
        )
    })?;
    run("matmul", &mut |rng| {
        let a = randn::<E>(vec![4, 6], 1.0, rng);
        let b = randn::<E>(vec![6, 3], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].matmul(&xs[1])?, &mut rng_from_seed(7)), &[a, b], step)
    })?;
    run("conv2d_zero_s1", &mut |rng| {
        let x = randn::<E>(vec![1, 2, 5, 5], 1.0, rng);
        let w = randn::<E>(vec![3, 2, 3, 3], 0.5, rng);
        check_gradients(
            &|xs| weighted_sum(&xs[0].conv2d(&xs[1], 1, Padding::Zero)?, &mut rng_from_seed(7)),
            &[x, w],
            step,
        )
    })?;
    run("conv2d_zero_s2", &mut |rng| {
        let x = randn::<E>(vec![1, 2, 6, 6], 1.0, rng);
        let w = randn::<E>(vec![2, 2, 3, 3], 0.5, rng);
        check_gradients(
            &|xs| weighted_sum(&xs[0].conv2d(&xs[1], 2, Padding::Zero)?, &mut rng_from_seed(7)),
            &[x, w],
            step,
        )
    })?;
    run("conv2d_valid", &mut |rng| {
        let x = randn::<E>(vec![2, 2, 5, 5], 1.0, rng);
        let w = randn::<E>(vec![2, 2, 3, 3], 0.5, rng);
        check_gradients(
            &|xs| weighted_sum(&xs[0].conv2d(&xs[1], 1, Padding::Valid)?, &mut rng_from_seed(7)),
            &[x, w],
            step,
        )
    })?;
    run("avg_pool2d", &mut |rng| {
        let x = randn::<E>(vec![1, 3, 6, 6], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].avg_pool2d(2)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("pixel_shuffle", &mut |rng| {
        let x = randn::<E>(vec![1, 8, 3, 3], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].pixel_shuffle(2)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("space_to_depth", &mut |rng| {
        let x = randn::<E>(vec![1, 2, 6, 6], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].space_to_depth(2)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("grid_sample_2d", &mut |rng| {
        let plane = randn::<E>(vec![3, 5, 5], 1.0, rng);
        // Interior coordinates, pushed off bilinear cell boundaries (the
        // value is piecewise in coords, so FD must not straddle a kink).
        // With a 5-texel plane, cell edges sit at multiples of 0.5.
        let mut c = uniform::<E>(vec![6, 2], -0.9, 0.9, rng).to_vec();
        for v in &mut c {
            let vv = v.to_f64_val();
            let frac = (vv / 0.5).round() * 0.5;
            if (vv - frac).abs() < 10.0 * step {
                *v = E::from_f64_val(frac + 0.1);
            }
        }
        let coords = Tensor::from_vec(vec![6, 2], c)?;
        check_gradients(
            &|xs| weighted_sum(&grid_sample_2d(&xs[0], &xs[1])?, &mut rng_from_seed(7)),
            &[plane, coords],
            step,
        )
    })?;
    run("sum_all", &mut |rng| {
        let x = randn::<E>(vec![3, 4], 1.0, rng);
        check_gradients(&|xs| xs[0].sum_all(), &[x], step)
    })?;
    run("mean_all", &mut |rng| {
        let x = randn::<E>(vec![3, 4], 1.0, rng);
        check_gradients(&|xs| xs[0].mean_all(), &[x], step)
    })?;
    run("sum_axis", &mut |rng| {
        let x = randn::<E>(vec![3, 4, 2], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].sum_axis(1)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("mean_axis", &mut |rng| {
        let x = randn::<E>(vec![3, 4, 2], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].mean_axis(0)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("cumsum_exclusive", &mut |rng| {
        let x = randn::<E>(vec![3, 5], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].cumsum_exclusive(1)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("transpose2d", &mut |rng| {
        let x = randn::<E>(vec![3, 5], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].transpose2d()?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("narrow", &mut |rng| {
        let x = randn::<E>(vec![3, 6, 2], 1.0, rng);
        check_gradients(&|xs| weighted_sum(&xs[0].narrow(1, 2, 3)?, &mut rng_from_seed(7)), &[x], step)
    })?;
    run("concat", &mut |rng| {
        let a = randn::<E>(vec![2, 3], 1.0, rng);
        let b = randn::<E>(vec![2, 2], 1.0, rng);
        check_gradients(
            &|xs| weighted_sum(&Tensor::concat(1, &[&xs[0], &xs[1]])?, &mut rng_from_seed(7)),
            &[a, b],
            step,
        )
    })?;
    run("smooth_l1_mean", &mut |rng| {
        // Keep residuals away from the |r| = beta seam.
        let a = randn::<E>(vec![4, 4], 1.0, rng);
        let shift = uniform::<E>(vec![4, 4], 0.1, 0.3, rng);
        let b = a.add(&shift)?.detach();
        check_gradients(&|xs| xs[0].smooth_l1_mean(&xs[1], 1.0), &[a, b], step)
    })?;
    run("reshape_passthrough", &mut |rng| {
        let x = randn::<E>(vec![3, 4], 1.0, rng);
        check_gradients(
            &|xs| weighted_sum(&xs[0].reshape(vec![2, 6])?, &mut rng_from_seed(7)),
            &[x],
            step,
        )
    })?;

    Ok(checks)
}

/// End-to-end check: an L2 image loss back through super-resolution,
/// compositing, the decoder, and plane sampling to a tri-plane leaf, on a
/// tiny 4x4-ray setup. Finite differences probe a stride of plane entries;
/// 32-bit accumulation over the whole pipeline warrants the looser default
/// tolerance (1e-2) relative to the op-level checks.
///
/// Seeds are pinned: if a probed entry puts an activation input exactly at
/// a kink, central differences report the mean of the one-sided slopes at
/// every step size and disagree with the (correct) one-sided derivative.
pub fn end_to_end_render_check(seed: u64, tol: f64) -> Result<OpCheck> {
    use crate::camera::Camera;
    use crate::config::ModelConfig;
    use crate::render::{render, DecoderMlp, RaySampling, RenderConfig, SrParams};
    use crate::triplane::TriPlane;

    let cfg = ModelConfig { plane_res: 8, ..ModelConfig::default() };
    let rcfg = RenderConfig { n_samples: 6, low_res: 4, final_res: 8 };
    let mut rng = rng_from_seed(seed);
    let planes = [
        randn::<f32>(vec![cfg.plane_channels, 8, 8], 0.5, &mut rng),
        randn::<f32>(vec![cfg.plane_channels, 8, 8], 0.5, &mut rng),
        randn::<f32>(vec![cfg.plane_channels, 8, 8], 0.5, &mut rng),
    ];
    let tp = TriPlane::new(planes, cfg.bound)?;
    let mlp = DecoderMlp::new(&cfg, &mut rng);
    let sr = SrParams::new(&cfg, &mut rng);
    let cam = Camera::orbit(0.3, 0.1, cfg.radius, cfg.fov_y)?;
    let target = uniform::<f32>(vec![3, 8, 8], 0.0, 1.0, &mut rng);

    let loss_of = |plane0: &Tensor| -> Result<f64> {
        let tpl =
            TriPlane::new([plane0.clone(), tp.planes[1].clone(), tp.planes[2].clone()], tp.bound)?;
        let (hi, _) = render(&tpl, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint)?;
        Ok(hi.sub(&target)?.square()?.mean_all()?.item()? as f64)
    };

    let tape: Tape = Tape::new();
    let p0 = tape.leaf(&tp.planes[0]);
    let tpl = TriPlane::new([p0.clone(), tp.planes[1].clone(), tp.planes[2].clone()], tp.bound)?;
    let (hi, _) = render(&tpl, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint)?;
    let loss = hi.sub(&target)?.square()?.mean_all()?;
    let g = tape.backward(&loss)?.get_or_zeros(&p0)?;

    let step = 1e-2f64;
    let mut worst = 0.0f64;
    for j in (0..tp.planes[0].numel()).step_by(37) {
        let mut dp = tp.planes[0].to_vec();
        dp[j] += step as f32;
        let fp = loss_of(&Tensor::from_vec(tp.planes[0].shape().to_vec(), dp.clone())?)?;
        dp[j] -= 2.0 * step as f32;
        let fm = loss_of(&Tensor::from_vec(tp.planes[0].shape().to_vec(), dp)?)?;
        let fd = (fp - fm) / (2.0 * step);
        let gv = g.data()[j] as f64;
        let rel = (gv - fd).abs() / gv.abs().max(fd.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    Ok(OpCheck { op: "render_pipeline", max_rel: worst, tol, pass: worst <= tol })
}
