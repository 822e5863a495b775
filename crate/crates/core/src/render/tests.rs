use crate::camera::Camera;
use crate::config::ModelConfig;
use crate::error::Error;
use crate::init::{randn, rng_from_seed, uniform};
use crate::render::{composite, render, render_feature_image, DecoderMlp, RaySampling, RenderConfig, SrParams};
use crate::scenes::{render_scene_oracle, SceneSpec};
use crate::tensor::{Elem, Tape, Tensor};
use crate::triplane::TriPlane;

/// A constant-density slab of length L telescopes to the closed form
/// `color = (1 - e^{-sigma L}) * c` for ANY sample count; this is the
/// quadrature's exactness oracle.
fn slab_case<E: Elem>(n: usize, sigma: f64, len: f64, tol: f64) {
    let dt = len / n as f64;
    let sig = Tensor::<E>::full(vec![1, n], E::from_f64_val(sigma));
    let del = Tensor::<E>::full(vec![1, n], E::from_f64_val(dt));
    let c = [0.8, 0.5, 0.3];
    let mut cols = Vec::with_capacity(n * 3);
    for _ in 0..n {
        cols.extend(c.iter().map(|&v| E::from_f64_val(v)));
    }
    let cols = Tensor::<E>::from_vec(vec![1, n, 3], cols).unwrap();
    let out = composite(&sig, &cols, &del).unwrap();
    let absorbed = 1.0 - (-sigma * len).exp();
    for k in 0..3 {
        let got = out.color.data()[k].to_f64_val();
        assert!((got - absorbed * c[k]).abs() < tol, "channel {k}: {got} vs {}", absorbed * c[k]);
    }
    let t = out.t_final.data()[0].to_f64_val();
    assert!((t - (-sigma * len).exp()).abs() < tol);
}

#[test]
fn homogeneous_slab_matches_closed_form() {
    for &n in &[1usize, 7, 48, 160] {
        slab_case::<f64>(n, 2.3, 1.7, 1e-12);
        slab_case::<f32>(n, 2.3, 1.7, 1e-5);
    }
    // Optically thick and thin extremes.
    slab_case::<f64>(64, 40.0, 2.0, 1e-12);
    slab_case::<f64>(64, 0.01, 2.0, 1e-12);
}

#[test]
fn weights_plus_residual_transmittance_sum_to_one() {
    let mut rng = rng_from_seed(21);
    for _ in 0..10 {
        let (r, n) = (5usize, 33usize);
        let sig = uniform::<f64>(vec![r, n], 0.0, 8.0, &mut rng);
        let del = uniform::<f64>(vec![r, n], 0.01, 0.1, &mut rng);
        let cols = uniform::<f64>(vec![r, n, 3], 0.0, 1.0, &mut rng);
        let out = composite(&sig, &cols, &del).unwrap();
        for row in 0..r {
            let sum: f64 = (0..n).map(|i| out.weights.at(&[row, i])).sum();
            let total = sum + out.t_final.data()[row];
            assert!((total - 1.0).abs() < 1e-12, "row {row}: {total}");
        }
    }
    // Same property holds in f32 to looser rounding.
    let sig = uniform::<f32>(vec![4, 48], 0.0, 8.0, &mut rng);
    let del = Tensor::full(vec![4, 48], 0.05f32);
    let cols = uniform::<f32>(vec![4, 48, 3], 0.0, 1.0, &mut rng);
    let out = composite(&sig, &cols, &del).unwrap();
    for row in 0..4 {
        let sum: f32 = (0..48).map(|i| out.weights.at(&[row, i])).sum();
        assert!((sum + out.t_final.data()[row] - 1.0).abs() < 1e-5);
    }
}

#[test]
fn composite_rejects_contract_violations() {
    let sig = Tensor::from_vec(vec![1, 2], vec![1.0f32, -0.5]).unwrap();
    let del = Tensor::full(vec![1, 2], 0.1f32);
    let cols = Tensor::zeros(vec![1, 2, 3]);
    assert!(matches!(composite(&sig, &cols, &del), Err(Error::Usage(_))));

    let sig = Tensor::full(vec![1, 2], 1.0f32);
    let bad_del = Tensor::from_vec(vec![1, 2], vec![0.1f32, 0.0]).unwrap();
    assert!(matches!(composite(&sig, &cols, &bad_del), Err(Error::Usage(_))));

    let mismatched = Tensor::zeros(vec![2, 2, 3]);
    let del = Tensor::full(vec![1, 2], 0.1f32);
    assert!(matches!(composite(&sig, &mismatched, &del), Err(Error::Dim(_))));
}

#[test]
fn zero_density_renders_black_with_full_transmittance() {
    let sig = Tensor::zeros(vec![2, 16]);
    let cols = Tensor::full(vec![2, 16, 3], 0.9f32);
    let del = Tensor::full(vec![2, 16], 0.1f32);
    let out = composite(&sig, &cols, &del).unwrap();
    assert!(out.color.data().iter().all(|v| *v == 0.0));
    assert!(out.t_final.data().iter().all(|v| (*v - 1.0).abs() < 1e-7));
}

#[test]
fn camera_eye_and_center_ray_follow_the_orbit() {
    let cam = Camera::orbit(0.0, 0.0, 2.7, 0.8).unwrap();
    let eye = cam.eye();
    assert!((eye[0]).abs() < 1e-12 && (eye[1]).abs() < 1e-12 && (eye[2] - 2.7).abs() < 1e-12);

    // Odd resolution has an exact center pixel whose ray must hit look_at.
    let rays = cam.rays(3).unwrap();
    let center = rays[4];
    assert!((center.dir[0]).abs() < 1e-12);
    assert!((center.dir[1]).abs() < 1e-12);
    assert!((center.dir[2] + 1.0).abs() < 1e-12);

    let cam = Camera::orbit(1.1, -0.4, 2.7, 0.8).unwrap();
    let eye = cam.eye();
    let want = [
        2.7 * 1.1f64.sin() * 0.4f64.cos(),
        2.7 * (-0.4f64).sin(),
        2.7 * 1.1f64.cos() * 0.4f64.cos(),
    ];
    for k in 0..3 {
        assert!((eye[k] - want[k]).abs() < 1e-12);
    }
    for ray in cam.rays(5).unwrap() {
        let n: f64 = ray.dir.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
    assert!(Camera::orbit(0.0, 1.6, 2.7, 0.8).is_err());
}

#[test]
fn oracle_respects_mirror_symmetry() {
    let mut rng = rng_from_seed(31);
    let scene = SceneSpec::sample(&mut rng);
    assert_eq!(scene.mirror_x().mirror_x(), scene);

    let cam = Camera::orbit(0.45, 0.2, 2.7, 0.8).unwrap();
    let cam_m = Camera::orbit(-0.45, 0.2, 2.7, 0.8).unwrap();
    let res = 16;
    let img = render_scene_oracle(&scene, &cam, res, 64, 1.0).unwrap();
    let img_m = render_scene_oracle(&scene.mirror_x(), &cam_m, res, 64, 1.0).unwrap();
    // Mirrored scene from the mirrored camera is the horizontal flip.
    for c in 0..3 {
        for y in 0..res {
            for x in 0..res {
                let a = img.at(&[c, y, x]);
                let b = img_m.at(&[c, y, res - 1 - x]);
                assert!((a - b).abs() < 1e-5, "({c},{y},{x}): {a} vs {b}");
            }
        }
    }
}

#[test]
fn oracle_quadrature_converges_with_sample_count() {
    let mut rng = rng_from_seed(32);
    let scene = SceneSpec::sample(&mut rng);
    let cam = Camera::orbit(0.2, -0.1, 2.7, 0.8).unwrap();
    let coarse = render_scene_oracle(&scene, &cam, 8, 160, 1.0).unwrap();
    let fine = render_scene_oracle(&scene, &cam, 8, 2560, 1.0).unwrap();
    let max_diff = coarse
        .data()
        .iter()
        .zip(fine.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_diff < 2e-3, "max diff {max_diff}");
}

fn tiny_setup() -> (ModelConfig, RenderConfig, TriPlane, DecoderMlp, SrParams, Camera) {
    let mut cfg = ModelConfig::default();
    cfg.plane_res = 8;
    let rcfg = RenderConfig { n_samples: 6, low_res: 4, final_res: 8 };
    let mut rng = rng_from_seed(77);
    let planes = [
        randn(vec![cfg.plane_channels, 8, 8], 0.5, &mut rng),
        randn(vec![cfg.plane_channels, 8, 8], 0.5, &mut rng),
        randn(vec![cfg.plane_channels, 8, 8], 0.5, &mut rng),
    ];
    let tp = TriPlane::new(planes, cfg.bound).unwrap();
    let mlp = DecoderMlp::new(&cfg, &mut rng);
    let sr = SrParams::new(&cfg, &mut rng);
    let cam = Camera::orbit(0.3, 0.1, cfg.radius, cfg.fov_y).unwrap();
    (cfg, rcfg, tp, mlp, sr, cam)
}

#[test]
fn image_loss_gradient_wrt_triplane_matches_finite_differences() {
    let (_cfg, rcfg, tp, mlp, sr, cam) = tiny_setup();
    let mut rng = rng_from_seed(78);
    let target = uniform::<f32>(vec![3, 8, 8], 0.0, 1.0, &mut rng);

    // Autodiff gradient w.r.t. one plane.
    let tape: Tape = Tape::new();
    let p0 = tape.leaf(&tp.planes[0]);
    let tpl = TriPlane::new([p0.clone(), tp.planes[1].clone(), tp.planes[2].clone()], tp.bound).unwrap();
    let (hi, _raw) = render(&tpl, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint).unwrap();
    let loss = hi.sub(&target).unwrap().square().unwrap().mean_all().unwrap();
    let grads = tape.backward(&loss).unwrap();
    let g = grads.get(&p0).unwrap();

    // Central differences on a spread of plane entries.
    let eval = |plane0: &Tensor| -> f64 {
        let tpl = TriPlane::new([plane0.clone(), tp.planes[1].clone(), tp.planes[2].clone()], tp.bound).unwrap();
        let (hi, _) = render(&tpl, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint).unwrap();
        hi.sub(&target).unwrap().square().unwrap().mean_all().unwrap().item().unwrap() as f64
    };
    let step = 1e-2f64;
    let n = tp.planes[0].numel();
    let mut worst = 0.0f64;
    for j in (0..n).step_by(37) {
        let mut dp = tp.planes[0].to_vec();
        dp[j] += step as f32;
        let fp = eval(&Tensor::from_vec(tp.planes[0].shape().to_vec(), dp.clone()).unwrap());
        dp[j] -= 2.0 * step as f32;
        let fm = eval(&Tensor::from_vec(tp.planes[0].shape().to_vec(), dp).unwrap());
        let fd = (fp - fm) / (2.0 * step);
        let gv = g.data()[j] as f64;
        let rel = (gv - fd).abs() / gv.abs().max(fd.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-2, "worst rel {worst}");
}

#[test]
fn render_is_deterministic_and_jitter_is_seeded() {
    let (_cfg, rcfg, tp, mlp, sr, cam) = tiny_setup();
    let a = render(&tp, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint).unwrap().0;
    let b = render(&tp, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint).unwrap().0;
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let mut r1 = rng_from_seed(5);
    let mut r2 = rng_from_seed(5);
    let j1 = render(&tp, &mlp, &sr, &cam, &rcfg, RaySampling::Jitter(&mut r1)).unwrap().0;
    let j2 = render(&tp, &mlp, &sr, &cam, &rcfg, RaySampling::Jitter(&mut r2)).unwrap().0;
    assert!(j1.data().iter().zip(j2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let mut r3 = rng_from_seed(6);
    let j3 = render(&tp, &mlp, &sr, &cam, &rcfg, RaySampling::Jitter(&mut r3)).unwrap().0;
    assert!(j1.data().iter().zip(j3.data()).any(|(x, y)| x != y));
}

#[test]
fn feature_image_shapes_and_ranges_hold() {
    let (cfg, rcfg, tp, mlp, sr, cam) = tiny_setup();
    let fi = render_feature_image(&tp, &mlp, &cam, &rcfg, RaySampling::Midpoint).unwrap();
    assert_eq!(fi.feat.shape(), &[1, cfg.feat_channels, 4, 4]);
    assert_eq!(fi.weights.shape(), &[16, 6]);
    assert_eq!(fi.t_final.shape(), &[16]);
    let (hi, raw) = render(&tp, &mlp, &sr, &cam, &rcfg, RaySampling::Midpoint).unwrap();
    assert_eq!(hi.shape(), &[3, 8, 8]);
    assert_eq!(raw.shape(), &[3, 4, 4]);
    assert!(hi.data().iter().all(|v| (0.0..=1.0).contains(v)));
    // Raw RGB channels went through a sigmoid before compositing; with a
    // black background the composited values stay in [0,1).
    assert!(raw.data().iter().all(|v| (0.0..=1.0).contains(v)));
}
