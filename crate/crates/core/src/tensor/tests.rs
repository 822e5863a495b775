use proptest::prelude::*;

use crate::error::Error;
use crate::gradcheck::{check_gradients, op_suite};
use crate::init::{randn, rng_from_seed, uniform};
use crate::tensor::{grid_sample_2d, Padding, Tape, Tensor};

fn assert_close(a: &[f32], b: &[f32], tol: f32) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "element {i}: {x} vs {y}");
    }
}

// Independent oracle: plain triple loop, no blocking or accumulation tricks.
fn matmul_naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for kk in 0..k {
                acc += a[i * k + kk] * b[kk * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

// Independent oracle: per-output-element gather with explicit bounds checks.
#[allow(clippy::too_many_arguments)]
fn conv2d_naive(
    x: &[f32],
    w: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    wd: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    ph: usize,
    pw: usize,
) -> Vec<f32> {
    let ho = (h + 2 * ph - kh) / stride + 1;
    let wo = (wd + 2 * pw - kw) / stride + 1;
    let mut out = vec![0.0; n * cout * ho * wo];
    for ni in 0..n {
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - ph as isize;
                                let ix = (ox * stride + kx) as isize - pw as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((ni * cin + c) * h + iy as usize) * wd + ix as usize]
                                    * w[((o * cin + c) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((ni * cout + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn matmul_matches_fixed_example_and_oracle() {
    let a = Tensor::from_vec(vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let b = Tensor::from_vec(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
    assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![19.0, 22.0, 43.0, 50.0]);

    let mut rng = rng_from_seed(11);
    for &(m, k, n) in &[(1usize, 1usize, 1usize), (3, 5, 2), (17, 9, 33), (64, 32, 48)] {
        let a = randn::<f32>(vec![m, k], 1.0, &mut rng);
        let b = randn::<f32>(vec![k, n], 1.0, &mut rng);
        let got = a.matmul(&b).unwrap();
        let want = matmul_naive(a.data(), b.data(), m, k, n);
        assert_close(got.data(), &want, 1e-4);
    }
}

#[test]
fn conv2d_matches_naive_oracle() {
    let mut rng = rng_from_seed(12);
    for &(stride, pad) in &[(1usize, Padding::Zero), (1, Padding::Valid), (2, Padding::Zero), (2, Padding::Valid)] {
        let (n, cin, h, w, cout, k) = (2usize, 3usize, 7usize, 6usize, 4usize, 3usize);
        let x = randn::<f32>(vec![n, cin, h, w], 1.0, &mut rng);
        let wt = randn::<f32>(vec![cout, cin, k, k], 0.5, &mut rng);
        let got = x.conv2d(&wt, stride, pad).unwrap();
        let p = if pad == Padding::Zero { k / 2 } else { 0 };
        let want = conv2d_naive(x.data(), wt.data(), n, cin, h, w, cout, k, k, stride, p, p);
        assert_close(got.data(), &want, 1e-4);
    }
}

#[test]
fn elementwise_examples_hold() {
    let x = Tensor::scalar(0.0f32);
    assert!((x.sigmoid().unwrap().item().unwrap() - 0.5).abs() < 1e-7);
    assert!((x.softplus().unwrap().item().unwrap() - std::f32::consts::LN_2).abs() < 1e-6);

    let x = Tensor::from_vec(vec![1, 1], vec![-2.0f32]).unwrap();
    let alpha = Tensor::from_vec(vec![1], vec![0.1f32]).unwrap();
    let y = x.prelu(&alpha, 1).unwrap();
    assert!((y.item().unwrap() + 0.2).abs() < 1e-7);
}

#[test]
fn broadcasting_matches_manual_expansion() {
    let a = Tensor::from_vec(vec![2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let b = Tensor::from_vec(vec![3], vec![10.0f32, 20.0, 30.0]).unwrap();
    assert_eq!(a.add(&b).unwrap().to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);

    let col = Tensor::from_vec(vec![2, 1], vec![10.0f32, 100.0]).unwrap();
    assert_eq!(a.mul(&col).unwrap().to_vec(), vec![10.0, 20.0, 30.0, 400.0, 500.0, 600.0]);

    // Scalar [1] broadcasts against anything.
    let one = Tensor::scalar(1.0f32);
    let r = one.sub(&a).unwrap();
    assert_eq!(r.to_vec(), vec![0.0, -1.0, -2.0, -3.0, -4.0, -5.0]);
}

#[test]
fn mismatched_shapes_error_not_panic() {
    let a = Tensor::<f32>::zeros(vec![2, 3]);
    let b = Tensor::<f32>::zeros(vec![4, 5]);
    assert!(matches!(a.add(&b), Err(Error::Dim(_))));
    assert!(matches!(a.matmul(&b), Err(Error::Dim(_))));
    assert!(matches!(a.reshape(vec![7]), Err(Error::Dim(_))));
    assert!(matches!(a.narrow(0, 1, 5), Err(Error::Dim(_))));
}

#[test]
fn mixing_two_tapes_is_a_usage_error() {
    let t1: Tape = Tape::new();
    let t2: Tape = Tape::new();
    let a = t1.leaf(&Tensor::scalar(1.0));
    let b = t2.leaf(&Tensor::scalar(2.0));
    assert!(matches!(a.add(&b), Err(Error::Usage(_))));
}

#[test]
fn backward_requires_scalar_on_own_tape() {
    let tape: Tape = Tape::new();
    let a = tape.leaf(&Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
    let s = a.square().unwrap();
    assert!(matches!(tape.backward(&s), Err(Error::Dim(_))));
    let other: Tape = Tape::new();
    let loss = s.sum_all().unwrap();
    assert!(matches!(other.backward(&loss), Err(Error::Usage(_))));
    assert!(tape.backward(&loss).is_ok());
}

#[test]
fn pixel_shuffle_matches_block_layout() {
    // Channels [a,b,c,d] at one pixel become the 2x2 block [[a,b],[c,d]].
    let x = Tensor::from_vec(vec![1, 4, 1, 1], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let y = x.pixel_shuffle(2).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);

    let x = Tensor::from_vec(vec![1, 4, 2, 2], (0..16).map(|v| v as f32).collect()).unwrap();
    let y = x.pixel_shuffle(2).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    // Input channel c at pixel (y,x) lands at output (2y + c/2, 2x + c%2).
    assert_eq!(
        y.to_vec(),
        vec![0.0, 4.0, 1.0, 5.0, 8.0, 12.0, 9.0, 13.0, 2.0, 6.0, 3.0, 7.0, 10.0, 14.0, 11.0, 15.0]
    );
}

#[test]
fn cumsum_exclusive_matches_example() {
    let x = Tensor::from_vec(vec![3], vec![3.0f32, 1.0, 4.0]).unwrap();
    let y = x.cumsum_exclusive(0).unwrap();
    assert_eq!(y.to_vec(), vec![0.0, 3.0, 4.0]);
}

#[test]
fn grid_sample_reproduces_linear_field_exactly() {
    // Plane stores f(u,v) = u + 2v at texel centers (align-corners mapping);
    // bilinear interpolation of a linear field is exact.
    let (h, w) = (5usize, 7usize);
    let mut data = Vec::with_capacity(h * w);
    for iy in 0..h {
        for ix in 0..w {
            let u = -1.0 + 2.0 * ix as f64 / (w - 1) as f64;
            let v = -1.0 + 2.0 * iy as f64 / (h - 1) as f64;
            data.push(u + 2.0 * v);
        }
    }
    let plane = Tensor::from_vec(vec![1, h, w], data).unwrap();
    let mut rng = rng_from_seed(3);
    let coords = uniform::<f64>(vec![40, 2], -1.0, 1.0, &mut rng);
    let out = grid_sample_2d(&plane, &coords).unwrap();
    for i in 0..40 {
        let (u, v) = (coords.data()[2 * i], coords.data()[2 * i + 1]);
        assert!((out.data()[i] - (u + 2.0 * v)).abs() < 1e-12);
    }
}

#[test]
fn grid_sample_clamps_to_border() {
    let plane = Tensor::from_vec(vec![1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let coords = Tensor::from_vec(vec![2, 2], vec![-5.0f32, -5.0, 5.0, 5.0]).unwrap();
    let out = grid_sample_2d(&plane, &coords).unwrap();
    assert_eq!(out.to_vec(), vec![1.0, 4.0]);
}

#[test]
fn gradients_are_bit_identical_across_runs() {
    let run = || {
        let mut rng = rng_from_seed(99);
        let x = randn::<f32>(vec![1, 3, 8, 8], 1.0, &mut rng);
        let w = randn::<f32>(vec![4, 3, 3, 3], 0.5, &mut rng);
        let tape: Tape = Tape::new();
        let (xl, wl) = (tape.leaf(&x), tape.leaf(&w));
        let y = xl.conv2d(&wl, 1, Padding::Zero).unwrap();
        let y = y.sigmoid().unwrap();
        let loss = y.mean_all().unwrap();
        let grads = tape.backward(&loss).unwrap();
        (
            grads.get(&xl).unwrap().to_vec(),
            grads.get(&wl).unwrap().to_vec(),
            loss.item().unwrap(),
        )
    };
    let (gx1, gw1, l1) = run();
    let (gx2, gw2, l2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert!(gx1.iter().zip(&gx2).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(gw1.iter().zip(&gw2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn reshape_shares_gradient_with_source() {
    let tape: Tape = Tape::new();
    let x = tape.leaf(&Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let y = x.reshape(vec![3, 2]).unwrap();
    let loss = y.square().unwrap().sum_all().unwrap();
    let grads = tape.backward(&loss).unwrap();
    let g = grads.get(&x).unwrap();
    assert_eq!(g.shape(), &[2, 3]);
    assert_eq!(g.to_vec(), vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
}

#[test]
fn same_tensor_used_twice_accumulates_both_paths() {
    let tape: Tape = Tape::new();
    let x = tape.leaf(&Tensor::scalar(3.0));
    let y = x.mul(&x).unwrap();
    let grads = tape.backward(&y).unwrap();
    assert_eq!(grads.get(&x).unwrap().item().unwrap(), 6.0);
}

#[test]
fn unreachable_leaf_reports_zero_gradient() {
    let tape: Tape = Tape::new();
    let x = tape.leaf(&Tensor::scalar(3.0));
    let unused = tape.leaf(&Tensor::scalar(5.0));
    let loss = x.square().unwrap();
    let grads = tape.backward(&loss).unwrap();
    assert!(grads.get(&unused).is_none());
    assert_eq!(grads.get_or_zeros(&unused).unwrap().item().unwrap(), 0.0);
}

// The op-level finite-difference gate: every differentiable op, both
// precisions, >= 20 random instances per op.
#[test]
fn op_gradients_match_finite_differences_f32() {
    for check in op_suite::<f32>(2024, 20, 1e-2, 1e-3).unwrap() {
        assert!(check.pass, "{}: max rel {} > {}", check.op, check.max_rel, check.tol);
    }
}

#[test]
fn op_gradients_match_finite_differences_f64() {
    for check in op_suite::<f64>(2025, 20, 1e-5, 1e-5).unwrap() {
        assert!(check.pass, "{}: max rel {} > {}", check.op, check.max_rel, check.tol);
    }
}

#[test]
fn composed_graph_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(5);
    let x = randn::<f64>(vec![1, 2, 6, 6], 1.0, &mut rng);
    let w = randn::<f64>(vec![8, 2, 3, 3], 0.4, &mut rng);
    let rel = check_gradients(
        &|xs| {
            let y = xs[0].conv2d(&xs[1], 1, Padding::Zero)?;
            let y = y.pixel_shuffle(2)?;
            let y = y.sigmoid()?;
            y.square()?.mean_all()
        },
        &[x, w],
        1e-5,
    )
    .unwrap();
    assert!(rel < 1e-6, "rel {rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffle_roundtrip_is_identity(seed in 0u64..1000, c in 1usize..3, r in 1usize..4, hw in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let x = randn::<f32>(vec![1, c * r * r, hw, hw], 1.0, &mut rng);
        let y = x.pixel_shuffle(r).unwrap().space_to_depth(r).unwrap();
        prop_assert_eq!(x.to_vec(), y.to_vec());
    }

    #[test]
    fn grid_sample_is_linear_in_the_plane(seed in 0u64..1000) {
        let mut rng = rng_from_seed(seed);
        let a = randn::<f32>(vec![2, 4, 4], 1.0, &mut rng);
        let b = randn::<f32>(vec![2, 4, 4], 1.0, &mut rng);
        let coords = uniform::<f32>(vec![8, 2], -1.2, 1.2, &mut rng);
        let lhs = grid_sample_2d(&a.scale(0.3).unwrap().add(&b.scale(0.7).unwrap()).unwrap(), &coords).unwrap();
        let sa = grid_sample_2d(&a, &coords).unwrap();
        let sb = grid_sample_2d(&b, &coords).unwrap();
        let rhs = sa.scale(0.3).unwrap().add(&sb.scale(0.7).unwrap()).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn concat_of_narrows_reassembles(seed in 0u64..1000, split in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let x = randn::<f32>(vec![3, 6], 1.0, &mut rng);
        let a = x.narrow(1, 0, split).unwrap();
        let b = x.narrow(1, split, 6 - split).unwrap();
        let y = Tensor::concat(1, &[&a, &b]).unwrap();
        prop_assert_eq!(x.to_vec(), y.to_vec());
    }

    #[test]
    fn cumsum_exclusive_first_slot_is_zero(seed in 0u64..1000, n in 1usize..7) {
        let mut rng = rng_from_seed(seed);
        let x = randn::<f32>(vec![2, n], 1.0, &mut rng);
        let y = x.cumsum_exclusive(1).unwrap();
        prop_assert_eq!(y.at(&[0, 0]), 0.0);
        prop_assert_eq!(y.at(&[1, 0]), 0.0);
    }
}
