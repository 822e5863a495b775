//! Image-quality metrics (plain f32 math, never on a tape).

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// PSNR in dB for images in [0,1]; capped at 99 dB below MSE 1e-10.
pub fn metric_psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("psnr shapes {:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut acc = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = (*x - *y) as f64;
        acc += d * d;
    }
    let mse = acc / a.numel() as f64;
    if mse < 1e-10 {
        return Ok(99.0);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const GAUSS_SIDE: usize = 7;
const GAUSS_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
/// Per-level exponents (coarsest last), renormalized to sum to 1.
const LEVEL_WEIGHTS: [f64; 3] = [0.0448, 0.2856, 0.3001];

fn gaussian_kernel() -> [f64; GAUSS_SIDE] {
    let mut k = [0.0; GAUSS_SIDE];
    let c = (GAUSS_SIDE / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c) * (i as f64 - c)) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian blur of one plane.
fn blur(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let k = gaussian_kernel();
    let wo = w - GAUSS_SIDE + 1;
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            tmp[y * wo + x] = acc;
        }
    }
    let ho = h - GAUSS_SIDE + 1;
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * wo + x];
            }
            out[y * wo + x] = acc;
        }
    }
    (out, ho, wo)
}

/// Mean luminance (`l`) and contrast-structure (`cs`) terms of SSIM over one
/// channel pair with a 7x7 Gaussian window.
fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> (f64, f64) {
    let (mu_a, ho, wo) = blur(a, h, w);
    let (mu_b, _, _) = blur(b, h, w);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (aa, _, _) = blur(&sq(a), h, w);
    let (bb, _, _) = blur(&sq(b), h, w);
    let (ab, _, _) = blur(&prod, h, w);
    let mut l_sum = 0.0;
    let mut cs_sum = 0.0;
    for i in 0..ho * wo {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = (aa[i] - ma * ma).max(0.0);
        let vb = (bb[i] - mb * mb).max(0.0);
        let cov = ab[i] - ma * mb;
        l_sum += (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        cs_sum += (2.0 * cov + C2) / (va + vb + C2);
    }
    let n = (ho * wo) as f64;
    (l_sum / n, cs_sum / n)
}

fn downsample2(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = 0.25
                * (plane[2 * y * w + 2 * x]
                    + plane[2 * y * w + 2 * x + 1]
                    + plane[(2 * y + 1) * w + 2 * x]
                    + plane[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    (out, ho, wo)
}

/// Three-level multi-scale SSIM for `[3,H,W]` images in [0,1]. Levels 1-2
/// contribute their contrast-structure term, the coarsest level the full
/// SSIM, each raised to its (renormalized) exponent. `cs` is clamped at 0
/// before exponentiation. Needs `H, W >= 4 * (window - 1)`.
pub fn metric_ms_ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let s = a.shape();
    if s != b.shape() || s.len() != 3 || s[0] != 3 {
        return Err(Error::dim(format!(
            "ms-ssim wants matching [3,H,W], got {:?} and {:?}",
            s,
            b.shape()
        )));
    }
    let (h, w) = (s[1], s[2]);
    if h < 4 * (GAUSS_SIDE - 1) || w < 4 * (GAUSS_SIDE - 1) {
        return Err(Error::dim(format!("ms-ssim needs at least {0}x{0} images", 4 * (GAUSS_SIDE - 1))));
    }
    let wsum: f64 = LEVEL_WEIGHTS.iter().sum();
    let mut score = 1.0f64;
    let mut planes_a: Vec<Vec<f64>> = (0..3)
        .map(|c| a.data()[c * h * w..(c + 1) * h * w].iter().map(|v| *v as f64).collect())
        .collect();
    let mut planes_b: Vec<Vec<f64>> = (0..3)
        .map(|c| b.data()[c * h * w..(c + 1) * h * w].iter().map(|v| *v as f64).collect())
        .collect();
    let (mut ch, mut cw) = (h, w);
    for (level, lw) in LEVEL_WEIGHTS.iter().enumerate() {
        let mut l_mean = 0.0;
        let mut cs_mean = 0.0;
        for c in 0..3 {
            let (l, cs) = ssim_plane(&planes_a[c], &planes_b[c], ch, cw);
            l_mean += l / 3.0;
            cs_mean += cs / 3.0;
        }
        let term = if level + 1 == LEVEL_WEIGHTS.len() { l_mean * cs_mean } else { cs_mean };
        score *= term.max(0.0).powf(lw / wsum);
        if level + 1 < LEVEL_WEIGHTS.len() {
            for c in 0..3 {
                let (pa, nh, nw) = downsample2(&planes_a[c], ch, cw);
                let (pb, _, _) = downsample2(&planes_b[c], ch, cw);
                planes_a[c] = pa;
                planes_b[c] = pb;
                if c == 2 {
                    ch = nh;
                    cw = nw;
                }
            }
        }
    }
    Ok(score)
}

/// Absolute yaws of the novel-view evaluation sweep.
pub const NOVEL_YAWS: [f64; 6] = [-0.8, -0.6, -0.3, 0.3, 0.6, 0.8];

/// Per-view metrics of a reconstruction against ground truth.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ViewMetrics {
    pub yaw: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
}

/// Render (via the injected closure) and score the reconstruction at each
/// yaw in `yaws`, comparing to `truth(yaw)` ground-truth images. Both
/// closures get the full camera so pitch/radius stay consistent with `base`.
pub fn eval_views_at(
    yaws: &[f64],
    base: &Camera,
    render_view: &mut dyn FnMut(&Camera) -> Result<Tensor>,
    truth_view: &mut dyn FnMut(&Camera) -> Result<Tensor>,
) -> Result<Vec<ViewMetrics>> {
    let mut out = Vec::with_capacity(yaws.len());
    for &dy in yaws {
        let cam = Camera { yaw: dy, ..*base };
        cam.validate()?;
        let pred = render_view(&cam)?;
        let truth = truth_view(&cam)?;
        out.push(ViewMetrics {
            yaw: dy,
            psnr: metric_psnr(&pred, &truth)?,
            ms_ssim: metric_ms_ssim(&pred, &truth)?,
        });
    }
    Ok(out)
}

/// [`eval_views_at`] over the standard [`NOVEL_YAWS`] sweep.
pub fn eval_novel_views(
    base: &Camera,
    render_view: &mut dyn FnMut(&Camera) -> Result<Tensor>,
    truth_view: &mut dyn FnMut(&Camera) -> Result<Tensor>,
) -> Result<Vec<ViewMetrics>> {
    eval_views_at(&NOVEL_YAWS, base, render_view, truth_view)
}
