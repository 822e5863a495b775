//! First- and quasi-second-order optimizers over plain tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam with bias correction. State is keyed by parameter position, so the
/// caller must pass the same parameter list every step.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    /// One update; `grads[i]` pairs with `params[i]`. Parameters are
    /// replaced with updated constants.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::usage("adam: params/grads length mismatch"));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(Error::usage("adam: parameter list changed between steps"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            if p.numel() != self.m[i].len() {
                return Err(Error::usage("adam: parameter shape changed between steps"));
            }
            if grads[i].shape() != p.shape() {
                return Err(Error::dim(format!(
                    "adam: grad shape {:?} vs param {:?}",
                    grads[i].shape(),
                    p.shape()
                )));
            }
            let g = grads[i].data();
            let mut data = p.to_vec();
            for j in 0..data.len() {
                let gv = g[j] as f64;
                self.m[i][j] = self.beta1 * self.m[i][j] + (1.0 - self.beta1) * gv;
                self.v[i][j] = self.beta2 * self.v[i][j] + (1.0 - self.beta2) * gv * gv;
                let mh = self.m[i][j] / bc1;
                let vh = self.v[i][j] / bc2;
                data[j] -= (self.lr * mh / (vh.sqrt() + self.eps)) as f32;
            }
            **p = Tensor::from_vec(p.shape().to_vec(), data)?;
        }
        Ok(())
    }
}

/// Objective for flat-vector optimizers: value and gradient at `x`.
pub trait Objective {
    fn eval(&mut self, x: &[f32]) -> Result<(f64, Vec<f32>)>;
}

impl<F: FnMut(&[f32]) -> Result<(f64, Vec<f32>)>> Objective for F {
    fn eval(&mut self, x: &[f32]) -> Result<(f64, Vec<f32>)> {
        self(x)
    }
}

/// Result of an L-BFGS run; `x` is the best (lowest-f) iterate seen.
pub struct LbfgsResult {
    pub x: Vec<f32>,
    pub f: f64,
    pub trace: Vec<f64>,
    pub steps_taken: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsConfig {
    pub max_steps: usize,
    pub history: usize,
    /// Sufficient-decrease constant (Armijo).
    pub c1: f64,
    /// Curvature constant (strong Wolfe).
    pub c2: f64,
    pub max_line_search: usize,
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { max_steps: 50, history: 10, c1: 1e-4, c2: 0.9, max_line_search: 12, grad_tol: 1e-8 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with a strong-Wolfe line search. Internal state is
/// f64 regardless of the objective's parameter precision. Only improving
/// steps are accepted; a failed line search ends the run at the best
/// iterate so far.
pub fn lbfgs(obj: &mut dyn Objective, x0: &[f32], cfg: &LbfgsConfig) -> Result<LbfgsResult> {
    let n = x0.len();
    let mut x: Vec<f64> = x0.iter().map(|v| *v as f64).collect();
    let to_f32 = |v: &[f64]| v.iter().map(|x| *x as f32).collect::<Vec<f32>>();

    let (mut f, g32) = obj.eval(&to_f32(&x))?;
    let mut g: Vec<f64> = g32.iter().map(|v| *v as f64).collect();
    let mut trace = vec![f];
    let mut best_x = x.clone();
    let mut best_f = f;

    // (s, y, rho) pairs, newest last.
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut steps_taken = 0;

    for _ in 0..cfg.max_steps {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < cfg.grad_tol {
            break;
        }

        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for j in 0..n {
                q[j] -= a * y[j];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for j in 0..n {
                q[j] += s[j] * (a - b);
            }
        }
        let dir: Vec<f64> = q.iter().map(|v| -v).collect();

        let mut dg0 = dot(&g, &dir);
        let dir = if dg0 >= 0.0 {
            // Not a descent direction (stale curvature); fall back to -g.
            hist.clear();
            dg0 = -dot(&g, &g);
            g.iter().map(|v| -v).collect()
        } else {
            dir
        };

        match wolfe_search(obj, &x, f, &g, &dir, dg0, cfg)? {
            Some((alpha, fx, gx)) => {
                let mut s = vec![0.0; n];
                let mut xn = x.clone();
                for j in 0..n {
                    s[j] = alpha * dir[j];
                    xn[j] += s[j];
                }
                let y: Vec<f64> = gx.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if hist.len() == cfg.history {
                        hist.remove(0);
                    }
                    hist.push((s, y, 1.0 / sy));
                }
                x = xn;
                f = fx;
                g = gx;
                steps_taken += 1;
                trace.push(f);
                if f < best_f {
                    best_f = f;
                    best_x = x.clone();
                }
            }
            None => break,
        }
    }
    Ok(LbfgsResult { x: to_f32(&best_x), f: best_f, trace, steps_taken })
}

/// Strong-Wolfe line search (bracket + cubic-interpolation zoom). Returns
/// `(alpha, f(x + alpha d), grad)` or `None` when no improving step exists
/// within the evaluation budget.
fn wolfe_search(
    obj: &mut dyn Objective,
    x: &[f64],
    f0: f64,
    _g0: &[f64],
    dir: &[f64],
    dg0: f64,
    cfg: &LbfgsConfig,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let n = x.len();
    let eval_at = |obj: &mut dyn Objective, alpha: f64| -> Result<(f64, Vec<f64>, f64)> {
        let xa: Vec<f32> = (0..n).map(|j| (x[j] + alpha * dir[j]) as f32).collect();
        let (fa, ga32) = obj.eval(&xa)?;
        let ga: Vec<f64> = ga32.iter().map(|v| *v as f64).collect();
        let dga = dot(&ga, dir);
        Ok((fa, ga, dga))
    };

    let cubic = |alo: f64, flo: f64, dlo: f64, ahi: f64, fhi: f64, dhi: f64| -> f64 {
        // Minimizer of the cubic through (alo,flo,dlo), (ahi,fhi,dhi);
        // bisection fallback when degenerate.
        let d1 = dlo + dhi - 3.0 * (flo - fhi) / (alo - ahi);
        let disc = d1 * d1 - dlo * dhi;
        if disc >= 0.0 {
            let d2 = disc.sqrt() * (ahi - alo).signum();
            let cand = ahi - (ahi - alo) * (dhi + d2 - d1) / (dhi - dlo + 2.0 * d2);
            let (lo, hi) = if alo < ahi { (alo, ahi) } else { (ahi, alo) };
            if cand.is_finite() && cand > lo && cand < hi {
                return cand;
            }
        }
        0.5 * (alo + ahi)
    };

    let mut evals = 0usize;
    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut dg_prev = dg0;
    let mut alpha = 1.0f64;

    // Bracketing phase.
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;
    let mut direct: Option<(f64, f64, Vec<f64>)> = None;
    while evals < cfg.max_line_search {
        let (fa, ga, dga) = eval_at(obj, alpha)?;
        evals += 1;
        if fa > f0 + cfg.c1 * alpha * dg0 || (evals > 1 && fa >= f_prev) {
            bracket = Some((alpha_prev, f_prev, dg_prev, alpha, fa, dga));
            break;
        }
        if dga.abs() <= -cfg.c2 * dg0 {
            direct = Some((alpha, fa, ga));
            break;
        }
        if dga >= 0.0 {
            bracket = Some((alpha, fa, dga, alpha_prev, f_prev, dg_prev));
            break;
        }
        alpha_prev = alpha;
        f_prev = fa;
        dg_prev = dga;
        alpha *= 2.0;
    }
    if let Some(hit) = direct {
        return Ok(Some(hit));
    }
    let Some((mut alo, mut flo, mut dlo, mut ahi, mut fhi, mut dhi)) = bracket else {
        return Ok(None);
    };

    // Zoom phase.
    let mut fallback: Option<(f64, f64, Vec<f64>)> = None;
    while evals < 2 * cfg.max_line_search {
        let aj = cubic(alo, flo, dlo, ahi, fhi, dhi);
        let (fj, gj, dgj) = eval_at(obj, aj)?;
        evals += 1;
        if fj < f0 {
            fallback = Some((aj, fj, gj.clone()));
        }
        if fj > f0 + cfg.c1 * aj * dg0 || fj >= flo {
            ahi = aj;
            fhi = fj;
            dhi = dgj;
        } else {
            if dgj.abs() <= -cfg.c2 * dg0 {
                return Ok(Some((aj, fj, gj)));
            }
            if dgj * (ahi - alo) >= 0.0 {
                ahi = alo;
                fhi = flo;
                dhi = dlo;
            }
            alo = aj;
            flo = fj;
            dlo = dgj;
        }
        if (ahi - alo).abs() < 1e-12 {
            break;
        }
    }
    // Strong Wolfe unattainable in budget: accept the best improving point
    // seen, or give up so the caller stops at its best iterate.
    Ok(fallback)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_signed_lr() {
        // With fresh state, m-hat = g and v-hat = g*g, so the first update
        // is lr * g / (|g| + eps), i.e. lr * sign(g) up to eps.
        let mut p = Tensor::from_vec(vec![2], vec![1.0f32, -3.0]).unwrap();
        let g = Tensor::from_vec(vec![2], vec![0.5f32, -2.0]).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut [&mut p], &[g]).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] + 2.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let target = [3.0f32, -1.0, 0.5];
        let mut p = Tensor::zeros(vec![3]);
        let mut opt = Adam::new(0.05);
        for _ in 0..600 {
            let g: Vec<f32> = p.data().iter().zip(target).map(|(x, t)| 2.0 * (x - t)).collect();
            let g = Tensor::from_vec(vec![3], g).unwrap();
            opt.step(&mut [&mut p], &[g]).unwrap();
        }
        for (x, t) in p.data().iter().zip(target) {
            assert!((x - t).abs() < 1e-3, "{x} vs {t}");
        }
    }

    #[test]
    fn adam_rejects_changed_parameter_list() {
        let mut a = Tensor::zeros(vec![2]);
        let mut b = Tensor::zeros(vec![2]);
        let g = Tensor::zeros(vec![2]);
        let mut opt = Adam::new(0.1);
        opt.step(&mut [&mut a], &[g.clone()]).unwrap();
        assert!(opt.step(&mut [&mut a, &mut b], &[g.clone(), g]).is_err());
    }

    fn quadratic(x: &[f32]) -> Result<(f64, Vec<f32>)> {
        // f = sum_i (i+1) * (x_i - i)^2, minimum at x_i = i.
        let mut f = 0.0;
        let mut g = vec![0.0f32; x.len()];
        for (i, v) in x.iter().enumerate() {
            let c = (i + 1) as f64;
            let d = *v as f64 - i as f64;
            f += c * d * d;
            g[i] = (2.0 * c * d) as f32;
        }
        Ok((f, g))
    }

    fn rosenbrock(x: &[f32]) -> Result<(f64, Vec<f32>)> {
        let (a, b) = (x[0] as f64, x[1] as f64);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let gx = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        let gy = 200.0 * (b - a * a);
        Ok((f, vec![gx as f32, gy as f32]))
    }

    #[test]
    fn lbfgs_solves_quadratic_to_tolerance() {
        let cfg = LbfgsConfig::default();
        let out = lbfgs(&mut quadratic, &[5.0, -3.0, 7.0, 0.0], &cfg).unwrap();
        assert!(out.f < 1e-10, "final f {}", out.f);
        for (i, v) in out.x.iter().enumerate() {
            assert!((*v as f64 - i as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn lbfgs_trace_is_monotone_nonincreasing() {
        let cfg = LbfgsConfig::default();
        let out = lbfgs(&mut rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        for pair in out.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "trace regressed: {} -> {}", pair[0], pair[1]);
        }
        assert!(out.f < out.trace[0]);
    }

    #[test]
    fn lbfgs_reaches_rosenbrock_minimum() {
        let cfg = LbfgsConfig { max_steps: 200, ..LbfgsConfig::default() };
        let out = lbfgs(&mut rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(out.f < 1e-8, "final f {}", out.f);
        assert!((out.x[0] - 1.0).abs() < 1e-3 && (out.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lbfgs_returns_start_when_already_optimal() {
        let cfg = LbfgsConfig::default();
        let out = lbfgs(&mut quadratic, &[0.0, 1.0, 2.0, 3.0], &cfg).unwrap();
        assert!(out.f < 1e-12);
        assert_eq!(out.steps_taken, 0);
    }
}
