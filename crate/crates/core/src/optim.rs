//! Limited-memory BFGS with a strong-Wolfe line search (cubic/quadratic
//! interpolation in the zoom phase).

use std::collections::VecDeque;

/// Smooth objective to minimize.
pub(crate) trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;

    /// Central differences with step `rel_step · max(1, |x_i|)`.
    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        central_gradient(|v| self.value(v), x, 1e-6)
    }
}

pub(crate) fn central_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut xv = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            xv[i] = x[i] + h;
            let up = f(&xv);
            xv[i] = x[i] - h;
            let down = f(&xv);
            xv[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `max_i |g_i| ≤ gtol`.
    pub gtol: f64,
    /// Stop when the relative objective change is at most `ftol`.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 1000,
            gtol: 1e-6,
            ftol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LS: usize = 40;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

struct Step {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Minimizer of the quadratic through `(a, fa)` with slope `da` and `(b, fb)`.
fn quadratic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64) -> Option<f64> {
    let w = b - a;
    let denom = 2.0 * (fb - fa - da * w);
    if denom <= 0.0 {
        return None;
    }
    let t = a - da * w * w / denom;
    t.is_finite().then_some(t)
}

struct Bracket {
    a: f64,
    f: f64,
    d: f64,
    g: Option<Vec<f64>>,
}

fn line_search<O: Objective>(
    obj: &mut O,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    d0: f64,
    alpha0: f64,
) -> Option<Step> {
    let mut prev = Bracket {
        a: 0.0,
        f: f0,
        d: d0,
        g: None,
    };
    let mut alpha = alpha0;
    for i in 0..MAX_LS {
        let xa = axpy(x, alpha, dir);
        let fa = obj.value(&xa);
        if !fa.is_finite() || fa > f0 + C1 * alpha * d0 || (i > 0 && fa >= prev.f) {
            let hi = Bracket {
                a: alpha,
                f: if fa.is_finite() { fa } else { f64::MAX },
                d: f64::NAN,
                g: None,
            };
            return zoom(obj, x, dir, f0, d0, prev, hi);
        }
        let ga = obj.gradient(&xa);
        let da = dot(&ga, dir);
        if da.abs() <= -C2 * d0 {
            return Some(Step { alpha, f: fa, g: ga });
        }
        let cur = Bracket {
            a: alpha,
            f: fa,
            d: da,
            g: Some(ga),
        };
        if da >= 0.0 {
            return zoom(obj, x, dir, f0, d0, cur, prev);
        }
        prev = cur;
        alpha *= 2.0;
    }
    prev.g.map(|g| Step {
        alpha: prev.a,
        f: prev.f,
        g,
    })
}

/// `lo` satisfies the sufficient-decrease condition and has the lowest value
/// seen; the minimizer lies between `lo` and `hi`.
fn zoom<O: Objective>(
    obj: &mut O,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    d0: f64,
    mut lo: Bracket,
    mut hi: Bracket,
) -> Option<Step> {
    for _ in 0..MAX_LS {
        let (left, right) = (lo.a.min(hi.a), lo.a.max(hi.a));
        let width = right - left;
        if width <= 1e-16 * right.max(1.0) {
            break;
        }
        let guess = if hi.d.is_finite() && hi.f < f64::MAX {
            cubic_min(lo.a, lo.f, lo.d, hi.a, hi.f, hi.d)
        } else if hi.f < f64::MAX {
            quadratic_min(lo.a, lo.f, lo.d, hi.a, hi.f)
        } else {
            None
        };
        let margin = 0.1 * width;
        let t = match guess {
            Some(t) if t > left + margin && t < right - margin => t,
            _ => 0.5 * (left + right),
        };
        let xt = axpy(x, t, dir);
        let ft = obj.value(&xt);
        if !ft.is_finite() || ft > f0 + C1 * t * d0 || ft >= lo.f {
            hi = Bracket {
                a: t,
                f: if ft.is_finite() { ft } else { f64::MAX },
                d: f64::NAN,
                g: None,
            };
            continue;
        }
        let gt = obj.gradient(&xt);
        let dt = dot(&gt, dir);
        if dt.abs() <= -C2 * d0 {
            return Some(Step { alpha: t, f: ft, g: gt });
        }
        if dt * (hi.a - lo.a) >= 0.0 {
            hi = Bracket {
                a: lo.a,
                f: lo.f,
                d: lo.d,
                g: None,
            };
        }
        lo = Bracket {
            a: t,
            f: ft,
            d: dt,
            g: Some(gt),
        };
    }
    // curvature condition not met; accept the best decrease found
    let a = lo.a;
    let f = lo.f;
    lo.g.filter(|_| a > 0.0 && f < f0).map(|g| Step { alpha: a, f, g })
}

pub(crate) fn minimize<O: Objective>(obj: &mut O, x0: &[f64], opts: &LbfgsOptions) -> OptimResult {
    let mut x = x0.to_vec();
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let done = |x: Vec<f64>, f: f64, g: &[f64], it: usize, ok: bool, msg: &str| OptimResult {
        x,
        f,
        grad_norm: max_norm(g),
        iterations: it,
        converged: ok,
        message: msg.to_string(),
    };
    if !f.is_finite() {
        return done(x, f, &g, 0, false, "objective is not finite at the starting point");
    }

    for iter in 0..opts.max_iter {
        if max_norm(&g) <= opts.gtol {
            return done(x, f, &g, iter, true, "gradient tolerance reached");
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            memory.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &dir);
        }
        let alpha0 = if memory.is_empty() {
            (1.0 / max_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let step = match line_search(obj, &x, &dir, f, d0, alpha0) {
            Some(s) => s,
            None if !memory.is_empty() => {
                memory.clear();
                continue;
            }
            None => return done(x, f, &g, iter, false, "line search failed"),
        };

        let x_new = axpy(&x, step.alpha, &dir);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let f_old = f;
        x = x_new;
        f = step.f;
        g = step.g;
        if (f_old - f).abs() <= opts.ftol * f_old.abs().max(f.abs()).max(1.0) {
            return done(x, f, &g, iter + 1, true, "relative objective change below tolerance");
        }
    }
    let msg = format!("iteration limit {} reached", opts.max_iter);
    done(x, f, &g, opts.max_iter, false, &msg)
}
