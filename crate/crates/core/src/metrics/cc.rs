//! Upper bounds on the Carnot–Carathéodory norm.
//!
//! A K-segment piecewise-constant control is described by its segment
//! displacements `u_1..u_K ∈ R^{2n}`; its cost is `Σ|u_i|` and its endpoint
//! from the identity is `(Σu_i, ½Σ_{i<j} ω(u_i, u_j))`. The optimizer
//! minimizes a smoothed cost plus a quadratic endpoint penalty (three rounds
//! of increasing weight, L-BFGS inner solver), then restores the endpoint
//! exactly with minimum-norm Newton steps. Any feasible control gives an upper
//! bound on `d_cc(0, p)`.
//!
//! The problem is solved for `δ_{1/s}p` with `s = ‖p‖_∞` and scaled back, so
//! the bound is homogeneous up to rounding.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::group::{symplectic, ControlSegment, HorizontalControl, Point};
use crate::metrics::Metric;
use crate::rng::{sample_rng, streams};

/// Endpoint tolerance, measured on the normalized target.
pub const ENDPOINT_TOL: f64 = 1e-9;

const PENALTY_ROUNDS: [(f64, f64); 3] = [(10.0, 1e-2), (1e2, 1e-3), (1e3, 1e-5)];
const LBFGS_MEMORY: usize = 8;
const PROJECTION_ITERS: usize = 60;
const RESTART_NOISE: f64 = 0.35;
const RESTART_SEED: u64 = 0x00CC_5EED;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcParams {
    pub segments: usize,
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for CcParams {
    fn default() -> Self {
        CcParams {
            segments: 16,
            restarts: 4,
            iterations: 400,
        }
    }
}

impl CcParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.segments == 0 || self.restarts == 0 || self.iterations == 0 {
            return crate::error::invalid("cc parameters must all be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CcUpper {
    /// A control whose endpoint matches the target within [`ENDPOINT_TOL`].
    Certified { value: f64, control: HorizontalControl },
    /// No candidate met the endpoint tolerance; `best_value` is the cheapest
    /// penalty-feasible cost found.
    NoCertificate { best_value: f64, endpoint_error: f64 },
}

impl CcUpper {
    pub fn value(&self) -> f64 {
        match self {
            CcUpper::Certified { value, .. } => *value,
            CcUpper::NoCertificate { best_value, .. } => *best_value,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, CcUpper::Certified { .. })
    }
}

/// Upper bound on `d_cc(0, p)`.
pub fn cc_upper(p: &Point, params: &CcParams) -> CcUpper {
    let n = p.n();
    let scale = Metric::Infinity.norm(p);
    if scale == 0.0 {
        return CcUpper::Certified {
            value: 0.0,
            control: HorizontalControl::default(),
        };
    }
    let target = p.dilate_unchecked(1.0 / scale);
    let problem = Problem::new(&target);
    let best = solve_chain(&problem, params.segments.max(1), params);
    match best {
        Candidate {
            cost,
            error,
            controls,
        } if error <= ENDPOINT_TOL => {
            let k = controls.len() / (2 * n);
            let control = if k == 0 {
                HorizontalControl::default()
            } else {
                HorizontalControl::new(
                    controls
                        .chunks(2 * n)
                        .map(|u| ControlSegment {
                            h: u.iter().map(|v| v * scale * k as f64).collect(),
                            duration: 1.0 / k as f64,
                        })
                        .collect(),
                )
            };
            CcUpper::Certified {
                value: cost * scale,
                control,
            }
        }
        Candidate { cost, error, .. } => CcUpper::NoCertificate {
            best_value: cost * scale,
            endpoint_error: error,
        },
    }
}

struct Problem {
    n: usize,
    z: Vec<f64>,
    t: f64,
}

#[derive(Clone, Debug)]
struct Candidate {
    cost: f64,
    error: f64,
    controls: Vec<f64>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        let feasible = self.error <= ENDPOINT_TOL;
        let other_feasible = other.error <= ENDPOINT_TOL;
        match (feasible, other_feasible) {
            (true, false) => true,
            (false, true) => false,
            _ => self.cost < other.cost,
        }
    }
}

impl Problem {
    fn new(target: &Point) -> Self {
        Problem {
            n: target.n(),
            z: target.horizontal().to_vec(),
            t: target.t(),
        }
    }

    fn dim(&self) -> usize {
        2 * self.n
    }

    /// Endpoint `(z, t)` reached by the displacements `u`.
    fn endpoint(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let m = self.dim();
        let mut s = vec![0.0; m];
        let mut t = 0.0;
        for seg in u.chunks(m) {
            t += 0.5 * symplectic(&s, seg);
            for (a, b) in s.iter_mut().zip(seg) {
                *a += b;
            }
        }
        (s, t)
    }

    fn endpoint_error(&self, u: &[f64]) -> f64 {
        let (z, t) = self.endpoint(u);
        z.iter()
            .zip(&self.z)
            .map(|(a, b)| (a - b).abs())
            .fold((t - self.t).abs(), f64::max)
    }

    fn cost(&self, u: &[f64]) -> f64 {
        u.chunks(self.dim())
            .map(|seg| seg.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum()
    }

    /// Gradient of the endpoint t-coordinate with respect to each segment.
    fn t_gradient(&self, u: &[f64], out: &mut [f64]) {
        let m = self.dim();
        let n = self.n;
        let k = u.len() / m;
        let mut total = vec![0.0; m];
        for seg in u.chunks(m) {
            for (a, b) in total.iter_mut().zip(seg) {
                *a += b;
            }
        }
        // ∂t/∂u_j = ½ Ω (S_K − S_j − S_{j−1}),  Ω(a, b) = (b, −a)
        let mut prev = vec![0.0; m];
        let mut v = vec![0.0; m];
        for j in 0..k {
            let seg = &u[j * m..(j + 1) * m];
            for c in 0..m {
                let cur = prev[c] + seg[c];
                v[c] = total[c] - cur - prev[c];
                prev[c] = cur;
            }
            let g = &mut out[j * m..(j + 1) * m];
            for i in 0..n {
                g[i] = 0.5 * v[n + i];
                g[n + i] = -0.5 * v[i];
            }
        }
    }

    /// Smoothed cost plus endpoint penalty, with gradient.
    fn penalized(&self, u: &[f64], grad: &mut [f64], weight: f64, eps: f64) -> f64 {
        let m = self.dim();
        let (z, t) = self.endpoint(u);
        let dz: Vec<f64> = z.iter().zip(&self.z).map(|(a, b)| a - b).collect();
        let dt = t - self.t;
        let mut f = weight * (dz.iter().map(|v| v * v).sum::<f64>() + dt * dt);
        self.t_gradient(u, grad);
        for (seg, g) in u.chunks(m).zip(grad.chunks_mut(m)) {
            let len = (seg.iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt();
            f += len;
            for c in 0..m {
                g[c] = seg[c] / len + 2.0 * weight * (dz[c] + dt * g[c]);
            }
        }
        f
    }

    /// Minimum-norm Newton projection onto the endpoint constraint.
    fn project(&self, u: &mut [f64]) {
        let m = self.dim();
        let k = u.len() / m;
        let mut grad_t = vec![0.0; u.len()];
        let mut err = self.endpoint_error(u);
        for _ in 0..PROJECTION_ITERS {
            if err <= 1e-14 {
                break;
            }
            let (z, t) = self.endpoint(u);
            self.t_gradient(u, &mut grad_t);
            // J = [I I .. I ; g_1 .. g_K], solve (J Jᵀ) λ = r
            let mut jjt = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut gsum = vec![0.0; m];
            let mut gg = 0.0;
            for seg in grad_t.chunks(m) {
                for c in 0..m {
                    gsum[c] += seg[c];
                    gg += seg[c] * seg[c];
                }
            }
            for c in 0..m {
                jjt[(c, c)] = k as f64;
                jjt[(c, m)] = gsum[c];
                jjt[(m, c)] = gsum[c];
            }
            jjt[(m, m)] = gg;
            let mut r = DVector::<f64>::zeros(m + 1);
            for c in 0..m {
                r[c] = self.z[c] - z[c];
            }
            r[m] = self.t - t;
            let Some(lambda) = jjt.lu().solve(&r) else {
                break;
            };
            let base = u.to_vec();
            let mut step = 1.0;
            loop {
                for j in 0..k {
                    for c in 0..m {
                        u[j * m + c] =
                            base[j * m + c] + step * (lambda[c] + lambda[m] * grad_t[j * m + c]);
                    }
                }
                let next = self.endpoint_error(u);
                if next < err || step < 1e-6 {
                    err = next;
                    break;
                }
                step *= 0.5;
            }
        }
    }

    /// Circular-arc polygon from the identity to the target.
    ///
    /// The arc lies in the plane spanned by `e = z/|z|` and its symplectic
    /// partner `f`, with `ω(e, f) = 1`; the polygon's signed area gives `t`.
    fn arc_start(&self, k: usize) -> Vec<f64> {
        let m = self.dim();
        let n = self.n;
        let c = self.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut e = vec![0.0; m];
        if c > 1e-12 {
            for (a, b) in e.iter_mut().zip(&self.z) {
                *a = b / c;
            }
        } else {
            e[0] = 1.0;
        }
        let mut f = vec![0.0; m];
        for i in 0..n {
            f[i] = -e[n + i];
            f[n + i] = e[i];
        }
        let area = self.t.abs();
        let sign = if self.t < 0.0 { -1.0 } else { 1.0 };
        let mut u = vec![0.0; k * m];
        if area < 1e-15 {
            for j in 0..k {
                for i in 0..m {
                    u[j * m + i] = c / k as f64 * e[i];
                }
            }
            return u;
        }
        let (theta, radius) = if c < 1e-12 {
            (std::f64::consts::TAU, (area / std::f64::consts::PI).sqrt())
        } else {
            let segment_area = |th: f64| {
                let s = (0.5 * th).sin();
                c * c * (th - th.sin()) / (8.0 * s * s)
            };
            let (mut lo, mut hi) = (1e-9, std::f64::consts::TAU - 1e-9);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if segment_area(mid) < area {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let th = 0.5 * (lo + hi);
            (th, c / (2.0 * (0.5 * th).sin()))
        };
        let len = 2.0 * radius * (theta / (2.0 * k as f64)).sin();
        for j in 0..k {
            let heading = -0.5 * theta + (j as f64 + 0.5) * theta / k as f64;
            let (s, co) = heading.sin_cos();
            for i in 0..m {
                u[j * m + i] = len * (co * e[i] + sign * s * f[i]);
            }
        }
        u
    }

    fn finish(&self, mut u: Vec<f64>) -> Candidate {
        self.project(&mut u);
        Candidate {
            cost: self.cost(&u),
            error: self.endpoint_error(&u),
            controls: u,
        }
    }

    fn optimize(&self, mut u: Vec<f64>, iterations: usize) -> Vec<f64> {
        for &(weight, eps) in &PENALTY_ROUNDS {
            lbfgs(
                &mut u,
                |x, g| self.penalized(x, g, weight, eps),
                iterations,
            );
        }
        u
    }

    fn solve(&self, k: usize, params: &CcParams) -> Candidate {
        let start = self.arc_start(k);
        let mut best = self.finish(start.clone());
        for r in 0..params.restarts {
            let mut u = start.clone();
            if r > 0 {
                let mut rng = sample_rng(RESTART_SEED, streams::CC_RESTARTS, r as u64);
                let scale = RESTART_NOISE * self.cost(&start).max(1e-3) / k as f64;
                for v in u.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v += scale * g;
                }
            }
            let cand = self.finish(self.optimize(u, params.iterations));
            if cand.better_than(&best) {
                best = cand;
            }
        }
        best
    }
}

/// Best candidate over the halving chain `K, ⌈K/2⌉, …, 1`; a shorter control
/// padded with zero segments is a valid K-segment control of equal cost.
fn solve_chain(problem: &Problem, k: usize, params: &CcParams) -> Candidate {
    let here = problem.solve(k, params);
    if k == 1 {
        return here;
    }
    let mut coarse = solve_chain(problem, k.div_ceil(2), params);
    if here.better_than(&coarse) {
        here
    } else {
        coarse.controls.resize(k * problem.dim(), 0.0);
        coarse
    }
}

/// Limited-memory BFGS with Armijo backtracking.
fn lbfgs<F>(x: &mut [f64], mut f: F, iterations: usize)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x.len();
    let mut g = vec![0.0; dim];
    let mut fx = f(x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();

    for _ in 0..iterations {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < 1e-12 {
            break;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / gnorm.max(1.0);
            d.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..dim {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = (0..dim).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..dim).map(|i| g_new[i] - g[i]).collect();
                if dot(&s, &y) > 1e-16 {
                    if s_hist.len() == LBFGS_MEMORY {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
}
