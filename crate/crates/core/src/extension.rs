//! Codimension-one extensions: cone-boundary functions, McShane-type upper
//! and lower envelopes, and the sandwich comparison of differentials.
//!
//! With `k = 1` the horizontal subgroup `V` is identified with `R` through the
//! coefficient along its single frame vector, ordered as the reals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{estimate_differential, DiffEstimate, DiffOptions, Verdict};
use crate::error::{invalid, Error, Result};
use crate::graph::{lipschitz_constant, GraphCache, LipConstant};
use crate::group::Point;
use crate::metrics::Metric;
use crate::sampled::{Orientation, SampledFunction};
use crate::splitting::Splitting;

/// Tolerance for pointwise order and agreement checks.
pub const ORDER_SLACK: f64 = 1e-12;

fn require_codim_one(s: &Splitting) -> Result<()> {
    if s.k() != 1 {
        return invalid(format!("codimension-one machinery needs k = 1, got k = {}", s.k()));
    }
    Ok(())
}

/// Boundary of the positive cone `C_β^+(p)`, seen as a function `W → R`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeBoundaryFn {
    splitting: Splitting,
    vertex: Point,
    beta: f64,
    u: Point,
    c: Point,
    c_value: f64,
}

impl ConeBoundaryFn {
    pub fn new(splitting: Splitting, vertex: Point, beta: f64) -> Result<Self> {
        require_codim_one(&splitting)?;
        if !(beta > 0.0) || !beta.is_finite() {
            return invalid(format!("cone opening must be positive, got {beta}"));
        }
        let (u, c) = splitting.project(&vertex)?;
        let c_value = splitting.coords(&vertex)?.1[0];
        Ok(ConeBoundaryFn {
            splitting,
            vertex,
            beta,
            u,
            c,
            c_value,
        })
    }

    pub fn vertex(&self) -> &Point {
        &self.vertex
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `‖c^{-1}·u^{-1}·w·c‖`, the W-part of `p^{-1}·(w·v)` for any `v`.
    pub fn w_offset(&self, metric: &Metric, w: &[f64]) -> Result<f64> {
        let w = self.splitting.embed_w(w)?;
        Ok(metric.norm(&(self.c.inverse() * self.u.inverse() * w * self.c)))
    }

    /// Upper boundary value `c + ‖c^{-1}u^{-1}wc‖/β`.
    pub fn upper(&self, metric: &Metric, w: &[f64]) -> Result<f64> {
        Ok(self.c_value + self.w_offset(metric, w)? / self.beta)
    }

    /// Mirrored lower boundary `c − ‖c^{-1}u^{-1}wc‖/β`.
    pub fn lower(&self, metric: &Metric, w: &[f64]) -> Result<f64> {
        Ok(self.c_value - self.w_offset(metric, w)? / self.beta)
    }
}

/// Upper boundary of `C_β^+(vertex)` at `w`.
pub fn cone_boundary(gf: &ConeBoundaryFn, metric: &Metric, w: &[f64]) -> Result<f64> {
    gf.upper(metric, w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionResult {
    /// Least upper envelope `η`.
    pub upper: SampledFunction,
    /// Greatest lower envelope `ψ`.
    pub lower: SampledFunction,
    pub e: Vec<bool>,
    pub declared: f64,
    /// Measured constant of `φ|_E`; `None` when `E` has fewer than two nodes.
    pub lip_e: Option<LipConstant>,
    pub lip_upper: LipConstant,
    pub lip_lower: LipConstant,
    /// `max |η − φ|, |ψ − φ|` over `E`.
    pub max_e_gap: f64,
}

/// Envelopes `η(w) = min_u φ(u) + L‖(p_u^{-1}·w)_W‖` and
/// `ψ(w) = max_u φ(u) − L‖(p_u^{-1}·w)_W‖` over `u ∈ E`, on every node of the
/// grid of `f`.
pub fn mcshane_extend(f: &SampledFunction, e: &[bool], l: f64, metric: &Metric) -> Result<ExtensionResult> {
    require_codim_one(f.splitting())?;
    if f.orientation() != Orientation::WToV {
        return invalid("extension needs a function W → V");
    }
    if !(l > 0.0) || !l.is_finite() {
        return invalid(format!("Lipschitz constant must be positive, got {l}"));
    }
    if e.len() != f.node_count() {
        return invalid(format!("E has {} entries for {} nodes", e.len(), f.node_count()));
    }
    let members: Vec<usize> = (0..e.len()).filter(|&i| e[i]).collect();
    if members.is_empty() {
        return invalid("E is empty");
    }
    if let Some(i) = members.iter().find(|&&i| !f.is_active(i)) {
        return invalid(format!("E contains masked node {i}"));
    }
    let lip_e = if members.len() >= 2 {
        let lc = lipschitz_constant(f, metric, Some(e), true)?;
        if lc.infinite || lc.value > l * (1.0 + 1e-12) {
            let (first, second) = lc.witness.unwrap_or((members[0], members[1]));
            return Err(Error::NotLipschitz {
                declared: l,
                ratio: lc.estimate(),
                first,
                second,
            });
        }
        Some(lc)
    } else {
        None
    };

    let cache = GraphCache::new(f, metric);
    let env: Vec<(f64, f64)> = (0..f.node_count())
        .into_par_iter()
        .map(|j| {
            let (mut hi, mut lo) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &members {
                let c = f.value(i)[0];
                let d = if i == j { 0.0 } else { l * cache.pair(i, j).0 };
                hi = hi.min(c + d);
                lo = lo.max(c - d);
            }
            (hi, lo)
        })
        .collect();
    let (hi, lo): (Vec<f64>, Vec<f64>) = env.into_iter().unzip();
    let max_e_gap = members
        .iter()
        .map(|&i| (hi[i] - f.value(i)[0]).abs().max((lo[i] - f.value(i)[0]).abs()))
        .fold(0.0, f64::max);
    let upper = f.with_values(hi)?.with_mask(None)?;
    let lower = f.with_values(lo)?.with_mask(None)?;
    let lip_upper = lipschitz_constant(&upper, metric, None, true)?;
    let lip_lower = lipschitz_constant(&lower, metric, None, true)?;
    Ok(ExtensionResult {
        upper,
        lower,
        e: e.to_vec(),
        declared: l,
        lip_e,
        lip_upper,
        lip_lower,
        max_e_gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub base: Vec<f64>,
    pub lower: DiffEstimate,
    pub middle: DiffEstimate,
    pub upper: DiffEstimate,
    /// `‖M_ψ − M_η‖`.
    pub outer_gap: f64,
    /// Allowed outer gap, `2·(r_ψ + r_η)` with `r` the final residuals.
    pub outer_band: f64,
    /// Distance of `M_φ` from the segment `[M_ψ, M_η]`.
    pub middle_offset: f64,
    /// Allowed offset, `r_ψ + r_φ + r_η`.
    pub middle_band: f64,
    pub violation: bool,
}

/// Matrix discrepancies below this are treated as exact agreement.
const MATRIX_FLOOR: f64 = 1e-9;

fn flat(m: &[Vec<f64>]) -> Vec<f64> {
    m.concat()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let s = if len2 > 0.0 {
        let ap: f64 = p.iter().zip(a).zip(&ab).map(|((x, y), d)| (x - y) * d).sum();
        (ap / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + s * d).collect();
    dist(p, &proj)
}

/// Compares the fitted differentials of `ψ ≤ φ ≤ η`, which must touch at `w̄`.
pub fn sandwich_harness(
    lower: &SampledFunction,
    middle: &SampledFunction,
    upper: &SampledFunction,
    metric: &Metric,
    wbar: &[f64],
    radii: &[f64],
    opts: &DiffOptions,
) -> Result<SandwichReport> {
    for g in [lower, upper] {
        if g.grid() != middle.grid() || g.splitting() != middle.splitting() {
            return invalid("sandwich functions must share grid and splitting");
        }
    }
    require_codim_one(middle.splitting())?;
    for i in 0..middle.node_count() {
        if !(lower.is_active(i) && middle.is_active(i) && upper.is_active(i)) {
            continue;
        }
        let (a, b, c) = (lower.value(i)[0], middle.value(i)[0], upper.value(i)[0]);
        if a > b + ORDER_SLACK || b > c + ORDER_SLACK {
            return Err(Error::OrderViolated {
                node: i,
                detail: format!("need ψ ≤ φ ≤ η, got {a} , {b} , {c}"),
            });
        }
    }
    let at = |g: &SampledFunction| g.eval(wbar).map(|v| v[0]);
    let (a, b, c) = (at(lower)?, at(middle)?, at(upper)?);
    if (a - b).abs() > ORDER_SLACK || (c - b).abs() > ORDER_SLACK {
        return Err(Error::OrderViolated {
            node: middle.grid().nearest(wbar).unwrap_or(0),
            detail: format!("functions do not touch at the base point: {a} , {b} , {c}"),
        });
    }
    let lo = estimate_differential(lower, metric, wbar, radii, opts)?;
    let mid = estimate_differential(middle, metric, wbar, radii, opts)?;
    let hi = estimate_differential(upper, metric, wbar, radii, opts)?;
    let (ml, mm, mh) = (flat(&lo.matrix), flat(&mid.matrix), flat(&hi.matrix));
    let outer_gap = dist(&ml, &mh);
    let outer_band = 2.0 * (lo.final_residual() + hi.final_residual());
    let middle_offset = segment_distance(&mm, &ml, &mh);
    let middle_band = lo.final_residual() + mid.final_residual() + hi.final_residual();
    let failed = [&lo, &mid, &hi].iter().any(|e| e.verdict == Verdict::Fails);
    let violation = failed
        || outer_gap > outer_band + MATRIX_FLOOR
        || middle_offset > middle_band + MATRIX_FLOOR;
    Ok(SandwichReport {
        base: wbar.to_vec(),
        lower: lo,
        middle: mid,
        upper: hi,
        outer_gap,
        outer_band,
        middle_offset,
        middle_band,
        violation,
    })
}
