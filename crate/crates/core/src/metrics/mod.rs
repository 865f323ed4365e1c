//! Homogeneous norms and the left-invariant distances they induce.
//!
//! `d_∞` and the Korányi gauge are closed forms. The Carnot–Carathéodory
//! distance is only available as an upper bound produced by optimizing
//! piecewise-constant horizontal controls, see [`cc`].

pub mod cc;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::Point;
use crate::rng::{sample_rng, streams};

pub use cc::{cc_upper, CcParams, CcUpper};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Infinity,
    Koranyi,
    #[serde(rename = "cc")]
    CarnotCaratheodory(CcParams),
}

impl Default for Metric {
    fn default() -> Self {
        Metric::Infinity
    }
}

impl Metric {
    pub fn cc() -> Self {
        Metric::CarnotCaratheodory(CcParams::default())
    }

    /// Homogeneous norm `‖p‖ = d(0, p)`.
    #[inline]
    pub fn norm(&self, p: &Point) -> f64 {
        match self {
            Metric::CarnotCaratheodory(params) => cc_upper(p, params).value(),
            _ => {
                let z2: f64 = p.horizontal().iter().map(|v| v * v).sum();
                self.norm_parts(z2, p.t()).expect("closed-form metric")
            }
        }
    }

    /// Closed-form norm from `|z|²` and `t`; `None` for the CC bound, which
    /// depends on the full point.
    #[inline]
    pub fn norm_parts(&self, z2: f64, t: f64) -> Option<f64> {
        match self {
            Metric::Infinity => Some(z2.sqrt().max(2.0 * t.abs().sqrt())),
            Metric::Koranyi => Some((z2 * z2 + 16.0 * t * t).sqrt().sqrt()),
            Metric::CarnotCaratheodory(_) => None,
        }
    }

    /// Left-invariant distance `‖p^{-1}·q‖`.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        let d = p.inverse().multiply(q)?;
        Ok(self.norm(&d))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Infinity => "infinity",
            Metric::Koranyi => "koranyi",
            Metric::CarnotCaratheodory(_) => "cc",
        }
    }

    /// Whether the norm is a closed form (as opposed to an optimized bound).
    pub fn is_exact(&self) -> bool {
        !matches!(self, Metric::CarnotCaratheodory(_))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "infinity" | "inf" => Ok(Metric::Infinity),
            "koranyi" => Ok(Metric::Koranyi),
            "cc" | "carnot-caratheodory" => Ok(Metric::cc()),
            other => invalid(format!("unknown metric '{other}'")),
        }
    }
}

/// Min and max of `‖p‖₂ / ‖p‖₁` over a point set, skipping the identity.
pub fn norm_ratio_range<'a>(
    first: &Metric,
    second: &Metric,
    points: impl IntoIterator<Item = &'a Point>,
) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for p in points {
        let a = first.norm(p);
        if a == 0.0 {
            continue;
        }
        let r = second.norm(p) / a;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// Random point of H^n with standard Gaussian coordinates.
pub(crate) fn gaussian_point<R: rand::Rng>(n: usize, rng: &mut R) -> Point {
    let mut z = [0.0; 2 * crate::group::MAX_N];
    for v in z.iter_mut().take(2 * n) {
        *v = StandardNormal.sample(rng);
    }
    let t: f64 = StandardNormal.sample(rng);
    Point::raw(n, &z, t)
}

/// Empirical bi-Lipschitz constants between two homogeneous norms.
///
/// Sample `i` is a Gaussian point pushed to the unit sphere of `first` by a
/// dilation; the result is `(min, max)` of `‖p‖₂ / ‖p‖₁` over the samples.
pub fn equivalence_constants(
    first: &Metric,
    second: &Metric,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return invalid("equivalence_constants needs at least one sample");
    }
    if n == 0 || n > crate::group::MAX_N {
        return invalid(format!("group index {n} out of range"));
    }
    let ratios: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, streams::EQUIVALENCE, i);
            let mut p = gaussian_point(n, &mut rng);
            let mut a = first.norm(&p);
            while a == 0.0 {
                p = gaussian_point(n, &mut rng);
                a = first.norm(&p);
            }
            let unit = p.dilate_unchecked(1.0 / a);
            if first == second {
                1.0
            } else {
                second.norm(&unit) / first.norm(&unit)
            }
        })
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    Ok((lo, hi))
}

/// Outcome of sampling the triangle inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub samples: usize,
    /// Triples with `d(p, r) > d(p, q) + d(q, r) + 1e-9`.
    pub violations: usize,
    /// Largest `d(p, r) − d(p, q) − d(q, r)`, negative when never attained.
    pub worst_excess: f64,
}

/// Samples the triangle inequality on Gaussian triples, a third of them
/// with a middle point pushed close to a geodesic-like path.
pub fn triangle_check(metric: &Metric, n: usize, samples: usize, seed: u64) -> Result<TriangleReport> {
    if n == 0 || n > crate::group::MAX_N {
        return invalid(format!("group index {n} out of range"));
    }
    let excess: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, streams::TRIANGLE, i);
            let p = gaussian_point(n, &mut rng);
            let r = gaussian_point(n, &mut rng);
            let q = if i % 3 == 0 {
                // near-degenerate: q close to the horizontal midpoint of p and r
                let d = p.inverse() * r;
                let mut z = [0.0; 2 * crate::group::MAX_N];
                for (a, b) in z.iter_mut().zip(d.horizontal()) {
                    *a = 0.5 * b;
                }
                let jitter = gaussian_point(n, &mut rng).dilate_unchecked(1e-3);
                p * Point::raw(n, &z, 0.25 * d.t()) * jitter
            } else {
                gaussian_point(n, &mut rng)
            };
            let d = |a: &Point, b: &Point| metric.norm(&(a.inverse() * *b));
            d(&p, &r) - d(&p, &q) - d(&q, &r)
        })
        .collect();
    Ok(TriangleReport {
        samples,
        violations: excess.iter().filter(|e| **e > 1e-9).count(),
        worst_excess: excess.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
