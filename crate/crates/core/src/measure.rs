//! Monte-Carlo pushforward measure of graph balls.
//!
//! `μ(B(p, r))` is the Lebesgue measure of `{w ∈ A : d(w·φ(w), p) < r}` in the
//! W-coordinates `(b, t)`, estimated by uniform sampling of a box that
//! contains the preimage.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::{homogeneous_dim, Point, MAX_N};
use crate::metrics::Metric;
use crate::rng::{sample_rng, streams};
use crate::sampled::{Orientation, SampledFunction, MAX_AXES};

const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub samples: usize,
    pub hits: u64,
    pub estimate: f64,
    pub stderr: f64,
    /// Volume of the sampled box.
    pub box_volume: f64,
    /// The box was cut by the edge of the domain.
    pub clipped: bool,
    /// The first box was too small and was doubled.
    pub enlarged: bool,
}

struct BoxSpec {
    lo: [f64; MAX_AXES],
    hi: [f64; MAX_AXES],
    /// Per axis, whether the lower and upper faces were clipped.
    cut: [(bool, bool); MAX_AXES],
    /// Hits beyond these bounds on an uncut face mean the box is too small.
    inner_lo: [f64; MAX_AXES],
    inner_hi: [f64; MAX_AXES],
}

fn require_w_to_v(f: &SampledFunction) -> Result<()> {
    if f.orientation() != Orientation::WToV {
        return invalid("measure needs a function W → V");
    }
    Ok(())
}

fn ball_box(f: &SampledFunction, p: &Point, r: f64, scale: f64) -> BoxSpec {
    let s = f.splitting();
    let dim = f.domain_dim();
    let mut center = [0.0; MAX_AXES];
    let mut v = [0.0; MAX_N];
    s.coords_into(p, &mut center[..dim], &mut v[..s.k()]);
    let zp = p.horizontal_len();
    let mut half = [0.0; MAX_AXES];
    for h in half.iter_mut().take(dim - 1) {
        *h = scale * 2.0 * r;
    }
    half[dim - 1] = scale * 2.0 * (r * r / 4.0 + (zp + r) * r);
    let mut b = BoxSpec {
        lo: [0.0; MAX_AXES],
        hi: [0.0; MAX_AXES],
        cut: [(false, false); MAX_AXES],
        inner_lo: [0.0; MAX_AXES],
        inner_hi: [0.0; MAX_AXES],
    };
    for (d, a) in f.grid().axes().iter().enumerate() {
        let (lo, hi) = (center[d] - half[d], center[d] + half[d]);
        b.cut[d] = (lo < a.min, hi > a.max);
        b.lo[d] = lo.max(a.min);
        b.hi[d] = hi.min(a.max);
        b.inner_lo[d] = center[d] - 0.75 * half[d];
        b.inner_hi[d] = center[d] + 0.75 * half[d];
    }
    b
}

/// Integer hit counts `(in ball, in ball and marked, boundary hit)`.
fn count_hits(
    f: &SampledFunction,
    metric: &Metric,
    p: &Point,
    r: f64,
    bx: &BoxSpec,
    samples: usize,
    seed: u64,
    stream_index: u64,
    marked: Option<&[bool]>,
) -> (u64, u64, bool) {
    let dim = f.domain_dim();
    let k = f.value_dim();
    let pinv = p.inverse();
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = sample_rng(seed, streams::MEASURE, stream_index << 32 | ci as u64);
            let mut c = [0.0; MAX_AXES];
            let mut v = [0.0; MAX_N];
            let (mut hits, mut marked_hits, mut edge) = (0u64, 0u64, false);
            let count = CHUNK.min(samples - ci * CHUNK);
            for _ in 0..count {
                for d in 0..dim {
                    c[d] = bx.lo[d] + (bx.hi[d] - bx.lo[d]) * rng.random::<f64>();
                }
                if !f.eval_into(&c[..dim], &mut v[..k]) {
                    continue;
                }
                let q = f.graph_point_of(&c[..dim], &v[..k]);
                if metric.norm(&(pinv * q)) >= r {
                    continue;
                }
                hits += 1;
                if let Some(m) = marked {
                    if f.grid().nearest(&c[..dim]).is_some_and(|i| m[i]) {
                        marked_hits += 1;
                    }
                }
                for d in 0..dim {
                    edge |= (!bx.cut[d].0 && c[d] < bx.inner_lo[d]) || (!bx.cut[d].1 && c[d] > bx.inner_hi[d]);
                }
            }
            (hits, marked_hits, edge)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0, 0, false), |a, b| (a.0 + b.0, a.1 + b.1, a.2 | b.2))
}

fn check_args(f: &SampledFunction, p: &Point, r: f64, samples: usize) -> Result<()> {
    require_w_to_v(f)?;
    f.splitting().check(p)?;
    if !(r > 0.0) || !r.is_finite() {
        return invalid(format!("radius must be positive, got {r}"));
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    Ok(())
}

fn estimate_with_stream(
    f: &SampledFunction,
    metric: &Metric,
    p: &Point,
    r: f64,
    samples: usize,
    seed: u64,
    stream_index: u64,
    marked: Option<&[bool]>,
) -> Result<(MeasureEstimate, u64)> {
    check_args(f, p, r, samples)?;
    let mut enlarged = false;
    let mut scale = 1.0;
    loop {
        let bx = ball_box(f, p, r, scale);
        let dim = f.domain_dim();
        let volume: f64 = (0..dim).map(|d| (bx.hi[d] - bx.lo[d]).max(0.0)).product();
        let (hits, marked_hits, edge) = if volume > 0.0 {
            count_hits(f, metric, p, r, &bx, samples, seed, stream_index, marked)
        } else {
            (0, 0, false)
        };
        if edge {
            if enlarged {
                return Err(Error::PropertyViolated(format!(
                    "ball of radius {r} reaches the edge of the enlarged sampling box"
                )));
            }
            enlarged = true;
            scale = 2.0;
            continue;
        }
        let n = samples as f64;
        let frac = hits as f64 / n;
        let est = MeasureEstimate {
            center: p.to_vec(),
            radius: r,
            samples,
            hits,
            estimate: volume * frac,
            stderr: volume * (frac * (1.0 - frac) / n).sqrt(),
            box_volume: volume,
            clipped: (0..dim).any(|d| bx.cut[d].0 || bx.cut[d].1),
            enlarged,
        };
        return Ok((est, marked_hits));
    }
}

/// Estimate of `μ(B(p, r))` from `samples` uniform draws.
pub fn pushforward_ball_measure(
    f: &SampledFunction,
    metric: &Metric,
    p: &Point,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<MeasureEstimate> {
    Ok(estimate_with_stream(f, metric, p, r, samples, seed, 0, None)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AhlforsRow {
    pub radius: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `μ(B(p,r)) / (2r)^{Q−k}`.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AhlforsProfile {
    pub exponent: f64,
    pub rows: Vec<AhlforsRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl AhlforsProfile {
    /// `max / min` of the ratios.
    pub fn band(&self) -> f64 {
        if self.min_ratio > 0.0 {
            self.max_ratio / self.min_ratio
        } else {
            f64::INFINITY
        }
    }
}

/// Ratios `μ(B(p,r)) / (2r)^{Q−k}` over radii spanning at least a decade.
pub fn ahlfors_profile(
    f: &SampledFunction,
    metric: &Metric,
    p: &Point,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<AhlforsProfile> {
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return invalid("radii must be positive");
    }
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max);
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return invalid("radii must span at least one decade");
    }
    let s = f.splitting();
    let exponent = (homogeneous_dim(s.n()) - s.k()) as f64;
    let mut rows = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let (e, _) = estimate_with_stream(f, metric, p, r, samples, seed, i as u64 + 1, None)?;
        let norm = (2.0 * r).powf(exponent);
        rows.push(AhlforsRow {
            radius: r,
            estimate: e.estimate,
            stderr: e.stderr,
            ratio: e.estimate / norm,
            ratio_stderr: e.stderr / norm,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(AhlforsProfile {
        exponent,
        rows,
        min_ratio,
        max_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub radius: f64,
    pub hits: u64,
    pub marked_hits: u64,
    /// `None` when no sample hit the ball.
    pub density: Option<f64>,
    pub stderr: Option<f64>,
}

/// Share of `μ(B(p,r))` carried by the marked nodes (nearest-node
/// membership), per radius.
pub fn density_profile(
    e: &[bool],
    f: &SampledFunction,
    metric: &Metric,
    p: &Point,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<DensityRow>> {
    if e.len() != f.node_count() {
        return invalid(format!("mask has {} entries for {} nodes", e.len(), f.node_count()));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let (est, marked) = estimate_with_stream(f, metric, p, r, samples, seed, i as u64 + 1, Some(e))?;
        let (density, stderr) = if est.hits == 0 {
            (None, None)
        } else {
            let d = marked as f64 / est.hits as f64;
            (Some(d), Some((d * (1.0 - d) / est.hits as f64).sqrt()))
        };
        rows.push(DensityRow {
            radius: r,
            hits: est.hits,
            marked_hits: marked,
            density,
            stderr,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampled::{Axis, Grid};
    use crate::splitting::Splitting;

    fn zero_fn(half: f64) -> SampledFunction {
        let g = Grid::new(vec![
            Axis::new(-half, half, 9).unwrap(),
            Axis::new(-half, half, 9).unwrap(),
        ])
        .unwrap();
        SampledFunction::from_fn(Splitting::standard(1, 1).unwrap(), Orientation::WToV, g, |_| vec![0.0]).unwrap()
    }

    #[test]
    fn flat_ball_volume() {
        let f = zero_fn(2.0);
        let e = pushforward_ball_measure(&f, &Metric::Infinity, &Point::zero(1), 0.5, 200_000, 3).unwrap();
        assert!((e.estimate - 0.125).abs() < 3.0 * e.stderr, "{e:?}");
        assert!(!e.clipped && !e.enlarged);
    }

    #[test]
    fn tiny_ball_has_tiny_measure() {
        let f = zero_fn(1.0);
        let e = pushforward_ball_measure(&f, &Metric::Infinity, &Point::zero(1), 1e-4, 1000, 3).unwrap();
        assert!(e.estimate <= 1e-11);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let f = zero_fn(2.0);
        let p = Point::new(&[0.0], &[0.3], 0.1).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| pushforward_ball_measure(&f, &Metric::Koranyi, &p, 0.4, 50_000, 9).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn rejects_bad_input() {
        let f = zero_fn(1.0);
        assert!(pushforward_ball_measure(&f, &Metric::Infinity, &Point::zero(1), 0.0, 10, 1).is_err());
        assert!(pushforward_ball_measure(&f, &Metric::Infinity, &Point::zero(2), 0.1, 10, 1).is_err());
        assert!(ahlfors_profile(&f, &Metric::Infinity, &Point::zero(1), &[0.1, 0.2], 10, 1).is_err());
    }

    #[test]
    fn full_domain_density_is_one() {
        let f = zero_fn(2.0);
        let e = vec![true; f.node_count()];
        let rows = density_profile(&e, &f, &Metric::Infinity, &Point::zero(1), &[0.2, 0.4], 20_000, 1).unwrap();
        assert!(rows.iter().all(|r| r.density == Some(1.0)));
    }
}
