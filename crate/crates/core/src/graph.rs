//! Intrinsic graphs of sampled functions `φ: A ⊆ W → V`.
//!
//! Everything here is a finite scan over grid nodes. Pair ratios are
//! `‖(p^{-1}q)_V‖ / ‖(p^{-1}q)_W‖` for graph points `p, q`; balls in the
//! domain use the distance induced on `W`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::{symplectic, Point, MAX_N};
use crate::metrics::Metric;
use crate::rng::{sample_rng, streams};
use crate::sampled::{Axis, Grid, Interpolation, Orientation, SampledFunction, MAX_AXES};
use crate::splitting::CONE_SLACK;
use rand::Rng;

/// A V-increment this many times the W-increment counts as infinite slope.
pub const INFINITY_RATIO: f64 = 1e6;

fn require_w_to_v(f: &SampledFunction) -> Result<()> {
    if f.orientation() != Orientation::WToV {
        return invalid("operation needs a function W → V");
    }
    Ok(())
}

/// `(‖(p^{-1}q)_W‖, ‖(p^{-1}q)_V‖)`.
#[inline]
pub fn pair_norms(f: &SampledFunction, metric: &Metric, p: &Point, q: &Point) -> (f64, f64) {
    let d = p.inverse() * *q;
    let (w, v) = f.splitting().project_raw(&d);
    (metric.norm(&w), metric.norm(&v))
}

/// Graph point `w·φ(w)` over W-coordinates `w`.
pub fn graph_point(f: &SampledFunction, w: &[f64]) -> Result<Point> {
    require_w_to_v(f)?;
    f.graph_point_at(w)
}

/// Graph quasi-distance `½(‖(p₁^{-1}p₂)_W‖ + ‖(p₂^{-1}p₁)_W‖)`.
pub fn graph_quasidistance(f: &SampledFunction, metric: &Metric, w1: &[f64], w2: &[f64]) -> Result<f64> {
    let p1 = graph_point(f, w1)?;
    let p2 = graph_point(f, w2)?;
    Ok(quasidistance_of(f, metric, &p1, &p2))
}

#[inline]
fn quasidistance_of(f: &SampledFunction, metric: &Metric, p1: &Point, p2: &Point) -> f64 {
    let (a, _) = pair_norms(f, metric, p1, p2);
    let (b, _) = pair_norms(f, metric, p2, p1);
    0.5 * (a + b)
}

/// Index-space box `[lo, hi]` of nodes whose coordinates lie within
/// `half[d]` of `c[d]` on every axis.
pub(crate) fn index_box(
    grid: &Grid,
    c: &[f64],
    half: &[f64],
    lo: &mut [usize],
    hi: &mut [usize],
) -> bool {
    for (d, a) in grid.axes().iter().enumerate() {
        let s = a.step();
        let l = ((c[d] - half[d] - a.min) / s - 1e-9).ceil().max(0.0);
        let h = ((c[d] + half[d] - a.min) / s + 1e-9)
            .floor()
            .min((a.count - 1) as f64);
        if l > h {
            return false;
        }
        lo[d] = l as usize;
        hi[d] = h as usize;
    }
    true
}

pub(crate) fn for_each_in_box(grid: &Grid, lo: &[usize], hi: &[usize], mut f: impl FnMut(usize)) {
    let dim = grid.dim();
    let mut idx = [0usize; MAX_AXES];
    idx[..dim].copy_from_slice(&lo[..dim]);
    loop {
        f(grid.flat_index(&idx[..dim]));
        let mut d = dim;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            if idx[d] < hi[d] {
                idx[d] += 1;
                break;
            }
            idx[d] = lo[d];
        }
    }
}

/// Box of W-coordinates containing the open ball `B_W(c, r)`.
///
/// Every supported norm dominates `max(|z|, 2|t|^{1/2})`, so the ball lies in
/// `|Δb| < r`, `|Δt| < r²/4 + ½|b|·r`.
pub(crate) fn w_ball_half_widths(c: &[f64], r: f64, half: &mut [f64]) {
    let hdim = c.len() - 1;
    let b_len = c[..hdim].iter().map(|v| v * v).sum::<f64>().sqrt();
    for h in half[..hdim].iter_mut() {
        *h = r;
    }
    half[hdim] = r * r / 4.0 + 0.5 * b_len * r;
}

/// Calls `visit(j, d_W(i, j))` for every active node `j ≠ i` with
/// `d_W(i, j) < r`.
pub(crate) fn for_each_w_neighbor(
    cache: &GraphCache<'_>,
    i: usize,
    r: f64,
    mut visit: impl FnMut(usize, f64),
) {
    let f = cache.f;
    let grid = f.grid();
    let dim = grid.dim();
    let mut c = [0.0; MAX_AXES];
    grid.coords_into(i, &mut c[..dim]);
    let mut half = [0.0; MAX_AXES];
    w_ball_half_widths(&c[..dim], r, &mut half);
    let (mut lo, mut hi) = ([0usize; MAX_AXES], [0usize; MAX_AXES]);
    if !index_box(grid, &c[..dim], &half[..dim], &mut lo, &mut hi) {
        return;
    }
    for_each_in_box(grid, &lo, &hi, |j| {
        if j == i || !f.is_active(j) {
            return;
        }
        let d = cache.w_dist(i, j);
        if d < r {
            visit(j, d);
        }
    });
}

fn domain_points(f: &SampledFunction) -> Vec<Point> {
    let dim = f.domain_dim();
    (0..f.node_count())
        .into_par_iter()
        .map(|i| {
            let mut c = [0.0; MAX_AXES];
            f.grid().coords_into(i, &mut c[..dim]);
            f.domain_point(&c[..dim])
        })
        .collect()
}

/// Global intrinsic Lipschitz constant over a node subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipConstant {
    /// Largest pair ratio found (finite).
    pub value: f64,
    /// Some pair had a V-increment above [`INFINITY_RATIO`] × its W-increment.
    pub infinite: bool,
    /// Ordered node pair attaining `value` (smallest indices among ties).
    pub witness: Option<(usize, usize)>,
    /// Ordered pairs whose ratio was actually evaluated.
    pub evaluated: u64,
}

impl LipConstant {
    /// `value`, or `+∞` when the infinity flag is set.
    pub fn estimate(&self) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            self.value
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct PairMax {
    ratio: f64,
    pair: Option<(usize, usize)>,
    infinite: bool,
    evaluated: u64,
}

impl PairMax {
    const EMPTY: PairMax = PairMax {
        ratio: 0.0,
        pair: None,
        infinite: false,
        evaluated: 0,
    };

    #[inline]
    fn offer(&mut self, ratio: f64, infinite: bool, pair: (usize, usize)) {
        self.evaluated += 1;
        self.infinite |= infinite;
        let better = ratio > self.ratio
            || (ratio == self.ratio && ratio > 0.0 && self.pair.map_or(true, |p| pair < p));
        if better {
            self.ratio = ratio;
            self.pair = Some(pair);
        }
    }

    fn merge(mut self, o: PairMax) -> PairMax {
        self.evaluated += o.evaluated;
        self.infinite |= o.infinite;
        if let Some(p) = o.pair {
            let better = o.ratio > self.ratio
                || (o.ratio == self.ratio && self.pair.map_or(true, |q| p < q));
            if better {
                self.ratio = o.ratio;
                self.pair = Some(p);
            }
        }
        self
    }

    fn finish(self) -> LipConstant {
        LipConstant {
            value: self.ratio,
            infinite: self.infinite,
            witness: self.pair,
            evaluated: self.evaluated,
        }
    }
}

/// Per-node data for fast pair evaluation.
///
/// For `p = w_p·v_p` and `q = w_q·v_q` the W-part of `p^{-1}q` has horizontal
/// coefficients `Δb` and height `Δt − ⟨g_p, Δb⟩` with
/// `g_p = ω(½W b_p + V a_p, W·)`; its V-part has coefficients `Δa`.
pub(crate) struct GraphCache<'a> {
    f: &'a SampledFunction,
    metric: &'a Metric,
    hdim: usize,
    k: usize,
    b: Vec<f64>,
    t: Vec<f64>,
    a: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    gpts: Vec<Point>,
    wpts: Vec<Point>,
}

impl<'a> GraphCache<'a> {
    pub(crate) fn new(f: &'a SampledFunction, metric: &'a Metric) -> Self {
        let s = f.splitting();
        let hdim = f.domain_dim() - 1;
        let k = f.value_dim();
        let ww: Vec<Vec<f64>> = s
            .w_frame()
            .iter()
            .map(|wi| s.w_frame().iter().map(|wj| symplectic(wi, wj)).collect())
            .collect();
        let vw: Vec<Vec<f64>> = s
            .v_frame()
            .iter()
            .map(|vi| s.w_frame().iter().map(|wj| symplectic(vi, wj)).collect())
            .collect();
        let n = f.node_count();
        let (mut b, mut t, mut a) = (vec![0.0; n * hdim], vec![0.0; n], vec![0.0; n * k]);
        let (mut g, mut h) = (vec![0.0; n * hdim], vec![0.0; n * hdim]);
        let mut c = [0.0; MAX_AXES];
        for i in 0..n {
            f.grid().coords_into(i, &mut c[..=hdim]);
            b[i * hdim..(i + 1) * hdim].copy_from_slice(&c[..hdim]);
            t[i] = c[hdim];
            a[i * k..(i + 1) * k].copy_from_slice(f.value(i));
            for j in 0..hdim {
                let mut hj = 0.0;
                for r in 0..hdim {
                    hj += 0.5 * c[r] * ww[r][j];
                }
                let mut gj = hj;
                for r in 0..k {
                    gj += f.value(i)[r] * vw[r][j];
                }
                h[i * hdim + j] = hj;
                g[i * hdim + j] = gj;
            }
        }
        let exact = metric.is_exact();
        GraphCache {
            f,
            metric,
            hdim,
            k,
            b,
            t,
            a,
            g,
            h,
            gpts: if exact { Vec::new() } else { f.graph_points() },
            wpts: if exact { Vec::new() } else { domain_points(f) },
        }
    }

    #[inline]
    fn w_part(&self, i: usize, j: usize, twist: &[f64]) -> (f64, f64) {
        let hd = self.hdim;
        let (bi, bj) = (&self.b[i * hd..(i + 1) * hd], &self.b[j * hd..(j + 1) * hd]);
        let tw = &twist[i * hd..(i + 1) * hd];
        let mut z2 = 0.0;
        let mut t = self.t[j] - self.t[i];
        for r in 0..hd {
            let db = bj[r] - bi[r];
            z2 += db * db;
            t -= tw[r] * db;
        }
        (z2, t)
    }

    /// `(‖(p_i^{-1}p_j)_W‖, ‖(p_i^{-1}p_j)_V‖)` for graph points.
    #[inline]
    pub(crate) fn pair(&self, i: usize, j: usize) -> (f64, f64) {
        if self.gpts.is_empty() {
            let (z2, t) = self.w_part(i, j, &self.g);
            let wn = self.metric.norm_parts(z2, t).unwrap_or(0.0);
            let k = self.k;
            let mut v2 = 0.0;
            for r in 0..k {
                let d = self.a[j * k + r] - self.a[i * k + r];
                v2 += d * d;
            }
            (wn, v2.sqrt())
        } else {
            pair_norms(self.f, self.metric, &self.gpts[i], &self.gpts[j])
        }
    }

    /// Distance induced on `W` between the domain points of nodes `i`, `j`.
    #[inline]
    pub(crate) fn w_dist(&self, i: usize, j: usize) -> f64 {
        if self.wpts.is_empty() {
            let (z2, t) = self.w_part(i, j, &self.h);
            self.metric.norm_parts(z2, t).unwrap_or(0.0)
        } else {
            self.metric.norm(&(self.wpts[i].inverse() * self.wpts[j]))
        }
    }

    #[inline]
    fn eval(&self, i: usize, j: usize, acc: &mut PairMax) {
        let (wn, vn) = self.pair(i, j);
        acc.offer(ratio_of(wn, vn), vn > INFINITY_RATIO * wn, (i, j));
    }
}

#[inline]
fn ratio_of(wn: f64, vn: f64) -> f64 {
    if wn > 0.0 {
        vn / wn
    } else if vn > 0.0 {
        f64::MAX
    } else {
        0.0
    }
}

fn active_in(f: &SampledFunction, subset: Option<&[bool]>) -> Result<Vec<bool>> {
    if let Some(e) = subset {
        if e.len() != f.node_count() {
            return invalid(format!("subset has {} entries for {} nodes", e.len(), f.node_count()));
        }
    }
    Ok((0..f.node_count())
        .map(|i| f.is_active(i) && subset.map_or(true, |e| e[i]))
        .collect())
}

/// Supremum of pair ratios over ordered pairs of distinct nodes in
/// `subset ∩ mask`. With `prune` set, cell pairs whose ratio bound cannot
/// beat the running maximum are skipped; the result is identical.
pub fn lipschitz_constant(
    f: &SampledFunction,
    metric: &Metric,
    subset: Option<&[bool]>,
    prune: bool,
) -> Result<LipConstant> {
    require_w_to_v(f)?;
    let active = active_in(f, subset)?;
    let nodes: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
    if nodes.len() < 2 {
        return invalid("need at least two active nodes");
    }
    let cache = GraphCache::new(f, metric);
    // the V-norm bound below is exact only for closed-form norms
    if !prune || !metric.is_exact() {
        return Ok(scan_all(&cache, &nodes));
    }
    Ok(scan_pruned(&cache, &active))
}

fn scan_all(ev: &GraphCache<'_>, nodes: &[usize]) -> LipConstant {
    nodes
        .par_iter()
        .map(|&i| {
            let mut acc = PairMax::EMPTY;
            for &j in nodes {
                if j != i {
                    ev.eval(i, j, &mut acc);
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(PairMax::EMPTY, PairMax::merge)
        .finish()
}

/// Per-cell summary used for ratio bounds.
struct Cell {
    nodes: Vec<usize>,
    b_lo: [f64; MAX_AXES],
    b_hi: [f64; MAX_AXES],
    g_lo: [f64; MAX_AXES],
    g_hi: [f64; MAX_AXES],
    t_lo: f64,
    t_hi: f64,
    a_lo: [f64; MAX_N],
    a_hi: [f64; MAX_N],
}

fn build_cells(cache: &GraphCache<'_>, active: &[bool]) -> Vec<Cell> {
    let grid = cache.f.grid();
    let dim = grid.dim();
    let (hdim, k) = (cache.hdim, cache.k);
    let width = match dim {
        1 | 2 => 4,
        3 => 3,
        _ => 2,
    };
    let counts: Vec<usize> = grid.axes().iter().map(|a| a.count.div_ceil(width)).collect();
    let ncells: usize = counts.iter().product();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncells];
    let mut idx = [0usize; MAX_AXES];
    for (i, &on) in active.iter().enumerate() {
        if !on {
            continue;
        }
        grid.multi_index(i, &mut idx);
        let mut c = 0;
        for d in 0..dim {
            c = c * counts[d] + idx[d] / width;
        }
        members[c].push(i);
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|nodes| {
            let mut cell = Cell {
                b_lo: [f64::INFINITY; MAX_AXES],
                b_hi: [f64::NEG_INFINITY; MAX_AXES],
                g_lo: [f64::INFINITY; MAX_AXES],
                g_hi: [f64::NEG_INFINITY; MAX_AXES],
                t_lo: f64::INFINITY,
                t_hi: f64::NEG_INFINITY,
                a_lo: [f64::INFINITY; MAX_N],
                a_hi: [f64::NEG_INFINITY; MAX_N],
                nodes: Vec::new(),
            };
            for &i in &nodes {
                for d in 0..hdim {
                    let (b, g) = (cache.b[i * hdim + d], cache.g[i * hdim + d]);
                    cell.b_lo[d] = cell.b_lo[d].min(b);
                    cell.b_hi[d] = cell.b_hi[d].max(b);
                    cell.g_lo[d] = cell.g_lo[d].min(g);
                    cell.g_hi[d] = cell.g_hi[d].max(g);
                }
                cell.t_lo = cell.t_lo.min(cache.t[i]);
                cell.t_hi = cell.t_hi.max(cache.t[i]);
                for j in 0..k {
                    let a = cache.a[i * k + j];
                    cell.a_lo[j] = cell.a_lo[j].min(a);
                    cell.a_hi[j] = cell.a_hi[j].max(a);
                }
            }
            cell.nodes = nodes;
            cell
        })
        .collect()
}

#[inline]
fn interval_abs_min(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        lo
    } else if hi < 0.0 {
        -hi
    } else {
        0.0
    }
}

#[inline]
fn interval_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let p = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (
        p.iter().copied().fold(f64::INFINITY, f64::min),
        p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Upper bound on the pair ratio for `p` in `a`, `q` in `b`.
///
/// `‖V‖ = |Δa|` and `‖W‖ ≥ max(|Δb|, 2|t_W|^{1/2})` with
/// `t_W = Δt − ⟨g_p, Δb⟩`, bounded by interval arithmetic.
fn cell_pair_bound(a: &Cell, b: &Cell, hdim: usize, k: usize) -> f64 {
    let mut v2 = 0.0;
    for j in 0..k {
        let lo = b.a_lo[j] - a.a_hi[j];
        let hi = b.a_hi[j] - a.a_lo[j];
        let m = lo.abs().max(hi.abs());
        v2 += m * m;
    }
    if v2 == 0.0 {
        return 0.0;
    }
    let mut dmin2 = 0.0;
    let (mut t_lo, mut t_hi) = (b.t_lo - a.t_hi, b.t_hi - a.t_lo);
    for d in 0..hdim {
        let db = (b.b_lo[d] - a.b_hi[d], b.b_hi[d] - a.b_lo[d]);
        let m = interval_abs_min(db.0, db.1);
        dmin2 += m * m;
        let tw = interval_mul((a.g_lo[d], a.g_hi[d]), db);
        t_lo -= tw.1;
        t_hi -= tw.0;
    }
    let t_min = interval_abs_min(t_lo, t_hi);
    let w_low = dmin2.sqrt().max(2.0 * t_min.sqrt());
    if w_low == 0.0 {
        return f64::INFINITY;
    }
    // relative slack for roundoff in the evaluated ratios
    v2.sqrt() / w_low * (1.0 + 1e-9)
}

fn scan_pruned(ev: &GraphCache<'_>, active: &[bool]) -> LipConstant {
    let cells = build_cells(ev, active);
    let (hdim, k) = (ev.hdim, ev.k);
    let nc = cells.len();
    let mut pairs: Vec<(f64, u32, u32)> = (0..nc)
        .into_par_iter()
        .flat_map_iter(|a| {
            let cells = &cells;
            (0..nc).map(move |b| (cell_pair_bound(&cells[a], &cells[b], hdim, k), a as u32, b as u32))
        })
        .collect();
    pairs.par_sort_unstable_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut best = PairMax::EMPTY;
    const CHUNK: usize = 512;
    for chunk in pairs.chunks(CHUNK) {
        let floor = best.ratio;
        if chunk[0].0 < floor {
            break;
        }
        let part = chunk
            .par_iter()
            .filter(|(bound, _, _)| *bound >= floor)
            .map(|&(_, a, b)| {
                let mut acc = PairMax::EMPTY;
                for &i in &cells[a as usize].nodes {
                    for &j in &cells[b as usize].nodes {
                        if i != j {
                            ev.eval(i, j, &mut acc);
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(PairMax::EMPTY, PairMax::merge);
        best = best.merge(part);
    }
    best.finish()
}

/// Max pair ratio from node `node` to nodes in `B_W(node, r)`, per radius.
/// The profile is nondecreasing in `r` after sorting radii ascending.
pub fn pointwise_lip_profile(
    f: &SampledFunction,
    metric: &Metric,
    node: usize,
    radii: &[f64],
) -> Result<Vec<f64>> {
    require_w_to_v(f)?;
    check_radii(radii)?;
    if node >= f.node_count() || !f.is_active(node) {
        return Err(Error::OutsideDomain);
    }
    let cache = GraphCache::new(f, metric);
    let sorted = sorted_radii(radii);
    let mut buckets = vec![0.0f64; sorted.len()];
    let rmax = sorted.last().map_or(0.0, |r| r.1);
    for_each_w_neighbor(&cache, node, rmax, |j, d| {
        let (wn, vn) = cache.pair(node, j);
        let ratio = ratio_of(wn, vn);
        if let Some(b) = sorted.iter().position(|r| d < r.1) {
            buckets[b] = buckets[b].max(ratio);
        }
    });
    Ok(unsort_profile(&sorted, buckets))
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return invalid("radii must be positive and finite");
    }
    Ok(())
}

/// Radii paired with their original position, ascending.
fn sorted_radii(radii: &[f64]) -> Vec<(usize, f64)> {
    let mut s: Vec<(usize, f64)> = radii.iter().copied().enumerate().collect();
    s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    s
}

/// Prefix maxima over ascending radii, returned in the caller's order.
fn unsort_profile(sorted: &[(usize, f64)], mut buckets: Vec<f64>) -> Vec<f64> {
    for b in 1..buckets.len() {
        buckets[b] = buckets[b].max(buckets[b - 1]);
    }
    let mut out = vec![0.0; buckets.len()];
    for (b, (orig, _)) in sorted.iter().enumerate() {
        out[*orig] = buckets[b];
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepanovOptions {
    pub j_max: u32,
    /// Radii for per-node profiles; empty skips them.
    pub radii: Vec<f64>,
    /// Partition each `C_j` into cells of diameter `< 1/j`.
    pub cells: bool,
    /// Also compute the global constant (pruned scan).
    pub global: bool,
}

impl Default for StepanovOptions {
    fn default() -> Self {
        StepanovOptions {
            j_max: 16,
            radii: Vec::new(),
            cells: false,
            global: false,
        }
    }
}

/// Cells of `C_j` with their intrinsic Lipschitz constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CjCells {
    pub j: u32,
    pub cells: Vec<Vec<usize>>,
    /// Largest W-diameter over the cells (always `< 1/j`).
    pub max_diameter: f64,
    pub lipschitz: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipReport {
    pub j_max: u32,
    /// Smallest `j ≤ j_max` satisfying the `C_j` condition, per node;
    /// `None` for unlabeled or inactive nodes.
    pub labels: Vec<Option<u32>>,
    pub radii: Vec<f64>,
    /// Per node, per radius (empty without radii).
    pub profiles: Vec<Vec<f64>>,
    pub global: Option<LipConstant>,
    pub cells: Vec<CjCells>,
}

impl LipReport {
    /// Fraction of active nodes carrying a label.
    pub fn coverage(&self, f: &SampledFunction) -> f64 {
        let active = f.active_count();
        let labeled = (0..self.labels.len())
            .filter(|&i| f.is_active(i) && self.labels[i].is_some())
            .count();
        labeled as f64 / active.max(1) as f64
    }
}

/// Whether a neighbour at W-distance `d` with pair norms `(wn, vn)` blocks
/// the `C_j` condition: it lies in `B_W(w, 1/j)` and in the closed cone of
/// opening `1/j`.
#[inline]
pub fn blocks(j: u32, d: f64, wn: f64, vn: f64) -> bool {
    let jf = j as f64;
    d < 1.0 / jf && wn <= vn / jf + CONE_SLACK
}

/// Largest `j ∈ [0, cap]` blocked by the neighbour.
#[inline]
fn blocked_up_to(cap: u32, d: f64, wn: f64, vn: f64) -> u32 {
    let by_ball = if d > 0.0 { (1.0 / d).floor() } else { f64::INFINITY };
    let by_cone = if wn > CONE_SLACK {
        (vn / (wn - CONE_SLACK)).floor()
    } else {
        f64::INFINITY
    };
    let mut j = by_ball.min(by_cone).clamp(0.0, cap as f64) as u32;
    while j >= 1 && !blocks(j, d, wn, vn) {
        j -= 1;
    }
    while j < cap && blocks(j + 1, d, wn, vn) {
        j += 1;
    }
    j
}

/// Labels every active node with the smallest `j` for which no other graph
/// point over `B_W(w, 1/j)` lies in the closed cone `C_{1/j}(w·φ(w))`.
pub fn classify_stepanov(f: &SampledFunction, metric: &Metric, opts: &StepanovOptions) -> Result<LipReport> {
    require_w_to_v(f)?;
    if opts.j_max == 0 {
        return invalid("j_max must be at least 1");
    }
    check_radii(&opts.radii)?;
    let cache = GraphCache::new(f, metric);
    let sorted = sorted_radii(&opts.radii);
    let rmax = sorted.last().map_or(0.0, |r| r.1).max(1.0);
    let cap = opts.j_max + 1;

    let rows: Vec<(Option<u32>, Vec<f64>)> = (0..f.node_count())
        .into_par_iter()
        .map(|i| {
            if !f.is_active(i) {
                return (None, Vec::new());
            }
            let mut worst = 0u32;
            let mut buckets = vec![0.0f64; sorted.len()];
            for_each_w_neighbor(&cache, i, rmax, |j, d| {
                if sorted.is_empty() && (d >= 1.0 || worst >= cap) {
                    return;
                }
                let (wn, vn) = cache.pair(i, j);
                if d < 1.0 {
                    worst = worst.max(blocked_up_to(cap, d, wn, vn));
                }
                if let Some(b) = sorted.iter().position(|r| d < r.1) {
                    buckets[b] = buckets[b].max(ratio_of(wn, vn));
                }
            });
            let label = (worst < opts.j_max).then_some(worst + 1);
            let profile = if sorted.is_empty() {
                Vec::new()
            } else {
                unsort_profile(&sorted, buckets)
            };
            (label, profile)
        })
        .collect();
    let (labels, profiles): (Vec<_>, Vec<_>) = rows.into_iter().unzip();

    let global = if opts.global {
        Some(lipschitz_constant(f, metric, None, true)?)
    } else {
        None
    };
    let cells = if opts.cells {
        (1..=opts.j_max)
            .filter_map(|j| {
                let members: Vec<usize> = (0..labels.len())
                    .filter(|&i| labels[i].is_some_and(|l| l <= j))
                    .collect();
                (!members.is_empty()).then(|| partition_cj(&cache, &members, j))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(LipReport {
        j_max: opts.j_max,
        labels,
        radii: opts.radii.clone(),
        profiles,
        global,
        cells,
    })
}

/// Bins `members` into index boxes and halves the boxes until every box has
/// W-diameter `< 1/j`.
fn partition_cj(cache: &GraphCache<'_>, members: &[usize], j: u32) -> Result<CjCells> {
    let grid = cache.f.grid();
    let dim = grid.dim();
    let target = 1.0 / j as f64;
    let hdim = dim - 1;
    // start from boxes whose coordinate extents alone keep the diameter small
    let mut width: Vec<usize> = grid
        .axes()
        .iter()
        .enumerate()
        .map(|(d, a)| {
            let extent = if d < hdim {
                target / (2.0 * (hdim as f64).sqrt())
            } else {
                target * target / 16.0
            };
            ((extent / a.step()).floor() as usize + 1).max(1)
        })
        .collect();
    loop {
        let mut boxes: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = Default::default();
        let mut idx = [0usize; MAX_AXES];
        for &i in members {
            grid.multi_index(i, &mut idx);
            let key: Vec<usize> = (0..dim).map(|d| idx[d] / width[d]).collect();
            boxes.entry(key).or_default().push(i);
        }
        let cells: Vec<Vec<usize>> = boxes.into_values().collect();
        let diams: Vec<f64> = cells
            .par_iter()
            .map(|c| {
                let mut m = 0.0f64;
                for &a in c {
                    for &b in c {
                        if a != b {
                            m = m.max(cache.w_dist(a, b));
                        }
                    }
                }
                m
            })
            .collect();
        let max_diameter = diams.iter().copied().fold(0.0, f64::max);
        if max_diameter < target {
            let lipschitz = cells
                .par_iter()
                .map(|c| {
                    if c.len() < 2 {
                        0.0
                    } else {
                        scan_all(cache, c).estimate()
                    }
                })
                .collect();
            return Ok(CjCells {
                j,
                cells,
                max_diameter,
                lipschitz,
            });
        }
        if width.iter().all(|&w| w == 1) {
            return Err(Error::Degenerate(format!(
                "cannot split C_{j} into cells of diameter < {target}"
            )));
        }
        for w in width.iter_mut() {
            *w = (*w / 2).max(1);
        }
    }
}

/// Diagnostics for [`translate_function`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationStats {
    /// Largest coordinate distance from an evaluation point to its nearest node.
    pub max_offgrid: f64,
    /// Largest `|multilinear − nearest|` over evaluation points.
    pub max_interp_gap: f64,
    /// Nodes masked because the evaluation point left the active domain.
    pub masked: usize,
}

/// Default grid for translated functions: same spacing and node count as `g`,
/// centered at 0 with 0 a node.
pub fn centered_grid(g: &Grid) -> Result<Grid> {
    let axes = g
        .axes()
        .iter()
        .map(|a| {
            let count = if a.count % 2 == 1 { a.count } else { a.count + 1 };
            Axis::centered(a.step(), count)
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::new(axes)
}

/// Samples `φ_w̄(w) = φ(w̄)^{-1}·φ(w̄·φ(w̄)·w·φ(w̄)^{-1})` on `target`
/// (default [`centered_grid`]). Nodes whose argument leaves the active domain
/// are masked; the value at 0 is set to 0 exactly.
pub fn translate_function(
    f: &SampledFunction,
    wbar: &[f64],
    target: Option<Grid>,
) -> Result<(SampledFunction, TranslationStats)> {
    require_w_to_v(f)?;
    let s = f.splitting();
    let abar = f.eval(wbar)?;
    let g = s.embed_v_raw(&abar);
    let base = s.embed_w(wbar)?;
    let grid = match target {
        Some(t) => t,
        None => centered_grid(f.grid())?,
    };
    if grid.dim() != f.domain_dim() {
        return invalid("target grid dimension does not match W");
    }
    let k = f.value_dim();
    let wdim = f.domain_dim();
    let nearest = f.clone().with_interpolation(Interpolation::Nearest);
    let rows: Vec<(Option<Vec<f64>>, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let c = grid.coords(i);
            if c.iter().all(|&v| v == 0.0) {
                return (Some(vec![0.0; k]), 0.0, 0.0);
            }
            let u = base * s.embed_w_raw(&c).conjugate_by(&g);
            let mut uc = vec![0.0; wdim];
            let mut va = [0.0; MAX_N];
            s.coords_into(&u, &mut uc, &mut va[..k]);
            let mut val = vec![0.0; k];
            if !f.eval_into(&uc, &mut val) {
                return (None, 0.0, 0.0);
            }
            let off = match f.grid().nearest(&uc) {
                Some(j) => f
                    .grid()
                    .coords(j)
                    .iter()
                    .zip(&uc)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
                None => 0.0,
            };
            let mut near = vec![0.0; k];
            let gap = if nearest.eval_into(&uc, &mut near) {
                near.iter().zip(&val).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            } else {
                0.0
            };
            for (v, a) in val.iter_mut().zip(&abar) {
                *v -= a;
            }
            (Some(val), off, gap)
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len() * k);
    let mut mask = Vec::with_capacity(grid.len());
    let mut stats = TranslationStats {
        max_offgrid: 0.0,
        max_interp_gap: 0.0,
        masked: 0,
    };
    for (v, off, gap) in rows {
        match v {
            Some(v) => {
                values.extend(v);
                mask.push(true);
            }
            None => {
                values.extend(std::iter::repeat(0.0).take(k));
                mask.push(false);
                stats.masked += 1;
            }
        }
        stats.max_offgrid = stats.max_offgrid.max(off);
        stats.max_interp_gap = stats.max_interp_gap.max(gap);
    }
    let out = SampledFunction::new(
        s.clone(),
        Orientation::WToV,
        grid,
        values,
        Some(mask),
        f.interpolation(),
    )?;
    Ok((out, stats))
}

/// `max ‖Φ(v̄)^{-1}Φ(v)‖ / ‖v̄^{-1}v‖` over grid nodes `v ∈ B(v̄, r)` for a
/// function `V → W` with graph map `Φ(v) = v·φ(v)`.
pub fn graphmap_metric_lip_profile(
    g: &SampledFunction,
    metric: &Metric,
    vbar: &[f64],
    radii: &[f64],
) -> Result<Vec<f64>> {
    if g.orientation() != Orientation::VToW {
        return invalid("graph-map profile needs a function V → W");
    }
    check_radii(radii)?;
    let pbar = g.graph_point_at(vbar)?;
    let vpt = g.domain_point(vbar);
    let sorted = sorted_radii(radii);
    let mut buckets = vec![0.0f64; sorted.len()];
    for i in 0..g.node_count() {
        if !g.is_active(i) {
            continue;
        }
        let q = g.node_graph_point(i);
        let vq = g.domain_point(&g.node_coords(i));
        let dv = metric.norm(&(vpt.inverse() * vq));
        if dv == 0.0 {
            continue;
        }
        if let Some(b) = sorted.iter().position(|r| dv < r.1) {
            let ratio = metric.norm(&(pbar.inverse() * q)) / dv;
            buckets[b] = buckets[b].max(ratio);
        }
    }
    Ok(unsort_profile(&sorted, buckets))
}

/// Largest cone opening `β` such that `C_{V,W}(Φ(v̄), β)` contains no other
/// graph point over the grid (`min ‖q_V‖/‖q_W‖` over nodes).
pub fn graphmap_cone_opening(g: &SampledFunction, metric: &Metric, vbar: &[f64]) -> Result<f64> {
    if g.orientation() != Orientation::VToW {
        return invalid("graph-map cone needs a function V → W");
    }
    let pbar = g.graph_point_at(vbar)?;
    let mut beta = f64::INFINITY;
    for i in 0..g.node_count() {
        if !g.is_active(i) {
            continue;
        }
        let d = pbar.inverse() * g.node_graph_point(i);
        let (v, w) = g.splitting().project_reversed_raw(&d);
        let (vn, wn) = (metric.norm(&v), metric.norm(&w));
        if vn == 0.0 && wn == 0.0 {
            continue;
        }
        beta = beta.min(if wn > 0.0 { vn / wn } else { f64::INFINITY });
    }
    Ok(beta)
}

/// Empirical quasi-triangle and graph-distance comparison constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiReport {
    pub triples: usize,
    /// `max ρ(w₁,w₂) / (ρ(w₁,w₃) + ρ(w₃,w₂))`.
    pub quasi_constant: f64,
    /// `min d(p₁,p₂)/ρ(w₁,w₂)`.
    pub ratio_min: f64,
    /// `max d(p₁,p₂)/ρ(w₁,w₂)`.
    pub ratio_max: f64,
}

/// Samples random triples of distinct active nodes.
pub fn quasi_distance_check(
    f: &SampledFunction,
    metric: &Metric,
    triples: usize,
    seed: u64,
) -> Result<QuasiReport> {
    require_w_to_v(f)?;
    let nodes = f.active_nodes();
    if nodes.len() < 3 {
        return invalid("need at least three active nodes");
    }
    let rows: Vec<(f64, f64)> = (0..triples as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = sample_rng(seed, streams::QUASI_DISTANCE, t);
            let mut pick = || nodes[rng.random_range(0..nodes.len())];
            let (a, mut b, mut c) = (pick(), pick(), pick());
            while b == a {
                b = pick();
            }
            while c == a || c == b {
                c = pick();
            }
            let (p1, p2, p3) = (f.node_graph_point(a), f.node_graph_point(b), f.node_graph_point(c));
            let r12 = quasidistance_of(f, metric, &p1, &p2);
            let r13 = quasidistance_of(f, metric, &p1, &p3);
            let r32 = quasidistance_of(f, metric, &p3, &p2);
            let d12 = metric.norm(&(p1.inverse() * p2));
            (r12 / (r13 + r32), d12 / r12)
        })
        .collect();
    let mut rep = QuasiReport {
        triples,
        quasi_constant: 0.0,
        ratio_min: f64::INFINITY,
        ratio_max: 0.0,
    };
    for (q, r) in rows {
        rep.quasi_constant = rep.quasi_constant.max(q);
        rep.ratio_min = rep.ratio_min.min(r);
        rep.ratio_max = rep.ratio_max.max(r);
    }
    Ok(rep)
}
