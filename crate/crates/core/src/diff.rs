//! Intrinsic linear maps, differential estimation and Pansu quotients.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{centered_grid, translate_function, TranslationStats};
use crate::group::{Point, MAX_N};
use crate::metrics::{gaussian_point, Metric};
use crate::rng::{sample_rng, streams};
use crate::sampled::{Grid, Orientation, SampledFunction, MAX_AXES};
use crate::splitting::{Splitting, CONE_SLACK};

/// `φ(w) = M·w_H` with `w_H` the `w_frame` coefficients of `w`.
///
/// For the standard splitting `w_H = (x_{k+1}, …, x_n, y_1, …, y_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicLinearMap {
    splitting: Splitting,
    /// `k × (2n − k)`, row-major.
    m: Vec<f64>,
}

impl IntrinsicLinearMap {
    pub fn new(splitting: Splitting, rows: &[Vec<f64>]) -> Result<Self> {
        let (k, h) = (splitting.k(), splitting.w_dim() - 1);
        if rows.len() != k || rows.iter().any(|r| r.len() != h) {
            return invalid(format!("intrinsic linear map needs a {k}×{h} matrix"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("matrix entries must be finite");
        }
        Ok(IntrinsicLinearMap {
            splitting,
            m: rows.concat(),
        })
    }

    pub fn zero(splitting: Splitting) -> Self {
        let len = splitting.k() * (splitting.w_dim() - 1);
        IntrinsicLinearMap {
            splitting,
            m: vec![0.0; len],
        }
    }

    pub fn splitting(&self) -> &Splitting {
        &self.splitting
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.m
            .chunks(self.splitting.w_dim() - 1)
            .map(|r| r.to_vec())
            .collect()
    }

    #[inline]
    pub(crate) fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        let h = self.splitting.w_dim() - 1;
        for (o, row) in out.iter_mut().zip(self.m.chunks(h)) {
            *o = row.iter().zip(&w[..h]).map(|(a, b)| a * b).sum();
        }
    }

    /// Graph point `w·(M w_H)`.
    pub fn graph_point(&self, w: &[f64]) -> Result<Point> {
        let v = linear_apply(self, w)?;
        Ok(self.splitting.embed_w(w)? * self.splitting.embed_v_raw(&v))
    }

    /// Largest distance of products and dilations of random graph points
    /// from the graph, measured on V-coordinates.
    pub fn subgroup_residual(&self, samples: usize, seed: u64) -> f64 {
        let s = &self.splitting;
        let k = s.k();
        let res: Vec<f64> = (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, streams::LINEAR_CHECK, i);
                let mut pick = || {
                    let g = gaussian_point(s.n(), &mut rng);
                    let (w, _) = s.coords(&g).expect("same n");
                    self.graph_point(&w).expect("valid coordinates")
                };
                let (p, q) = (pick(), pick());
                let lambda = 0.1 + (i % 17) as f64 * 0.37;
                [p * q, p.dilate_unchecked(lambda)]
                    .iter()
                    .map(|r| {
                        let (w, v) = s.coords(r).expect("same n");
                        let mut mv = [0.0; MAX_N];
                        self.apply_into(&w, &mut mv[..k]);
                        v.iter().zip(&mv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        res.into_iter().fold(0.0, f64::max)
    }

    /// Samples the map on `grid` as a W → V function.
    pub fn sample(&self, grid: Grid) -> Result<SampledFunction> {
        let k = self.splitting.k();
        SampledFunction::from_fn(self.splitting.clone(), Orientation::WToV, grid, |w| {
            let mut out = vec![0.0; k];
            self.apply_into(w, &mut out);
            out
        })
    }
}

/// `M·w_H`; the t-coordinate of `w` is ignored.
pub fn linear_apply(map: &IntrinsicLinearMap, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != map.splitting.w_dim() {
        return invalid(format!(
            "W-coordinates need length {}, got {}",
            map.splitting.w_dim(),
            w.len()
        ));
    }
    let mut out = vec![0.0; map.splitting.k()];
    map.apply_into(w, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffOptions {
    /// Final residual must be below this for a "consistent" verdict.
    pub tol: f64,
    /// Required ratio of first to last residual.
    pub decay: f64,
    /// Residuals at or below this count as exact.
    pub exact_floor: f64,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            tol: 0.05,
            decay: 1.5,
            exact_floor: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconclusive,
    Fails,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffEstimate {
    pub base: Vec<f64>,
    /// Fit at the smallest radius, `k × (2n − k)`.
    pub matrix: Vec<Vec<f64>>,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// `sup |φ_w̄(w) − M w_H| / ‖w‖` over each ball.
    pub residuals: Vec<f64>,
    pub ball_sizes: Vec<usize>,
    pub verdict: Verdict,
    pub diagnostic: Option<String>,
    pub translation: TranslationStats,
}

impl DiffEstimate {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn verdict(residuals: &[f64], opts: &DiffOptions) -> Verdict {
    let last = *residuals.last().expect("non-empty schedule");
    let first = residuals[0];
    let exact = residuals.iter().all(|&r| r <= opts.exact_floor);
    let decays = first >= opts.decay * last;
    if last < opts.tol && (exact || decays) {
        return Verdict::Consistent;
    }
    let nondecreasing = residuals.windows(2).all(|w| w[1] >= w[0]);
    if nondecreasing && residuals.iter().all(|&r| r > opts.tol) {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    }
}

/// Fits `M` over the ball `‖w‖ < r` by weighted least squares with weights
/// `1/‖w‖²`; returns `(M, residual, ball size)` or a diagnostic.
fn fit_ball(
    g: &SampledFunction,
    norms: &[f64],
    r: f64,
) -> std::result::Result<(Vec<Vec<f64>>, f64, usize), String> {
    let h = g.domain_dim() - 1;
    let k = g.value_dim();
    let mut a = DMatrix::<f64>::zeros(h, h);
    let mut b = DMatrix::<f64>::zeros(h, k);
    let mut ball = Vec::new();
    let mut c = [0.0; MAX_AXES];
    for i in 0..g.node_count() {
        let nw = norms[i];
        if !g.is_active(i) || nw == 0.0 || nw >= r {
            continue;
        }
        g.grid().coords_into(i, &mut c[..=h]);
        let wt = 1.0 / (nw * nw);
        let phi = g.value(i);
        for p in 0..h {
            for q in 0..h {
                a[(p, q)] += wt * c[p] * c[q];
            }
            for q in 0..k {
                b[(p, q)] += wt * c[p] * phi[q];
            }
        }
        ball.push(i);
    }
    if ball.is_empty() {
        return Err(format!("no grid nodes in the ball of radius {r}"));
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(format!(
            "rank-deficient normal equations at radius {r} (eigenvalues {lo:e}..{hi:e})"
        ));
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| format!("singular normal equations at radius {r}"))?;
    let m: Vec<Vec<f64>> = (0..k).map(|q| (0..h).map(|p| x[(p, q)]).collect()).collect();
    let mut residual = 0.0f64;
    for &i in &ball {
        g.grid().coords_into(i, &mut c[..=h]);
        let mut d2 = 0.0;
        for q in 0..k {
            let fit: f64 = (0..h).map(|p| m[q][p] * c[p]).sum();
            let d = g.value(i)[q] - fit;
            d2 += d * d;
        }
        // distance between V points is the Euclidean distance of coefficients
        residual = residual.max(d2.sqrt() / norms[i]);
    }
    Ok((m, residual, ball.len()))
}

/// Estimates the intrinsic differential of `f` at `w̄` over a decreasing
/// radius schedule. The translated function is sampled on the default
/// centered grid.
pub fn estimate_differential(
    f: &SampledFunction,
    metric: &Metric,
    wbar: &[f64],
    radii: &[f64],
    opts: &DiffOptions,
) -> Result<DiffEstimate> {
    if radii.is_empty() {
        return invalid("radius schedule is empty");
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("radii must be positive and strictly decreasing");
    }
    let (g, stats) = translate_function(f, wbar, Some(centered_grid(f.grid())?))?;
    estimate_translated(&g, metric, wbar, radii, opts, stats)
}

/// [`estimate_differential`] on an already translated function.
pub fn estimate_translated(
    g: &SampledFunction,
    metric: &Metric,
    wbar: &[f64],
    radii: &[f64],
    opts: &DiffOptions,
    stats: TranslationStats,
) -> Result<DiffEstimate> {
    let s = g.splitting();
    let norms: Vec<f64> = (0..g.node_count())
        .map(|i| metric.norm(&s.embed_w_raw(&g.node_coords(i))))
        .collect();
    // the largest ball must sit inside the active translated domain with a
    // two-cell margin
    let margin = 2.0 * g.grid().axes().iter().map(|a| a.step()).fold(0.0, f64::max);
    let reach = radii[0] + margin;
    let mut half = [0.0; MAX_AXES];
    let dim = g.domain_dim();
    crate::graph::w_ball_half_widths(&vec![0.0; dim], reach, &mut half);
    for (d, a) in g.grid().axes().iter().enumerate() {
        if a.min > -half[d] + 1e-12 && a.min > -radii[0] || a.max < half[d] - 1e-12 && a.max < radii[0] {
            return invalid(format!("base point is not interior at radius {}", radii[0]));
        }
    }
    for i in 0..g.node_count() {
        if !g.is_active(i) && norms[i] < radii[0] {
            return invalid(format!(
                "base point is not interior: masked node inside radius {}",
                radii[0]
            ));
        }
    }

    let k = g.value_dim();
    let h = dim - 1;
    let mut matrices = Vec::new();
    let mut residuals = Vec::new();
    let mut ball_sizes = Vec::new();
    let mut diagnostic = None;
    for &r in radii {
        match fit_ball(g, &norms, r) {
            Ok((m, res, size)) => {
                matrices.push(m);
                residuals.push(res);
                ball_sizes.push(size);
            }
            Err(msg) => {
                diagnostic = Some(msg);
                break;
            }
        }
    }
    let (verdict_value, matrix) = if diagnostic.is_some() || residuals.is_empty() {
        (
            Verdict::Inconclusive,
            matrices.last().cloned().unwrap_or_else(|| vec![vec![0.0; h]; k]),
        )
    } else {
        (verdict(&residuals, opts), matrices.last().cloned().expect("non-empty"))
    };
    Ok(DiffEstimate {
        base: wbar.to_vec(),
        matrix,
        radii: radii[..residuals.len().max(1).min(radii.len())].to_vec(),
        matrices,
        residuals,
        ball_sizes,
        verdict: verdict_value,
        diagnostic,
        translation: stats,
    })
}

/// The vertical subgroup `T = gr(M)` together with the splitting `T·V`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSubgroup {
    pub map: IntrinsicLinearMap,
    /// Orthonormal frame of the horizontal part of `T`.
    pub frame: Vec<Vec<f64>>,
    /// `T·V`, with `T` as the vertical factor.
    pub tv: Splitting,
}

impl TangentSubgroup {
    pub fn from_map(map: IntrinsicLinearMap) -> Result<Self> {
        let s = map.splitting();
        let dim = 2 * s.n();
        let h = s.w_dim() - 1;
        let rows = map.rows();
        // horizontal directions of T: w_i + Σ_j M_ji v_j
        let dirs: Vec<Vec<f64>> = (0..h)
            .map(|i| {
                let mut d = s.w_frame()[i].clone();
                for (j, v) in s.v_frame().iter().enumerate() {
                    for (x, y) in d.iter_mut().zip(v) {
                        *x += rows[j][i] * y;
                    }
                }
                d
            })
            .collect();
        let mut frame: Vec<Vec<f64>> = Vec::new();
        for mut d in dirs {
            for _ in 0..2 {
                for e in &frame {
                    let c: f64 = d.iter().zip(e).map(|(a, b)| a * b).sum();
                    for (x, y) in d.iter_mut().zip(e) {
                        *x -= c * y;
                    }
                }
            }
            let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len < 1e-12 {
                return Err(Error::InvalidSplitting("tangent directions are degenerate".into()));
            }
            d.iter_mut().for_each(|v| *v /= len);
            frame.push(d);
        }
        debug_assert_eq!(frame.len() + s.k(), dim);
        let tv = Splitting::new(s.n(), s.v_frame().to_vec(), Some(frame.clone()))?;
        Ok(TangentSubgroup { map, frame, tv })
    }

    /// `V`-coordinates of `p` in the `T·V` splitting; zero iff `p ∈ T`.
    pub fn offset(&self, p: &Point) -> Result<Vec<f64>> {
        Ok(self.tv.coords(p)?.1)
    }
}

/// `T = gr(dφ_w̄)` from a fitted estimate.
pub fn tangent_subgroup(splitting: &Splitting, e: &DiffEstimate) -> Result<TangentSubgroup> {
    if e.verdict == Verdict::Fails {
        return invalid("differential estimate failed; no tangent subgroup");
    }
    TangentSubgroup::from_map(IntrinsicLinearMap::new(splitting.clone(), &e.matrix)?)
}

/// Opening-`α` cone radius at `w̄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "radius", rename_all = "snake_case")]
pub enum ConeRadius {
    /// No other graph point of the grid lies in the cone.
    Full,
    /// Largest clear open ball radius.
    Radius(f64),
    /// Even the nearest grid neighbours enter the cone.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeRow {
    pub alpha: f64,
    pub radius: ConeRadius,
}

/// For each `α`, the largest grid radius `r` such that no other graph point
/// over `B_W(w̄, r)` lies in the closed cone `C_{T,V}(p̄, α)`.
pub fn verify_cone_characterization(
    f: &SampledFunction,
    metric: &Metric,
    wbar: &[f64],
    t: &TangentSubgroup,
    alphas: &[f64],
) -> Result<Vec<ConeRow>> {
    if f.orientation() != Orientation::WToV {
        return invalid("cone characterization needs a function W → V");
    }
    if alphas.iter().any(|a| !(*a >= 0.0)) {
        return invalid("cone openings must be nonnegative");
    }
    let s = f.splitting();
    let pbar = f.graph_point_at(wbar)?;
    let wpt = s.embed_w(wbar)?.inverse();
    let rows: Vec<Option<(f64, f64, f64)>> = (0..f.node_count())
        .into_par_iter()
        .map(|i| {
            if !f.is_active(i) {
                return None;
            }
            let c = f.node_coords(i);
            let d = metric.norm(&(wpt * s.embed_w_raw(&c)));
            if d == 0.0 {
                return None;
            }
            let q = pbar.inverse() * f.node_graph_point(i);
            let (wt, v) = t.tv.project_raw(&q);
            Some((d, metric.norm(&wt), metric.norm(&v)))
        })
        .collect();
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().flatten().collect();
    let d_min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let block = rows
                .iter()
                .filter(|(_, wn, vn)| *wn <= alpha * vn + CONE_SLACK)
                .map(|r| r.0)
                .fold(f64::INFINITY, f64::min);
            let radius = if block.is_infinite() {
                ConeRadius::Full
            } else if block <= d_min {
                ConeRadius::None
            } else {
                ConeRadius::Radius(block)
            };
            ConeRow { alpha, radius }
        })
        .collect())
}

/// Largest coordinate gap between the `T`-components of `x·a` and `x·ã` for
/// random `x ∈ W` and `a, ã ∈ V`.
pub fn shared_w_component_residual(t: &TangentSubgroup, samples: usize, seed: u64) -> f64 {
    let s = t.map.splitting();
    let k = s.k();
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, streams::LINEAR_CHECK, 1 << 32 | i);
            let (x, _) = s.project_raw(&gaussian_point(s.n(), &mut rng));
            let a: Vec<f64> = s.coords(&gaussian_point(s.n(), &mut rng)).expect("same n").1;
            let b: Vec<f64> = s.coords(&gaussian_point(s.n(), &mut rng)).expect("same n").1;
            let p = x * s.embed_v_raw(&a[..k]);
            let q = x * s.embed_v_raw(&b[..k]);
            let (pt, _) = t.tv.project_raw(&p);
            let (qt, _) = t.tv.project_raw(&q);
            pt.max_abs_diff(&qt)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// `δ_{1/λ}(Φ(v̄)^{-1}·Φ(v̄·δ_λ v))` for a function `V → W` with
/// `Φ(v) = v·φ(v)`.
pub fn pansu_quotient(g: &SampledFunction, vbar: &[f64], v: &[f64], lambda: f64) -> Result<Point> {
    if g.orientation() != Orientation::VToW {
        return invalid("Pansu quotient needs a function V → W");
    }
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    if v.len() != vbar.len() {
        return invalid("direction and base point dimensions differ");
    }
    let moved: Vec<f64> = vbar.iter().zip(v).map(|(a, b)| a + lambda * b).collect();
    let p = g.graph_point_at(vbar)?;
    let q = g.graph_point_at(&moved)?;
    (p.inverse() * q).dilate(1.0 / lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PansuSchedule {
    pub lambdas: Vec<f64>,
    /// Quotient coordinates per λ, `None` outside the domain.
    pub quotients: Vec<Option<Vec<f64>>>,
    /// Max coordinate gap between consecutive available quotients.
    pub gaps: Vec<f64>,
}

impl PansuSchedule {
    /// Largest gap, the Cauchy diagnostic of the schedule.
    pub fn cauchy(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

pub fn pansu_schedule(g: &SampledFunction, vbar: &[f64], v: &[f64], lambdas: &[f64]) -> Result<PansuSchedule> {
    let mut quotients = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        match pansu_quotient(g, vbar, v, l) {
            Ok(q) => quotients.push(Some(q.to_vec())),
            Err(Error::OutsideDomain) => quotients.push(None),
            Err(e) => return Err(e),
        }
    }
    let avail: Vec<&Vec<f64>> = quotients.iter().flatten().collect();
    let gaps = avail
        .windows(2)
        .map(|w| w[0].iter().zip(w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    Ok(PansuSchedule {
        lambdas: lambdas.to_vec(),
        quotients,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampled::Axis;

    fn square(count: usize, half: f64) -> Grid {
        Grid::new(vec![
            Axis::new(-half, half, count).unwrap(),
            Axis::new(-half, half, count).unwrap(),
        ])
        .unwrap()
    }

    fn std11() -> Splitting {
        Splitting::standard(1, 1).unwrap()
    }

    #[test]
    fn linear_apply_examples() {
        let z = IntrinsicLinearMap::zero(std11());
        assert_eq!(linear_apply(&z, &[3.0, -2.0]).unwrap(), vec![0.0]);
        let m = IntrinsicLinearMap::new(std11(), &[vec![1.5]]).unwrap();
        assert_eq!(linear_apply(&m, &[2.0, 5.0]).unwrap(), vec![3.0]);
        assert!(linear_apply(&m, &[2.0]).is_err());
        assert!(IntrinsicLinearMap::new(std11(), &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn linear_graphs_are_subgroups() {
        let m = IntrinsicLinearMap::new(std11(), &[vec![0.7]]).unwrap();
        let p = m.graph_point(&[1.0, 0.5]).unwrap();
        let q = m.graph_point(&[-0.25, 2.0]).unwrap();
        // w·v picks up -½·x·y from the twist
        assert!(p.max_abs_diff(&Point::new(&[0.7], &[1.0], 0.5 - 0.35).unwrap()) < 1e-15);
        let pq = p * q;
        assert!((pq.x()[0] - 0.7 * pq.y()[0]).abs() < 1e-15);
        assert!(m.subgroup_residual(500, 1) < 1e-10);
        let s = Splitting::standard(2, 1).unwrap();
        let m2 = IntrinsicLinearMap::new(s, &[vec![0.3, -1.0, 2.0]]).unwrap();
        assert!(m2.subgroup_residual(500, 2) < 1e-10);
    }

    #[test]
    fn exact_recovery_on_linear_data() {
        let map = IntrinsicLinearMap::new(std11(), &[vec![-1.25]]).unwrap();
        let f = map.sample(square(65, 1.0)).unwrap();
        let e = estimate_differential(&f, &Metric::Infinity, &[0.25, 0.125], &[0.5, 0.25, 0.125], &DiffOptions::default())
            .unwrap();
        assert_eq!(e.verdict, Verdict::Consistent);
        assert!((e.matrix[0][0] + 1.25).abs() < 1e-9);
        assert!(e.residuals.iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn constant_has_zero_differential() {
        let f = SampledFunction::from_fn(std11(), Orientation::WToV, square(33, 1.0), |_| vec![0.4]).unwrap();
        let e = estimate_differential(&f, &Metric::Infinity, &[0.0, 0.0], &[0.5, 0.25], &DiffOptions::default())
            .unwrap();
        assert_eq!(e.matrix, vec![vec![0.0]]);
        assert_eq!(e.verdict, Verdict::Consistent);
    }

    #[test]
    fn vertical_coordinate_residual_bound() {
        let f = SampledFunction::from_fn(std11(), Orientation::WToV, square(129, 1.0), |c| vec![c[1]]).unwrap();
        let radii = [0.8, 0.4, 0.2, 0.1];
        let e = estimate_differential(&f, &Metric::Infinity, &[0.0, 0.0], &radii, &DiffOptions::default()).unwrap();
        assert!(e.matrix[0][0].abs() < 1e-9);
        for (r, res) in radii.iter().zip(&e.residuals) {
            assert!(*res <= r / 4.0 * 1.1, "{r}: {res}");
        }
        assert_eq!(e.verdict, Verdict::Consistent);
    }

    #[test]
    fn rejects_bad_schedules() {
        let f = SampledFunction::from_fn(std11(), Orientation::WToV, square(17, 1.0), |_| vec![0.0]).unwrap();
        let o = DiffOptions::default();
        assert!(estimate_differential(&f, &Metric::Infinity, &[0.0, 0.0], &[0.2, 0.4], &o).is_err());
        assert!(estimate_differential(&f, &Metric::Infinity, &[0.0, 0.0], &[], &o).is_err());
        assert!(estimate_differential(&f, &Metric::Infinity, &[0.75, 0.0], &[0.9], &o).is_err());
    }

    #[test]
    fn verdict_rules() {
        let o = DiffOptions::default();
        assert_eq!(verdict(&[0.2, 0.1, 0.01], &o), Verdict::Consistent);
        assert_eq!(verdict(&[0.0, 0.0], &o), Verdict::Consistent);
        assert_eq!(verdict(&[0.3, 0.4, 0.5], &o), Verdict::Fails);
        assert_eq!(verdict(&[0.3, 0.2, 0.1], &o), Verdict::Inconclusive);
        assert_eq!(verdict(&[0.03, 0.029], &o), Verdict::Inconclusive);
    }

    #[test]
    fn tangent_of_zero_is_w() {
        let t = TangentSubgroup::from_map(IntrinsicLinearMap::zero(std11())).unwrap();
        assert_eq!(t.tv, std11());
        let m = IntrinsicLinearMap::new(std11(), &[vec![2.0]]).unwrap();
        let t = TangentSubgroup::from_map(m.clone()).unwrap();
        for w in [[0.5, 0.1], [-1.0, 3.0]] {
            let p = m.graph_point(&w).unwrap();
            assert!(t.offset(&p).unwrap()[0].abs() < 1e-12);
            assert!(t.offset(&p.dilate(3.5).unwrap()).unwrap()[0].abs() < 1e-10);
        }
        assert!(shared_w_component_residual(&t, 1000, 5) < 1e-10);
    }

    #[test]
    fn cone_radius_for_linear_is_full() {
        let m = IntrinsicLinearMap::new(std11(), &[vec![0.6]]).unwrap();
        let f = m.sample(square(33, 1.0)).unwrap();
        let t = TangentSubgroup::from_map(m).unwrap();
        let rows = verify_cone_characterization(&f, &Metric::Infinity, &[0.0, 0.0], &t, &[1.0, 0.5, 0.1]).unwrap();
        assert!(rows.iter().all(|r| r.radius == ConeRadius::Full));
    }

    fn lift(b0: f64, m: f64, t0: f64) -> impl Fn(&[f64]) -> Vec<f64> + Sync {
        move |a: &[f64]| vec![b0 + m * a[0], t0 - b0 * a[0] - m * a[0] * a[0] / 2.0]
    }

    #[test]
    fn pansu_quotients() {
        let s = std11();
        let g = Grid::new(vec![Axis::new(-1.0, 1.0, 1025).unwrap()]).unwrap();
        let zero = SampledFunction::from_fn(s.clone(), Orientation::VToW, g.clone(), |_| vec![0.0, 0.0]).unwrap();
        let q = pansu_quotient(&zero, &[0.25], &[1.0], 0.125).unwrap();
        assert_eq!(q, Point::new(&[1.0], &[0.0], 0.0).unwrap());

        let f = SampledFunction::from_fn(s, Orientation::VToW, g, lift(0.3, -0.8, 0.1)).unwrap();
        let lambdas = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let sched = pansu_schedule(&f, &[0.25], &[1.0], &lambdas).unwrap();
        assert!(sched.quotients.iter().all(|q| q.is_some()));
        assert!(sched.cauchy() < 1e-9, "{sched:?}");
        let q = sched.quotients[0].as_ref().unwrap();
        // derivative of the lift: (1, m, 0) after the dilation
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] + 0.8).abs() < 1e-9 && q[2].abs() < 1e-9);
    }
}
