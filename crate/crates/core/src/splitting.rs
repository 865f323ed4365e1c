//! Complementary subgroups `W·V` of H^n and the intrinsic cones they define.
//!
//! `V` is horizontal, spanned by the isotropic `v_frame`; `W` is vertical,
//! spanned by `w_frame` together with the t-axis. Every point factors uniquely
//! as `p = p_W · p_V`. Coordinates on `W` are `(b, t)` with `b` the
//! `w_frame` coefficients of the horizontal part; coordinates on `V` are the
//! `v_frame` coefficients `a`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{symplectic, Point, MAX_N};
use crate::metrics::{gaussian_point, Metric};
use crate::rng::{sample_rng, streams};

const FRAME_TOL: f64 = 1e-12;
const ORTHO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Splitting {
    n: usize,
    k: usize,
    v_frame: Vec<Vec<f64>>,
    w_frame: Vec<Vec<f64>>,
    /// Row-major inverse of the basis matrix `[v_1 .. v_k w_1 .. w_{2n-k}]`.
    inv: Vec<f64>,
    standard: bool,
}

/// Serializable description of a splitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingSpec {
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_frame: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_frame: Option<Vec<Vec<f64>>>,
}

impl SplittingSpec {
    pub fn standard(n: usize, k: usize) -> Self {
        SplittingSpec {
            n,
            k,
            v_frame: None,
            w_frame: None,
        }
    }

    pub fn build(&self) -> Result<Splitting> {
        match &self.v_frame {
            None if self.w_frame.is_none() => Splitting::standard(self.n, self.k),
            None => Splitting::new(
                self.n,
                standard_v_frame(self.n, self.k),
                self.w_frame.clone(),
            ),
            Some(v) => {
                if v.len() != self.k {
                    return Err(Error::InvalidSplitting(format!(
                        "k = {} but v_frame has {} rows",
                        self.k,
                        v.len()
                    )));
                }
                Splitting::new(self.n, v.clone(), self.w_frame.clone())
            }
        }
    }
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = 1.0;
    e
}

fn standard_v_frame(n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|i| unit(2 * n, i)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_orthonormal(rows: &[Vec<f64>], what: &str) -> Result<()> {
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot(a, b) - target).abs() > ORTHO_TOL {
                return Err(Error::InvalidSplitting(format!(
                    "{what} rows {i} and {j} are not orthonormal"
                )));
            }
        }
    }
    Ok(())
}

/// Orthonormal basis of the Euclidean complement of `span(frame)` in `R^dim`.
pub(crate) fn orthogonal_complement(frame: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = frame.to_vec();
    let mut out = Vec::new();
    for i in 0..dim {
        let mut e = unit(dim, i);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&e, b);
                for (x, y) in e.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let len = dot(&e, &e).sqrt();
        if len > 1e-6 {
            for x in e.iter_mut() {
                *x /= len;
            }
            basis.push(e.clone());
            out.push(e);
        }
        if basis.len() == dim {
            break;
        }
    }
    out
}

impl Splitting {
    /// Builds a splitting from an isotropic orthonormal `v_frame` and an
    /// optional orthonormal horizontal complement for `W` (defaults to the
    /// Euclidean orthogonal complement).
    pub fn new(n: usize, v_frame: Vec<Vec<f64>>, w_frame: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(Error::InvalidSplitting(format!("n = {n} out of range")));
        }
        let k = v_frame.len();
        if k == 0 || k > n {
            return Err(Error::InvalidSplitting(format!(
                "need 1 <= k <= n, got k = {k}, n = {n}"
            )));
        }
        let dim = 2 * n;
        if v_frame.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSplitting(format!(
                "v_frame rows must be finite vectors of length {dim}"
            )));
        }
        check_orthonormal(&v_frame, "v_frame")?;
        for i in 0..k {
            for j in i + 1..k {
                let w = symplectic(&v_frame[i], &v_frame[j]);
                if w.abs() > FRAME_TOL {
                    return Err(Error::InvalidSplitting(format!(
                        "v_frame is not isotropic: ω(v_{i}, v_{j}) = {w}"
                    )));
                }
            }
        }
        let w_frame = match w_frame {
            Some(w) => {
                if w.len() != dim - k
                    || w.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite()))
                {
                    return Err(Error::InvalidSplitting(format!(
                        "w_frame must have {} finite rows of length {dim}",
                        dim - k
                    )));
                }
                check_orthonormal(&w, "w_frame")?;
                w
            }
            None => orthogonal_complement(&v_frame, dim),
        };

        let basis = DMatrix::from_fn(dim, dim, |r, c| {
            if c < k {
                v_frame[c][r]
            } else {
                w_frame[c - k][r]
            }
        });
        let svd = basis.clone().svd(false, false);
        let smallest = svd.singular_values.min();
        if smallest < FRAME_TOL {
            return Err(Error::InvalidSplitting(format!(
                "v_frame and w_frame do not span R^{dim} (smallest singular value {smallest:e})"
            )));
        }
        let inv = basis
            .try_inverse()
            .ok_or_else(|| Error::InvalidSplitting("singular frame".into()))?;
        let inv = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .map(|(r, c)| inv[(r, c)])
            .collect();
        let standard = v_frame == standard_v_frame(n, k) && w_frame == standard_w_frame(n, k);
        Ok(Splitting {
            n,
            k,
            v_frame,
            w_frame,
            inv,
            standard,
        })
    }

    /// `V = span{X_1..X_k}`, `W` horizontal part `span{X_{k+1}..X_n, Y_1..Y_n}`.
    pub fn standard(n: usize, k: usize) -> Result<Self> {
        if n == 0 || n > MAX_N || k == 0 || k > n {
            return Err(Error::InvalidSplitting(format!(
                "need 1 <= k <= n <= {MAX_N}, got k = {k}, n = {n}"
            )));
        }
        Splitting::new(n, standard_v_frame(n, k), Some(standard_w_frame(n, k)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of coordinates on `W`: `2n − k` horizontal plus `t`.
    pub fn w_dim(&self) -> usize {
        2 * self.n - self.k + 1
    }

    pub fn v_frame(&self) -> &[Vec<f64>] {
        &self.v_frame
    }

    pub fn w_frame(&self) -> &[Vec<f64>] {
        &self.w_frame
    }

    pub fn is_standard(&self) -> bool {
        self.standard
    }

    pub fn spec(&self) -> SplittingSpec {
        if self.standard {
            SplittingSpec::standard(self.n, self.k)
        } else {
            SplittingSpec {
                n: self.n,
                k: self.k,
                v_frame: Some(self.v_frame.clone()),
                w_frame: Some(self.w_frame.clone()),
            }
        }
    }

    /// Frame coefficients `(a, b)` of a horizontal vector, `a` of length `k`.
    #[inline]
    pub(crate) fn frame_coords(&self, z: &[f64], a: &mut [f64], b: &mut [f64]) {
        let dim = 2 * self.n;
        for r in 0..dim {
            let row = &self.inv[r * dim..(r + 1) * dim];
            let c = dot(row, z);
            if r < self.k {
                a[r] = c;
            } else {
                b[r - self.k] = c;
            }
        }
    }

    /// `W`-coordinates `(b, t)` and `V`-coordinates `a` of `p = p_W·p_V`.
    #[inline]
    pub(crate) fn coords_into(&self, p: &Point, w: &mut [f64], v: &mut [f64]) {
        let hdim = 2 * self.n - self.k;
        self.frame_coords(p.horizontal(), v, &mut w[..hdim]);
        let va = self.horizontal_of_v(v);
        w[hdim] = p.t() - 0.5 * symplectic(p.horizontal(), &va[..2 * self.n]);
    }

    /// Owned version of [`Splitting::coords_into`].
    pub fn coords(&self, p: &Point) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(p)?;
        let mut w = vec![0.0; self.w_dim()];
        let mut v = vec![0.0; self.k];
        self.coords_into(p, &mut w, &mut v);
        Ok((w, v))
    }

    #[inline]
    fn horizontal_of_v(&self, a: &[f64]) -> [f64; 2 * MAX_N] {
        let mut z = [0.0; 2 * MAX_N];
        for (ai, row) in a.iter().zip(&self.v_frame) {
            for (zj, rj) in z.iter_mut().zip(row) {
                *zj += ai * rj;
            }
        }
        z
    }

    #[inline]
    pub(crate) fn embed_w_raw(&self, w: &[f64]) -> Point {
        let mut z = [0.0; 2 * MAX_N];
        let hdim = 2 * self.n - self.k;
        for (bi, row) in w[..hdim].iter().zip(&self.w_frame) {
            for (zj, rj) in z.iter_mut().zip(row) {
                *zj += bi * rj;
            }
        }
        Point::raw(self.n, &z, w[hdim])
    }

    #[inline]
    pub(crate) fn embed_v_raw(&self, a: &[f64]) -> Point {
        Point::raw(self.n, &self.horizontal_of_v(a), 0.0)
    }

    /// The point of `W` with coordinates `(b, t)`.
    pub fn embed_w(&self, w: &[f64]) -> Result<Point> {
        if w.len() != self.w_dim() {
            return Err(Error::InvalidInput(format!(
                "W-coordinates need length {}, got {}",
                self.w_dim(),
                w.len()
            )));
        }
        Ok(self.embed_w_raw(w))
    }

    /// The point of `V` with coordinates `a`.
    pub fn embed_v(&self, a: &[f64]) -> Result<Point> {
        if a.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "V-coordinates need length {}, got {}",
                self.k,
                a.len()
            )));
        }
        Ok(self.embed_v_raw(a))
    }

    pub(crate) fn check(&self, p: &Point) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: p.n(),
            });
        }
        Ok(())
    }

    /// Components `(p_W, p_V)` with `p = p_W · p_V`.
    pub fn project(&self, p: &Point) -> Result<(Point, Point)> {
        self.check(p)?;
        Ok(self.project_raw(p))
    }

    #[inline]
    pub(crate) fn project_raw(&self, p: &Point) -> (Point, Point) {
        let mut a = [0.0; MAX_N];
        let mut b = [0.0; 2 * MAX_N];
        let hdim = 2 * self.n - self.k;
        self.frame_coords(p.horizontal(), &mut a[..self.k], &mut b[..hdim]);
        let va = self.horizontal_of_v(&a[..self.k]);
        let v = Point::raw(self.n, &va, 0.0);
        let mut w = *p;
        for (zw, zv) in w.horizontal_mut().iter_mut().zip(&va) {
            *zw -= zv;
        }
        w.set_t(p.t() - 0.5 * symplectic(p.horizontal(), &va[..2 * self.n]));
        (w, v)
    }

    /// Components `(p_V, p_W)` of the reversed factorization `p = p_V · p_W`.
    pub(crate) fn project_reversed_raw(&self, p: &Point) -> (Point, Point) {
        let (w, v) = self.project_raw(p);
        // p = w·v = v·(v^{-1} w v)
        (v, w.conjugate_by(&v.inverse()))
    }
}

fn standard_w_frame(n: usize, k: usize) -> Vec<Vec<f64>> {
    (k..2 * n).map(|i| unit(2 * n, i)).collect()
}

/// Which subgroup plays the base of a cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    /// `C_{W,V}`: `‖q_W‖ ≤ β‖q_V‖` with `q = q_W·q_V`.
    #[default]
    W,
    /// `C_{V,W}`: `‖q_V‖ ≤ β‖q_W‖` with `q = q_V·q_W`.
    V,
}

/// Closed intrinsic cone `vertex · C(0, β)`.
#[derive(Clone, Debug)]
pub struct Cone<'a> {
    pub splitting: &'a Splitting,
    pub vertex: Point,
    pub beta: f64,
    pub base: Base,
}

/// Additive slack for cone membership; boundary points count as inside.
pub const CONE_SLACK: f64 = 1e-12;

impl<'a> Cone<'a> {
    pub fn new(splitting: &'a Splitting, vertex: Point, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidInput(format!("cone opening must be >= 0, got {beta}")));
        }
        splitting.check(&vertex)?;
        Ok(Cone {
            splitting,
            vertex,
            beta,
            base: Base::W,
        })
    }

    pub fn with_base(mut self, base: Base) -> Self {
        self.base = base;
        self
    }

    pub fn contains(&self, metric: &Metric, q: &Point) -> Result<bool> {
        self.splitting.check(q)?;
        let d = self.vertex.inverse() * *q;
        Ok(match self.base {
            Base::W => {
                let (w, v) = self.splitting.project_raw(&d);
                metric.norm(&w) <= self.beta * metric.norm(&v) + CONE_SLACK
            }
            Base::V => {
                let (v, w) = self.splitting.project_reversed_raw(&d);
                metric.norm(&v) <= self.beta * metric.norm(&w) + CONE_SLACK
            }
        })
    }
}

/// Maximum residuals of the projection identities over a random sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResiduals {
    pub samples: usize,
    /// `P_W(p·q) = P_W(p)·P_V(p)·P_W(q)·P_V(p)^{-1}`
    pub w_of_product: f64,
    /// `P_V(p·q) = P_V(p)·P_V(q)`
    pub v_of_product: f64,
    /// `P_W(p^{-1}) = P_V(p)^{-1}·P_W(p)^{-1}·P_V(p)`
    pub w_of_inverse: f64,
    /// `P_V(p^{-1}) = P_V(p)^{-1}`
    pub v_of_inverse: f64,
    /// `p_W · p_V = p`
    pub reconstruction: f64,
    /// `|⟨p_W, v_i⟩|` on the horizontal part
    pub w_leakage: f64,
}

impl ProjectionResiduals {
    pub fn max(&self) -> f64 {
        [
            self.w_of_product,
            self.v_of_product,
            self.w_of_inverse,
            self.v_of_inverse,
            self.reconstruction,
            self.w_leakage,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn merge(mut self, o: &ProjectionResiduals) -> Self {
        self.samples += o.samples;
        self.w_of_product = self.w_of_product.max(o.w_of_product);
        self.v_of_product = self.v_of_product.max(o.v_of_product);
        self.w_of_inverse = self.w_of_inverse.max(o.w_of_inverse);
        self.v_of_inverse = self.v_of_inverse.max(o.v_of_inverse);
        self.reconstruction = self.reconstruction.max(o.reconstruction);
        self.w_leakage = self.w_leakage.max(o.w_leakage);
        self
    }
}

/// Residuals of the projection identities on one pair.
pub fn projection_residuals_at(s: &Splitting, p: &Point, q: &Point) -> Result<ProjectionResiduals> {
    s.check(p)?;
    s.check(q)?;
    let (pw, pv) = s.project_raw(p);
    let (qw, qv) = s.project_raw(q);
    let (pqw, pqv) = s.project_raw(&(*p * *q));
    let (iw, iv) = s.project_raw(&p.inverse());
    let leak = s
        .v_frame
        .iter()
        .map(|v| dot(v, pw.horizontal()).abs())
        .fold(0.0, f64::max);
    Ok(ProjectionResiduals {
        samples: 1,
        w_of_product: pqw.max_abs_diff(&(pw * pv * qw * pv.inverse())),
        v_of_product: pqv.max_abs_diff(&(pv * qv)),
        w_of_inverse: iw.max_abs_diff(&(pv.inverse() * pw.inverse() * pv)),
        v_of_inverse: iv.max_abs_diff(&pv.inverse()),
        reconstruction: (pw * pv).max_abs_diff(p),
        w_leakage: leak,
    })
}

/// Runs [`projection_residuals_at`] on `samples` Gaussian pairs.
pub fn projection_identities_check(s: &Splitting, samples: usize, seed: u64) -> ProjectionResiduals {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, streams::PROJECTIONS, i);
            let p = gaussian_point(s.n, &mut rng);
            let q = gaussian_point(s.n, &mut rng);
            projection_residuals_at(s, &p, &q).expect("dimensions agree")
        })
        .collect::<Vec<_>>()
        .iter()
        .fold(ProjectionResiduals::default(), |acc, r| acc.merge(r))
}

/// Empirical lower constant `C̃` in `C̃(‖p_W‖ + ‖p_V‖) ≤ ‖p‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSplitting {
    pub samples: usize,
    pub constant: f64,
    /// Largest `‖p‖ − (‖p_W‖ + ‖p_V‖)`; must not exceed `1e-9`.
    pub worst_upper_excess: f64,
}

pub fn norm_splitting_constant(
    s: &Splitting,
    metric: &Metric,
    samples: usize,
    seed: u64,
) -> Result<NormSplitting> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let rows: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, streams::NORM_SPLITTING, i);
            let p = gaussian_point(s.n, &mut rng);
            let (w, v) = s.project_raw(&p);
            let sum = metric.norm(&w) + metric.norm(&v);
            let norm = metric.norm(&p);
            (norm / sum, norm - sum)
        })
        .collect();
    let constant = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let worst = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    if worst > 1e-9 {
        return Err(Error::PropertyViolated(format!(
            "‖p‖ exceeds ‖p_W‖ + ‖p_V‖ by {worst:e}"
        )));
    }
    Ok(NormSplitting {
        samples,
        constant,
        worst_upper_excess: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(x: f64, y: f64, t: f64) -> Point {
        Point::new(&[x], &[y], t).unwrap()
    }

    #[test]
    fn standard_projection_example() {
        let s = Splitting::standard(1, 1).unwrap();
        let (w, v) = s.project(&p1(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(w, p1(0.0, 2.0, 4.0));
        assert_eq!(v, p1(1.0, 0.0, 0.0));
        assert_eq!(w * v, p1(1.0, 2.0, 3.0));
        let (wc, vc) = s.coords(&p1(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(wc, vec![2.0, 4.0]);
        assert_eq!(vc, vec![1.0]);
    }

    #[test]
    fn projection_of_subgroup_points() {
        let s = Splitting::standard(2, 1).unwrap();
        let v = s.embed_v(&[1.5]).unwrap();
        assert_eq!(s.project(&v).unwrap(), (Point::zero(2), v));
        let w = s.embed_w(&[0.3, -1.0, 2.0, 0.7]).unwrap();
        assert_eq!(s.project(&w).unwrap(), (w, Point::zero(2)));
    }

    #[test]
    fn rejects_bad_frames() {
        // x_1 and y_1 are not isotropic
        let bad = Splitting::new(1, vec![vec![1.0, 0.0], vec![0.0, 1.0]], None);
        assert!(bad.is_err());
        let bad = Splitting::new(2, vec![vec![1.0, 0.0, 0.0, 1.0]], None);
        assert!(bad.is_err());
        let dup = Splitting::new(1, vec![vec![1.0, 0.0]], Some(vec![vec![1.0, 0.0]]));
        assert!(dup.is_err());
        assert!(Splitting::standard(1, 2).is_err());
        assert!(Splitting::standard(2, 0).is_err());
    }

    #[test]
    fn general_isotropic_frame() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // span{X_1 + X_2, Y_1 − Y_2} is isotropic in H^2
        let v = vec![vec![r, r, 0.0, 0.0], vec![0.0, 0.0, r, -r]];
        let s = Splitting::new(2, v, None).unwrap();
        assert!(!s.is_standard());
        let res = projection_identities_check(&s, 2000, 3);
        assert!(res.max() < 1e-10, "{res:?}");
        let rebuilt = s.spec().build().unwrap();
        assert_eq!(rebuilt, s);
    }

    #[test]
    fn cone_examples() {
        let s = Splitting::standard(1, 1).unwrap();
        let cone = Cone::new(&s, Point::zero(1), 0.5).unwrap();
        assert!(cone.contains(&Metric::Infinity, &p1(1.0, 0.1, 0.0)).unwrap());
        let axis = Cone::new(&s, Point::zero(1), 0.0).unwrap();
        assert!(axis.contains(&Metric::Infinity, &p1(-2.0, 0.0, 0.0)).unwrap());
        let wide = Cone::new(&s, Point::zero(1), 1e6).unwrap();
        assert!(!wide.contains(&Metric::Infinity, &p1(0.0, 0.1, 0.0)).unwrap());
        assert!(!wide.contains(&Metric::Koranyi, &p1(0.0, 0.0, 3.0)).unwrap());
        assert!(Cone::new(&s, Point::zero(1), -1.0).is_err());
    }

    #[test]
    fn reversed_cone_swaps_roles() {
        let s = Splitting::standard(1, 1).unwrap();
        let c = Cone::new(&s, Point::zero(1), 0.5).unwrap().with_base(Base::V);
        assert!(c.contains(&Metric::Infinity, &p1(0.0, 1.0, 0.0)).unwrap());
        assert!(!c.contains(&Metric::Infinity, &p1(1.0, 0.0, 0.0)).unwrap());
    }

    #[test]
    fn norm_splitting_on_subgroups() {
        let s = Splitting::standard(1, 1).unwrap();
        let ns = norm_splitting_constant(&s, &Metric::Infinity, 5000, 1).unwrap();
        assert!(ns.constant > 0.0 && ns.constant <= 1.0 + 1e-12);
        for p in [s.embed_v(&[2.0]).unwrap(), s.embed_w(&[1.0, -0.4]).unwrap()] {
            let (w, v) = s.project(&p).unwrap();
            let m = Metric::Infinity;
            assert_eq!(m.norm(&p), m.norm(&w) + m.norm(&v));
        }
    }
}
