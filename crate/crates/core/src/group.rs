//! Heisenberg group arithmetic in exponential coordinates.
//!
//! A point of H^n is `(x, y, t)` with `x, y ∈ R^n`. The product is
//!
//! ```text
//! (x, y, t)·(x', y', t') = (x + x', y + y', t + t' + ½⟨x, y'⟩ − ½⟨x', y⟩)
//! ```
//!
//! and `δ_λ(x, y, t) = (λx, λy, λ²t)`. The horizontal part `(x, y)` is stored
//! contiguously so that `z = (x, y) ∈ R^{2n}` can be borrowed as one slice.

use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest supported group index.
pub const MAX_N: usize = 8;

/// Homogeneous dimension `Q = 2n + 2` of H^n.
pub fn homogeneous_dim(n: usize) -> usize {
    2 * n + 2
}

/// Standard symplectic form `ω(z, z') = ⟨x, y'⟩ − ⟨x', y⟩` on `R^{2n}`.
#[inline]
pub fn symplectic(z: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), w.len());
    let n = z.len() / 2;
    let mut acc = 0.0;
    for i in 0..n {
        acc += z[i] * w[n + i] - w[i] * z[n + i];
    }
    acc
}

#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    n: usize,
    h: [f64; 2 * MAX_N],
    t: f64,
}

impl Point {
    pub fn new(x: &[f64], y: &[f64], t: f64) -> Result<Self> {
        let n = x.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        let mut h = [0.0; 2 * MAX_N];
        check_n(n)?;
        h[..n].copy_from_slice(x);
        h[n..2 * n].copy_from_slice(y);
        let p = Point { n, h, t };
        p.check_finite()?;
        Ok(p)
    }

    /// Builds a point from its horizontal vector `z = (x, y)` of length `2n`.
    pub fn from_horizontal(z: &[f64], t: f64) -> Result<Self> {
        if z.len() % 2 != 0 {
            return invalid(format!("horizontal vector has odd length {}", z.len()));
        }
        let n = z.len() / 2;
        check_n(n)?;
        let mut h = [0.0; 2 * MAX_N];
        h[..2 * n].copy_from_slice(z);
        let p = Point { n, h, t };
        p.check_finite()?;
        Ok(p)
    }

    /// Unchecked constructor for internal hot loops; `z.len() == 2n` is assumed.
    #[inline]
    pub(crate) fn raw(n: usize, z: &[f64], t: f64) -> Self {
        let mut h = [0.0; 2 * MAX_N];
        h[..2 * n].copy_from_slice(&z[..2 * n]);
        Point { n, h, t }
    }

    pub fn zero(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_N, "group index {n} out of range");
        Point {
            n,
            h: [0.0; 2 * MAX_N],
            t: 0.0,
        }
    }

    /// The central point `(0, 0, t)`.
    pub fn vertical(n: usize, t: f64) -> Self {
        let mut p = Point::zero(n);
        p.t = t;
        p
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn x(&self) -> &[f64] {
        &self.h[..self.n]
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.h[self.n..2 * self.n]
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Horizontal vector `(x, y)`.
    #[inline]
    pub fn horizontal(&self) -> &[f64] {
        &self.h[..2 * self.n]
    }

    #[inline]
    pub(crate) fn horizontal_mut(&mut self) -> &mut [f64] {
        &mut self.h[..2 * self.n]
    }

    #[inline]
    pub(crate) fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    /// Euclidean length of the horizontal part.
    pub fn horizontal_len(&self) -> f64 {
        self.horizontal().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.horizontal().iter().all(|v| v.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            invalid("point has non-finite coordinates")
        }
    }

    /// Group product `self · q`.
    pub fn multiply(&self, q: &Point) -> Result<Point> {
        if self.n != q.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.n,
            });
        }
        Ok(self.mul_unchecked(q))
    }

    #[inline]
    fn mul_unchecked(&self, q: &Point) -> Point {
        let n = self.n;
        let mut h = [0.0; 2 * MAX_N];
        for i in 0..2 * n {
            h[i] = self.h[i] + q.h[i];
        }
        let t = self.t + q.t + 0.5 * symplectic(self.horizontal(), q.horizontal());
        Point { n, h, t }
    }

    #[inline]
    pub fn inverse(&self) -> Point {
        let mut h = [0.0; 2 * MAX_N];
        for i in 0..2 * self.n {
            h[i] = -self.h[i];
        }
        Point {
            n: self.n,
            h,
            t: -self.t,
        }
    }

    /// Intrinsic dilation `δ_λ`.
    pub fn dilate(&self, lambda: f64) -> Result<Point> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid(format!("dilation factor must be positive, got {lambda}"));
        }
        Ok(self.dilate_unchecked(lambda))
    }

    #[inline]
    pub(crate) fn dilate_unchecked(&self, lambda: f64) -> Point {
        let mut h = [0.0; 2 * MAX_N];
        for i in 0..2 * self.n {
            h[i] = lambda * self.h[i];
        }
        Point {
            n: self.n,
            h,
            t: lambda * lambda * self.t,
        }
    }

    /// Conjugation `g · self · g^{-1}`.
    #[inline]
    pub fn conjugate_by(&self, g: &Point) -> Point {
        // the horizontal part is unchanged, t picks up ω(z_g, z)
        let mut out = *self;
        out.t = self.t + symplectic(g.horizontal(), self.horizontal());
        out
    }

    /// Maximum absolute coordinate difference.
    pub fn max_abs_diff(&self, q: &Point) -> f64 {
        assert_eq!(self.n, q.n, "dimension mismatch");
        self.horizontal()
            .iter()
            .zip(q.horizontal())
            .map(|(a, b)| (a - b).abs())
            .fold((self.t - q.t).abs(), f64::max)
    }

    /// Coordinates as `[x.., y.., t]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.horizontal().to_vec();
        v.push(self.t);
        v
    }

    pub fn from_slice(coords: &[f64]) -> Result<Point> {
        match coords.split_last() {
            Some((t, z)) => Point::from_horizontal(z, *t),
            None => invalid("empty coordinate list"),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_N {
        return invalid(format!("group index n must be in 1..={MAX_N}, got {n}"));
    }
    Ok(())
}

impl Mul for Point {
    type Output = Point;

    /// Panics when the group indices differ; use [`Point::multiply`] for a checked product.
    #[inline]
    fn mul(self, rhs: Point) -> Point {
        assert_eq!(self.n, rhs.n, "dimension mismatch in group product");
        self.mul_unchecked(&rhs)
    }
}

impl<'a> Mul<&'a Point> for &'a Point {
    type Output = Point;

    #[inline]
    fn mul(self, rhs: &'a Point) -> Point {
        assert_eq!(self.n, rhs.n, "dimension mismatch in group product");
        self.mul_unchecked(rhs)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Point")
            .field("x", &self.x())
            .field("y", &self.y())
            .field("t", &self.t)
            .finish()
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// One constant-control piece of a horizontal curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    /// Coefficients on `X_1..X_n, Y_1..Y_n`.
    pub h: Vec<f64>,
    pub duration: f64,
}

/// Piecewise-constant control of a horizontal curve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HorizontalControl {
    pub segments: Vec<ControlSegment>,
}

impl HorizontalControl {
    pub fn new(segments: Vec<ControlSegment>) -> Self {
        HorizontalControl { segments }
    }

    /// Unit-duration segments from a list of control vectors.
    pub fn unit_steps(controls: &[Vec<f64>]) -> Self {
        HorizontalControl {
            segments: controls
                .iter()
                .map(|h| ControlSegment {
                    h: h.clone(),
                    duration: 1.0,
                })
                .collect(),
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// L¹-in-time cost `∫|h|`.
    pub fn cost(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.duration * s.h.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum()
    }

    pub fn concat(&self, other: &HorizontalControl) -> HorizontalControl {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        HorizontalControl { segments }
    }

    fn validate(&self, n: usize) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            if s.h.len() != 2 * n {
                return invalid(format!(
                    "control segment {i} has {} entries, expected {}",
                    s.h.len(),
                    2 * n
                ));
            }
            if !(s.duration >= 0.0) || !s.duration.is_finite() {
                return invalid(format!("control segment {i} has invalid duration"));
            }
            if s.h.iter().any(|v| !v.is_finite()) {
                return invalid(format!("control segment {i} is not finite"));
            }
        }
        if !self.segments.is_empty() && !(self.total_duration() > 0.0) {
            return invalid("control durations must sum to a positive total");
        }
        Ok(())
    }
}

/// Endpoint of the horizontal curve starting at `p` and driven by `control`.
///
/// A constant control is a one-parameter subgroup, so each segment is a right
/// translation by `exp(s·h)` and the endpoint is exact.
pub fn flow_horizontal(p: &Point, control: &HorizontalControl) -> Result<Point> {
    control.validate(p.n())?;
    let n = p.n();
    let mut q = *p;
    let mut step = [0.0; 2 * MAX_N];
    for seg in &control.segments {
        for (dst, h) in step.iter_mut().zip(&seg.h) {
            *dst = seg.duration * h;
        }
        q = q * Point::raw(n, &step, 0.0);
    }
    Ok(q)
}

/// Axis-aligned coordinate box in `R^{2n+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordinateBox {
    /// Lebesgue volume of the box.
    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).max(0.0))
            .product()
    }

    /// Image of the box under `δ_λ`; the last coordinate is `t`.
    pub fn dilate(&self, lambda: f64) -> CoordinateBox {
        let last = self.lo.len() - 1;
        let scale = |i: usize, v: f64| if i == last { lambda * lambda * v } else { lambda * v };
        CoordinateBox {
            lo: self.lo.iter().enumerate().map(|(i, v)| scale(i, *v)).collect(),
            hi: self.hi.iter().enumerate().map(|(i, v)| scale(i, *v)).collect(),
        }
    }
}

/// Largest residuals of the group axioms over random samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupAxiomResiduals {
    pub samples: usize,
    /// `(p·q)·r` against `p·(q·r)`
    pub associativity: f64,
    /// `p·0`, `0·p` against `p`
    pub identity: f64,
    /// `p·p^{-1}`, `p^{-1}·p` against `0`
    pub inverse: f64,
    /// `δ_λ(p·q)` against `δ_λ(p)·δ_λ(q)`
    pub dilation_homomorphism: f64,
    /// `δ_λ(δ_μ p)` against `δ_{λμ} p`
    pub dilation_composition: f64,
}

impl GroupAxiomResiduals {
    pub fn max(&self) -> f64 {
        [
            self.associativity,
            self.identity,
            self.inverse,
            self.dilation_homomorphism,
            self.dilation_composition,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn merge(mut self, o: &GroupAxiomResiduals) -> Self {
        self.associativity = self.associativity.max(o.associativity);
        self.identity = self.identity.max(o.identity);
        self.inverse = self.inverse.max(o.inverse);
        self.dilation_homomorphism = self.dilation_homomorphism.max(o.dilation_homomorphism);
        self.dilation_composition = self.dilation_composition.max(o.dilation_composition);
        self
    }
}

/// Axiom residuals on points with coordinates uniform in `[−10, 10]` and
/// dilation factors in `[0.1, 3]`.
pub fn group_axioms_check(n: usize, samples: usize, seed: u64) -> Result<GroupAxiomResiduals> {
    use rand::Rng;
    use rayon::prelude::*;

    check_n(n)?;
    let parts: Vec<GroupAxiomResiduals> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::sample_rng(seed, crate::rng::streams::GROUP_AXIOMS, i);
            let mut pick = || {
                let mut z = [0.0; 2 * MAX_N];
                for v in z.iter_mut().take(2 * n) {
                    *v = rng.random_range(-10.0..10.0);
                }
                let t = rng.random_range(-10.0..10.0);
                Point::raw(n, &z, t)
            };
            let (p, q, r) = (pick(), pick(), pick());
            let lambda: f64 = rng.random_range(0.1..3.0);
            let mu: f64 = rng.random_range(0.1..3.0);
            let zero = Point::zero(n);
            let pinv = p.inverse();
            GroupAxiomResiduals {
                samples: 1,
                associativity: ((p * q) * r).max_abs_diff(&(p * (q * r))),
                identity: (p * zero).max_abs_diff(&p).max((zero * p).max_abs_diff(&p)),
                inverse: (p * pinv).max_abs_diff(&zero).max((pinv * p).max_abs_diff(&zero)),
                dilation_homomorphism: (p * q)
                    .dilate_unchecked(lambda)
                    .max_abs_diff(&(p.dilate_unchecked(lambda) * q.dilate_unchecked(lambda))),
                dilation_composition: p
                    .dilate_unchecked(mu)
                    .dilate_unchecked(lambda)
                    .max_abs_diff(&p.dilate_unchecked(lambda * mu)),
            }
        })
        .collect();
    let mut out = parts.iter().fold(GroupAxiomResiduals::default(), GroupAxiomResiduals::merge);
    out.samples = samples;
    Ok(out)
}
