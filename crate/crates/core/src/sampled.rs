//! Functions between complementary subgroups sampled on rectangular grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::{Point, MAX_N};
use crate::splitting::Splitting;

/// Largest number of grid axes (`2n − k + 1` at `n = MAX_N`, `k = 1`).
pub const MAX_AXES: usize = 2 * MAX_N;

/// Uniform axis with `count` nodes from `min` to `max` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let a = Axis { min, max, count };
        a.validate()?;
        Ok(a)
    }

    /// Axis of `count` nodes with spacing `step` centered at 0.
    pub fn centered(step: f64, count: usize) -> Result<Self> {
        let half = step * (count as f64 - 1.0) / 2.0;
        Axis::new(-half, half, count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || !(self.max > self.min) {
            return invalid(format!(
                "axis needs finite min < max, got [{}, {}]",
                self.min, self.max
            ));
        }
        if self.count < 2 {
            return invalid(format!("axis needs at least 2 nodes, got {}", self.count));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    /// Fractional node position of `c`, `None` when off the axis.
    #[inline]
    fn position(&self, c: f64) -> Option<f64> {
        let s = (c - self.min) / self.step();
        let last = (self.count - 1) as f64;
        if !(s >= -1e-9) || s > last + 1e-9 {
            return None;
        }
        Some(s.clamp(0.0, last))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_AXES {
            return invalid(format!("grid needs 1..={MAX_AXES} axes, got {}", axes.len()));
        }
        for a in &axes {
            a.validate()?;
        }
        let total = axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.count));
        match total {
            Some(t) if t <= 1 << 28 => Ok(Grid { axes }),
            _ => invalid("grid has too many nodes"),
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node multi-index, last axis fastest.
    #[inline]
    pub fn multi_index(&self, mut i: usize, out: &mut [usize]) {
        for d in (0..self.axes.len()).rev() {
            let c = self.axes[d].count;
            out[d] = i % c;
            i /= c;
        }
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut i = 0;
        for (d, a) in self.axes.iter().enumerate() {
            i = i * a.count + idx[d];
        }
        i
    }

    #[inline]
    pub fn coords_into(&self, i: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_AXES];
        self.multi_index(i, &mut idx);
        for (d, a) in self.axes.iter().enumerate() {
            out[d] = a.value(idx[d]);
        }
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords_into(i, &mut out);
        out
    }

    /// Index of the node nearest to `c`, `None` off the grid.
    pub fn nearest(&self, c: &[f64]) -> Option<usize> {
        if c.len() != self.dim() {
            return None;
        }
        let mut idx = [0usize; MAX_AXES];
        for (d, a) in self.axes.iter().enumerate() {
            idx[d] = a.position(c[d])?.round() as usize;
        }
        Some(self.flat_index(&idx[..self.dim()]))
    }

    /// Whether `c` lies on the grid's bounding box.
    pub fn contains(&self, c: &[f64]) -> bool {
        c.len() == self.dim() && self.axes.iter().zip(c).all(|(a, v)| a.position(*v).is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Multilinear,
}

/// Direction of a sampled map between the two factors of a splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `φ: A ⊆ W → V`, graph `w·φ(w)`.
    #[default]
    WToV,
    /// `φ: A ⊆ V → W`, graph `v·φ(v)`.
    VToW,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    splitting: Splitting,
    orientation: Orientation,
    grid: Grid,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
    interpolation: Interpolation,
}

impl SampledFunction {
    pub fn new(
        splitting: Splitting,
        orientation: Orientation,
        grid: Grid,
        values: Vec<f64>,
        mask: Option<Vec<bool>>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        let (ddim, vdim) = dims(&splitting, orientation);
        if grid.dim() != ddim {
            return invalid(format!("grid has {} axes, domain needs {ddim}", grid.dim()));
        }
        if values.len() != grid.len() * vdim {
            return invalid(format!(
                "expected {} values ({} nodes × {vdim}), got {}",
                grid.len() * vdim,
                grid.len(),
                values.len()
            ));
        }
        if let Some(m) = &mask {
            if m.len() != grid.len() {
                return invalid(format!("mask has {} entries for {} nodes", m.len(), grid.len()));
            }
        }
        for i in 0..grid.len() {
            let active = mask.as_ref().map_or(true, |m| m[i]);
            if active && values[i * vdim..(i + 1) * vdim].iter().any(|v| !v.is_finite()) {
                return invalid(format!("non-finite value at active node {i}"));
            }
        }
        Ok(SampledFunction {
            splitting,
            orientation,
            grid,
            values,
            mask,
            interpolation,
        })
    }

    /// Samples `f` at every node; `f` receives domain coordinates.
    pub fn from_fn<F>(splitting: Splitting, orientation: Orientation, grid: Grid, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        let (_, vdim) = dims(&splitting, orientation);
        let rows: Vec<Vec<f64>> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.coords(i)))
            .collect();
        let mut values = Vec::with_capacity(grid.len() * vdim);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != vdim {
                return invalid(format!("function returned {} values at node {i}, expected {vdim}", r.len()));
            }
            values.extend(r);
        }
        SampledFunction::new(splitting, orientation, grid, values, None, Interpolation::default())
    }

    pub fn with_mask(mut self, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != self.grid.len() {
                return invalid(format!("mask has {} entries for {} nodes", m.len(), self.grid.len()));
            }
            let vdim = self.value_dim();
            if let Some(i) = (0..m.len())
                .find(|&i| m[i] && self.values[i * vdim..(i + 1) * vdim].iter().any(|v| !v.is_finite()))
            {
                return invalid(format!("non-finite value at active node {i}"));
            }
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    /// Same grid and splitting, new node values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        SampledFunction::new(
            self.splitting.clone(),
            self.orientation,
            self.grid.clone(),
            values,
            self.mask.clone(),
            self.interpolation,
        )
    }

    pub fn splitting(&self) -> &Splitting {
        &self.splitting
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain_dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn value_dim(&self) -> usize {
        dims(&self.splitting, self.orientation).1
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn is_active(&self, i: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[i])
    }

    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.is_active(i)).collect()
    }

    pub fn active_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.node_count(), |m| m.iter().filter(|&&b| b).count())
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        let d = self.value_dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        self.grid.coords(i)
    }

    /// Interpolated value at domain coordinates `c`; `None` outside the
    /// active domain.
    pub fn eval_into(&self, c: &[f64], out: &mut [f64]) -> bool {
        if c.len() != self.domain_dim() {
            return false;
        }
        match self.interpolation {
            Interpolation::Nearest => match self.grid.nearest(c) {
                Some(i) if self.is_active(i) => {
                    out.copy_from_slice(self.value(i));
                    true
                }
                _ => false,
            },
            Interpolation::Multilinear => self.multilinear(c, out),
        }
    }

    pub fn eval(&self, c: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.value_dim()];
        if self.eval_into(c, &mut out) {
            Ok(out)
        } else {
            Err(Error::OutsideDomain)
        }
    }

    fn multilinear(&self, c: &[f64], out: &mut [f64]) -> bool {
        let dim = self.domain_dim();
        let mut base = [0usize; MAX_AXES];
        let mut frac = [0.0f64; MAX_AXES];
        for (d, a) in self.grid.axes.iter().enumerate() {
            let Some(s) = a.position(c[d]) else {
                return false;
            };
            let i0 = (s.floor() as usize).min(a.count - 2);
            base[d] = i0;
            frac[d] = s - i0 as f64;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut idx = [0usize; MAX_AXES];
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            for d in 0..dim {
                let hi = (corner >> d) & 1 == 1;
                weight *= if hi { frac[d] } else { 1.0 - frac[d] };
                idx[d] = base[d] + hi as usize;
            }
            if weight == 0.0 {
                continue;
            }
            let i = self.grid.flat_index(&idx[..dim]);
            if !self.is_active(i) {
                return false;
            }
            for (o, v) in out.iter_mut().zip(self.value(i)) {
                *o += weight * v;
            }
        }
        true
    }

    /// Embedding of domain coordinates into H^n.
    #[inline]
    pub fn domain_point(&self, c: &[f64]) -> Point {
        match self.orientation {
            Orientation::WToV => self.splitting.embed_w_raw(c),
            Orientation::VToW => self.splitting.embed_v_raw(c),
        }
    }

    /// Embedding of value coordinates into H^n.
    #[inline]
    pub fn value_point(&self, v: &[f64]) -> Point {
        match self.orientation {
            Orientation::WToV => self.splitting.embed_v_raw(v),
            Orientation::VToW => self.splitting.embed_w_raw(v),
        }
    }

    /// Graph point `c · φ(c)` for explicit domain and value coordinates.
    #[inline]
    pub fn graph_point_of(&self, c: &[f64], v: &[f64]) -> Point {
        self.domain_point(c) * self.value_point(v)
    }

    /// Graph point over node `i`.
    pub fn node_graph_point(&self, i: usize) -> Point {
        let mut c = [0.0; MAX_AXES];
        let d = self.domain_dim();
        self.grid.coords_into(i, &mut c[..d]);
        self.graph_point_of(&c[..d], self.value(i))
    }

    /// Graph points of all nodes (inactive nodes included, by index).
    pub fn graph_points(&self) -> Vec<Point> {
        (0..self.node_count())
            .into_par_iter()
            .map(|i| self.node_graph_point(i))
            .collect()
    }

    /// Graph point over arbitrary domain coordinates.
    pub fn graph_point_at(&self, c: &[f64]) -> Result<Point> {
        let v = self.eval(c)?;
        Ok(self.graph_point_of(c, &v))
    }

    /// Smallest grid spacing.
    pub fn min_step(&self) -> f64 {
        self.grid
            .axes
            .iter()
            .map(|a| a.step())
            .fold(f64::INFINITY, f64::min)
    }
}

fn dims(s: &Splitting, o: Orientation) -> (usize, usize) {
    match o {
        Orientation::WToV => (s.w_dim(), s.k()),
        Orientation::VToW => (s.k(), s.w_dim()),
    }
}
