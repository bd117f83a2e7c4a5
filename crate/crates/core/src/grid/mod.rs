//! Sampling grids on positions and orientations, lifted scalar fields and
//! interpolation.
//!
//! Layout: voxel `(i, j, k)` (x, y, orientation) is stored at linear index
//! `i + nx * (j + ny * k)`, i.e. x fastest, orientation slowest. Spatial
//! spacing is one pixel; image rows map to +y. Orientation `k` is the angle
//! `k * 2π / nθ` measured from +x towards +y and wraps around.

pub mod io;

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Regular grid over `ℝ² × S¹` in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridM2 {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    /// Continuous coordinates of voxel `(0, 0, ·)`.
    pub origin: (f64, f64),
}

impl GridM2 {
    pub fn new(nx: usize, ny: usize, ntheta: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || ntheta == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{ntheta}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            ntheta,
            origin: (0.0, 0.0),
        })
    }

    pub fn with_origin(mut self, x0: f64, y0: f64) -> Self {
        self.origin = (x0, y0);
        self
    }

    /// Angular spacing `2π / nθ`.
    #[inline]
    pub fn htheta(&self) -> f64 {
        TWO_PI / self.ntheta as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.ntheta
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let rest = idx / self.nx;
        (i, rest % self.ny, rest / self.ny)
    }

    #[inline]
    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.htheta()
    }

    /// Voxel index shifted by an integer offset. Orientation wraps around;
    /// spatial offsets leaving the grid yield `None`.
    #[inline]
    pub fn offset(&self, idx: usize, d: [i32; 3]) -> Option<usize> {
        let (i, j, k) = self.coords(idx);
        let ii = i as i64 + d[0] as i64;
        let jj = j as i64 + d[1] as i64;
        if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
            return None;
        }
        let kk = (k as i64 + d[2] as i64).rem_euclid(self.ntheta as i64);
        Some(self.index(ii as usize, jj as usize, kk as usize))
    }

    /// Continuous point at the centre of a voxel.
    pub fn point(&self, idx: usize) -> PointM2 {
        let (i, j, k) = self.coords(idx);
        PointM2::new(
            i as f64 + self.origin.0,
            j as f64 + self.origin.1,
            self.theta(k),
        )
    }

    /// Fractional index coordinates of a continuous point. The orientation
    /// coordinate is reduced to `[0, nθ)`.
    pub fn to_index_coords(&self, p: &PointM2) -> (f64, f64, f64) {
        let u = p.x - self.origin.0;
        let v = p.y - self.origin.1;
        let w = canonical_angle(p.theta) / self.htheta();
        (u, v, w)
    }

    /// Whether the point is inside the closed spatial extent.
    pub fn contains(&self, p: &PointM2) -> bool {
        let (u, v, _) = self.to_index_coords(p);
        const SLACK: f64 = 1e-9;
        u >= -SLACK
            && v >= -SLACK
            && u <= (self.nx - 1) as f64 + SLACK
            && v <= (self.ny - 1) as f64 + SLACK
    }

    /// Whether the voxel lies in the tracking domain Ω (a one-voxel spatial
    /// margin is excluded).
    pub fn in_tracking_domain(&self, idx: usize) -> bool {
        let (i, j, _) = self.coords(idx);
        i >= 1 && j >= 1 && i + 1 < self.nx && j + 1 < self.ny
    }

    /// Nearest voxel to a continuous point (spatial coordinates rounded,
    /// orientation rounded modulo nθ).
    pub fn nearest_voxel(&self, p: &PointM2) -> Result<usize> {
        if !self.contains(p) {
            return Err(self.domain_error(p));
        }
        let (u, v, w) = self.to_index_coords(p);
        let i = (u.round().max(0.0) as usize).min(self.nx - 1);
        let j = (v.round().max(0.0) as usize).min(self.ny - 1);
        let k = (w.round() as usize) % self.ntheta;
        Ok(self.index(i, j, k))
    }

    /// Trilinear interpolation weights at a continuous point (periodic in θ).
    pub fn trilinear(&self, p: &PointM2) -> Result<Trilinear> {
        if !self.contains(p) {
            return Err(self.domain_error(p));
        }
        let (u, v, w) = self.to_index_coords(p);
        let (i0, fx) = split_clamped(u, self.nx);
        let (j0, fy) = split_clamped(v, self.ny);
        let k0f = w.floor();
        let fz = w - k0f;
        let k0 = (k0f as i64).rem_euclid(self.ntheta as i64) as usize;
        let k1 = (k0 + 1) % self.ntheta;
        let i1 = (i0 + 1).min(self.nx - 1);
        let j1 = (j0 + 1).min(self.ny - 1);
        let mut idx = [0usize; 8];
        let mut wts = [0f64; 8];
        let mut n = 0;
        for (kk, wz) in [(k0, 1.0 - fz), (k1, fz)] {
            for (jj, wy) in [(j0, 1.0 - fy), (j1, fy)] {
                for (ii, wx) in [(i0, 1.0 - fx), (i1, fx)] {
                    idx[n] = self.index(ii, jj, kk);
                    wts[n] = wx * wy * wz;
                    n += 1;
                }
            }
        }
        Ok(Trilinear { idx, wts })
    }

    fn domain_error(&self, p: &PointM2) -> Error {
        Error::Domain {
            x: p.x,
            y: p.y,
            nx: self.nx,
            ny: self.ny,
        }
    }
}

fn split_clamped(u: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let u = u.clamp(0.0, (n - 1) as f64);
    let i0 = (u.floor() as usize).min(n - 2);
    (i0, u - i0 as f64)
}

/// Eight corner indices and weights of a trilinear stencil.
#[derive(Debug, Clone, Copy)]
pub struct Trilinear {
    pub idx: [usize; 8],
    pub wts: [f64; 8],
}

impl Trilinear {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.wts)
            .map(|(&i, &w)| if w == 0.0 { 0.0 } else { w * values[i] })
            .sum()
    }

    /// Interpolates any per-voxel quantity that supports linear combination.
    pub fn apply_with<T, F>(&self, zero: T, mut get: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
        F: FnMut(usize) -> T,
    {
        let mut acc = zero;
        for (&i, &w) in self.idx.iter().zip(&self.wts) {
            if w != 0.0 {
                acc = acc + get(i) * w;
            }
        }
        acc
    }
}

/// Reduces an angle to `[0, 2π)`.
#[inline]
pub fn canonical_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if t >= TWO_PI {
        0.0
    } else {
        t
    }
}

/// Signed angular difference `a - b` reduced to `(-π, π]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    if d > PI {
        d - TWO_PI
    } else {
        d
    }
}

/// A point `(x, y, θ)` of the lifted space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointM2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PointM2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: canonical_angle(theta),
        }
    }

    pub fn canonical(self) -> Self {
        Self::new(self.x, self.y, self.theta)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }
}

/// Tangent vector `(ẋ, ẏ, θ̇)` in fixed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentM2 {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl TangentM2 {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.dtheta)
    }
}

impl From<Vector3<f64>> for TangentM2 {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Real-valued 2D image, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x + self.width * y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[x + self.width * y] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Scalar field sampled on a [`GridM2`].
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedField {
    pub grid: GridM2,
    pub values: Vec<f64>,
}

impl LiftedField {
    pub fn constant(grid: GridM2, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: GridM2, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(p.x, p.y, p.theta)
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_values(grid: GridM2, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} voxels",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn interpolate(&self, p: &PointM2) -> Result<f64> {
        interpolate(self, p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Minimum over orientations at each pixel.
    pub fn min_projection(&self) -> Field2 {
        let g = self.grid;
        Field2::from_fn(g.nx, g.ny, |x, y| {
            (0..g.ntheta)
                .map(|k| self.at(x, y, k))
                .fold(f64::INFINITY, f64::min)
        })
    }

    /// Maximum over orientations at each pixel.
    pub fn max_projection(&self) -> Field2 {
        let g = self.grid;
        Field2::from_fn(g.nx, g.ny, |x, y| {
            (0..g.ntheta)
                .map(|k| self.at(x, y, k))
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }
}

/// Trilinear interpolation, periodic in θ. Points outside the closed spatial
/// extent are rejected.
pub fn interpolate(field: &LiftedField, p: &PointM2) -> Result<f64> {
    Ok(field.grid.trilinear(p)?.apply(&field.values))
}

/// Central-difference gradient `(∂x, ∂y, ∂θ)` at a voxel, as a covector in
/// fixed coordinates (θ derivative per radian). Spatial boundaries use
/// one-sided differences; θ always wraps.
pub fn gradient_fixed(field: &LiftedField, idx: usize) -> Vector3<f64> {
    let g = &field.grid;
    let (i, j, k) = g.coords(idx);
    let v = &field.values;
    let dx = axis_diff(i, g.nx, |ii| v[g.index(ii, j, k)]);
    let dy = axis_diff(j, g.ny, |jj| v[g.index(i, jj, k)]);
    let kp = (k + 1) % g.ntheta;
    let km = (k + g.ntheta - 1) % g.ntheta;
    let dt = if g.ntheta > 1 {
        (v[g.index(i, j, kp)] - v[g.index(i, j, km)]) / (2.0 * g.htheta())
    } else {
        0.0
    };
    Vector3::new(dx, dy, dt)
}

#[inline]
pub(crate) fn axis_diff(i: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        f(1) - f(0)
    } else if i + 1 == n {
        f(n - 1) - f(n - 2)
    } else {
        0.5 * (f(i + 1) - f(i - 1))
    }
}
