//! Frames, Gaussian derivatives and gauge-frame calculus on M2.
//!
//! Everything here works in fixed coordinates `(x, y, θ)` with pixel units
//! for position and radians for orientation. Frames are stored as 3×3
//! matrices whose *columns* are the vector fields `Aᵢ` and whose dual
//! co-frame has the covectors `ωⁱ` as *rows*.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::Geodesic;
use crate::grid::{axis_diff, GridM2, LiftedField, PointM2};

/// Antisymmetric array `c[i][j][k] = c̃ᵢⱼᵏ` with `[Aᵢ, Aⱼ] = Σₖ c̃ᵢⱼᵏ Aₖ`.
pub type Structure = [[[f64; 3]; 3]; 3];

/// The left-invariant frame at orientation θ (columns `A₁, A₂, A₃`).
pub fn left_invariant_frame(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Structure constants of SE(2) in the left-invariant frame:
/// `[A₃, A₁] = A₂`, `[A₃, A₂] = −A₁`, `[A₁, A₂] = 0`.
pub fn se2_structure_constants() -> Structure {
    let mut c = [[[0.0; 3]; 3]; 3];
    c[2][0][1] = 1.0;
    c[0][2][1] = -1.0;
    c[2][1][0] = -1.0;
    c[1][2][0] = 1.0;
    c
}

// ---------------------------------------------------------------------------
// Gaussian derivatives

fn gaussian_kernel(sigma: f64, step: f64) -> Vec<f64> {
    let s = sigma / step;
    let r = (4.0 * s).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i as f64).powi(2) / (2.0 * s * s)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index into `[0, n)` (`… c b a | a b c …`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_axis(grid: &GridM2, values: &[f64], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = grid.coords(idx);
            kernel
                .iter()
                .enumerate()
                .map(|(m, w)| {
                    let d = m as i64 - r;
                    let src = match axis {
                        0 => grid.index(reflect(i as i64 + d, grid.nx), j, k),
                        1 => grid.index(i, reflect(j as i64 + d, grid.ny), k),
                        _ => grid.index(
                            i,
                            j,
                            (k as i64 + d).rem_euclid(grid.ntheta as i64) as usize,
                        ),
                    };
                    w * values[src]
                })
                .sum()
        })
        .collect()
}

/// Separable Gaussian smoothing: spatial scale `sigma_s` (pixels) on x and y
/// with mirrored boundaries, angular scale `sigma_a` (radians) periodic in θ.
/// A zero scale leaves that group of axes untouched.
pub fn gaussian_smooth(u: &LiftedField, sigma_s: f64, sigma_a: f64) -> Result<LiftedField> {
    if !(sigma_s >= 0.0 && sigma_a >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Gaussian scales must be non-negative, got ({sigma_s}, {sigma_a})"
        )));
    }
    let g = u.grid;
    let mut v = u.values.clone();
    if sigma_s > 0.0 {
        let k = gaussian_kernel(sigma_s, 1.0);
        v = convolve_axis(&g, &v, 0, &k);
        v = convolve_axis(&g, &v, 1, &k);
    }
    if sigma_a > 0.0 {
        let k = gaussian_kernel(sigma_a, g.htheta());
        v = convolve_axis(&g, &v, 2, &k);
    }
    LiftedField::from_values(g, v)
}

fn diff_axis(grid: &GridM2, values: &[f64], axis: usize, order: u8) -> Vec<f64> {
    let ht = grid.htheta();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = grid.coords(idx);
            match axis {
                0 | 1 => {
                    let (pos, n) = if axis == 0 { (i, grid.nx) } else { (j, grid.ny) };
                    let at = |m: usize| {
                        if axis == 0 {
                            values[grid.index(m, j, k)]
                        } else {
                            values[grid.index(i, m, k)]
                        }
                    };
                    if order == 1 {
                        axis_diff(pos, n, at)
                    } else if n < 3 {
                        0.0
                    } else {
                        let c = pos.clamp(1, n - 2);
                        at(c + 1) - 2.0 * at(c) + at(c - 1)
                    }
                }
                _ => {
                    let n = grid.ntheta;
                    let at = |m: usize| values[grid.index(i, j, m)];
                    let (kp, km) = ((k + 1) % n, (k + n - 1) % n);
                    if order == 1 {
                        (at(kp) - at(km)) / (2.0 * ht)
                    } else {
                        (at(kp) - 2.0 * at(k) + at(km)) / (ht * ht)
                    }
                }
            }
        })
        .collect()
}

/// Gaussian-regularized partial derivative `∂ₓᵃ ∂ᵧᵇ ∂θᶜ U` with
/// `order = [a, b, c]`, `a + b + c ≤ 2`: smoothing followed by central
/// differences (θ derivatives per radian).
pub fn gaussian_derivative(
    u: &LiftedField,
    order: [u8; 3],
    sigma_s: f64,
    sigma_a: f64,
) -> Result<LiftedField> {
    if order.iter().map(|&o| o as u32).sum::<u32>() > 2 {
        return Err(Error::InvalidParameter(format!(
            "derivative order {order:?} exceeds 2"
        )));
    }
    let smoothed = gaussian_smooth(u, sigma_s, sigma_a)?;
    Ok(differentiate(&smoothed, order))
}

fn differentiate(u: &LiftedField, order: [u8; 3]) -> LiftedField {
    let g = u.grid;
    let mut v = u.values.clone();
    for (axis, &o) in order.iter().enumerate() {
        if o > 0 {
            v = diff_axis(&g, &v, axis, o);
        }
    }
    LiftedField { grid: g, values: v }
}

/// First and second fixed-coordinate derivatives of a smoothed score.
pub struct Derivatives {
    pub ux: LiftedField,
    pub uy: LiftedField,
    pub ut: LiftedField,
    pub uxx: LiftedField,
    pub uxy: LiftedField,
    pub uyy: LiftedField,
    pub uxt: LiftedField,
    pub uyt: LiftedField,
    pub utt: LiftedField,
}

impl Derivatives {
    pub fn compute(u: &LiftedField, sigma_s: f64, sigma_a: f64) -> Result<Self> {
        let s = gaussian_smooth(u, sigma_s, sigma_a)?;
        Ok(Self {
            ux: differentiate(&s, [1, 0, 0]),
            uy: differentiate(&s, [0, 1, 0]),
            ut: differentiate(&s, [0, 0, 1]),
            uxx: differentiate(&s, [2, 0, 0]),
            uxy: differentiate(&s, [1, 1, 0]),
            uyy: differentiate(&s, [0, 2, 0]),
            uxt: differentiate(&s, [1, 0, 1]),
            uyt: differentiate(&s, [0, 1, 1]),
            utt: differentiate(&s, [0, 0, 2]),
        })
    }
}

// ---------------------------------------------------------------------------
// Hessian

/// Per-voxel (non-symmetric) Hessian matrix of a score in fixed coordinates,
/// with the torsion corrections `U_xθ + U_y` and `U_yθ − U_x` in the last
/// column.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub grid: GridM2,
    pub xi: f64,
    pub matrices: Vec<Matrix3<f64>>,
}

impl HessianField {
    /// `‖M_ξ Hᵀ ṗ‖²` with `M_ξ = diag(ξ⁻¹, ξ⁻¹, 1)`.
    pub fn dual_norm_sq(&self, idx: usize, pdot: &Vector3<f64>) -> f64 {
        (self.m_xi() * self.matrices[idx].transpose() * pdot).norm_squared()
    }

    fn m_xi(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0 / self.xi, 1.0 / self.xi, 1.0))
    }

    /// Symmetric `N = H M_ξ² Hᵀ`, so that `ṗᵀ N ṗ` is the dual norm squared.
    pub fn normal_matrix(&self, idx: usize) -> Matrix3<f64> {
        let b = self.m_xi() * self.matrices[idx].transpose();
        b.transpose() * b
    }

    /// Maximum of the dual norm squared over Euclidean-unit `ṗ`.
    pub fn max_dual_norm_sq(&self, idx: usize) -> f64 {
        self.normal_matrix(idx)
            .symmetric_eigenvalues()
            .max()
            .max(0.0)
    }

    pub fn max_field(&self) -> LiftedField {
        let values = (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.max_dual_norm_sq(i))
            .collect();
        LiftedField {
            grid: self.grid,
            values,
        }
    }
}

pub fn hessian_field(u: &LiftedField, xi: f64, sigma_s: f64, sigma_a: f64) -> Result<HessianField> {
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!("ξ must be positive, got {xi}")));
    }
    let d = Derivatives::compute(u, sigma_s, sigma_a)?;
    let matrices = (0..u.grid.len())
        .into_par_iter()
        .map(|i| {
            Matrix3::new(
                d.uxx.values[i],
                d.uxy.values[i],
                d.uxt.values[i] + d.uy.values[i],
                d.uxy.values[i],
                d.uyy.values[i],
                d.uyt.values[i] - d.ux.values[i],
                d.uxt.values[i],
                d.uyt.values[i],
                d.utt.values[i],
            )
        })
        .collect();
    Ok(HessianField {
        grid: u.grid,
        xi,
        matrices,
    })
}

// ---------------------------------------------------------------------------
// Frames and structure functions

#[derive(Debug, Clone)]
pub struct FrameM2 {
    pub grid: GridM2,
    /// Columns are `A₁, A₂, A₃`.
    pub vectors: Vec<Matrix3<f64>>,
    /// Rows are `ω¹, ω², ω³`.
    pub covectors: Vec<Matrix3<f64>>,
}

impl FrameM2 {
    pub fn new(grid: GridM2, vectors: Vec<Matrix3<f64>>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frames for {} voxels",
                vectors.len(),
                grid.len()
            )));
        }
        let covectors = vectors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                a.try_inverse()
                    .ok_or_else(|| Error::Numerical(format!("singular frame at voxel {i}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            grid,
            vectors,
            covectors,
        })
    }

    pub fn left_invariant(grid: GridM2) -> Self {
        let vectors: Vec<_> = (0..grid.len())
            .map(|i| left_invariant_frame(grid.theta(grid.coords(i).2)))
            .collect();
        let covectors = vectors.iter().map(|a| a.transpose()).collect();
        Self {
            grid,
            vectors,
            covectors,
        }
    }

    /// `max |⟨ωⁱ, Aⱼ⟩ − δⁱⱼ|` over all voxels.
    pub fn duality_defect(&self) -> f64 {
        self.vectors
            .iter()
            .zip(&self.covectors)
            .map(|(a, w)| (w * a - Matrix3::identity()).abs().max())
            .fold(0.0, f64::max)
    }
}

/// Jacobian `J[(m, a)] = ∂ₐ vᵐ` of a vector-valued voxel field by central
/// differences (one-sided at spatial boundaries, periodic in θ).
pub(crate) fn jacobian(grid: &GridM2, idx: usize, get: impl Fn(usize) -> Vector3<f64>) -> Matrix3<f64> {
    let (i, j, k) = grid.coords(idx);
    let n = grid.ntheta;
    let dx = axis_diff_vec(i, grid.nx, |m| get(grid.index(m, j, k)));
    let dy = axis_diff_vec(j, grid.ny, |m| get(grid.index(i, m, k)));
    let dt = (get(grid.index(i, j, (k + 1) % n)) - get(grid.index(i, j, (k + n - 1) % n)))
        / (2.0 * grid.htheta());
    Matrix3::from_columns(&[dx, dy, dt])
}

fn axis_diff_vec(i: usize, n: usize, f: impl Fn(usize) -> Vector3<f64>) -> Vector3<f64> {
    if n < 2 {
        Vector3::zeros()
    } else if i == 0 {
        f(1) - f(0)
    } else if i + 1 == n {
        f(n - 1) - f(n - 2)
    } else {
        (f(i + 1) - f(i - 1)) * 0.5
    }
}

#[derive(Debug, Clone)]
pub struct StructureFunctions {
    pub grid: GridM2,
    pub values: Vec<Structure>,
}

fn antisymmetrize(upper: impl Fn(usize, usize) -> Vector3<f64>) -> Structure {
    let mut c = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let v = upper(i, j);
            for k in 0..3 {
                c[i][j][k] = v[k];
                c[j][i][k] = -v[k];
            }
        }
    }
    c
}

/// `c̃ᵢⱼᵏ = ⟨ωᵏ, [Aᵢ, Aⱼ]⟩` with brackets from finite differences of the
/// frame component fields.
pub fn structure_functions(frame: &FrameM2) -> StructureFunctions {
    let g = frame.grid;
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let jac: [Matrix3<f64>; 3] = std::array::from_fn(|col| {
                jacobian(&g, idx, |n| frame.vectors[n].column(col).into_owned())
            });
            let a = &frame.vectors[idx];
            let w = &frame.covectors[idx];
            antisymmetrize(|i, j| {
                let bracket = jac[j] * a.column(i) - jac[i] * a.column(j);
                w * bracket
            })
        })
        .collect();
    StructureFunctions { grid: g, values }
}

/// Independent route through the co-frame: `c̃ᵢⱼᵏ = −dωᵏ(Aᵢ, Aⱼ)`.
pub fn structure_functions_from_coframe(frame: &FrameM2) -> StructureFunctions {
    let g = frame.grid;
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            // K[k][(b, a)] = ∂ₐ ωᵏ_b
            let dw: [Matrix3<f64>; 3] = std::array::from_fn(|row| {
                let k = jacobian(&g, idx, |n| frame.covectors[n].row(row).transpose());
                k.transpose() - k
            });
            let a = &frame.vectors[idx];
            antisymmetrize(|i, j| {
                Vector3::from_fn(|k, _| -(a.column(i).transpose() * dw[k] * a.column(j))[0])
            })
        })
        .collect();
    StructureFunctions { grid: g, values }
}

// ---------------------------------------------------------------------------
// Gauge geometry along curves

/// Frame data needed along a curve: the (gauge) frame, its eigenvalues, the
/// structure functions and the derivatives `Aᵢ(αⱼ⁻¹)`.
#[derive(Debug, Clone, Copy)]
pub struct GaugeLocal {
    pub vectors: Matrix3<f64>,
    pub covectors: Matrix3<f64>,
    pub alpha: Vector3<f64>,
    pub structure: Structure,
    /// `(i, j) ↦ Aᵢ(αⱼ⁻¹)`.
    pub d_inv_alpha: Matrix3<f64>,
}

impl GaugeLocal {
    /// Gauge components `λ̃ᵢ = ⟨λ, Aᵢ⟩` of a fixed-coordinate covector.
    pub fn covector_components(&self, lambda: &Vector3<f64>) -> Vector3<f64> {
        self.vectors.transpose() * lambda
    }

    /// Gauge components `ωⁱ(v)` of a fixed-coordinate vector.
    pub fn vector_components(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.covectors * v
    }
}

pub trait GaugeGeometry: Sync {
    fn local(&self, p: &PointM2) -> Result<GaugeLocal>;

    /// Whether `p` lies where the geometry is defined.
    fn contains(&self, _p: &PointM2) -> bool {
        true
    }
}

/// Left-invariant frame with constant eigenvalues (the uniform model with
/// constant cost).
#[derive(Debug, Clone, Copy)]
pub struct UniformGauge {
    pub alpha: Vector3<f64>,
}

impl UniformGauge {
    pub fn new(alpha: Vector3<f64>) -> Self {
        Self { alpha }
    }
}

impl GaugeGeometry for UniformGauge {
    fn local(&self, p: &PointM2) -> Result<GaugeLocal> {
        let a = left_invariant_frame(p.theta);
        Ok(GaugeLocal {
            vectors: a,
            covectors: a.transpose(),
            alpha: self.alpha,
            structure: se2_structure_constants(),
            d_inv_alpha: Matrix3::zeros(),
        })
    }
}

/// Output of [`straight_curve`].
#[derive(Debug, Clone)]
pub struct StraightCurve {
    pub curve: Geodesic,
    /// The integration left the domain before `t_end`.
    pub truncated: bool,
    /// `max |ωⁱ(γ̇) − cⁱ|` over the samples (velocity from the vector field).
    pub component_defect: f64,
}

fn frame_velocity(gauge: &dyn GaugeGeometry, q: &Vector3<f64>, c: &Vector3<f64>) -> Result<Vector3<f64>> {
    let p = PointM2 {
        x: q.x,
        y: q.y,
        theta: q.z,
    };
    Ok(gauge.local(&p)?.vectors * c)
}

/// Exponential ("straight") curve `γ̇ = Σ cⁱ Aᵢ|_γ` by RK4.
pub fn straight_curve(
    p0: PointM2,
    c: Vector3<f64>,
    gauge: &dyn GaugeGeometry,
    t_end: f64,
    dt: f64,
) -> Result<StraightCurve> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and T ≥ 0, got dt = {dt}, T = {t_end}"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let mut q = p0.as_vector();
    let mut ts = vec![0.0];
    let mut pts = vec![p0];
    let mut truncated = false;
    let mut defect: f64 = 0.0;
    let f = |q: &Vector3<f64>| frame_velocity(gauge, q, &c);
    for n in 0..steps {
        let k1 = f(&q);
        let step = k1.and_then(|k1| {
            let k2 = f(&(q + k1 * (dt / 2.0)))?;
            let k3 = f(&(q + k2 * (dt / 2.0)))?;
            let k4 = f(&(q + k3 * dt))?;
            Ok((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        });
        let next = match step {
            Ok(s) => q + s,
            Err(_) => {
                truncated = true;
                break;
            }
        };
        let p = PointM2 {
            x: next.x,
            y: next.y,
            theta: next.z,
        };
        if !gauge.contains(&p) {
            truncated = true;
            break;
        }
        // recovered components of the velocity from the frame at the sample
        let local = gauge.local(&p)?;
        let v = local.vectors * c;
        defect = defect.max((local.vector_components(&v) - c).abs().max());
        q = next;
        ts.push((n + 1) as f64 * dt);
        pts.push(p);
    }
    let len = ts.last().copied().unwrap_or(0.0);
    let curve = Geodesic {
        t: ts.iter().map(|t| if len > 0.0 { t / len } else { 0.0 }).collect(),
        points: pts,
        momentum: None,
        length: len,
    };
    Ok(StraightCurve {
        curve,
        truncated,
        component_defect: defect,
    })
}

/// Which form of the momentum equation to evaluate or integrate.
///
/// `Literal` is `λ̃̇ᵢ = Σⱼₖ c̃ⱼᵢᵏ λ̃ₖ λ̃ʲ`; it is exact when the gauge
/// eigenvalues `αⱼ` are constant. `WithEigenvalueDrift` adds the term
/// `−½ Σⱼ Aᵢ(αⱼ⁻¹) λ̃ⱼ²` that arises from differentiating the Hamiltonian
/// `½ Σ αⱼ⁻¹ λ̃ⱼ²` when the eigenvalues vary over the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentumEquation {
    Literal,
    #[default]
    WithEigenvalueDrift,
}

/// Right-hand side of the gauge momentum equation.
pub fn momentum_rhs(local: &GaugeLocal, lambda: &Vector3<f64>, form: MomentumEquation) -> Vector3<f64> {
    let sharp = lambda.component_div(&local.alpha);
    let c = &local.structure;
    Vector3::from_fn(|i, _| {
        let mut r = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                r += c[j][i][k] * lambda[k] * sharp[j];
            }
        }
        if form == MomentumEquation::WithEigenvalueDrift {
            for j in 0..3 {
                r -= 0.5 * local.d_inv_alpha[(i, j)] * lambda[j] * lambda[j];
            }
        }
        r
    })
}

#[derive(Debug, Clone)]
pub struct MomentumResidual {
    /// Arclength position of every evaluated sample.
    pub s: Vec<f64>,
    /// `max |rᵢ|` at each evaluated sample.
    pub residual: Vec<f64>,
    /// `max ‖λ̃‖ · max ‖λ̃♯‖` over the evaluated samples (scale of the
    /// quadratic terms; invariant under reparametrization together with r).
    pub scale: f64,
}

impl MomentumResidual {
    pub fn max(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// Maximum residual restricted to `s ∈ [lo, hi]`, relative to `scale`.
    pub fn relative_max_in(&self, lo: f64, hi: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.residual)
            .filter(|(s, _)| **s >= lo && **s <= hi)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max)
            / self.scale
    }
}

/// Residual of the gauge momentum equation along a curve carrying
/// fixed-coordinate momentum covectors, parametrized by arclength
/// `s = t · length`. Uses centered differences for `λ̃̇`.
pub fn parallel_momentum_residual(
    curve: &Geodesic,
    gauge: &dyn GaugeGeometry,
    form: MomentumEquation,
) -> Result<MomentumResidual> {
    let mom = curve
        .momentum
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("curve carries no momentum".into()))?;
    let n = curve.points.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 samples, got {n}"
        )));
    }
    let s: Vec<f64> = curve.t.iter().map(|t| t * curve.length).collect();
    let locals: Vec<GaugeLocal> = curve
        .points
        .iter()
        .map(|p| gauge.local(p))
        .collect::<Result<_>>()?;
    let lam: Vec<Vector3<f64>> = locals
        .iter()
        .zip(mom)
        .map(|(l, m)| l.covector_components(m))
        .collect();
    let mut out_s = Vec::with_capacity(n - 2);
    let mut res = Vec::with_capacity(n - 2);
    let mut max_l: f64 = 0.0;
    let mut max_sharp: f64 = 0.0;
    for k in 1..n - 1 {
        let ds = s[k + 1] - s[k - 1];
        if ds <= 0.0 {
            continue;
        }
        let dl = (lam[k + 1] - lam[k - 1]) / ds;
        let r = dl - momentum_rhs(&locals[k], &lam[k], form);
        out_s.push(s[k]);
        res.push(r.abs().max());
        max_l = max_l.max(lam[k].norm());
        max_sharp = max_sharp.max(lam[k].component_div(&locals[k].alpha).norm());
    }
    Ok(MomentumResidual {
        s: out_s,
        residual: res,
        scale: max_l * max_sharp,
    })
}
