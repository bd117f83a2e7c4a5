//! Reeds–Shepp metrics on M2 (left-invariant, data-driven and mixed), the
//! gauge frame obtained by diagonalization, and exact dual coefficients.
//!
//! All tensors are in fixed coordinates with pixel units for position and
//! radians for orientation; the cost multiplier `C` is already folded into
//! the stored metric matrices. The asymmetric-quadratic Finsler function at a
//! point is `F(ṗ)² = ⟨ṗ, G ṗ⟩ + ⟨ω_fwd, ṗ⟩₋²`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffgeo::{
    jacobian, left_invariant_frame, structure_functions, FrameM2, GaugeGeometry, GaugeLocal,
    HessianField, StructureFunctions,
};
use crate::error::{Error, Result};
use crate::grid::{Field2, GridM2, LiftedField, PointM2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Bending stiffness `ξ = √g₁₁` (per pixel).
    pub xi: f64,
    /// Spatial anisotropy: sideways motion costs `1/ζ` times forward motion.
    pub zeta: f64,
    /// Reverse-gear relaxation in `(0, 1]`; `1` is the symmetric model.
    pub eps: f64,
    /// Weight of the data-driven Hessian term.
    pub lambda_dd: f64,
    /// Angular weight.
    pub g33: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            xi: 0.1,
            zeta: 0.1,
            eps: 0.1,
            lambda_dd: 50.0,
            g33: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.xi > 0.0) {
            return bad(format!("ξ must be positive, got {}", self.xi));
        }
        if !(self.zeta > 0.0) {
            return bad(format!("ζ must be positive, got {}", self.zeta));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("ε must lie in (0, 1], got {}", self.eps));
        }
        if !(self.lambda_dd >= 0.0) {
            return bad(format!("λ must be non-negative, got {}", self.lambda_dd));
        }
        if !(self.g33 > 0.0) {
            return bad(format!("g₃₃ must be positive, got {}", self.g33));
        }
        Ok(())
    }

    /// The small parameter `ϵ` with `ϵ⁻² = (ε⁻² − 1) ξ²`; `None` for the
    /// symmetric model.
    pub fn small_epsilon(&self) -> Option<f64> {
        let inv2 = (self.eps.powi(-2) - 1.0) * self.xi * self.xi;
        (inv2 > 0.0).then(|| inv2.powf(-0.5))
    }

    /// Eigenvalues of the base metric in the left-invariant frame.
    pub fn base_alpha(&self, cost: f64) -> Vector3<f64> {
        let c2 = cost * cost;
        let x2 = self.xi * self.xi;
        Vector3::new(c2 * x2, c2 * x2 / (self.zeta * self.zeta), c2 * self.g33)
    }

    fn reverse_factor(&self) -> f64 {
        (self.eps.powi(-2) - 1.0).max(0.0).sqrt()
    }
}

/// Per-voxel symmetric positive-definite metric matrices.
#[derive(Debug, Clone)]
pub struct MetricFieldSym {
    pub grid: GridM2,
    pub matrices: Vec<Matrix3<f64>>,
}

/// Per-voxel covectors (fixed coordinates).
#[derive(Debug, Clone)]
pub struct CovectorField {
    pub grid: GridM2,
    pub covectors: Vec<Vector3<f64>>,
}

impl CovectorField {
    pub fn zeros(grid: GridM2) -> Self {
        Self {
            grid,
            covectors: vec![Vector3::zeros(); grid.len()],
        }
    }
}

/// Base metric and forward covector at one point.
pub fn base_metric_at(theta: f64, cost: f64, params: &ModelParams) -> (Matrix3<f64>, Vector3<f64>) {
    let a = left_invariant_frame(theta);
    let alpha = params.base_alpha(cost);
    let g = a * Matrix3::from_diagonal(&alpha) * a.transpose();
    let g = (g + g.transpose()) * 0.5;
    let w = a.column(0) * (cost * params.reverse_factor() * params.xi);
    (g, w)
}

fn check_cost(cost: &LiftedField) -> Result<()> {
    if let Some(v) = cost.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "cost must be positive and finite, found {v}"
        )));
    }
    Ok(())
}

pub fn base_metric(cost: &LiftedField, params: &ModelParams) -> Result<(MetricFieldSym, CovectorField)> {
    params.validate()?;
    check_cost(cost)?;
    let g = cost.grid;
    let (matrices, covectors) = (0..g.len())
        .into_par_iter()
        .map(|idx| base_metric_at(g.theta(g.coords(idx).2), cost.values[idx], params))
        .unzip();
    Ok((
        MetricFieldSym { grid: g, matrices },
        CovectorField { grid: g, covectors },
    ))
}

/// Relative floor for the Hessian normalization: where the pointwise
/// maximum falls below this fraction of its global maximum, the data term
/// is omitted.
pub const HESSIAN_FLOOR: f64 = 1e-8;

/// Adds `λ C² N / max_{|q̇|=1} q̇ᵀNq̇` to the base metric, with `N` the
/// Hessian dual-norm matrix.
pub fn data_driven_metric(
    base: &MetricFieldSym,
    hessian: &HessianField,
    cost: &LiftedField,
    params: &ModelParams,
) -> Result<MetricFieldSym> {
    if base.grid != hessian.grid || base.grid != cost.grid {
        return Err(Error::DimensionMismatch(
            "metric, Hessian and cost grids differ".into(),
        ));
    }
    if params.lambda_dd == 0.0 {
        return Ok(base.clone());
    }
    let maxima = hessian.max_field();
    let tau = HESSIAN_FLOOR * maxima.values.iter().copied().fold(0.0, f64::max);
    let matrices = (0..base.grid.len())
        .into_par_iter()
        .map(|idx| {
            let m = maxima.values[idx];
            if m <= tau || m == 0.0 {
                return base.matrices[idx];
            }
            let n = hessian.normal_matrix(idx);
            let c2 = cost.values[idx].powi(2);
            let add = n * (params.lambda_dd * c2 / m);
            base.matrices[idx] + (add + add.transpose()) * 0.5
        })
        .collect();
    Ok(MetricFieldSym {
        grid: base.grid,
        matrices,
    })
}

// ---------------------------------------------------------------------------
// Gauge frame

const CLUSTER_TOL: f64 = 1e-10;

/// Eigen-frame of a metric with the labeling policy: `A₁ᵁ` is the cheapest
/// direction (sign towards `A₁`), `A₃ᵁ` the remaining eigenvector most
/// aligned with `A₃` (sign towards `A₃`), `A₂ᵁ = A₃ᵁ × A₁ᵁ`. Within
/// degenerate eigenspaces the base frame vectors are projected instead, so
/// the result is deterministic.
///
/// Returns `(α, frame)` with the frame vectors as columns.
pub fn diagonalize_at(g: &Matrix3<f64>, theta: f64) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let base = left_invariant_frame(theta);
    let eig = SymmetricEigen::try_new(*g, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let ev: [f64; 3] = order.map(|i| eig.eigenvalues[i]);
    let vecs: [Vector3<f64>; 3] = order.map(|i| eig.eigenvectors.column(i).into_owned());
    let scale = ev[2].abs().max(f64::MIN_POSITIVE);
    let close = |a: f64, b: f64| (a - b).abs() <= CLUSTER_TOL * scale;

    let a1 = base.column(0).into_owned();
    let a3 = base.column(2).into_owned();

    // first label: the smallest eigenvalue's eigenspace
    let cluster1: Vec<usize> = (0..3).filter(|&i| close(ev[i], ev[0])).collect();
    let mut v1 = if cluster1.len() == 1 {
        vecs[0]
    } else {
        project_normalized(&a1, cluster1.iter().map(|&i| vecs[i])).unwrap_or(vecs[0])
    };
    if v1.dot(&a1) < 0.0 {
        v1 = -v1;
    }

    // third label: within the orthogonal complement of v1
    let rest: Vec<Vector3<f64>> = (0..3)
        .filter(|&i| !(cluster1.len() == 1 && i == 0))
        .map(|i| vecs[i] - v1 * v1.dot(&vecs[i]))
        .filter(|v| v.norm() > 1e-8)
        .map(|v| v.normalize())
        .collect();
    let rest_vals: Vec<f64> = rest.iter().map(|v| v.dot(&(g * v))).collect();
    let degenerate_rest = rest.len() != 2 || close(rest_vals[0], rest_vals[1]);
    let mut v3 = if degenerate_rest {
        let p = a3 - v1 * v1.dot(&a3);
        if p.norm() > 1e-8 {
            p.normalize()
        } else {
            let q = base.column(1) - v1 * v1.dot(&base.column(1));
            q.normalize()
        }
    } else if rest[0].dot(&a3).abs() >= rest[1].dot(&a3).abs() {
        rest[0]
    } else {
        rest[1]
    };
    if v3.dot(&a3) < 0.0 {
        v3 = -v3;
    }
    let v2 = v3.cross(&v1);
    let frame = Matrix3::from_columns(&[v1, v2, v3]);
    let alpha = Vector3::from_fn(|i, _| {
        let v = frame.column(i);
        v.dot(&(g * v))
    });
    Ok((alpha, frame))
}

fn project_normalized(
    v: &Vector3<f64>,
    basis: impl Iterator<Item = Vector3<f64>>,
) -> Option<Vector3<f64>> {
    let p: Vector3<f64> = basis.map(|b| b * b.dot(v)).sum();
    (p.norm() > 1e-8).then(|| p.normalize())
}

/// Gauge frame of a metric field together with the data needed along
/// curves: structure functions and derivatives of the inverse eigenvalues.
#[derive(Debug, Clone)]
pub struct GaugeFrameField {
    pub grid: GridM2,
    pub metric: Vec<Matrix3<f64>>,
    pub alpha: Vec<Vector3<f64>>,
    pub frame: FrameM2,
    pub structure: StructureFunctions,
    /// `(i, j) ↦ Aᵢᵁ(αⱼ⁻¹)` per voxel.
    pub d_inv_alpha: Vec<Matrix3<f64>>,
}

pub fn diagonalize(g: &MetricFieldSym) -> Result<GaugeFrameField> {
    let grid = g.grid;
    let (alpha, vectors): (Vec<_>, Vec<_>) = (0..grid.len())
        .into_par_iter()
        .map(|idx| diagonalize_at(&g.matrices[idx], grid.theta(grid.coords(idx).2)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let covectors = vectors.iter().map(|a: &Matrix3<f64>| a.transpose()).collect();
    let frame = FrameM2 {
        grid,
        vectors,
        covectors,
    };
    let structure = structure_functions(&frame);
    let d_inv_alpha = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let j = jacobian(&grid, idx, |n| alpha[n].map(|a| 1.0 / a));
            (j * frame.vectors[idx]).transpose()
        })
        .collect();
    Ok(GaugeFrameField {
        grid,
        metric: g.matrices.clone(),
        alpha,
        frame,
        structure,
        d_inv_alpha,
    })
}

/// Interpolates a tensor field in the moving frame: each corner value is
/// expressed in the left-invariant frame at its own orientation, blended,
/// and mapped back at the target orientation. Left-invariant fields are thus
/// reproduced exactly and the interpolation commutes with rotations.
pub(crate) fn interpolate_covariant_matrix(
    grid: &GridM2,
    tri: &crate::grid::Trilinear,
    theta: f64,
    get: impl Fn(usize) -> Matrix3<f64>,
) -> Matrix3<f64> {
    let local = tri.apply_with(Matrix3::zeros(), |i| {
        let a = left_invariant_frame(grid.theta(grid.coords(i).2));
        a.transpose() * get(i) * a
    });
    let a = left_invariant_frame(theta);
    let m = a * local * a.transpose();
    (m + m.transpose()) * 0.5
}

pub(crate) fn interpolate_covariant_vector(
    grid: &GridM2,
    tri: &crate::grid::Trilinear,
    theta: f64,
    get: impl Fn(usize) -> Vector3<f64>,
) -> Vector3<f64> {
    let local = tri.apply_with(Vector3::zeros(), |i| {
        left_invariant_frame(grid.theta(grid.coords(i).2)).transpose() * get(i)
    });
    left_invariant_frame(theta) * local
}

impl GaugeGeometry for GaugeFrameField {
    fn local(&self, p: &PointM2) -> Result<GaugeLocal> {
        let tri = self.grid.trilinear(p)?;
        let g = interpolate_covariant_matrix(&self.grid, &tri, p.theta, |i| self.metric[i]);
        let (alpha, vectors) = diagonalize_at(&g, p.theta)?;
        let mut structure = [[[0.0; 3]; 3]; 3];
        for (n, &i) in tri.idx.iter().enumerate() {
            let w = tri.wts[n];
            if w == 0.0 {
                continue;
            }
            let c = &self.structure.values[i];
            for a in 0..3 {
                for b in 0..3 {
                    for k in 0..3 {
                        structure[a][b][k] += w * c[a][b][k];
                    }
                }
            }
        }
        let d_inv_alpha = tri.apply_with(Matrix3::zeros(), |i| self.d_inv_alpha[i]);
        Ok(GaugeLocal {
            vectors,
            covectors: vectors.transpose(),
            alpha,
            structure,
            d_inv_alpha,
        })
    }

    fn contains(&self, p: &PointM2) -> bool {
        self.grid.contains(p)
    }
}

/// Forward covector of the data-driven model:
/// `√(ε⁻² − 1) · √α₁ · ω¹ᵁ`.
pub fn data_driven_forward_covector(gauge: &GaugeFrameField, params: &ModelParams) -> CovectorField {
    let f = params.reverse_factor();
    let covectors = (0..gauge.grid.len())
        .map(|i| gauge.frame.vectors[i].column(0) * (f * gauge.alpha[i].x.sqrt()))
        .collect();
    CovectorField {
        grid: gauge.grid,
        covectors,
    }
}

// ---------------------------------------------------------------------------
// Mixed model

/// Blending weight `κ`: the indicator of the union of squares
/// `[xᵢ − a, xᵢ + a]²` smoothed by a Gaussian of scale `sigma` and clamped
/// to `[0, 1]`.
pub fn crossing_weight(width: usize, height: usize, crossings: &[(f64, f64)], a: f64, sigma: f64) -> Field2 {
    let mut ind = Field2::from_fn(width, height, |x, y| {
        let inside = crossings
            .iter()
            .any(|&(cx, cy)| (x as f64 - cx).abs() <= a && (y as f64 - cy).abs() <= a);
        if inside {
            1.0
        } else {
            0.0
        }
    });
    if crossings.is_empty() || sigma <= 0.0 {
        return ind;
    }
    let grid = GridM2::new(width, height, 1).expect("non-empty image");
    let lifted = LiftedField {
        grid,
        values: std::mem::take(&mut ind.data),
    };
    let smooth = crate::diffgeo::gaussian_smooth(&lifted, sigma, 0.0).expect("valid scale");
    Field2 {
        width,
        height,
        data: smooth.values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}

/// `κ G_LI + (1 − κ) G_DD` per voxel.
pub fn mixed_metric(li: &MetricFieldSym, dd: &MetricFieldSym, kappa: &Field2) -> Result<MetricFieldSym> {
    check_mixed(li.grid, dd.grid, kappa)?;
    let g = li.grid;
    let matrices = (0..g.len())
        .map(|idx| {
            let k = kappa.data[idx % g.plane_len()];
            li.matrices[idx] * k + dd.matrices[idx] * (1.0 - k)
        })
        .collect();
    Ok(MetricFieldSym { grid: g, matrices })
}

/// `√κ ω_LI + √(1 − κ) ω_DD`, matching the quadratic blend of the
/// reverse-gear penalties along the respective forward directions.
pub fn mixed_covector(li: &CovectorField, dd: &CovectorField, kappa: &Field2) -> Result<CovectorField> {
    check_mixed(li.grid, dd.grid, kappa)?;
    let g = li.grid;
    let covectors = (0..g.len())
        .map(|idx| {
            let k = kappa.data[idx % g.plane_len()];
            li.covectors[idx] * k.sqrt() + dd.covectors[idx] * (1.0 - k).sqrt()
        })
        .collect();
    Ok(CovectorField { grid: g, covectors })
}

fn check_mixed(a: GridM2, b: GridM2, kappa: &Field2) -> Result<()> {
    if a != b || kappa.width != a.nx || kappa.height != a.ny {
        return Err(Error::DimensionMismatch("mixed-model inputs differ in size".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Asymmetric quadratic norms and their duals

/// `F(v) = √(⟨v, M v⟩ + ⟨ω, v⟩₋²)`.
pub fn finsler(m: &Matrix3<f64>, omega: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let neg = omega.dot(v).min(0.0);
    (v.dot(&(m * v)) + neg * neg).max(0.0).sqrt()
}

/// `F*(p̂) = √(⟨p̂, D p̂⟩ + ⟨p̂, η⟩₊²)`.
pub fn dual_finsler(d: &Matrix3<f64>, eta: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    let pos = eta.dot(p).max(0.0);
    (p.dot(&(d * p)) + pos * pos).max(0.0).sqrt()
}

/// `∂F*/∂p̂ = (D p̂ + ⟨p̂, η⟩₊ η) / F*(p̂)`; zero at `p̂ = 0`.
pub fn dual_finsler_gradient(d: &Matrix3<f64>, eta: &Vector3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let f = dual_finsler(d, eta, p);
    if f == 0.0 {
        return Vector3::zeros();
    }
    (d * p + eta * eta.dot(p).max(0.0)) / f
}

/// Dual coefficients `D = (M + ωωᵀ)⁻¹`, `η = M⁻¹ω / √(1 + ωᵀM⁻¹ω)`.
pub fn dual_coefficients_at(m: &Matrix3<f64>, omega: &Vector3<f64>) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("metric is not positive definite".into()))?;
    let minv_w = chol.solve(omega);
    let d = (m + omega * omega.transpose())
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular metric".into()))?;
    let d = (d + d.transpose()) * 0.5;
    let eta = minv_w / (1.0 + omega.dot(&minv_w)).sqrt();
    Ok((d, eta))
}

/// Inverse of [`dual_coefficients_at`]: recovers `(M, ω)` from `(D, η)`.
pub fn primal_from_dual(d: &Matrix3<f64>, eta: &Vector3<f64>) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let p = d
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular dual matrix".into()))?;
    let w = p * eta / (1.0 + eta.dot(&(p * eta))).sqrt();
    let m = p - w * w.transpose();
    Ok(((m + m.transpose()) * 0.5, w))
}

/// Small-`ϵ` limits of the dual coefficients of `M_ϵ = M⁰ + ϵ⁻²ω²ω²ᵀ`,
/// `ω_ϵ = ϵ⁻¹ω¹`: `D → 𝒜𝒜ᵀ/(𝒜ᵀM⁰𝒜)` with `𝒜 = ω¹ × ω²`, and
/// `η → M⁰⁻¹(ω¹ − αω²)/√(ω¹ᵀM⁰⁻¹(ω¹ − αω²))`.
pub fn asymptotic_dual(
    m0: &Matrix3<f64>,
    w1: &Vector3<f64>,
    w2: &Vector3<f64>,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let minv = m0
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular metric".into()))?;
    let a = w1.cross(w2);
    let d = a * a.transpose() / a.dot(&(m0 * a));
    let alpha = w2.dot(&(minv * w1)) / w2.dot(&(minv * w2));
    let v = w1 - w2 * alpha;
    let eta = minv * v / w1.dot(&(minv * v)).sqrt();
    Ok((d, eta))
}

/// Per-voxel dual coefficients of `M = G/C²`, `ω = ω_fwd/C` and the cost.
#[derive(Debug, Clone)]
pub struct DualMetricField {
    pub grid: GridM2,
    pub d: Vec<Matrix3<f64>>,
    pub eta: Vec<Vector3<f64>>,
    pub cost: Vec<f64>,
}

impl DualMetricField {
    /// Coefficients with the cost folded in: `(C⁻²D, C⁻¹η)`, so that
    /// `F*² = ⟨p̂, D_eff p̂⟩ + ⟨p̂, η_eff⟩₊²`.
    pub fn effective(&self, idx: usize) -> (Matrix3<f64>, Vector3<f64>) {
        let c = self.cost[idx];
        (self.d[idx] / (c * c), self.eta[idx] / c)
    }

    /// Interpolated effective coefficients (trilinear in the moving frame).
    pub fn effective_at(&self, p: &PointM2) -> Result<(Matrix3<f64>, Vector3<f64>)> {
        let tri = self.grid.trilinear(p)?;
        let d = interpolate_covariant_matrix(&self.grid, &tri, p.theta, |i| self.effective(i).0);
        let eta = interpolate_covariant_vector(&self.grid, &tri, p.theta, |i| self.effective(i).1);
        Ok((d, eta))
    }

    pub fn dual_norm(&self, idx: usize, p: &Vector3<f64>) -> f64 {
        let (d, eta) = self.effective(idx);
        dual_finsler(&d, &eta, p)
    }

    /// Primal Finsler function at a continuous point, recovered from the
    /// interpolated dual coefficients.
    pub fn finsler_at(&self, p: &PointM2, v: &Vector3<f64>) -> Result<f64> {
        let (d, eta) = self.effective_at(p)?;
        let (m, w) = primal_from_dual(&d, &eta)?;
        Ok(finsler(&m, &w, v))
    }
}

pub fn dual_coefficients(
    g: &MetricFieldSym,
    forward: &CovectorField,
    cost: &LiftedField,
) -> Result<DualMetricField> {
    if g.grid != forward.grid || g.grid != cost.grid {
        return Err(Error::DimensionMismatch("metric, covector and cost grids differ".into()));
    }
    check_cost(cost)?;
    let (d, eta): (Vec<_>, Vec<_>) = (0..g.grid.len())
        .into_par_iter()
        .map(|idx| {
            let c = cost.values[idx];
            dual_coefficients_at(&(g.matrices[idx] / (c * c)), &(forward.covectors[idx] / c))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(DualMetricField {
        grid: g.grid,
        d,
        eta,
        cost: cost.values.clone(),
    })
}
