//! Geodesic extraction by steepest descent on a distance map, and the
//! Hamiltonian shooting integrator used as an independent check.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::diffgeo::{momentum_rhs, GaugeGeometry, GaugeLocal, MomentumEquation};
use crate::eikonal::{upwind_flow, DistanceMap};
use crate::error::{Error, Result};
use crate::grid::io::{write_polyline_csv, PolylineRow};
use crate::grid::{angle_diff, GridM2, PointM2};
use crate::metric::{dual_finsler_gradient, DualMetricField};
use crate::stencil::StencilField;

/// A sampled curve in M2 with normalized parameter `t ∈ [0, 1]`.
///
/// Orientations are unwrapped (consecutive samples never jump by 2π).
/// `momentum`, when present, holds the fixed-coordinate momentum covector
/// along the direction of traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub t: Vec<f64>,
    pub points: Vec<PointM2>,
    pub momentum: Option<Vec<Vector3<f64>>>,
    pub length: f64,
}

impl Geodesic {
    pub fn single(p: PointM2) -> Self {
        Self {
            t: vec![0.0],
            points: vec![p],
            momentum: None,
            length: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Spatial projection `(x, y)`.
    pub fn spatial(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }

    pub fn reversed(&self) -> Self {
        Self {
            t: self.t.iter().rev().map(|t| 1.0 - t).collect(),
            points: self.points.iter().rev().copied().collect(),
            momentum: self
                .momentum
                .as_ref()
                .map(|m| m.iter().rev().map(|v| -v).collect()),
            length: self.length,
        }
    }

    pub fn rows(&self) -> Vec<PolylineRow> {
        self.t
            .iter()
            .zip(&self.points)
            .map(|(&t, p)| PolylineRow {
                t,
                x: p.x,
                y: p.y,
                theta: p.theta,
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_polyline_csv(&self.rows(), path)
    }
}

/// Symmetric Hausdorff distance between two polylines, each densified to
/// sub-pixel spacing.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let da = densify(a, 0.1);
    let db = densify(b, 0.1);
    directed(&da, &db).max(directed(&db, &da))
}

fn densify(p: &[(f64, f64)], step: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(p.len());
    for w in p.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let n = ((x1 - x0).hypot(y1 - y0) / step).ceil().max(1.0) as usize;
        for k in 0..n {
            let s = k as f64 / n as f64;
            out.push((x0 + s * (x1 - x0), y0 + s * (y1 - y0)));
        }
    }
    if let Some(&last) = p.last() {
        out.push(last);
    }
    out
}

fn directed(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .map(|&(x, y)| {
            b.iter()
                .map(|&(u, v)| (x - u).hypot(y - v))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Numerical Finsler length `Σ F(γ_mid, Δγ)` of a sampled curve.
pub fn finsler_length(curve: &Geodesic, dual: &DualMetricField) -> Result<f64> {
    let mut total = 0.0;
    for w in curve.points.windows(2) {
        let d = w[1].as_vector() - w[0].as_vector();
        let mid = PointM2 {
            x: 0.5 * (w[0].x + w[1].x),
            y: 0.5 * (w[0].y + w[1].y),
            theta: w[0].theta + 0.5 * d.z,
        };
        total += dual.finsler_at(&mid, &d)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktrackOptions {
    /// Step length in index units (voxels).
    pub step: f64,
    /// Snap to a source once within this index distance.
    pub snap_radius: f64,
    /// On stagnation within this index distance of a source, snap to it
    /// instead of failing: closer to a source than a few stencil widths the
    /// discrete map does not resolve the approach direction.
    pub stall_snap_radius: f64,
    /// Hard cap on the number of steps.
    pub max_steps: usize,
}

impl Default for BacktrackOptions {
    fn default() -> Self {
        Self {
            step: 0.2,
            snap_radius: 1.0,
            stall_snap_radius: 4.0,
            max_steps: 200_000,
        }
    }
}

fn index_norm(grid: &GridM2, v: &Vector3<f64>) -> f64 {
    let vt = v.z / grid.htheta();
    (v.x * v.x + v.y * v.y + vt * vt).sqrt()
}

fn index_distance(grid: &GridM2, a: &PointM2, b: &PointM2) -> f64 {
    let dt = angle_diff(a.theta, b.theta) / grid.htheta();
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + dt * dt).sqrt()
}

fn to_point(q: &Vector3<f64>) -> PointM2 {
    PointM2 {
        x: q.x,
        y: q.y,
        theta: q.z,
    }
}

fn fail(q: &Vector3<f64>, reason: impl Into<String>) -> Error {
    Error::Backtrack {
        x: q.x,
        y: q.y,
        theta: q.z,
        reason: reason.into(),
    }
}

/// Travel (index units) without reaching a cell with a new smallest corner
/// value of `W` after which the descent counts as stagnated.
const STALL_DISTANCE: f64 = 20.0;
/// Within the stall-snap radius a short stall is enough.
const STALL_STEPS_NEAR: usize = 10;

/// Integrates `γ̇ = −v(γ)` with the unit-speed descent direction `v`
/// supplied by `direction`, from `p` until a source is reached.
fn descend(
    p: PointM2,
    map: &DistanceMap,
    opts: &BacktrackOptions,
    direction: impl Fn(&PointM2, &Vector3<f64>) -> Result<Vector3<f64>>,
) -> Result<Geodesic> {
    let grid = *map.grid();
    let w0 = map.interpolate(&p)?;
    if !w0.is_finite() {
        return Err(Error::Unreachable);
    }
    let sources: Vec<PointM2> = map.sources.iter().map(|&s| grid.point(s)).collect();
    let start_voxel = grid.nearest_voxel(&p)?;
    if map.sources.contains(&start_voxel) {
        return Err(fail(&p.as_vector(), "start point is a source"));
    }
    let nearest_source = |q: &PointM2| {
        sources
            .iter()
            .map(|s| (index_distance(&grid, q, s), *s))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
    };
    let velocity = |q: &Vector3<f64>| -> Result<(Vector3<f64>, Vector3<f64>)> {
        let pt = to_point(q);
        if !grid.contains(&pt) {
            return Err(fail(q, "left the domain"));
        }
        let dw = map.gradient_at(&pt).map_err(|_| fail(q, "distance map undefined"))?;
        let v = direction(&pt, &dw)?;
        Ok((-v, dw))
    };

    let mut q = p.as_vector();
    let mut pts = vec![p];
    let mut mom = Vec::new();
    let mut s_acc = vec![0.0];
    let mut w_prev = map.cell_floor(&p)?;
    let mut stalls = 0;
    let mut best = 0;
    let stall_steps = ((STALL_DISTANCE / opts.step).ceil() as usize).max(10);
    for _ in 0..opts.max_steps {
        let (dist, src) = nearest_source(&to_point(&q));
        let near_stall = stalls >= STALL_STEPS_NEAR && dist <= opts.stall_snap_radius;
        if near_stall {
            // drop the wandering since the last new minimum
            pts.truncate(best + 1);
            s_acc.truncate(best + 1);
            mom.truncate(best);
            q = pts[best].as_vector();
        }
        if dist <= opts.snap_radius || near_stall {
            let (_, dw) = velocity(&q)?;
            mom.push(-dw);
            let mut end = src;
            end.theta = q.z + angle_diff(src.theta, q.z);
            let step = end.as_vector() - q;
            s_acc.push(s_acc.last().unwrap() + snap_duration(&step, &q, map));
            pts.push(end);
            // momentum at the source is not defined; repeat the last one
            mom.push(*mom.last().unwrap());
            return Ok(finish(pts, mom, s_acc, w0));
        }
        let (v1, dw) = velocity(&q)?;
        let speed = index_norm(&grid, &v1);
        // both stages advance a fixed index length: the speed of the
        // direction field varies by orders of magnitude near sources
        let v2 = if speed > 0.0 {
            velocity(&(q + v1 * (0.5 * opts.step / speed)))?.0
        } else {
            Vector3::zeros()
        };
        let speed2 = index_norm(&grid, &v2);
        if !(speed2 > 0.0) {
            if dist <= opts.stall_snap_radius {
                stalls = stall_steps.max(STALL_STEPS_NEAR);
                best = pts.len() - 1;
                continue;
            }
            return Err(fail(&q, "vanishing gradient (likely a Maxwell point)"));
        }
        mom.push(-dw);
        let ds = opts.step / speed2;
        let next = q + v2 * ds;
        let w_next = map
            .cell_floor(&to_point(&next))
            .map_err(|_| fail(&next, "left the domain"))?;
        if index_norm(&grid, &(next - q)) < 1e-6 {
            // a short run of vanishing steps suffices
            stalls = stalls.max(stall_steps - STALL_STEPS_NEAR) + 1;
        } else if !(w_next < w_prev) {
            stalls += 1;
        } else {
            stalls = 0;
            best = pts.len();
        }
        if stalls >= stall_steps && nearest_source(&to_point(&next)).0 > opts.stall_snap_radius {
            return Err(fail(&q, "stagnation (likely a Maxwell point)"));
        }
        w_prev = w_prev.min(w_next);
        s_acc.push(s_acc.last().unwrap() + ds);
        q = next;
        pts.push(to_point(&q));
    }
    Err(fail(&q, "step limit reached"))
}

/// Descent-time increment for the final snapping segment: the segment is
/// traversed at the same unit Finsler speed, so its duration is its dual
/// pairing with the local gradient.
fn snap_duration(step: &Vector3<f64>, q: &Vector3<f64>, map: &DistanceMap) -> f64 {
    map.gradient_at(&to_point(q))
        .map(|dw| (-dw.dot(step)).max(0.0))
        .unwrap_or(0.0)
}

fn finish(pts: Vec<PointM2>, mom: Vec<Vector3<f64>>, s: Vec<f64>, w0: f64) -> Geodesic {
    let total = *s.last().unwrap();
    let t = if total > 0.0 {
        s.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; s.len()]
    };
    let mut mom = mom;
    mom.truncate(pts.len());
    Geodesic {
        t,
        points: pts,
        momentum: Some(mom),
        length: w0,
    }
}

/// Steepest-descent backtracking `γ̇ = −∂_p̂F*(γ, dW(γ))` with midpoint RK2,
/// parametrized by Finsler arclength and stopped on reaching a source.
/// The result runs from `p` to the source; `t` is arclength over its total.
pub fn backtrack(p: PointM2, map: &DistanceMap, dual: &DualMetricField, opts: &BacktrackOptions) -> Result<Geodesic> {
    descend(p, map, opts, |pt, dw| {
        let (d, eta) = dual.effective_at(pt)?;
        Ok(dual_finsler_gradient(&d, &eta, dw))
    })
}

/// Backtracking along the scheme's own upwind flow ([`upwind_flow`]),
/// interpolated trilinearly between voxels. Unlike the central-difference
/// gradient this flow descends at every accepted voxel, which keeps the
/// descent clear of spurious local minima on coarse angular grids and
/// strongly anisotropic metrics. Momentum is still the interpolated `dW`.
pub fn backtrack_upwind(p: PointM2, map: &DistanceMap, stencils: &StencilField, opts: &BacktrackOptions) -> Result<Geodesic> {
    let grid = *map.grid();
    let ht = grid.htheta();
    descend(p, map, opts, |pt, _| {
        let tri = grid.trilinear(pt)?;
        let corners: Vec<(usize, f64)> = tri
            .idx
            .iter()
            .zip(tri.wts)
            .filter(|&(&i, w)| w > 0.0 && map.value(i).is_finite())
            .map(|(&i, w)| (i, w))
            .collect();
        let wsum: f64 = corners.iter().map(|c| c.1).sum();
        let here = corners.iter().map(|&(i, w)| w * map.value(i)).sum::<f64>() / wsum;
        // causality: only corners at or below the local value steer, so
        // flows from far-uphill neighbours (e.g. another orientation
        // layer) cannot drag the descent sideways
        let mut acc = Vector3::zeros();
        for &(i, w) in &corners {
            if map.value(i) <= here {
                if let Some(v) = upwind_flow(map, stencils, i) {
                    acc += v * w;
                }
            }
        }
        Ok(Vector3::new(acc.x, acc.y, acc.z * ht))
    })
}

/// Backtracking in gauge components: `γ̇ = −Σₖ vₖ Aₖᵁ` with
/// `vₖ = αₖ⁻¹ (Aₖᵁ W)` for `k = 2, 3` and, for the forward direction,
/// `v₁ = α₁⁻¹ (A₁ᵁ W)₊ − ε² α₁⁻¹ (A₁ᵁ W)₋`, normalized to unit speed.
pub fn backtrack_gauge(
    p: PointM2,
    map: &DistanceMap,
    gauge: &dyn GaugeGeometry,
    eps: f64,
    opts: &BacktrackOptions,
) -> Result<Geodesic> {
    descend(p, map, opts, |pt, dw| {
        let local = gauge.local(pt)?;
        Ok(gauge_descent_direction(&local, dw, eps))
    })
}

/// Unit-speed ascent direction `∂F*` of the gauge Finsler model at a point.
pub fn gauge_descent_direction(local: &GaugeLocal, dw: &Vector3<f64>, eps: f64) -> Vector3<f64> {
    let lam = local.covector_components(dw);
    let e2 = eps * eps;
    let l1 = if lam.x >= 0.0 { lam.x } else { e2 * lam.x };
    let v = Vector3::new(l1 / local.alpha.x, lam.y / local.alpha.y, lam.z / local.alpha.z);
    let f2 = lam.x * l1 / local.alpha.x + lam.y * lam.y / local.alpha.y + lam.z * lam.z / local.alpha.z;
    if f2 <= 0.0 {
        return Vector3::zeros();
    }
    local.vectors * v / f2.sqrt()
}

/// Result of [`shoot_hamiltonian`].
#[derive(Debug, Clone)]
pub struct Shot {
    pub curve: Geodesic,
    /// Gauge momentum components at every sample.
    pub gauge_momentum: Vec<Vector3<f64>>,
    /// `½ Σ αᵢ⁻¹ λ̃ᵢ²` at every sample.
    pub hamiltonian: Vec<f64>,
    /// The curve left the domain before the final time.
    pub truncated: bool,
}

pub fn hamiltonian(local: &GaugeLocal, lam: &Vector3<f64>) -> f64 {
    0.5 * lam.component_mul(lam).component_div(&local.alpha).sum()
}

/// RK4 integration of `γ̇ = Σ λ̃ⁱ Aᵢᵁ`, `λ̃̇ = momentum_rhs(λ̃)` with
/// `λ̃ⁱ = αᵢ⁻¹ λ̃ᵢ`, from gauge momentum `lambda0`.
pub fn shoot_hamiltonian(
    p0: PointM2,
    lambda0: Vector3<f64>,
    gauge: &dyn GaugeGeometry,
    form: MomentumEquation,
    t_end: f64,
    dt: f64,
) -> Result<Shot> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and T ≥ 0, got dt = {dt}, T = {t_end}"
        )));
    }
    let rhs = |q: &Vector3<f64>, l: &Vector3<f64>| -> Result<(Vector3<f64>, Vector3<f64>)> {
        let pt = to_point(q);
        if !gauge.contains(&pt) {
            return Err(Error::Domain {
                x: pt.x,
                y: pt.y,
                nx: 0,
                ny: 0,
            });
        }
        let local = gauge.local(&pt)?;
        let sharp = l.component_div(&local.alpha);
        Ok((local.vectors * sharp, momentum_rhs(&local, l, form)))
    };
    let first = gauge.local(&p0)?;
    let steps = (t_end / dt).round() as usize;
    let mut q = p0.as_vector();
    let mut lam = lambda0;
    let mut ts = vec![0.0];
    let mut pts = vec![p0];
    let mut gm = vec![lam];
    let mut mom = vec![first.covectors.transpose() * lam];
    let mut ham = vec![hamiltonian(&first, &lam)];
    let mut truncated = false;
    for n in 0..steps {
        let step = (|| -> Result<(Vector3<f64>, Vector3<f64>)> {
            let (a1, b1) = rhs(&q, &lam)?;
            let (a2, b2) = rhs(&(q + a1 * (dt / 2.0)), &(lam + b1 * (dt / 2.0)))?;
            let (a3, b3) = rhs(&(q + a2 * (dt / 2.0)), &(lam + b2 * (dt / 2.0)))?;
            let (a4, b4) = rhs(&(q + a3 * dt), &(lam + b3 * dt))?;
            Ok((
                (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0),
                (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (dt / 6.0),
            ))
        })();
        let (dq, dl) = match step {
            Ok(s) => s,
            Err(_) => {
                truncated = true;
                break;
            }
        };
        let nq = q + dq;
        let nl = lam + dl;
        let local = match gauge.local(&to_point(&nq)) {
            Ok(l) if gauge.contains(&to_point(&nq)) => l,
            _ => {
                truncated = true;
                break;
            }
        };
        q = nq;
        lam = nl;
        ts.push((n + 1) as f64 * dt);
        pts.push(to_point(&q));
        gm.push(lam);
        mom.push(local.covectors.transpose() * lam);
        ham.push(hamiltonian(&local, &lam));
    }
    if pts.len() == 1 && steps > 0 {
        return Err(Error::Domain {
            x: p0.x,
            y: p0.y,
            nx: 0,
            ny: 0,
        });
    }
    let total = *ts.last().unwrap();
    // arclength in the unit-Hamiltonian normalization is √(2H)·time
    let speed = (2.0 * ham[0]).sqrt();
    Ok(Shot {
        curve: Geodesic {
            t: ts.iter().map(|t| if total > 0.0 { t / total } else { 0.0 }).collect(),
            points: pts,
            momentum: Some(mom),
            length: total * speed,
        },
        gauge_momentum: gm,
        hamiltonian: ham,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::{straight_curve, UniformGauge};
    use crate::eikonal::{fast_march, SourceSet, Stop};
    use crate::grid::LiftedField;
    use crate::metric::{base_metric, dual_coefficients, ModelParams};
    use crate::stencil::StencilField;
    use nalgebra::Matrix3;

    fn isotropic_setup(n: usize, nt: usize) -> (DistanceMap, DualMetricField) {
        let grid = GridM2::new(n, n, nt).unwrap();
        let ht = grid.htheta();
        // physical metric diag(1, 1, hθ²): isotropic in index units
        let dual = DualMetricField {
            grid,
            d: vec![Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.0 / (ht * ht))); grid.len()],
            eta: vec![Vector3::zeros(); grid.len()],
            cost: vec![1.0; grid.len()],
        };
        let st = StencilField::build(&dual, 0.1).unwrap();
        let src = SourceSet::new(&grid, vec![grid.index(4, 4, 0)]).unwrap();
        (fast_march(&st, &src, &Stop::Full).unwrap(), dual)
    }

    #[test]
    fn isotropic_backtrack_is_a_chord() {
        let (map, dual) = isotropic_setup(32, 4);
        let p = PointM2::new(26.0, 17.0, 0.0);
        let g = backtrack(p, &map, &dual, &BacktrackOptions::default()).unwrap();
        let end = g.points.last().unwrap();
        assert!((end.x - 4.0).abs() < 1e-9 && (end.y - 4.0).abs() < 1e-9);
        let chord = [(26.0, 17.0), (4.0, 4.0)];
        assert!(hausdorff(&g.spatial(), &chord) < 1.0);
        assert!(g.t.windows(2).all(|w| w[1] > w[0]));
        assert!((g.t[0], *g.t.last().unwrap()) == (0.0, 1.0));
    }

    #[test]
    fn upwind_route_matches_gradient_route() {
        let (map, dual) = isotropic_setup(32, 4);
        let st = StencilField::build(&dual, 0.1).unwrap();
        let p = PointM2::new(26.0, 17.0, 0.0);
        let opts = BacktrackOptions::default();
        let a = backtrack_upwind(p, &map, &st, &opts).unwrap();
        let b = backtrack(p, &map, &dual, &opts).unwrap();
        let end = a.points.last().unwrap();
        assert!((end.x - 4.0).abs() < 1e-9 && (end.y - 4.0).abs() < 1e-9);
        assert!(hausdorff(&a.spatial(), &b.spatial()) < 2.0);
        assert!(hausdorff(&a.spatial(), &[(26.0, 17.0), (4.0, 4.0)]) < 1.5);
    }

    #[test]
    fn source_is_rejected() {
        let (map, dual) = isotropic_setup(12, 4);
        let r = backtrack(PointM2::new(4.0, 4.0, 0.0), &map, &dual, &BacktrackOptions::default());
        assert!(matches!(r, Err(Error::Backtrack { .. })));
    }

    #[test]
    fn symmetric_length_matches_distance() {
        // the scheme's error is roughly additive, so use a path of ~70 px
        let grid = GridM2::new(96, 48, 32).unwrap();
        let p = ModelParams { eps: 1.0, zeta: 0.5, xi: 0.3, ..Default::default() };
        let cost = LiftedField::constant(grid, 1.0);
        let (g, w) = base_metric(&cost, &p).unwrap();
        let dual = dual_coefficients(&g, &w, &cost).unwrap();
        let st = StencilField::build(&dual, 0.1).unwrap();
        let src = SourceSet::new(&grid, vec![grid.index(12, 24, 0)]).unwrap();
        let map = fast_march(&st, &src, &Stop::Full).unwrap();
        let start = PointM2::new(82.0, 30.0, 0.4);
        let geo = backtrack(start, &map, &dual, &BacktrackOptions::default()).unwrap();
        let len = finsler_length(&geo, &dual).unwrap();
        let w0 = map.interpolate(&start).unwrap();
        assert!((len - w0).abs() / w0 < 0.02, "{len} vs {w0}");
        // W decreases along the curve
        let ws: Vec<f64> = geo.points.iter().map(|q| map.interpolate(q).unwrap()).collect();
        assert!(ws.windows(2).all(|w| w[1] < w[0] + 1e-9));
    }

    #[test]
    fn uniform_shot_along_a1_is_straight() {
        let alpha = Vector3::new(0.01, 1.0, 1.0);
        let gauge = UniformGauge::new(alpha);
        let lam0 = Vector3::new(alpha.x.sqrt(), 0.0, 0.0);
        let shot = shoot_hamiltonian(PointM2::new(0.0, 0.0, 0.3), lam0, &gauge, MomentumEquation::Literal, 1.0, 1e-2).unwrap();
        for (l, p) in shot.gauge_momentum.iter().zip(&shot.curve.points) {
            assert!((l - lam0).norm() < 1e-14);
            assert!((p.theta - 0.3).abs() < 1e-14);
        }
        let straight = straight_curve(PointM2::new(0.0, 0.0, 0.3), lam0.component_div(&alpha), &gauge, 1.0, 1e-2).unwrap();
        let last = shot.curve.points.last().unwrap();
        let last2 = straight.curve.points.last().unwrap();
        assert!((last.x - last2.x).abs() < 1e-12 && (last.y - last2.y).abs() < 1e-12);
    }

    #[test]
    fn uniform_shot_conserves_hamiltonian() {
        let alpha = Vector3::new(0.01, 0.5, 1.0);
        let gauge = UniformGauge::new(alpha);
        let lam0 = Vector3::new(0.05, 0.3, 0.6);
        let shot = shoot_hamiltonian(PointM2::new(0.0, 0.0, 0.0), lam0, &gauge, MomentumEquation::Literal, 1.0, 1e-3).unwrap();
        let h0 = shot.hamiltonian[0];
        assert!(shot.hamiltonian.iter().all(|h| (h - h0).abs() / h0 < 1e-8));
    }

    #[test]
    fn hausdorff_basics() {
        let a = [(0.0, 0.0), (10.0, 0.0)];
        let b = [(0.0, 1.0), (10.0, 1.0)];
        assert!((hausdorff(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }

    #[test]
    fn reversal_roundtrip_and_csv() {
        let g = Geodesic {
            t: vec![0.0, 0.5, 1.0],
            points: vec![PointM2::new(0.0, 0.0, 0.0), PointM2::new(1.0, 0.0, 0.1), PointM2::new(2.0, 0.5, 0.2)],
            momentum: Some(vec![Vector3::x(); 3]),
            length: 2.0,
        };
        assert_eq!(g.reversed().reversed(), g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        g.write_csv(&path).unwrap();
        let rows = crate::grid::io::read_polyline_csv(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].x, 2.0);
    }
}
