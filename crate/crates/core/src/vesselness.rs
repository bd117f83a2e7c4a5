//! Crossing-preserving multi-scale vesselness on orientation scores and the
//! tracking cost derived from it.
//!
//! Per scale `a`, the score is regularized externally at spatial scale `a`
//! and then differentiated with Gaussian derivatives at spatial scale `a` and
//! angular scale `β`; the left-invariant second derivatives
//! `A₁²U = (cos θ ∂x + sin θ ∂y)² U` and `A₂²U = (−sin θ ∂x + cos θ ∂y)² U`
//! give anisotropy `R = |A₁²U / A₂²U|`, structure `S = ‖(A₁²U, A₂²U)‖` and
//! convexity `Q = A₂²U`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffgeo::{gaussian_derivative, gaussian_smooth};
use crate::error::{Error, Result};
use crate::grid::LiftedField;

/// Which line polarity counts as a vessel. Vessels in fundus images are dark
/// (`Q > 0` across them); bright phantoms need the score negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Dark,
    Bright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselnessParams {
    /// Spatial scales `a_l` in pixels.
    pub scales: Vec<f64>,
    /// Angular derivative scale (radians).
    pub beta: f64,
    pub sigma1: f64,
    /// `σ₂` as a fraction of `‖S‖∞`.
    pub sigma2_factor: f64,
    /// Angular external regularization (radians).
    pub sigma_a_ext: f64,
    /// Erosion scale `s_e`; zero disables erosion.
    pub erosion: f64,
    pub lambda_c: f64,
    pub p_c: f64,
    pub polarity: Polarity,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        Self {
            scales: vec![1.0],
            beta: 0.75,
            sigma1: 0.5,
            sigma2_factor: 0.5,
            sigma_a_ext: 0.0,
            erosion: 1.0,
            lambda_c: 1000.0,
            p_c: 2.0,
            polarity: Polarity::Dark,
        }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.scales.is_empty() {
            return bad("at least one vesselness scale is required".into());
        }
        if let Some(a) = self.scales.iter().find(|a| !(**a > 0.0)) {
            return bad(format!("vesselness scales must be positive, got {a}"));
        }
        if !(self.beta > 0.0 && self.sigma1 > 0.0 && self.sigma2_factor > 0.0) {
            return bad("β, σ₁ and σ₂ must be positive".into());
        }
        if !(self.sigma_a_ext >= 0.0 && self.erosion >= 0.0) {
            return bad("external scale and erosion must be non-negative".into());
        }
        if !(self.lambda_c >= 0.0 && self.p_c > 0.0) {
            return bad(format!("cost needs λ ≥ 0 and p > 0, got {} and {}", self.lambda_c, self.p_c));
        }
        Ok(())
    }

    /// Smallest attainable cost `(1 + λ)⁻¹`.
    pub fn cost_floor(&self) -> f64 {
        1.0 / (1.0 + self.lambda_c)
    }
}

/// Left-invariant second derivatives `(A₁²U, A₂²U)` of the externally
/// regularized score.
pub fn left_invariant_second(u: &LiftedField, a: f64, params: &VesselnessParams) -> Result<(LiftedField, LiftedField)> {
    let ext = gaussian_smooth(u, a, params.sigma_a_ext)?;
    let uxx = gaussian_derivative(&ext, [2, 0, 0], a, params.beta)?;
    let uxy = gaussian_derivative(&ext, [1, 1, 0], a, params.beta)?;
    let uyy = gaussian_derivative(&ext, [0, 2, 0], a, params.beta)?;
    let g = u.grid;
    let (a11, a22): (Vec<f64>, Vec<f64>) = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (c, s) = (g.theta(g.coords(idx).2).cos(), g.theta(g.coords(idx).2).sin());
            let (xx, xy, yy) = (uxx.values[idx], uxy.values[idx], uyy.values[idx]);
            (
                c * c * xx + 2.0 * c * s * xy + s * s * yy,
                s * s * xx - 2.0 * c * s * xy + c * c * yy,
            )
        })
        .unzip();
    Ok((LiftedField::from_values(g, a11)?, LiftedField::from_values(g, a22)?))
}

/// Single-scale vesselness in `[0, 1)`.
pub fn vesselness_single_scale(u: &LiftedField, a: f64, params: &VesselnessParams) -> Result<LiftedField> {
    params.validate()?;
    let signed;
    let u = match params.polarity {
        Polarity::Dark => u,
        Polarity::Bright => {
            signed = LiftedField::from_values(u.grid, u.values.iter().map(|v| -v).collect())?;
            &signed
        }
    };
    let (a11, a22) = left_invariant_second(u, a, params)?;
    let s: Vec<f64> = a11.values.iter().zip(&a22.values).map(|(x, y)| x.hypot(*y)).collect();
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let sigma2 = params.sigma2_factor * s_max;
    let values = (0..s.len())
        .map(|i| {
            let q = a22.values[i];
            if !(q > 0.0) || sigma2 == 0.0 {
                return 0.0;
            }
            let r = (a11.values[i] / q.max(1e-12)).abs();
            (-r * r / (2.0 * params.sigma1.powi(2))).exp() * (1.0 - (-s[i] * s[i] / (2.0 * sigma2 * sigma2)).exp())
        })
        .collect();
    LiftedField::from_values(u.grid, values)
}

/// Spatial erosion by min-convolution with `b(d) = ‖d‖² / (4 s_e)`, done as
/// two exact 1D passes. The result never exceeds the input.
pub fn erode(v: &LiftedField, scale: f64) -> Result<LiftedField> {
    if !(scale >= 0.0) {
        return Err(Error::InvalidParameter(format!("erosion scale must be non-negative, got {scale}")));
    }
    if scale == 0.0 {
        return Ok(v.clone());
    }
    let g = v.grid;
    let (lo, hi) = v
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    // beyond this offset the penalty exceeds the value range
    let reach = (2.0 * (scale * (hi - lo).max(0.0)).sqrt()).ceil() as i64 + 1;
    let pass = |src: &[f64], axis: usize| -> Vec<f64> {
        (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = g.coords(idx);
                let (pos, n) = if axis == 0 { (i as i64, g.nx as i64) } else { (j as i64, g.ny as i64) };
                let mut m = src[idx];
                for d in -reach..=reach {
                    let q = pos + d;
                    if d == 0 || q < 0 || q >= n {
                        continue;
                    }
                    let other = if axis == 0 { g.index(q as usize, j, k) } else { g.index(i, q as usize, k) };
                    m = m.min(src[other] + (d * d) as f64 / (4.0 * scale));
                }
                m
            })
            .collect()
    };
    let once = pass(&v.values, 0);
    LiftedField::from_values(g, pass(&once, 1))
}

/// Cost `C = (1 + λ 𝒱ᵖ)⁻¹` from a normalized vesselness.
pub fn cost_from_vesselness(v: &LiftedField, lambda_c: f64, p_c: f64) -> Result<LiftedField> {
    LiftedField::from_values(
        v.grid,
        v.values.iter().map(|x| 1.0 / (1.0 + lambda_c * x.max(0.0).powf(p_c))).collect(),
    )
}

#[derive(Debug, Clone)]
pub struct CostMap {
    /// Eroded, summed and normalized vesselness in `[0, 1]`.
    pub vesselness: LiftedField,
    pub cost: LiftedField,
}

/// Multi-scale vesselness and cost from one score per scale (`scores[l]`
/// is paired with `params.scales[l]`).
pub fn vesselness_multiscale_cost(scores: &[&LiftedField], params: &VesselnessParams) -> Result<CostMap> {
    params.validate()?;
    if scores.len() != params.scales.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} scales",
            scores.len(),
            params.scales.len()
        )));
    }
    let grid = scores[0].grid;
    if scores.iter().any(|s| s.grid != grid) {
        return Err(Error::DimensionMismatch("scores on different grids".into()));
    }
    let mut sum = vec![0.0; grid.len()];
    for (u, &a) in scores.iter().zip(&params.scales) {
        let v = erode(&vesselness_single_scale(u, a, params)?, params.erosion)?;
        sum.iter_mut().zip(&v.values).for_each(|(s, x)| *s += x);
    }
    let mu = sum.iter().copied().fold(0.0, f64::max);
    if mu > 0.0 {
        sum.iter_mut().for_each(|s| *s /= mu);
    }
    let vesselness = LiftedField::from_values(grid, sum)?;
    let cost = cost_from_vesselness(&vesselness, params.lambda_c, params.p_c)?;
    Ok(CostMap { vesselness, cost })
}

/// Multi-scale cost from a single score shared by all scales.
pub fn vesselness_cost(u: &LiftedField, params: &VesselnessParams) -> Result<CostMap> {
    let scores: Vec<&LiftedField> = params.scales.iter().map(|_| u).collect();
    vesselness_multiscale_cost(&scores, params)
}

/// The simple score-based cost `C = 1/(1 + c |U/‖U‖∞|²)`.
pub fn score_cost(u: &LiftedField, c: f64) -> Result<LiftedField> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("cost contrast must be non-negative, got {c}")));
    }
    let m = u.max_abs();
    let scale = if m > 0.0 { 1.0 / m } else { 0.0 };
    LiftedField::from_values(u.grid, u.values.iter().map(|v| 1.0 / (1.0 + c * (v * scale).powi(2))).collect())
}
