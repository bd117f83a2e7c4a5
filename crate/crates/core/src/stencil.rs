//! Integer-offset stencils from Selling's obtuse-superbase reduction.
//!
//! A symmetric positive definite `D` is written as `Σ λᵢ ėᵢ ėᵢᵀ` with
//! `λᵢ ≥ 0` and `ėᵢ ∈ ℤ³`; the squared positive part `⟨p̂, η⟩₊²` is
//! approximated from above by `Σ μⱼ ⟨p̂, ḟⱼ⟩₊²`. All matrices handled here
//! are expressed in index units of the grid, so offsets are voxel steps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridM2;
use crate::metric::DualMetricField;

pub type Offset = [i32; 3];

const MAX_SELLING_ITERATIONS: usize = 1000;

/// One rank-one term `weight · ⟨p̂, offset⟩²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub weight: f64,
    pub offset: Offset,
}

/// Per-voxel finite-difference stencil: six symmetric terms (some may carry
/// zero weight) and up to six one-sided terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub symmetric: [Term; 6],
    one_sided: [Term; 6],
    n_one_sided: u8,
}

impl Stencil {
    pub fn new(symmetric: [Term; 6], one_sided: &[Term]) -> Self {
        assert!(one_sided.len() <= 6, "at most six one-sided terms");
        let mut os = [Term {
            weight: 0.0,
            offset: [0; 3],
        }; 6];
        os[..one_sided.len()].copy_from_slice(one_sided);
        Self {
            symmetric,
            one_sided: os,
            n_one_sided: one_sided.len() as u8,
        }
    }

    pub fn one_sided(&self) -> &[Term] {
        &self.one_sided[..self.n_one_sided as usize]
    }

    /// Largest Euclidean offset length among terms with positive weight.
    pub fn radius(&self) -> f64 {
        self.symmetric
            .iter()
            .chain(self.one_sided())
            .filter(|t| t.weight > 0.0)
            .map(|t| offset_norm(&t.offset))
            .fold(0.0, f64::max)
    }

    /// `Σ λᵢ⟨p̂,ėᵢ⟩² + Σ μⱼ⟨p̂,ḟⱼ⟩₊²`, the quadratic form the stencil
    /// discretizes.
    pub fn evaluate(&self, p: &Vector3<f64>) -> f64 {
        let sym: f64 = self
            .symmetric
            .iter()
            .map(|t| t.weight * dot_offset(p, &t.offset).powi(2))
            .sum();
        let one: f64 = self
            .one_sided()
            .iter()
            .map(|t| t.weight * dot_offset(p, &t.offset).max(0.0).powi(2))
            .sum();
        sym + one
    }
}

#[inline]
pub fn offset_norm(e: &Offset) -> f64 {
    ((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]) as f64).sqrt()
}

#[inline]
fn dot_offset(p: &Vector3<f64>, e: &Offset) -> f64 {
    p.x * e[0] as f64 + p.y * e[1] as f64 + p.z * e[2] as f64
}

#[inline]
fn as_f64(e: &Offset) -> Vector3<f64> {
    Vector3::new(e[0] as f64, e[1] as f64, e[2] as f64)
}

fn cross(a: &Offset, b: &Offset) -> Offset {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Condition measure `μ(D) = √(‖D‖‖D⁻¹‖)` (spectral norms).
pub fn anisotropy(d: &Matrix3<f64>) -> f64 {
    let ev = d.symmetric_eigenvalues();
    let (lo, hi) = ev
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (hi / lo).sqrt()
}

/// Selling decomposition of a 3×3 SPD matrix into six rank-one terms on
/// integer offsets.
///
/// Starts from the superbase `{-(e₁+e₂+e₃), e₁, e₂, e₃}` and applies Selling
/// exchanges until the superbase is obtuse for `D`.
pub fn selling_decompose(d: &Matrix3<f64>) -> Result<[Term; 6]> {
    let tol = 1e-12 * d.trace().abs();
    let mut b: [Offset; 4] = [[-1, -1, -1], [1, 0, 0], [0, 1, 0], [0, 0, 1]];
    let mut iterations = 0;
    loop {
        let mut changed = false;
        'scan: for i in 0..4 {
            for j in (i + 1)..4 {
                let s = as_f64(&b[i]).dot(&(d * as_f64(&b[j])));
                if s > tol {
                    let (k, l) = other_pair(i, j);
                    for c in 0..3 {
                        b[k][c] += b[i][c];
                        b[l][c] += b[i][c];
                        b[i][c] = -b[i][c];
                    }
                    changed = true;
                    break 'scan;
                }
            }
        }
        if !changed {
            break;
        }
        iterations += 1;
        if iterations > MAX_SELLING_ITERATIONS {
            return Err(Error::IllConditioned { iterations });
        }
    }
    let mut terms = [Term {
        weight: 0.0,
        offset: [0; 3],
    }; 6];
    let mut n = 0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            let (k, l) = other_pair(i, j);
            let w = -as_f64(&b[i]).dot(&(d * as_f64(&b[j])));
            terms[n] = Term {
                weight: w.max(0.0),
                offset: canonical_sign(cross(&b[k], &b[l])),
            };
            n += 1;
        }
    }
    Ok(terms)
}

fn other_pair(i: usize, j: usize) -> (usize, usize) {
    let mut rest = (0..4).filter(|&m| m != i && m != j);
    (rest.next().unwrap(), rest.next().unwrap())
}

/// Fixes the sign of an offset so its first non-zero entry is positive.
fn canonical_sign(e: Offset) -> Offset {
    let first = e.iter().copied().find(|&c| c != 0).unwrap_or(0);
    if first < 0 {
        [-e[0], -e[1], -e[2]]
    } else {
        e
    }
}

/// One-sided terms approximating `⟨p̂, η⟩₊²`: the Selling decomposition of
/// `ηηᵀ + ε²(‖η‖²I − ηηᵀ)` with every offset oriented so `⟨ḟ, η⟩ ≥ 0`.
/// Zero-weight terms are dropped; `η = 0` yields no terms.
pub fn halfline_decompose(eta: &Vector3<f64>, eps_rel: f64) -> Result<Vec<Term>> {
    if !(eps_rel > 0.0 && eps_rel < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relative relaxation must lie in (0, 1), got {eps_rel}"
        )));
    }
    let n2 = eta.norm_squared();
    if n2 == 0.0 {
        return Ok(Vec::new());
    }
    let outer = eta * eta.transpose();
    let m = outer + (Matrix3::identity() * n2 - outer) * (eps_rel * eps_rel);
    let terms = selling_decompose(&m)?;
    Ok(terms
        .into_iter()
        .filter(|t| t.weight > 0.0)
        .map(|t| {
            let f = as_f64(&t.offset);
            let offset = if f.dot(eta) < 0.0 {
                [-t.offset[0], -t.offset[1], -t.offset[2]]
            } else {
                t.offset
            };
            Term {
                weight: t.weight,
                offset,
            }
        })
        .collect())
}

/// Stencils for every voxel of a grid.
#[derive(Debug, Clone)]
pub struct StencilField {
    pub grid: GridM2,
    pub stencils: Vec<Stencil>,
    /// Maximum offset length over all voxels.
    pub radius: f64,
}

impl StencilField {
    /// Uniform stencil everywhere (mostly for tests and synthetic studies).
    pub fn uniform(grid: GridM2, stencil: Stencil) -> Self {
        Self {
            grid,
            stencils: vec![stencil; grid.len()],
            radius: stencil.radius(),
        }
    }

    /// Builds stencils from per-voxel coefficients given directly in index
    /// units, with the cost already folded in (the scheme solves
    /// `Σλ(δW)² + Σμ(δW)₊² = 1`).
    pub fn from_index_coefficients(
        grid: GridM2,
        coeffs: impl Fn(usize) -> (Matrix3<f64>, Vector3<f64>) + Sync,
        eps_rel: f64,
    ) -> Result<Self> {
        let stencils: Vec<Stencil> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (d, eta) = coeffs(idx);
                let sym = selling_decompose(&d).map_err(|e| Error::Stencil {
                    voxel: idx,
                    reason: e.to_string(),
                })?;
                let one = halfline_decompose(&eta, eps_rel).map_err(|e| Error::Stencil {
                    voxel: idx,
                    reason: e.to_string(),
                })?;
                let s = Stencil::new(sym, &one);
                check_theta_reach(&grid, idx, &s)?;
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let radius = stencils.par_iter().map(Stencil::radius).reduce(|| 0.0, f64::max);
        Ok(Self {
            grid,
            stencils,
            radius,
        })
    }

    /// Converts dual coefficients (fixed coordinates, radians) to index units
    /// and decomposes them per voxel.
    pub fn build(dual: &DualMetricField, eps_rel: f64) -> Result<Self> {
        let grid = dual.grid;
        let ht = grid.htheta();
        let s_inv = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.0 / ht));
        Self::from_index_coefficients(
            grid,
            |idx| {
                let (d, eta) = dual.effective(idx);
                (s_inv * d * s_inv, s_inv * eta)
            },
            eps_rel,
        )
    }

    pub fn save_cache(&self, path: impl AsRef<Path>, key: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"M2STENCIL1\n")?;
        w.write_all(key.as_bytes())?;
        w.write_all(b"\n")?;
        let g = self.grid;
        for v in [g.nx, g.ny, g.ntheta] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for s in &self.stencils {
            for t in &s.symmetric {
                write_term(&mut w, t)?;
            }
            w.write_all(&[s.n_one_sided])?;
            for t in s.one_sided() {
                write_term(&mut w, t)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a cache written by [`StencilField::save_cache`]; returns
    /// `Ok(None)` when the stored key differs.
    pub fn load_cache(path: impl AsRef<Path>, key: &str) -> Result<Option<Self>> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(11)? != b"M2STENCIL1\n" {
            return Err(Error::FieldFormat("not a stencil cache".into()));
        }
        let stored = cur.line()?;
        if stored != key.as_bytes() {
            return Ok(None);
        }
        let nx = cur.u64()? as usize;
        let ny = cur.u64()? as usize;
        let nt = cur.u64()? as usize;
        let grid = GridM2::new(nx, ny, nt)?;
        let mut stencils = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let mut sym = [Term {
                weight: 0.0,
                offset: [0; 3],
            }; 6];
            for t in sym.iter_mut() {
                *t = cur.term()?;
            }
            let n = cur.take(1)?[0] as usize;
            if n > 6 {
                return Err(Error::FieldFormat("corrupt stencil cache".into()));
            }
            let one: Vec<Term> = (0..n).map(|_| cur.term()).collect::<Result<_>>()?;
            stencils.push(Stencil::new(sym, &one));
        }
        let radius = stencils.iter().map(Stencil::radius).fold(0.0, f64::max);
        Ok(Some(Self {
            grid,
            stencils,
            radius,
        }))
    }
}

/// Content hash of a dual field and relaxation, used as stencil-cache key.
pub fn cache_key(dual: &DualMetricField, eps_rel: f64) -> String {
    let mut h = Sha256::new();
    let g = dual.grid;
    for v in [g.nx, g.ny, g.ntheta] {
        h.update((v as u64).to_le_bytes());
    }
    h.update(eps_rel.to_le_bytes());
    for idx in 0..g.len() {
        let (d, eta) = dual.effective(idx);
        for v in d.iter().chain(eta.iter()) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_term(w: &mut impl Write, t: &Term) -> Result<()> {
    w.write_all(&t.weight.to_le_bytes())?;
    for c in t.offset {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::FieldFormat("truncated stencil cache".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn line(&mut self) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::FieldFormat("truncated stencil cache".into()))?;
        self.pos += end + 1;
        Ok(&rest[..end])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn term(&mut self) -> Result<Term> {
        let weight = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let mut offset = [0i32; 3];
        for c in offset.iter_mut() {
            *c = i32::from_le_bytes(self.take(4)?.try_into().unwrap());
        }
        Ok(Term { weight, offset })
    }
}

/// Offsets wrap around in θ, so any reach lands on a well-defined voxel;
/// only an offset that wraps back onto the voxel itself is unusable (the
/// angular grid cannot resolve the requested anisotropy at all).
fn check_theta_reach(grid: &GridM2, idx: usize, s: &Stencil) -> Result<()> {
    let n = grid.ntheta as i32;
    for t in s.symmetric.iter().chain(s.one_sided()) {
        let [a, b, c] = t.offset;
        if t.weight > 0.0 && a == 0 && b == 0 && c.rem_euclid(n) == 0 {
            return Err(Error::Stencil {
                voxel: idx,
                reason: format!(
                    "orientation offset {c} wraps onto the voxel itself with {n} orientations; the angular grid is too coarse for the requested anisotropy"
                ),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn reconstruct(terms: &[Term]) -> Matrix3<f64> {
        terms.iter().fold(Matrix3::zeros(), |acc, t| {
            let e = as_f64(&t.offset);
            acc + e * e.transpose() * t.weight
        })
    }

    fn rel_err(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    /// Random SPD matrix with prescribed condition measure `mu` (so the
    /// eigenvalue ratio is `mu²`).
    pub(crate) fn random_spd(rng: &mut impl Rng, mu: f64) -> Matrix3<f64> {
        let q = nalgebra::Rotation3::from_scaled_axis(Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ));
        let mid = rng.random_range(1.0..mu * mu);
        let d = Matrix3::from_diagonal(&Vector3::new(1.0, mid, mu * mu));
        q.matrix() * d * q.matrix().transpose()
    }

    #[test]
    fn identity_uses_axis_offsets() {
        let terms = selling_decompose(&Matrix3::identity()).unwrap();
        let mut weighted: Vec<(Offset, f64)> = terms
            .iter()
            .filter(|t| t.weight > 0.0)
            .map(|t| (t.offset, t.weight))
            .collect();
        weighted.sort_by_key(|(o, _)| *o);
        assert_eq!(
            weighted,
            vec![([0, 0, 1], 1.0), ([0, 1, 0], 1.0), ([1, 0, 0], 1.0)]
        );
    }

    #[test]
    fn diagonal_matrix_exact() {
        let d = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let terms = selling_decompose(&d).unwrap();
        assert!(rel_err(&reconstruct(&terms), &d) < 1e-14);
        let axis_weights: Vec<f64> = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
            .iter()
            .map(|o| {
                terms
                    .iter()
                    .filter(|t| &t.offset == o)
                    .map(|t| t.weight)
                    .sum()
            })
            .collect();
        assert_eq!(axis_weights, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn random_spd_mu10_bounds() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let bound = 4.0 * 3f64.sqrt() * 10.0;
        for _ in 0..1000 {
            let d = random_spd(&mut rng, 10.0);
            let terms = selling_decompose(&d).unwrap();
            assert!(rel_err(&reconstruct(&terms), &d) < 1e-10);
            for t in &terms {
                assert!(t.weight >= 0.0);
                if t.weight > 0.0 {
                    assert!(offset_norm(&t.offset) <= bound);
                }
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let d = random_spd(&mut rng, 20.0);
        let a = selling_decompose(&d).unwrap();
        let b = selling_decompose(&d).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn halfline_zero_is_empty() {
        assert!(halfline_decompose(&Vector3::zeros(), 0.1).unwrap().is_empty());
    }

    #[test]
    fn halfline_rejects_bad_relaxation() {
        assert!(halfline_decompose(&Vector3::x(), 1.0).is_err());
        assert!(halfline_decompose(&Vector3::x(), 0.0).is_err());
    }

    fn check_sandwich(eta: &Vector3<f64>, eps: f64, rng: &mut impl Rng, samples: usize) {
        let terms = halfline_decompose(eta, eps).unwrap();
        for t in &terms {
            assert!(as_f64(&t.offset).dot(eta) >= 0.0);
            assert!(offset_norm(&t.offset) <= 4.0 * 3f64.sqrt() / eps + 1e-9);
        }
        let n2 = eta.norm_squared();
        for _ in 0..samples {
            let p = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let lin = p.dot(eta);
            let val: f64 = terms
                .iter()
                .map(|t| t.weight * dot_offset(&p, &t.offset).max(0.0).powi(2))
                .sum();
            let lower = lin.max(0.0).powi(2);
            let upper = lower + eps * eps * (p.norm_squared() * n2 - lin * lin);
            let slack = 1e-10 * (1.0 + upper);
            assert!(val >= lower - slack, "lower bound: {val} < {lower}");
            assert!(val <= upper + slack, "upper bound: {val} > {upper}");
        }
    }

    #[test]
    fn halfline_sandwich_axis() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        check_sandwich(&Vector3::x(), 0.1, &mut rng, 10_000);
    }

    #[test]
    fn halfline_sandwich_random() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let eta = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let eps = rng.random_range(0.05..0.5);
            check_sandwich(&eta, eps, &mut rng, 200);
        }
    }

    #[test]
    fn isotropic_field_has_six_neighbours() {
        let grid = GridM2::new(6, 6, 8).unwrap();
        let f = StencilField::from_index_coefficients(
            grid,
            |_| (Matrix3::identity(), Vector3::zeros()),
            0.1,
        )
        .unwrap();
        assert_eq!(f.radius, 1.0);
        for s in &f.stencils {
            assert!(s.one_sided().is_empty());
            assert_eq!(s.symmetric.iter().filter(|t| t.weight > 0.0).count(), 3);
        }
    }

    #[test]
    fn radius_grows_like_inverse_relaxation() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(31);
        let etas: Vec<Vector3<f64>> = (0..300)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let radii: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| {
                etas.iter()
                    .flat_map(|eta| halfline_decompose(eta, e).unwrap())
                    .map(|t| offset_norm(&t.offset))
                    .fold(0.0, f64::max)
            })
            .collect();
        for (r, e) in radii.iter().zip([0.2, 0.1, 0.05]) {
            assert!(*r <= 4.0 * 3f64.sqrt() / e, "{radii:?}");
        }
        let ratio = radii[2] / radii[0];
        assert!((2.5..=6.0).contains(&ratio), "{radii:?}");
    }

    #[test]
    fn theta_reach_is_checked() {
        // a single orientation: the pure-θ offset is the voxel itself
        let grid = GridM2::new(4, 4, 1).unwrap();
        let res = StencilField::from_index_coefficients(grid, |_| (Matrix3::identity(), Vector3::zeros()), 0.1);
        assert!(matches!(res, Err(Error::Stencil { .. })));
        // long θ offsets past a full turn wrap onto other voxels and are kept
        let grid = GridM2::new(4, 4, 4).unwrap();
        let v = Vector3::new(0.2, 0.0, 1.0).normalize();
        let d = v * v.transpose() * 1e4 + Matrix3::identity();
        let f = StencilField::from_index_coefficients(grid, move |_| (d, Vector3::zeros()), 0.1).unwrap();
        assert!(f.stencils[0].symmetric.iter().any(|t| t.weight > 0.0 && t.offset[2].abs() >= 4));
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridM2::new(3, 3, 4).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let mats: Vec<(Matrix3<f64>, Vector3<f64>)> = (0..grid.len())
            .map(|_| (random_spd(&mut rng, 3.0), Vector3::new(1.0, 0.5, 0.0)))
            .collect();
        let f = StencilField::from_index_coefficients(grid, |i| mats[i], 0.2).unwrap();
        let path = dir.path().join("s.bin");
        f.save_cache(&path, "abc").unwrap();
        let back = StencilField::load_cache(&path, "abc").unwrap().unwrap();
        assert_eq!(back.stencils, f.stencils);
        assert!(StencilField::load_cache(&path, "other").unwrap().is_none());
    }

    proptest! {
        #[test]
        fn selling_reconstructs(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
                                s1 in 0.1f64..10.0, s2 in 0.1f64..10.0, s3 in 0.1f64..10.0) {
            let q = nalgebra::Rotation3::from_scaled_axis(Vector3::new(a, b, c));
            let d = q.matrix() * Matrix3::from_diagonal(&Vector3::new(s1, s2, s3)) * q.matrix().transpose();
            let terms = selling_decompose(&d).unwrap();
            prop_assert!(rel_err(&reconstruct(&terms), &d) < 1e-10);
            prop_assert!(terms.iter().all(|t| t.weight >= 0.0));
            prop_assert!(terms.iter().filter(|t| t.weight > 0.0).all(|t| t.offset != [0, 0, 0]));
        }
    }
}
