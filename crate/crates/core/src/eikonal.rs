//! Single-pass fast marching for the causal scheme
//! `Σ λᵢ max(0, W(p)−W(p−ėᵢ), W(p)−W(p+ėᵢ))² + Σ μⱼ max(0, W(p)−W(p−ḟⱼ))² = 1`
//! on the index lattice (cost already folded into the stencil weights).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{io, GridM2, LiftedField, PointM2};
use crate::stencil::{Offset, Stencil, StencilField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Far,
    Trial,
    Accepted,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Key(f64);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Solves the one-voxel scheme for `w` given `(weight, neighbour value)`
/// pairs. Terms are activated in increasing neighbour value; the largest
/// root of `Σ wᵢ (w − vᵢ)² = 1` over the active set is returned once it no
/// longer exceeds the next neighbour value. Infinite values are ignored.
pub fn solve_update(terms: &mut [(f64, f64)]) -> f64 {
    terms.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut a, mut b, mut c) = (0.0, 0.0, -1.0);
    let mut root = f64::INFINITY;
    for (n, &(w, v)) in terms.iter().enumerate() {
        if !v.is_finite() {
            break;
        }
        if w <= 0.0 {
            continue;
        }
        if n > 0 && root <= v {
            break;
        }
        a += w;
        b -= 2.0 * w * v;
        c += w * v * v;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        root = (-b + disc.sqrt()) / (2.0 * a);
    }
    root
}

/// Candidate value at `idx` from the accepted neighbours only.
fn local_update_with(grid: &GridM2, stencil: &Stencil, idx: usize, value: impl Fn(usize) -> f64) -> f64 {
    let mut terms: [(f64, f64); 12] = [(0.0, f64::INFINITY); 12];
    let mut n = 0;
    let get = |off: Offset| grid.offset(idx, off).map(&value).unwrap_or(f64::INFINITY);
    for t in &stencil.symmetric {
        if t.weight > 0.0 {
            let [a, b, c] = t.offset;
            let v = get([-a, -b, -c]).min(get(t.offset));
            terms[n] = (t.weight, v);
            n += 1;
        }
    }
    for t in stencil.one_sided() {
        let [a, b, c] = t.offset;
        terms[n] = (t.weight, get([-a, -b, -c]));
        n += 1;
    }
    solve_update(&mut terms[..n])
}

/// Public form of the local solver: uses `values` with `+∞` for unknown
/// neighbours.
pub fn local_update(grid: &GridM2, stencil: &Stencil, idx: usize, values: &[f64]) -> f64 {
    local_update_with(grid, stencil, idx, |i| values[i])
}

/// Source voxels for a sweep (non-empty, deduplicated).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub voxels: Vec<usize>,
}

impl SourceSet {
    pub fn new(grid: &GridM2, mut voxels: Vec<usize>) -> Result<Self> {
        if voxels.is_empty() {
            return Err(Error::EmptySources);
        }
        if let Some(&v) = voxels.iter().find(|&&v| v >= grid.len()) {
            return Err(Error::InvalidParameter(format!("source voxel {v} outside grid")));
        }
        voxels.sort_unstable();
        voxels.dedup();
        Ok(Self { voxels })
    }

    /// Snaps continuous points to their nearest voxels.
    pub fn from_points(grid: &GridM2, points: &[PointM2]) -> Result<Self> {
        let v = points
            .iter()
            .map(|p| grid.nearest_voxel(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, v)
    }
}

#[derive(Debug, Clone, Default)]
pub enum Stop {
    /// Run until every reachable voxel is accepted.
    #[default]
    Full,
    /// Stop once all targets are accepted and the front has advanced a
    /// further `margin` (relative to the largest target value), so that
    /// gradients around the targets are available.
    Targets { voxels: Vec<usize>, margin: f64 },
    /// Stop once the front value exceeds the cap.
    ValueCap(f64),
}

#[derive(Debug, Clone)]
pub struct DistanceMap {
    pub values: LiftedField,
    pub state: Vec<State>,
    /// Acceptance rank of each voxel (`u32::MAX` if never accepted).
    pub order: Vec<u32>,
    pub sources: Vec<usize>,
    pub accepted: usize,
}

impl DistanceMap {
    pub fn grid(&self) -> &GridM2 {
        &self.values.grid
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values.values[idx]
    }

    /// Trilinear interpolation; infinite if any corner with positive weight is
    /// unreached.
    pub fn interpolate(&self, p: &PointM2) -> Result<f64> {
        let tri = self.grid().trilinear(p)?;
        let mut acc = 0.0;
        for (i, w) in tri.idx.iter().zip(tri.wts) {
            if w > 0.0 {
                acc += w * self.values.values[*i];
            }
        }
        Ok(acc)
    }

    /// Smallest value among the interpolation corners of `p` (`+∞` if none
    /// is reached); non-increasing along any sensible descent even where
    /// the interpolated value is not.
    pub fn cell_floor(&self, p: &PointM2) -> Result<f64> {
        let tri = self.grid().trilinear(p)?;
        Ok(tri
            .idx
            .iter()
            .zip(tri.wts)
            .filter(|&(_, w)| w > 0.0)
            .map(|(i, _)| self.values.values[*i])
            .fold(f64::INFINITY, f64::min))
    }

    /// Nodal gradient `(∂x, ∂y, ∂θ)` (θ per radian) by central differences.
    /// Where a neighbour is unreached or outside the grid its value is taken
    /// as above `W(idx)`: the one-sided difference is kept only if it points
    /// downhill, otherwise the node is a minimum along that axis.
    pub fn gradient_node(&self, idx: usize) -> Option<Vector3<f64>> {
        let g = self.grid();
        let w0 = self.value(idx);
        if !w0.is_finite() {
            return None;
        }
        let d = |off: Offset| -> Option<f64> {
            let [a, b, c] = off;
            let p = g.offset(idx, off).map(|i| self.value(i)).filter(|v| v.is_finite());
            let m = g.offset(idx, [-a, -b, -c]).map(|i| self.value(i)).filter(|v| v.is_finite());
            match (p, m) {
                (Some(p), Some(m)) => Some(0.5 * (p - m)),
                (Some(p), None) => Some((p - w0).min(0.0)),
                (None, Some(m)) => Some((w0 - m).max(0.0)),
                (None, None) => None,
            }
        };
        let gx = d([1, 0, 0]).unwrap_or(0.0);
        let gy = d([0, 1, 0]).unwrap_or(0.0);
        let gt = d([0, 0, 1]).unwrap_or(0.0) / g.htheta();
        Some(Vector3::new(gx, gy, gt))
    }

    /// Interpolated gradient covector at a continuous point.
    pub fn gradient_at(&self, p: &PointM2) -> Result<Vector3<f64>> {
        let tri = self.grid().trilinear(p)?;
        let mut acc = Vector3::zeros();
        let mut wsum = 0.0;
        for (i, w) in tri.idx.iter().zip(tri.wts) {
            if w <= 0.0 {
                continue;
            }
            if let Some(gr) = self.gradient_node(*i) {
                acc += gr * w;
                wsum += w;
            }
        }
        if wsum == 0.0 {
            return Err(Error::Unreachable);
        }
        Ok(acc / wsum)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_field(&self.values, path)
    }

    /// Acceptance order as a field (unaccepted voxels as `+∞`), for front
    /// animations.
    pub fn write_order(&self, path: impl AsRef<Path>) -> Result<()> {
        let values = self
            .order
            .iter()
            .map(|&o| if o == u32::MAX { f64::INFINITY } else { o as f64 })
            .collect();
        io::write_field(&LiftedField::from_values(*self.grid(), values)?, path)
    }
}

/// Reverse stencil adjacency in compressed form: `rev[start[n]..start[n+1]]`
/// lists the voxels whose stencil reaches `n`.
struct ReverseAdjacency {
    start: Vec<u32>,
    rev: Vec<u32>,
}

fn dependencies(grid: &GridM2, s: &Stencil, idx: usize, mut f: impl FnMut(usize)) {
    for t in &s.symmetric {
        if t.weight > 0.0 {
            let [a, b, c] = t.offset;
            for off in [t.offset, [-a, -b, -c]] {
                if let Some(n) = grid.offset(idx, off) {
                    f(n);
                }
            }
        }
    }
    for t in s.one_sided() {
        let [a, b, c] = t.offset;
        if let Some(n) = grid.offset(idx, [-a, -b, -c]) {
            f(n);
        }
    }
}

impl ReverseAdjacency {
    fn build(field: &StencilField) -> Self {
        let g = &field.grid;
        let counts: Vec<u32> = {
            let mut c = vec![0u32; g.len() + 1];
            for (idx, s) in field.stencils.iter().enumerate() {
                dependencies(g, s, idx, |n| c[n + 1] += 1);
            }
            c
        };
        let mut start = counts;
        for i in 1..start.len() {
            start[i] += start[i - 1];
        }
        let mut fill = start.clone();
        let mut rev = vec![0u32; *start.last().unwrap() as usize];
        for (idx, s) in field.stencils.iter().enumerate() {
            dependencies(g, s, idx, |n| {
                rev[fill[n] as usize] = idx as u32;
                fill[n] += 1;
            });
        }
        Self { start, rev }
    }

    fn of(&self, n: usize) -> &[u32] {
        &self.rev[self.start[n] as usize..self.start[n + 1] as usize]
    }
}

/// Fast marching from a set of sources (distance to the nearest source).
pub fn fast_march(stencils: &StencilField, sources: &SourceSet, stop: &Stop) -> Result<DistanceMap> {
    let g = stencils.grid;
    if g.len() >= u32::MAX as usize {
        return Err(Error::InvalidParameter("grid too large".into()));
    }
    if let Some(&v) = sources.voxels.iter().find(|&&v| v >= g.len()) {
        return Err(Error::InvalidParameter(format!("source voxel {v} outside grid")));
    }
    if sources.voxels.is_empty() {
        return Err(Error::EmptySources);
    }
    let adj = ReverseAdjacency::build(stencils);
    let n = g.len();
    let mut values = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];
    let mut order = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    for &s in &sources.voxels {
        values[s] = 0.0;
        state[s] = State::Trial;
        heap.push(Reverse((Key(0.0), s)));
    }
    let mut remaining_targets = match stop {
        Stop::Targets { voxels, .. } => {
            let mut t = voxels.clone();
            t.sort_unstable();
            t.dedup();
            t.len()
        }
        _ => 0,
    };
    let mut is_target = vec![false; if remaining_targets > 0 { n } else { 0 }];
    if let Stop::Targets { voxels, .. } = stop {
        for &v in voxels {
            if v < n {
                is_target[v] = true;
            } else {
                return Err(Error::InvalidParameter(format!("target voxel {v} outside grid")));
            }
        }
    }
    let mut cap = match stop {
        Stop::ValueCap(c) => *c,
        _ => f64::INFINITY,
    };
    let mut accepted = 0usize;
    let mut max_target: f64 = 0.0;
    while let Some(Reverse((Key(v), p))) = heap.pop() {
        if state[p] == State::Accepted || v != values[p] {
            continue;
        }
        if v > cap {
            break;
        }
        state[p] = State::Accepted;
        order[p] = accepted as u32;
        accepted += 1;
        if remaining_targets > 0 && is_target[p] {
            remaining_targets -= 1;
            max_target = max_target.max(v);
            if remaining_targets == 0 {
                if let Stop::Targets { margin, .. } = stop {
                    cap = max_target * (1.0 + margin);
                }
            }
        }
        for &q in adj.of(p) {
            let q = q as usize;
            if state[q] == State::Accepted {
                continue;
            }
            let cand = local_update_with(&g, &stencils.stencils[q], q, |i| {
                if state[i] == State::Accepted {
                    values[i]
                } else {
                    f64::INFINITY
                }
            });
            if cand < values[q] {
                values[q] = cand;
                state[q] = State::Trial;
                heap.push(Reverse((Key(cand), q)));
            }
        }
    }
    // trial values are provisional; report only accepted ones
    for i in 0..n {
        if state[i] != State::Accepted {
            values[i] = f64::INFINITY;
        }
    }
    Ok(DistanceMap {
        values: LiftedField { grid: g, values },
        state,
        order,
        sources: sources.voxels.clone(),
        accepted,
    })
}

/// Discrete characteristic direction at a voxel (index units): the
/// derivative of the scheme in its own upwind differences,
/// `Σ λᵢ δᵢ (±ėᵢ) + Σ μⱼ (δⱼ)₊ ḟⱼ`, each term oriented from the smaller
/// neighbour towards the voxel. Where the scheme holds it has unit dual
/// speed, `⟨δW, v⟩ = 𝔉W = 1`. Every active term points away from a
/// strictly smaller value, so following `−v` always descends.
pub fn upwind_flow(map: &DistanceMap, stencils: &StencilField, idx: usize) -> Option<Vector3<f64>> {
    let g = map.grid();
    let w = map.value(idx);
    if !w.is_finite() {
        return None;
    }
    let s = &stencils.stencils[idx];
    let val = |off: Offset| g.offset(idx, off).map(|i| map.value(i)).unwrap_or(f64::INFINITY);
    let vec = |o: Offset| Vector3::new(o[0] as f64, o[1] as f64, o[2] as f64);
    let mut v = Vector3::zeros();
    for t in &s.symmetric {
        if t.weight > 0.0 {
            let [a, b, c] = t.offset;
            let back = w - val([-a, -b, -c]);
            let fwd = w - val(t.offset);
            if back >= fwd && back > 0.0 {
                v += vec(t.offset) * (t.weight * back);
            } else if fwd > 0.0 {
                v -= vec(t.offset) * (t.weight * fwd);
            }
        }
    }
    for t in s.one_sided() {
        let [a, b, c] = t.offset;
        let d = w - val([-a, -b, -c]);
        if d > 0.0 {
            v += vec(t.offset) * (t.weight * d);
        }
    }
    Some(v)
}

/// Scheme operator `𝔉W(p)` evaluated with the final values.
pub fn scheme_operator(map: &DistanceMap, stencils: &StencilField, idx: usize) -> f64 {
    let g = map.grid();
    let w = map.value(idx);
    let s = &stencils.stencils[idx];
    let val = |off: Offset| g.offset(idx, off).map(|i| map.value(i)).unwrap_or(f64::INFINITY);
    let mut acc = 0.0;
    for t in &s.symmetric {
        if t.weight > 0.0 {
            let [a, b, c] = t.offset;
            let d = (w - val([-a, -b, -c])).max(w - val(t.offset)).max(0.0);
            acc += t.weight * d * d;
        }
    }
    for t in s.one_sided() {
        let [a, b, c] = t.offset;
        let d = (w - val([-a, -b, -c])).max(0.0);
        acc += t.weight * d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub struct SchemeResidual {
    pub max: f64,
    pub checked: usize,
}

/// `max |𝔉W − 1|` over accepted non-source voxels whose whole stencil lies
/// inside the grid and is accepted.
pub fn scheme_residual(map: &DistanceMap, stencils: &StencilField) -> SchemeResidual {
    let g = map.grid();
    let is_source = |i: usize| map.sources.binary_search(&i).is_ok();
    let (max, checked) = (0..g.len())
        .into_par_iter()
        .filter(|&idx| map.state[idx] == State::Accepted && !is_source(idx))
        .filter(|&idx| {
            let mut ok = true;
            let s = &stencils.stencils[idx];
            let mut count = 0;
            dependencies(g, s, idx, |n| {
                count += 1;
                ok &= map.state[n] == State::Accepted;
            });
            let expected = s.symmetric.iter().filter(|t| t.weight > 0.0).count() * 2
                + s.one_sided().len();
            ok && count == expected
        })
        .map(|idx| ((scheme_operator(map, stencils, idx) - 1.0).abs(), 1usize))
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    SchemeResidual { max, checked }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::{selling_decompose, Term};
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn iso_field(grid: GridM2) -> StencilField {
        let sym = selling_decompose(&Matrix3::identity()).unwrap();
        StencilField::uniform(grid, Stencil::new(sym, &[]))
    }

    #[test]
    fn single_term_update() {
        assert_eq!(solve_update(&mut [(1.0, 0.0)]), 1.0);
    }

    #[test]
    fn two_orthogonal_terms() {
        let w = solve_update(&mut [(1.0, 0.0), (1.0, 0.0)]);
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn no_finite_neighbour() {
        assert!(solve_update(&mut [(1.0, f64::INFINITY)]).is_infinite());
        assert!(solve_update(&mut []).is_infinite());
    }

    /// Exhaustive oracle: the scheme value at `w` is monotone, so the unique
    /// solution is the `w` where `Σ wᵢ (w − vᵢ)₊² = 1`.
    fn oracle(terms: &[(f64, f64)]) -> f64 {
        let f = |w: f64| -> f64 { terms.iter().map(|(a, v)| a * (w - v).max(0.0).powi(2)).sum() };
        let lo0 = terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (lo0, lo0 + 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn update_matches_bisection_and_causality() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..2000 {
            let n = rng.random_range(1..7);
            let terms: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0.01..3.0), rng.random_range(0.0..2.0)))
                .collect();
            let w = solve_update(&mut terms.clone());
            let o = oracle(&terms);
            assert!((w - o).abs() < 1e-9 * (1.0 + o), "{w} vs {o}");
            let vmin = terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
            assert!(w > vmin);
            // the active set is exactly the neighbours below the root
            let active_max = terms
                .iter()
                .filter(|t| t.1 < w)
                .map(|t| t.1)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(w >= active_max);
        }
    }

    #[test]
    fn isotropic_distance_accuracy() {
        let grid = GridM2::new(41, 41, 1).unwrap();
        // a single angle layer behaves like a 2D problem on the index lattice
        let f = iso_field(grid);
        let c = grid.index(20, 20, 0);
        let m = fast_march(&f, &SourceSet::new(&grid, vec![c]).unwrap(), &Stop::Full).unwrap();
        for idx in 0..grid.len() {
            let (i, j, _) = grid.coords(idx);
            let r = ((i as f64 - 20.0).powi(2) + (j as f64 - 20.0).powi(2)).sqrt();
            if (5.0..=20.0).contains(&r) {
                let err = (m.value(idx) - r).abs() / r;
                assert!(err <= 2.0 / r, "r = {r}: {}", m.value(idx));
            }
        }
        let res = scheme_residual(&m, &f);
        assert!(res.checked > 1000 && res.max < 1e-9, "{res:?}");
    }

    #[test]
    fn multi_source_is_min_of_single_runs() {
        let grid = GridM2::new(20, 18, 8).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let stencils: Vec<Stencil> = (0..grid.len())
            .map(|_| {
                let b = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let d = b * b.transpose() + Matrix3::identity();
                Stencil::new(selling_decompose(&d).unwrap(), &[])
            })
            .collect();
        let f = StencilField {
            grid,
            radius: stencils.iter().map(Stencil::radius).fold(0.0, f64::max),
            stencils,
        };
        let a = grid.index(3, 4, 1);
        let b = grid.index(15, 12, 6);
        let run = |v: Vec<usize>| fast_march(&f, &SourceSet::new(&grid, v).unwrap(), &Stop::Full).unwrap();
        let ma = run(vec![a]);
        let mb = run(vec![b]);
        let mab = run(vec![a, b]);
        // The joint solution never exceeds the pointwise minimum (up to
        // round-off). Near the interface the wide stencils mix neighbours of
        // both fronts, which lowers the value slightly; far from it the
        // values are bitwise identical.
        let mut equal = 0;
        for i in 0..grid.len() {
            let m = ma.value(i).min(mb.value(i));
            assert!(mab.value(i) <= m * (1.0 + 1e-12));
            assert!(m - mab.value(i) <= 0.05 * m);
            if (ma.value(i) - mb.value(i)).abs() > 0.6 * m {
                assert_eq!(mab.value(i), m);
            }
            equal += (mab.value(i) == m) as usize;
        }
        assert!(equal as f64 >= 0.8 * grid.len() as f64, "{equal}");
    }

    #[test]
    fn acceptance_is_monotone_and_deterministic() {
        let grid = GridM2::new(15, 15, 4).unwrap();
        let f = iso_field(grid);
        let src = SourceSet::new(&grid, vec![grid.index(7, 7, 0)]).unwrap();
        let m = fast_march(&f, &src, &Stop::Full).unwrap();
        let mut by_order: Vec<(u32, f64)> = (0..grid.len()).map(|i| (m.order[i], m.value(i))).collect();
        by_order.sort_by_key(|t| t.0);
        assert!(by_order.windows(2).all(|w| w[0].1 <= w[1].1));
        let m2 = fast_march(&f, &src, &Stop::Full).unwrap();
        assert_eq!(m.order, m2.order);
    }

    #[test]
    fn early_stop_accepts_targets() {
        let grid = GridM2::new(30, 30, 1).unwrap();
        let f = iso_field(grid);
        let src = SourceSet::new(&grid, vec![grid.index(2, 2, 0)]).unwrap();
        let t = grid.index(10, 2, 0);
        let m = fast_march(&f, &src, &Stop::Targets { voxels: vec![t], margin: 0.1 }).unwrap();
        assert_eq!(m.state[t], State::Accepted);
        assert!(m.accepted < grid.len());
        assert!(m.value(grid.index(29, 29, 0)).is_infinite());
    }

    #[test]
    fn empty_sources_rejected() {
        let grid = GridM2::new(4, 4, 4).unwrap();
        assert!(matches!(SourceSet::new(&grid, vec![]), Err(Error::EmptySources)));
        assert!(SourceSet::from_points(&grid, &[PointM2::new(10.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn one_sided_terms_propagate_forward() {
        // pure forward transport along +x plus weak isotropic diffusion
        let grid = GridM2::new(41, 9, 1).unwrap();
        let sym = selling_decompose(&(Matrix3::identity() * 0.01)).unwrap();
        let one = [Term { weight: 1.0, offset: [1, 0, 0] }];
        let f = StencilField::uniform(grid, Stencil::new(sym, &one));
        let src = SourceSet::new(&grid, vec![grid.index(20, 4, 0)]).unwrap();
        let m = fast_march(&f, &src, &Stop::Full).unwrap();
        let fwd = m.value(grid.index(30, 4, 0));
        let bwd = m.value(grid.index(10, 4, 0));
        assert!(fwd < bwd);
        assert!(m.order[grid.index(30, 4, 0)] < m.order[grid.index(10, 4, 0)]);
    }

    #[test]
    fn upwind_flow_follows_characteristics() {
        let grid = GridM2::new(21, 21, 4).unwrap();
        let f = iso_field(grid);
        let src = SourceSet::new(&grid, vec![grid.index(10, 10, 0)]).unwrap();
        let m = fast_march(&f, &src, &Stop::Full).unwrap();
        assert_eq!(upwind_flow(&m, &f, grid.index(15, 10, 0)), Some(Vector3::new(1.0, 0.0, 0.0)));
        assert_eq!(upwind_flow(&m, &f, grid.index(10, 4, 0)), Some(Vector3::new(0.0, -1.0, 0.0)));
        assert_eq!(upwind_flow(&m, &f, grid.index(10, 10, 0)), Some(Vector3::zeros()));
        // off-axis: pairing with the upwind differences is the scheme value
        let idx = grid.index(16, 13, 1);
        let v = upwind_flow(&m, &f, idx).unwrap();
        assert!(v.x > 0.0 && v.y > 0.0 && v.z > 0.0);
        assert!((scheme_operator(&m, &f, idx) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn upwind_flow_never_vanishes_off_source() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let grid = GridM2::new(12, 10, 8).unwrap();
        let stencils = (0..grid.len())
            .map(|_| {
                let d = crate::stencil::tests::random_spd(&mut rng, 6.0);
                Stencil::new(selling_decompose(&d).unwrap(), &[])
            })
            .collect();
        let f = StencilField { grid, stencils, radius: 0.0 };
        let src = SourceSet::new(&grid, vec![grid.index(3, 4, 2)]).unwrap();
        let m = fast_march(&f, &src, &Stop::Full).unwrap();
        for idx in 0..grid.len() {
            if idx != src.voxels[0] {
                assert!(upwind_flow(&m, &f, idx).unwrap().norm() > 0.0, "voxel {idx}");
            }
        }
    }

    #[test]
    fn cell_floor_is_smallest_corner() {
        let grid = GridM2::new(9, 9, 4).unwrap();
        let f = iso_field(grid);
        let src = SourceSet::new(&grid, vec![grid.index(2, 2, 0)]).unwrap();
        let m = fast_march(&f, &src, &Stop::Full).unwrap();
        let p = PointM2::new(4.5, 2.0, 0.0);
        assert_eq!(m.cell_floor(&p).unwrap(), m.value(grid.index(4, 2, 0)));
        assert!(m.interpolate(&p).unwrap() > m.cell_floor(&p).unwrap());
    }

    proptest! {
        #[test]
        fn update_is_monotone_in_neighbours(
            vals in proptest::collection::vec(0.0f64..3.0, 1..6),
            bump in 0.0f64..1.0, which in 0usize..6,
        ) {
            let terms: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, v)| (0.5 + i as f64 * 0.3, *v)).collect();
            let base = solve_update(&mut terms.clone());
            let mut raised = terms.clone();
            let k = which % raised.len();
            raised[k].1 += bump;
            prop_assert!(solve_update(&mut raised) >= base - 1e-12);
        }
    }
}
