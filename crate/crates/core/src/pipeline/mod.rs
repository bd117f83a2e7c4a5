//! End-to-end tracking: lifting, cost, metric, stencils, fast marching and
//! backtracking, for single vessels and for vascular trees.

pub mod config;
pub mod eval;
pub mod phantom;
pub mod star;

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::diffgeo::hessian_field;
use crate::eikonal::{fast_march, DistanceMap, SourceSet, Stop};
use crate::error::{Error, Result};
use crate::geodesic::{backtrack_upwind, Geodesic};
use crate::grid::io::{self, MarkerKind, Polyline};
use crate::grid::{Field2, GridM2, LiftedField, PointM2};
use crate::lifting::{build_cake_bank, orientation_score, WaveletBank};
use crate::metric::{
    base_metric, crossing_weight, data_driven_forward_covector, data_driven_metric, diagonalize,
    dual_coefficients, mixed_covector, mixed_metric, CovectorField, DualMetricField, MetricFieldSym,
};
use crate::stencil::StencilField;
use crate::vesselness::{score_cost, vesselness_cost};

pub use config::{Annotated, CostConfig, CostKind, MetricKind, TrackingConfig};

/// The lifted image shared by all runs on it.
#[derive(Debug, Clone)]
pub struct Session {
    pub cfg: TrackingConfig,
    pub image: Field2,
    pub bank: WaveletBank,
    pub score: LiftedField,
}

/// Cost field plus the vesselness it came from (if any).
#[derive(Debug, Clone)]
pub struct Cost {
    pub cost: LiftedField,
    pub vesselness: Option<LiftedField>,
}

/// Everything the solver needs for one cost.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub cost: LiftedField,
    pub dual: DualMetricField,
    pub stencils: StencilField,
}

#[derive(Debug, Clone)]
pub struct SingleTrack {
    pub geodesic: Geodesic,
    pub map: Option<DistanceMap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Run {
    /// Tips to the nearest bifurcation or seed (thin-vessel cost).
    TipToBifurcation,
    /// Bifurcations to the nearest seed (thick-vessel cost).
    BifurcationToSeed,
    /// Per-tree tracking from a tip to its own seed.
    TipToSeed,
}

impl Run {
    pub fn tag(self) -> &'static str {
        match self {
            Run::TipToBifurcation => "run1",
            Run::BifurcationToSeed => "run2",
            Run::TipToSeed => "tree",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackedPath {
    pub run: Run,
    /// Index of the start point within its annotation list.
    pub index: usize,
    pub start: Annotated,
    pub result: std::result::Result<Geodesic, String>,
}

#[derive(Debug, Clone)]
pub struct TreeResult {
    pub paths: Vec<TrackedPath>,
    /// Number of fast-marching sweeps performed.
    pub sweeps: usize,
}

impl TreeResult {
    pub fn geodesics(&self) -> Vec<&Geodesic> {
        self.paths.iter().filter_map(|p| p.result.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> Vec<&TrackedPath> {
        self.paths.iter().filter(|p| p.result.is_err()).collect()
    }
}

/// Orientation with the lowest cost at the pixel nearest to `(x, y)`.
pub fn infer_theta(cost: &LiftedField, x: f64, y: f64) -> Result<f64> {
    let g = cost.grid;
    let v = g.nearest_voxel(&PointM2::new(x, y, 0.0))?;
    let (i, j, _) = g.coords(v);
    let k = (0..g.ntheta)
        .min_by(|&a, &b| cost.at(i, j, a).total_cmp(&cost.at(i, j, b)))
        .unwrap_or(0);
    Ok(g.theta(k))
}

/// Candidate states for an annotated point: its given orientation, or the
/// inferred line orientation in both senses (lines carry no direction).
pub fn candidates(cost: &LiftedField, p: &Annotated) -> Result<Vec<PointM2>> {
    Ok(match p.theta {
        Some(t) => vec![PointM2::new(p.x, p.y, t)],
        None => {
            let t = infer_theta(cost, p.x, p.y)?;
            vec![PointM2::new(p.x, p.y, t), PointM2::new(p.x, p.y, t + PI)]
        }
    })
}

fn trilinear_voxels(grid: &GridM2, p: &PointM2) -> Result<Vec<usize>> {
    let tri = grid.trilinear(p)?;
    Ok(tri.idx.to_vec())
}

impl Session {
    pub fn new(cfg: TrackingConfig, image: Field2) -> Result<Self> {
        cfg.validate()?;
        cfg.check_points_inside(image.width, image.height)?;
        let bank = build_cake_bank(cfg.ntheta, cfg.lifting.kernel_size, cfg.lifting.cake())?;
        let score = orientation_score(&image, &bank)?;
        Ok(Self { cfg, image, bank, score })
    }

    /// Loads the configured image and lifts it.
    pub fn from_config(cfg: TrackingConfig) -> Result<Self> {
        let path = cfg
            .image
            .clone()
            .ok_or_else(|| Error::Config("no image given".into()))?;
        let image = io::load_image(path)?;
        Self::new(cfg, image)
    }

    pub fn grid(&self) -> GridM2 {
        self.score.grid
    }

    pub fn cost(&self, c: &CostConfig) -> Result<Cost> {
        match c.kind {
            CostKind::Vesselness => {
                let m = vesselness_cost(&self.score, &c.vesselness)?;
                Ok(Cost {
                    cost: m.cost,
                    vesselness: Some(m.vesselness),
                })
            }
            CostKind::Score => Ok(Cost {
                cost: score_cost(&self.score, c.score_contrast)?,
                vesselness: None,
            }),
            CostKind::Constant => Ok(Cost {
                cost: LiftedField::constant(self.grid(), 1.0),
                vesselness: None,
            }),
        }
    }

    /// Metric `G` and forward covector for the configured model.
    pub fn metric(&self, cost: &LiftedField) -> Result<(MetricFieldSym, CovectorField)> {
        let p = &self.cfg.model;
        let (g_li, w_li) = base_metric(cost, p)?;
        if self.cfg.metric == MetricKind::LeftInvariant || p.lambda_dd == 0.0 {
            return Ok((g_li, w_li));
        }
        let hs = &self.cfg.hessian;
        let h = hessian_field(&self.score, p.xi, hs.sigma_s, hs.sigma_a)?;
        let g_dd = data_driven_metric(&g_li, &h, cost, p)?;
        let gauge = diagonalize(&g_dd)?;
        let w_dd = data_driven_forward_covector(&gauge, p);
        let crossings = self.cfg.points.crossings()?;
        if self.cfg.metric == MetricKind::DataDriven || crossings.is_empty() {
            return Ok((g_dd, w_dd));
        }
        let g = self.grid();
        let kappa = crossing_weight(g.nx, g.ny, &crossings, self.cfg.mixed.a, self.cfg.mixed.sigma);
        Ok((mixed_metric(&g_li, &g_dd, &kappa)?, mixed_covector(&w_li, &w_dd, &kappa)?))
    }

    pub fn geometry(&self, cost: LiftedField) -> Result<Geometry> {
        let (g, w) = self.metric(&cost)?;
        let dual = dual_coefficients(&g, &w, &cost)?;
        let stencils = StencilField::build(&dual, self.cfg.stencil_relaxation)?;
        Ok(Geometry { cost, dual, stencils })
    }

    fn sources(&self, geo: &Geometry, pts: &[Annotated]) -> Result<SourceSet> {
        let g = self.grid();
        let mut voxels = Vec::new();
        for p in pts {
            for c in candidates(&geo.cost, p)? {
                voxels.push(g.nearest_voxel(&c)?);
            }
        }
        SourceSet::new(&g, voxels)
    }

    fn march(&self, geo: &Geometry, sources: &[Annotated], targets: &[Vec<PointM2>]) -> Result<DistanceMap> {
        let g = self.grid();
        let src = self.sources(geo, sources)?;
        let mut voxels = Vec::new();
        for c in targets.iter().flatten() {
            voxels.extend(trilinear_voxels(&g, c)?);
        }
        let stop = if voxels.is_empty() {
            Stop::Full
        } else {
            Stop::Targets {
                voxels,
                margin: self.cfg.stop_margin,
            }
        };
        fast_march(&geo.stencils, &src, &stop)
    }

    /// Backtracks from the candidate with the smallest distance.
    fn descend_from(&self, geo: &Geometry, map: &DistanceMap, cands: &[PointM2]) -> Result<Geodesic> {
        let mut best: Option<(f64, PointM2)> = None;
        for c in cands {
            let w = map.interpolate(c)?;
            if w.is_finite() && best.is_none_or(|(b, _)| w < b) {
                best = Some((w, *c));
            }
        }
        let (_, p) = best.ok_or(Error::Unreachable)?;
        let g = self.grid();
        if map.sources.contains(&g.nearest_voxel(&p)?) {
            return Ok(Geodesic::single(p));
        }
        backtrack_upwind(p, map, &geo.stencils, &self.cfg.backtrack)
    }

    /// Geodesic from `start` to `end` (the source of the sweep) with the
    /// first-run cost.
    pub fn track_single(&self, start: &Annotated, end: &Annotated) -> Result<SingleTrack> {
        let geo = self.geometry(self.cost(&self.cfg.cost)?.cost)?;
        self.track_single_with(&geo, start, end)
    }

    pub fn track_single_with(&self, geo: &Geometry, start: &Annotated, end: &Annotated) -> Result<SingleTrack> {
        let same_pixel = (start.x - end.x).abs() < 0.5 && (start.y - end.y).abs() < 0.5;
        if same_pixel && (start.theta == end.theta || start.theta.is_none() || end.theta.is_none()) {
            let t = start.theta.or(end.theta).unwrap_or(0.0);
            return Ok(SingleTrack {
                geodesic: Geodesic::single(PointM2::new(start.x, start.y, t)),
                map: None,
            });
        }
        let cands = candidates(&geo.cost, start)?;
        let map = self.march(geo, std::slice::from_ref(end), std::slice::from_ref(&cands))?;
        let geodesic = self.descend_from(geo, &map, &cands)?;
        Ok(SingleTrack {
            geodesic,
            map: Some(map),
        })
    }

    fn backtrack_all(&self, geo: &Geometry, map: &DistanceMap, run: Run, starts: &[Annotated], cands: &[Vec<PointM2>]) -> Vec<TrackedPath> {
        starts
            .par_iter()
            .zip(cands)
            .enumerate()
            .map(|(index, (start, c))| TrackedPath {
                run,
                index,
                start: *start,
                result: self.descend_from(geo, map, c).map_err(|e| e.to_string()),
            })
            .collect()
    }

    /// Two-run tree tracking: tips to the nearest bifurcation or seed with
    /// the thin-vessel cost, then bifurcations to the nearest seed with the
    /// thick-vessel cost. Exactly one sweep per run.
    pub fn track_tree_two_runs(&self) -> Result<TreeResult> {
        let pts = &self.cfg.points;
        let (seeds, tips, bifs) = (pts.seeds()?, pts.tips()?, pts.bifurcations()?);
        if seeds.is_empty() {
            return Err(Error::Config("tree tracking needs at least one seed".into()));
        }
        let mut paths = Vec::new();
        let mut sweeps = 0;

        let thin = self.geometry(self.cost(&self.cfg.cost)?.cost)?;
        let sources1: Vec<Annotated> = bifs.iter().chain(&seeds).copied().collect();
        let cands1 = tips.iter().map(|t| candidates(&thin.cost, t)).collect::<Result<Vec<_>>>()?;
        if !tips.is_empty() {
            let map1 = self.march(&thin, &sources1, &cands1)?;
            sweeps += 1;
            paths.extend(self.backtrack_all(&thin, &map1, Run::TipToBifurcation, &tips, &cands1));
        }
        drop(thin);

        if !bifs.is_empty() {
            let thick = self.geometry(self.cost(&self.cfg.cost_thick)?.cost)?;
            let cands2 = bifs.iter().map(|b| candidates(&thick.cost, b)).collect::<Result<Vec<_>>>()?;
            let map2 = self.march(&thick, &seeds, &cands2)?;
            sweeps += 1;
            paths.extend(self.backtrack_all(&thick, &map2, Run::BifurcationToSeed, &bifs, &cands2));
        }
        Ok(TreeResult { paths, sweeps })
    }

    /// One sweep per seed over the tips assigned to it.
    pub fn track_per_tree(&self) -> Result<TreeResult> {
        let pts = &self.cfg.points;
        let (seeds, tips) = (pts.seeds()?, pts.tips()?);
        if pts.tip_seeds.len() != tips.len() {
            return Err(Error::Config(format!(
                "{} tips but {} tip-to-seed labels",
                tips.len(),
                pts.tip_seeds.len()
            )));
        }
        if let Some(&s) = pts.tip_seeds.iter().find(|&&s| s >= seeds.len()) {
            return Err(Error::Config(format!("tip labelled with unknown seed {s}")));
        }
        let geo = self.geometry(self.cost(&self.cfg.cost)?.cost)?;
        let groups: Vec<(usize, Vec<usize>)> = (0..seeds.len())
            .map(|s| (s, (0..tips.len()).filter(|&t| pts.tip_seeds[t] == s).collect::<Vec<_>>()))
            .filter(|(_, t)| !t.is_empty())
            .collect();
        let per_seed = groups
            .par_iter()
            .map(|(s, members)| {
                let starts: Vec<Annotated> = members.iter().map(|&t| tips[t]).collect();
                let cands = starts.iter().map(|t| candidates(&geo.cost, t)).collect::<Result<Vec<_>>>()?;
                let map = self.march(&geo, std::slice::from_ref(&seeds[*s]), &cands)?;
                let mut out = self.backtrack_all(&geo, &map, Run::TipToSeed, &starts, &cands);
                for (p, &t) in out.iter_mut().zip(members) {
                    p.index = t;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TreeResult {
            sweeps: groups.len(),
            paths: per_seed.into_iter().flatten().collect(),
        })
    }
}

/// Writes one CSV per geodesic (`<run>_<index>.csv`), an overlay on the
/// image and a failure report.
pub fn write_tree_outputs(session: &Session, result: &TreeResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut lines = Vec::new();
    let mut report = String::new();
    for p in &result.paths {
        match &p.result {
            Ok(g) => {
                g.write_csv(dir.join(format!("{}_{:03}.csv", p.run.tag(), p.index)))?;
                lines.push(Polyline {
                    points: g.spatial(),
                    color: if p.run == Run::BifurcationToSeed { io::RUN2_COLOR } else { io::RUN1_COLOR },
                });
            }
            Err(e) => report.push_str(&format!("{} {} ({:.1}, {:.1}): {e}\n", p.run.tag(), p.index, p.start.x, p.start.y)),
        }
    }
    std::fs::write(dir.join("failures.txt"), report)?;
    let pts = &session.cfg.points;
    let mut markers = Vec::new();
    for (list, kind) in [
        (pts.seeds()?, MarkerKind::Seed),
        (pts.bifurcations()?, MarkerKind::Bifurcation),
        (pts.tips()?, MarkerKind::Tip),
    ] {
        markers.extend(list.iter().map(|a| ((a.x, a.y), kind)));
    }
    io::save_overlay(&session.image, &lines, &markers, dir.join("overlay.png"))
}

#[cfg(test)]
mod tests {
    use super::eval::{fraction_inside, mistake_ratio};
    use super::phantom::{straight_tube, TubeStyle};
    use super::*;

    fn tube_session(metric: MetricKind) -> (Session, phantom::Phantom) {
        let ph = straight_tube(48, 32, 1.5, &TubeStyle::default());
        let mut cfg = TrackingConfig { ntheta: 8, metric, ..Default::default() };
        cfg.cost.vesselness.erosion = 0.0;
        cfg.lifting.kernel_size = 11;
        (Session::new(cfg, ph.image.clone()).unwrap(), ph)
    }

    #[test]
    fn straight_tube_is_followed() {
        let (s, ph) = tube_session(MetricKind::DataDriven);
        let tr = s.track_single(&ph.tips[0], &ph.seeds[0]).unwrap();
        let g = &tr.geodesic;
        assert!(fraction_inside(g, &ph.mask) >= 0.99);
        assert!(mistake_ratio(&[g], &ph.mask, false).unwrap() <= 0.01);
        let first = g.points[0];
        assert!((first.x - ph.tips[0].x).abs() < 1e-9);
    }

    #[test]
    fn coincident_endpoints_give_a_point() {
        let (s, ph) = tube_session(MetricKind::LeftInvariant);
        let tr = s.track_single(&ph.seeds[0], &ph.seeds[0]).unwrap();
        assert_eq!(tr.geodesic.len(), 1);
        assert_eq!(tr.geodesic.length, 0.0);
        assert!(tr.map.is_none());
    }

    #[test]
    fn theta_inference_follows_the_tube() {
        let (s, ph) = tube_session(MetricKind::LeftInvariant);
        let c = s.cost(&s.cfg.cost).unwrap();
        let a = ph.seeds[0];
        let mid = Annotated::new(0.5 * (a.x + ph.tips[0].x), 0.5 * (a.y + ph.tips[0].y), None);
        let t = infer_theta(&c.cost, mid.x, mid.y).unwrap();
        let d = crate::grid::angle_diff(2.0 * t, 2.0 * a.theta.unwrap()).abs() / 2.0;
        assert!(d <= s.grid().htheta() / 2.0 + 1e-9, "{t} vs {:?}", a.theta);
        assert_eq!(candidates(&c.cost, &mid).unwrap().len(), 2);
    }

    #[test]
    fn tree_without_bifurcations_uses_one_sweep() {
        let (mut s, ph) = tube_session(MetricKind::LeftInvariant);
        s.cfg.points.seeds = vec![vec![ph.seeds[0].x, ph.seeds[0].y]];
        s.cfg.points.tips = vec![vec![ph.tips[0].x, ph.tips[0].y]];
        let r = s.track_tree_two_runs().unwrap();
        assert_eq!(r.sweeps, 1);
        assert_eq!(r.paths.len(), 1);
        assert!(r.paths.iter().all(|p| p.run == Run::TipToBifurcation));
    }

    #[test]
    fn per_tree_requires_labels() {
        let (mut s, ph) = tube_session(MetricKind::LeftInvariant);
        s.cfg.points.seeds = vec![vec![ph.seeds[0].x, ph.seeds[0].y]];
        s.cfg.points.tips = vec![vec![ph.tips[0].x, ph.tips[0].y]];
        assert!(matches!(s.track_per_tree(), Err(Error::Config(_))));
        s.cfg.points.tip_seeds = vec![3];
        assert!(matches!(s.track_per_tree(), Err(Error::Config(_))));
        s.cfg.points.tip_seeds = vec![0];
        let r = s.track_per_tree().unwrap();
        assert_eq!(r.sweeps, 1);
        assert!(r.paths[0].result.is_ok());
    }

    #[test]
    fn outputs_are_written() {
        let (mut s, ph) = tube_session(MetricKind::LeftInvariant);
        s.cfg.points.seeds = vec![vec![ph.seeds[0].x, ph.seeds[0].y]];
        s.cfg.points.tips = vec![vec![ph.tips[0].x, ph.tips[0].y]];
        let r = s.track_tree_two_runs().unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tree_outputs(&s, &r, dir.path()).unwrap();
        assert!(dir.path().join("run1_000.csv").exists());
        assert!(dir.path().join("overlay.png").exists());
    }
}
