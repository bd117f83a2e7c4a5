//! Tracking configuration (TOML). Every section is optional; omitted values
//! take the defaults below.
//!
//! ```toml
//! image = "fundus.png"
//! ntheta = 16
//! output = "out"
//! metric = "mixed"
//!
//! [model]
//! xi = 0.1
//! zeta = 0.1
//! eps = 0.1
//! lambda_dd = 50.0
//!
//! [points]
//! seeds = [[120.0, 200.0]]
//! tips = [[40.0, 32.0, 1.57]]
//! bifurcations = [[90.0, 120.0]]
//! crossings = [[70.0, 80.0]]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::BacktrackOptions;
use crate::lifting::CakeParams;
use crate::metric::ModelParams;
use crate::vesselness::VesselnessParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Cost-weighted left-invariant model only.
    LeftInvariant,
    /// Data-driven model everywhere.
    DataDriven,
    /// Left-invariant near crossings, data-driven elsewhere.
    #[default]
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftingConfig {
    pub kernel_size: usize,
    pub rho_max: f64,
    pub taper: f64,
    pub spline_order: u32,
    pub remove_dc: bool,
}

impl Default for LiftingConfig {
    fn default() -> Self {
        let c = CakeParams::default();
        Self {
            kernel_size: 15,
            rho_max: c.rho_max,
            taper: c.taper,
            spline_order: c.spline_order,
            remove_dc: c.remove_dc,
        }
    }
}

impl LiftingConfig {
    pub fn cake(&self) -> CakeParams {
        CakeParams {
            rho_max: self.rho_max,
            taper: self.taper,
            spline_order: self.spline_order,
            remove_dc: self.remove_dc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianConfig {
    /// External spatial scale of the Gaussian derivatives (pixels).
    pub sigma_s: f64,
    /// External angular scale (radians).
    pub sigma_a: f64,
}

impl Default for HessianConfig {
    fn default() -> Self {
        Self {
            sigma_s: 1.0,
            sigma_a: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedConfig {
    /// Half-width of the square around each crossing.
    pub a: f64,
    pub sigma: f64,
}

impl Default for MixedConfig {
    fn default() -> Self {
        Self { a: 5.0, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    #[default]
    Vesselness,
    /// `1/(1 + c |U/‖U‖∞|²)`.
    Score,
    /// `C ≡ 1`.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub kind: CostKind,
    pub score_contrast: f64,
    pub vesselness: VesselnessParams,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            kind: CostKind::Vesselness,
            score_contrast: 200.0,
            vesselness: VesselnessParams::default(),
        }
    }
}

impl CostConfig {
    /// Cost for thin vessels (single scale `σ_s = 1`).
    pub fn thin() -> Self {
        Self::default()
    }

    /// Cost for thick vessels (`σ_s ∈ {1, 2}`).
    pub fn thick() -> Self {
        let mut c = Self::default();
        c.vesselness.scales = vec![1.0, 2.0];
        c
    }
}

fn thick_default() -> CostConfig {
    CostConfig::thick()
}

/// Annotated points in pixel coordinates: `[x, y]` or `[x, y, θ]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsConfig {
    pub seeds: Vec<Vec<f64>>,
    pub tips: Vec<Vec<f64>>,
    pub bifurcations: Vec<Vec<f64>>,
    pub crossings: Vec<Vec<f64>>,
    /// Seed index per tip, for per-tree tracking.
    pub tip_seeds: Vec<usize>,
}

/// A point whose orientation may be left to inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotated {
    pub x: f64,
    pub y: f64,
    pub theta: Option<f64>,
}

impl Annotated {
    pub fn new(x: f64, y: f64, theta: Option<f64>) -> Self {
        Self { x, y, theta }
    }
}

fn parse_points(name: &str, raw: &[Vec<f64>]) -> Result<Vec<Annotated>> {
    raw.iter()
        .enumerate()
        .map(|(i, p)| match p.as_slice() {
            [x, y] => Ok(Annotated::new(*x, *y, None)),
            [x, y, t] => Ok(Annotated::new(*x, *y, Some(*t))),
            _ => Err(Error::Config(format!(
                "{name}[{i}] must be [x, y] or [x, y, θ], got {} values",
                p.len()
            ))),
        })
        .collect()
}

impl PointsConfig {
    pub fn seeds(&self) -> Result<Vec<Annotated>> {
        parse_points("seeds", &self.seeds)
    }

    pub fn tips(&self) -> Result<Vec<Annotated>> {
        parse_points("tips", &self.tips)
    }

    pub fn bifurcations(&self) -> Result<Vec<Annotated>> {
        parse_points("bifurcations", &self.bifurcations)
    }

    pub fn crossings(&self) -> Result<Vec<(f64, f64)>> {
        Ok(parse_points("crossings", &self.crossings)?
            .into_iter()
            .map(|p| (p.x, p.y))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub image: Option<PathBuf>,
    /// Optional ground-truth vessel mask for evaluation.
    pub mask: Option<PathBuf>,
    pub ntheta: usize,
    pub output: PathBuf,
    pub metric: MetricKind,
    /// Stencil relaxation `ε_rel` for the reverse-gear half-line.
    pub stencil_relaxation: f64,
    /// Extra fraction of the largest target distance marched past the
    /// targets, so gradients around them are available.
    pub stop_margin: f64,
    pub model: ModelParams,
    pub lifting: LiftingConfig,
    pub hessian: HessianConfig,
    pub mixed: MixedConfig,
    /// Cost for single tracks and the first tree run (thin vessels).
    pub cost: CostConfig,
    /// Cost for the second tree run (thick vessels).
    #[serde(default = "thick_default")]
    pub cost_thick: CostConfig,
    pub backtrack: BacktrackOptions,
    pub points: PointsConfig,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            image: None,
            mask: None,
            ntheta: 16,
            output: PathBuf::from("out"),
            metric: MetricKind::Mixed,
            stencil_relaxation: 0.1,
            stop_margin: 0.1,
            model: ModelParams::default(),
            lifting: LiftingConfig::default(),
            hessian: HessianConfig::default(),
            mixed: MixedConfig::default(),
            cost: CostConfig::thin(),
            cost_thick: CostConfig::thick(),
            backtrack: BacktrackOptions::default(),
            points: PointsConfig::default(),
        }
    }
}

impl TrackingConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file; relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.image.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.mask.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.output);
        for p in cfg.image.iter().chain(&cfg.mask) {
            if !p.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.ntheta < 4 {
            return Err(Error::Config(format!("ntheta must be at least 4, got {}", self.ntheta)));
        }
        self.model.validate().map_err(cfg)?;
        self.cost.vesselness.validate().map_err(cfg)?;
        self.cost_thick.vesselness.validate().map_err(cfg)?;
        if !(self.stencil_relaxation > 0.0 && self.stencil_relaxation < 1.0) {
            return Err(Error::Config(format!(
                "stencil_relaxation must lie in (0, 1), got {}",
                self.stencil_relaxation
            )));
        }
        if !(self.stop_margin >= 0.0) {
            return Err(Error::Config("stop_margin must be non-negative".into()));
        }
        if !(self.hessian.sigma_s >= 0.0 && self.hessian.sigma_a >= 0.0) {
            return Err(Error::Config("Hessian scales must be non-negative".into()));
        }
        if !(self.mixed.a > 0.0 && self.mixed.sigma >= 0.0) {
            return Err(Error::Config("mixed model needs a > 0 and σ ≥ 0".into()));
        }
        if self.lifting.kernel_size % 2 == 0 {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        if !(self.backtrack.step > 0.0 && self.backtrack.snap_radius > 0.0) {
            return Err(Error::Config("backtrack step and snap radius must be positive".into()));
        }
        self.points.seeds()?;
        self.points.tips()?;
        self.points.bifurcations()?;
        self.points.crossings()?;
        Ok(())
    }

    /// Checks that every annotated point lies inside a `width×height`
    /// image.
    pub fn check_points_inside(&self, width: usize, height: usize) -> Result<()> {
        let inside = |p: &Annotated| p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64;
        for (name, pts) in [
            ("seed", self.points.seeds()?),
            ("tip", self.points.tips()?),
            ("bifurcation", self.points.bifurcations()?),
        ] {
            if let Some(p) = pts.iter().find(|p| !inside(p)) {
                return Err(Error::Config(format!(
                    "{name} ({}, {}) lies outside the {width}x{height} image",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_has_defaults() {
        let c = TrackingConfig::from_toml("").unwrap();
        assert_eq!(c, TrackingConfig::default());
        assert_eq!(c.model.xi, 0.1);
        assert_eq!(c.model.lambda_dd, 50.0);
        assert_eq!(c.mixed, MixedConfig { a: 5.0, sigma: 1.0 });
        assert_eq!(c.cost.vesselness.scales, vec![1.0]);
        assert_eq!(c.cost_thick.vesselness.scales, vec![1.0, 2.0]);
        assert_eq!(c.cost.vesselness.lambda_c, 1000.0);
        assert_eq!(c.ntheta, 16);
    }

    #[test]
    fn parses_points_and_sections() {
        let c = TrackingConfig::from_toml(
            r#"
            ntheta = 8
            metric = "data-driven"
            [model]
            lambda_dd = 100.0
            zeta = 0.25
            [cost]
            kind = "score"
            [cost.vesselness]
            polarity = "bright"
            [lifting]
            kernel_size = 11
            rho_max = 0.4
            [points]
            seeds = [[1.0, 2.0]]
            tips = [[3.0, 4.0, 0.5]]
            "#,
        )
        .unwrap();
        assert_eq!(c.metric, MetricKind::DataDriven);
        assert_eq!(c.model.lambda_dd, 100.0);
        assert_eq!(c.model.xi, 0.1);
        assert_eq!(c.cost.kind, CostKind::Score);
        assert_eq!(c.lifting.cake().rho_max, 0.4);
        assert_eq!(c.points.tips().unwrap(), vec![Annotated::new(3.0, 4.0, Some(0.5))]);
        assert_eq!(c.points.seeds().unwrap()[0].theta, None);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "ntheta = 2",
            "unknown = 1",
            "[model]\neps = 0.0",
            "[model]\nxi = -1.0",
            "[points]\ntips = [[1.0]]",
            "stencil_relaxation = 1.5",
            "[lifting]\nkernel_size = 10",
        ] {
            assert!(TrackingConfig::from_toml(bad).is_err(), "{bad}");
        }
        let c = TrackingConfig::from_toml("[points]\nseeds = [[50.0, 2.0]]").unwrap();
        assert!(c.check_points_inside(40, 40).is_err());
        assert!(c.check_points_inside(60, 40).is_ok());
    }

    #[test]
    fn load_resolves_and_checks_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "image = \"missing.png\"").unwrap();
        assert!(matches!(TrackingConfig::load(&cfg), Err(Error::Config(_))));
        std::fs::write(dir.path().join("img.png"), b"x").unwrap();
        std::fs::write(&cfg, "image = \"img.png\"\noutput = \"res\"").unwrap();
        let c = TrackingConfig::load(&cfg).unwrap();
        assert_eq!(c.image.unwrap(), dir.path().join("img.png"));
        assert_eq!(c.output, dir.path().join("res"));
    }
}
