//! Synthetic vessel phantoms with known centrelines, masks and annotations:
//! a straight tube, a tortuous S-curve and a Y-shaped tree.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};

use super::config::Annotated;
use crate::grid::Field2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeStyle {
    pub background: f64,
    pub contrast: f64,
    /// Dark vessels on a bright background (fundus-like) when true.
    pub dark: bool,
    /// Uniform noise amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TubeStyle {
    fn default() -> Self {
        Self {
            background: 0.8,
            contrast: 0.6,
            dark: true,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// One vessel: sampled centreline, Gaussian profile width and mask radius.
#[derive(Debug, Clone)]
pub struct Tube {
    pub centreline: Vec<(f64, f64)>,
    pub sigma: f64,
    pub radius: f64,
}

impl Tube {
    pub fn new(centreline: Vec<(f64, f64)>, sigma: f64) -> Self {
        Self {
            centreline,
            sigma,
            radius: (2.0 * sigma).max(2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: Field2,
    /// 1 inside any tube, 0 outside.
    pub mask: Field2,
    pub tubes: Vec<Tube>,
    pub seeds: Vec<Annotated>,
    pub tips: Vec<Annotated>,
    pub bifurcations: Vec<Annotated>,
    /// Seed index of every tip.
    pub tip_seeds: Vec<usize>,
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Per-pixel distance to a polyline, computed within `reach` of it
/// (`+∞` elsewhere).
pub fn distance_to_polyline(width: usize, height: usize, line: &[(f64, f64)], reach: f64) -> Field2 {
    let mut d = Field2::from_fn(width, height, |_, _| f64::INFINITY);
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + reach).ceil().max(0.0) as usize).min(width - 1);
        let y0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
        let y1 = ((a.1.max(b.1) + reach).ceil().max(0.0) as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let v = point_segment_distance((x as f64, y as f64), a, b);
                if v < d.get(x, y) {
                    d.set(x, y, v);
                }
            }
        }
    }
    d
}

/// Renders tubes with Gaussian cross-sections (combined by maximum).
pub fn render(width: usize, height: usize, tubes: &[Tube], style: &TubeStyle) -> (Field2, Field2) {
    let mut profile = Field2::zeros(width, height);
    let mut mask = Field2::zeros(width, height);
    for t in tubes {
        let reach = (4.0 * t.sigma).max(t.radius) + 1.0;
        let d = distance_to_polyline(width, height, &t.centreline, reach);
        for i in 0..d.data.len() {
            let v = d.data[i];
            if v.is_finite() {
                profile.data[i] = profile.data[i].max((-v * v / (2.0 * t.sigma * t.sigma)).exp());
                if v <= t.radius {
                    mask.data[i] = 1.0;
                }
            }
        }
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(style.seed);
    let sign = if style.dark { -1.0 } else { 1.0 };
    let image = Field2 {
        width,
        height,
        data: profile
            .data
            .iter()
            .map(|p| {
                let n = if style.noise > 0.0 { rng.random_range(-style.noise..style.noise) } else { 0.0 };
                (style.background + sign * style.contrast * p + n).clamp(0.0, 1.0)
            })
            .collect(),
    };
    (image, mask)
}

fn heading(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1).atan2(b.0 - a.0)
}

fn sample_curve(n: usize, f: impl Fn(f64) -> (f64, f64)) -> Vec<(f64, f64)> {
    (0..=n).map(|i| f(i as f64 / n as f64)).collect()
}

/// End of a centreline with the outward heading.
fn end_point(line: &[(f64, f64)], at_start: bool) -> Annotated {
    let (p, q) = if at_start { (line[0], line[1]) } else { (line[line.len() - 1], line[line.len() - 2]) };
    Annotated::new(p.0, p.1, Some(heading(q, p)))
}

/// A straight tube across the image at a slight slant; the seed sits at the
/// left end, the tip at the right end, both with the tube's heading
/// pointing along the travel direction seed → tip.
pub fn straight_tube(width: usize, height: usize, sigma: f64, style: &TubeStyle) -> Phantom {
    let (w, h) = (width as f64, height as f64);
    let a = (0.12 * w, 0.4 * h);
    let b = (0.88 * w, 0.6 * h);
    let line = sample_curve(200, |s| (a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)));
    let tubes = vec![Tube::new(line.clone(), sigma)];
    let (image, mask) = render(width, height, &tubes, style);
    let t = heading(a, b);
    Phantom {
        image,
        mask,
        tubes,
        seeds: vec![Annotated::new(a.0, a.1, Some(t))],
        tips: vec![Annotated::new(b.0, b.1, Some(t))],
        bifurcations: vec![],
        tip_seeds: vec![0],
    }
}

/// One full sine period between the left and right margins: a tortuous
/// "S" with amplitude `amp` (fraction of the height).
pub fn s_curve(width: usize, height: usize, sigma: f64, amp: f64, style: &TubeStyle) -> Phantom {
    let (w, h) = (width as f64, height as f64);
    let (x0, x1) = (0.12 * w, 0.88 * w);
    let line = sample_curve(400, |s| (x0 + s * (x1 - x0), 0.5 * h - amp * h * (2.0 * PI * s).sin()));
    let tubes = vec![Tube::new(line.clone(), sigma)];
    let (image, mask) = render(width, height, &tubes, style);
    let seed = end_point(&line, true);
    let seed = Annotated::new(seed.x, seed.y, seed.theta.map(|t| t + PI));
    let tip = end_point(&line, false);
    Phantom {
        image,
        mask,
        tubes,
        seeds: vec![seed],
        tips: vec![tip],
        bifurcations: vec![],
        tip_seeds: vec![0],
    }
}

/// A trunk rising from the seed at the bottom to a bifurcation, then two
/// curved branches to tips near the top corners. The trunk is thicker than
/// the branches.
pub fn y_tree(width: usize, height: usize, style: &TubeStyle) -> Phantom {
    let (w, h) = (width as f64, height as f64);
    y_tree_angled(width, height, (0.06 * w).atan2(0.22 * h), style)
}

/// Like [`y_tree`], with the branches leaving the bifurcation at `angle`
/// (radians) from the trunk axis; wide angles force sharp turns there.
pub fn y_tree_angled(width: usize, height: usize, angle: f64, style: &TubeStyle) -> Phantom {
    let (w, h) = (width as f64, height as f64);
    let seed = (0.5 * w, 0.9 * h);
    let bif = (0.5 * w, 0.52 * h);
    let trunk = sample_curve(100, |s| (seed.0, seed.1 + s * (bif.1 - seed.1)));
    let reach = (0.06 * w).hypot(0.22 * h);
    let branch = |dir: f64| {
        let tip = (0.5 * w + dir * 0.3 * w, 0.12 * h);
        let ctrl = (bif.0 + dir * reach * angle.sin(), bif.1 - reach * angle.cos());
        sample_curve(200, move |s| {
            let u = 1.0 - s;
            (
                u * u * bif.0 + 2.0 * u * s * ctrl.0 + s * s * tip.0,
                u * u * bif.1 + 2.0 * u * s * ctrl.1 + s * s * tip.1,
            )
        })
    };
    let left = branch(-1.0);
    let right = branch(1.0);
    let tubes = vec![Tube::new(trunk.clone(), 2.0), Tube::new(left.clone(), 1.3), Tube::new(right.clone(), 1.3)];
    let (image, mask) = render(width, height, &tubes, style);
    let up = -PI / 2.0;
    Phantom {
        image,
        mask,
        tubes,
        seeds: vec![Annotated::new(seed.0, seed.1, Some(up))],
        tips: vec![end_point(&left, false), end_point(&right, false)],
        bifurcations: vec![Annotated::new(bif.0, bif.1, None)],
        tip_seeds: vec![0, 0],
    }
}

impl Phantom {
    /// Quarter turn of the whole phantom about the image centre (square
    /// images only): pixel `(x, y)` moves to `(n−1−y, x)`, headings gain
    /// `π/2`.
    pub fn rotate_quarter(&self) -> Phantom {
        assert_eq!(self.image.width, self.image.height, "quarter turns need square images");
        let n = self.image.width;
        let rot_field = |f: &Field2| Field2::from_fn(n, n, |x, y| f.get(y, n - 1 - x));
        let m = (n - 1) as f64;
        let rot_pt = |p: &Annotated| Annotated::new(m - p.y, p.x, p.theta.map(|t| t + PI / 2.0));
        Phantom {
            image: rot_field(&self.image),
            mask: rot_field(&self.mask),
            tubes: self
                .tubes
                .iter()
                .map(|t| Tube {
                    centreline: t.centreline.iter().map(|&(x, y)| (m - y, x)).collect(),
                    ..t.clone()
                })
                .collect(),
            seeds: self.seeds.iter().map(rot_pt).collect(),
            tips: self.tips.iter().map(rot_pt).collect(),
            bifurcations: self.bifurcations.iter().map(rot_pt).collect(),
            tip_seeds: self.tip_seeds.clone(),
        }
    }

    /// All centrelines.
    pub fn centrelines(&self) -> Vec<&[(f64, f64)]> {
        self.tubes.iter().map(|t| t.centreline.as_slice()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_matches_segment_geometry() {
        let d = distance_to_polyline(20, 10, &[(2.0, 5.0), (17.0, 5.0)], 6.0);
        assert_eq!(d.get(10, 5), 0.0);
        assert_eq!(d.get(10, 8), 3.0);
        assert!((d.get(0, 5) - 2.0).abs() < 1e-12);
        assert!((d.get(19, 9) - (4.0f64 + 16.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tube_is_dark_inside_the_mask() {
        let p = straight_tube(64, 48, 1.5, &TubeStyle::default());
        let inside: Vec<f64> = (0..p.image.data.len()).filter(|&i| p.mask.data[i] > 0.5).map(|i| p.image.data[i]).collect();
        let outside: Vec<f64> = (0..p.image.data.len()).filter(|&i| p.mask.data[i] < 0.5).map(|i| p.image.data[i]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&inside) < mean(&outside) - 0.2);
        assert!(p.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn y_tree_annotations() {
        let p = y_tree(96, 96, &TubeStyle::default());
        assert_eq!(p.tips.len(), 2);
        assert_eq!(p.bifurcations.len(), 1);
        for a in p.tips.iter().chain(&p.seeds).chain(&p.bifurcations) {
            assert_eq!(p.mask.get(a.x.round() as usize, a.y.round() as usize), 1.0);
        }
        // tips head away from the bifurcation (upwards)
        assert!(p.tips.iter().all(|t| t.theta.unwrap().sin() < 0.0));
    }

    #[test]
    fn quarter_turn_is_consistent() {
        let p = s_curve(40, 40, 1.2, 0.2, &TubeStyle::default());
        let r = p.rotate_quarter();
        assert_eq!(r.image.get(39 - 7, 3), p.image.get(3, 7));
        let (x, y) = p.tubes[0].centreline[10];
        assert_eq!(r.tubes[0].centreline[10], (39.0 - y, x));
        let four = r.rotate_quarter().rotate_quarter().rotate_quarter();
        assert_eq!(four.image, p.image);
    }
}
