//! Evaluation of tracked curves against ground truth.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geodesic::Geodesic;
use crate::grid::io::rasterize_polyline;
use crate::grid::Field2;

/// Union of the rasterized spatial projections, restricted to the image.
pub fn rasterize_union(curves: &[&[(f64, f64)]], width: usize, height: usize) -> BTreeSet<(usize, usize)> {
    curves
        .iter()
        .flat_map(|c| rasterize_polyline(c))
        .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height)
        .map(|(x, y)| (x as usize, y as usize))
        .collect()
}

/// Binary mask dilated by one pixel (3×3 neighbourhood).
pub fn dilate(mask: &Field2) -> Field2 {
    let (w, h) = (mask.width as i64, mask.height as i64);
    Field2::from_fn(mask.width, mask.height, |x, y| {
        let hit = (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                let (u, v) = (x as i64 + dx, y as i64 + dy);
                u >= 0 && v >= 0 && u < w && v < h && mask.get(u as usize, v as usize) > 0.5
            })
        });
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// `E = #pixels not on the vessel mask / #pixels of all geodesics`, over the
/// union of rasterized projections; with `dilate_mask` the mask is first
/// grown by one pixel.
pub fn mistake_ratio(geodesics: &[&Geodesic], mask: &Field2, dilate_mask: bool) -> Result<f64> {
    let curves: Vec<Vec<(f64, f64)>> = geodesics.iter().map(|g| g.spatial()).collect();
    let refs: Vec<&[(f64, f64)]> = curves.iter().map(|c| c.as_slice()).collect();
    mistake_ratio_of_polylines(&refs, mask, dilate_mask)
}

pub fn mistake_ratio_of_polylines(curves: &[&[(f64, f64)]], mask: &Field2, dilate_mask: bool) -> Result<f64> {
    let pixels = rasterize_union(curves, mask.width, mask.height);
    if pixels.is_empty() {
        return Err(Error::InvalidParameter("no geodesic pixels to evaluate".into()));
    }
    let grown;
    let m = if dilate_mask {
        grown = dilate(mask);
        &grown
    } else {
        mask
    };
    let wrong = pixels.iter().filter(|&&(x, y)| m.get(x, y) <= 0.5).count();
    Ok(wrong as f64 / pixels.len() as f64)
}

/// Fraction of rasterized reference-centreline pixels lying within `tol`
/// pixels of some rasterized curve pixel.
pub fn centreline_coverage(curves: &[&[(f64, f64)]], reference: &[&[(f64, f64)]], width: usize, height: usize, tol: f64) -> f64 {
    let got = rasterize_union(curves, width, height);
    let want = rasterize_union(reference, width, height);
    if want.is_empty() {
        return 1.0;
    }
    let r = tol.ceil() as i64;
    let covered = want
        .iter()
        .filter(|&&(x, y)| {
            (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    ((dx * dx + dy * dy) as f64) <= tol * tol && {
                        let (u, v) = (x as i64 + dx, y as i64 + dy);
                        u >= 0 && v >= 0 && got.contains(&(u as usize, v as usize))
                    }
                })
            })
        })
        .count();
    covered as f64 / want.len() as f64
}

/// Fraction of curve samples whose spatial position lies inside the mask
/// (nearest pixel).
pub fn fraction_inside(curve: &Geodesic, mask: &Field2) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    let inside = curve
        .points
        .iter()
        .filter(|p| {
            let (x, y) = (p.x.round(), p.y.round());
            x >= 0.0 && y >= 0.0 && (x as usize) < mask.width && (y as usize) < mask.height && mask.get(x as usize, y as usize) > 0.5
        })
        .count();
    inside as f64 / curve.len() as f64
}

/// Indices of samples that are (nearly) in-place rotations:
/// `|Δθ| ≥ ratio · ‖Δx‖ / h` between consecutive samples, with `h` the
/// spatial grid spacing, ignoring steps without angular motion.
pub fn in_place_rotation_samples(curve: &Geodesic, ratio: f64, h: f64) -> Vec<usize> {
    curve
        .points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let dt = (w[1].theta - w[0].theta).abs();
            let dx = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            dt > 1e-9 && dt >= ratio * dx / h
        })
        .map(|(i, _)| i)
        .collect()
}
