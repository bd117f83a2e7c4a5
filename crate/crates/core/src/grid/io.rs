//! Image ingestion, overlays, raw field dumps and CSV polylines.
//!
//! Raw field files start with a short ASCII header terminated by a line
//! `end`, followed by `nx * ny * nθ` little-endian `f32` values in the grid
//! layout (x fastest). Infinite distances are stored as `f32::INFINITY`.
//!
//! ```text
//! M2FIELD 1
//! dims 64 64 16
//! spacing 1 1 0.39269908169872414
//! origin 0 0
//! end
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use super::{Field2, GridM2, LiftedField};
use crate::error::{Error, Result};

const FIELD_MAGIC: &str = "M2FIELD 1";

/// Loads an 8- or 16-bit grayscale image (PNG or PGM) normalized to `[0, 1]`.
/// Colour images are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<Field2> {
    let path = path.as_ref();
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect()
        }
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                reason: format!("expected 8/16-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    Ok(Field2 {
        width: w,
        height: h,
        data,
    })
}

/// Writes a field as an 8-bit grayscale PNG, mapping `[lo, hi]` to `[0, 255]`.
pub fn save_gray(field: &Field2, lo: f64, hi: f64, path: impl AsRef<Path>) -> Result<()> {
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let img: GrayImage = ImageBuffer::from_fn(field.width as u32, field.height as u32, |x, y| {
        let v = (field.get(x as usize, y as usize) - lo) * scale;
        Luma([v.round().clamp(0.0, 255.0) as u8])
    });
    img.save(path)?;
    Ok(())
}

/// Writes a field as a 16-bit grayscale PNG from values in `[0, 1]`.
pub fn save_gray16(field: &Field2, path: impl AsRef<Path>) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(field.width as u32, field.height as u32, |x, y| {
            let v = field.get(x as usize, y as usize) * 65535.0;
            Luma([v.round().clamp(0.0, 65535.0) as u16])
        });
    img.save(path)?;
    Ok(())
}

/// Kind of annotated point drawn on overlays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerKind {
    Seed,
    Bifurcation,
    Tip,
}

impl MarkerKind {
    fn color(self) -> [u8; 3] {
        match self {
            MarkerKind::Seed => [0, 200, 0],
            MarkerKind::Bifurcation => [160, 32, 240],
            MarkerKind::Tip => [230, 0, 0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

pub const RUN1_COLOR: [u8; 3] = [255, 255, 255];
pub const RUN2_COLOR: [u8; 3] = [0, 255, 255];

/// Renders polylines and markers on top of a grayscale image and writes an
/// RGB PNG.
pub fn save_overlay(
    image: &Field2,
    polylines: &[Polyline],
    markers: &[((f64, f64), MarkerKind)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let (w, h) = (image.width as u32, image.height as u32);
    let mut img: RgbImage = ImageBuffer::from_fn(w, h, |x, y| {
        let v = (image.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    for line in polylines {
        for (x, y) in rasterize_polyline(&line.points) {
            if x < w as i64 && y < h as i64 && x >= 0 && y >= 0 {
                img.put_pixel(x as u32, y as u32, Rgb(line.color));
            }
        }
    }
    for &((cx, cy), kind) in markers {
        let (cx, cy) = (cx.round() as i64, cy.round() as i64);
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let (x, y) = (cx + dx, cy + dy);
                if dx * dx + dy * dy <= 5 && x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                    img.put_pixel(x as u32, y as u32, Rgb(kind.color()));
                }
            }
        }
    }
    img.save(path)?;
    Ok(())
}

/// Pixels visited by a polyline, sampled at quarter-pixel steps and rounded.
/// Consecutive duplicates are removed; order follows the polyline.
pub fn rasterize_polyline(points: &[(f64, f64)]) -> Vec<(i64, i64)> {
    let mut out: Vec<(i64, i64)> = Vec::new();
    let mut push = |x: f64, y: f64| {
        let px = (x.round() as i64, y.round() as i64);
        if out.last() != Some(&px) {
            out.push(px);
        }
    };
    match points {
        [] => {}
        [p] => push(p.0, p.1),
        _ => {
            for seg in points.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                let n = (len * 4.0).ceil().max(1.0) as usize;
                for s in 0..n {
                    let t = s as f64 / n as f64;
                    push(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
                }
            }
            let last = points[points.len() - 1];
            push(last.0, last.1);
        }
    }
    out
}

/// Writes a lifted field in the raw float32 format.
pub fn write_field(field: &LiftedField, path: impl AsRef<Path>) -> Result<()> {
    let g = field.grid;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{FIELD_MAGIC}")?;
    writeln!(w, "dims {} {} {}", g.nx, g.ny, g.ntheta)?;
    writeln!(w, "spacing 1 1 {}", g.htheta())?;
    writeln!(w, "origin {} {}", g.origin.0, g.origin.1)?;
    writeln!(w, "end")?;
    for &v in &field.values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field`].
pub fn read_field(path: impl AsRef<Path>) -> Result<LiftedField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<File>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::FieldFormat("unexpected end of header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut r)? != FIELD_MAGIC {
        return Err(Error::FieldFormat("missing M2FIELD magic".into()));
    }
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut origin = (0.0, 0.0);
    loop {
        let l = next_line(&mut r)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["end"] => break,
            ["dims", a, b, c] => {
                dims = Some((parse(a)?, parse(b)?, parse(c)?));
            }
            ["origin", a, b] => origin = (parse(a)?, parse(b)?),
            ["spacing", ..] => {}
            _ => return Err(Error::FieldFormat(format!("unexpected header line {l:?}"))),
        }
    }
    let (nx, ny, nt) = dims.ok_or_else(|| Error::FieldFormat("missing dims".into()))?;
    let grid = GridM2::new(nx, ny, nt)?.with_origin(origin.0, origin.1);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 4 {
        return Err(Error::FieldFormat(format!(
            "expected {} payload bytes, found {}",
            grid.len() * 4,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    LiftedField::from_values(grid, values)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::FieldFormat(format!("cannot parse {s:?}")))
}

/// One row of a polyline CSV: `t, x, y, theta`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolylineRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

pub fn write_polyline_csv(rows: &[PolylineRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_polyline_csv(path: impl AsRef<Path>) -> Result<Vec<PolylineRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
