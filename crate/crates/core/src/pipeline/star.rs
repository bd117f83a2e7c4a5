//! Ingestion of a locally fetched fundus dataset (images, vessel masks and
//! annotated points), verified against SHA-256 checksums.
//!
//! The dataset directory holds a `manifest.toml`:
//!
//! ```toml
//! [[case]]
//! name = "01"
//! image = "01.png"
//! mask = "01_mask.png"
//! points = "01_points.csv"   # header: kind,x,y  (seed|tip|bifurcation|crossing)
//! [case.sha256]
//! "01.png" = "3f5a…"
//! ```
//!
//! Colour images are reduced to their green channel, where vessels have
//! the best contrast.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::config::PointsConfig;
use crate::error::{Error, Result};
use crate::grid::Field2;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    case: Vec<CaseEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseEntry {
    name: String,
    image: PathBuf,
    mask: PathBuf,
    points: PathBuf,
    #[serde(default)]
    sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub image: Field2,
    pub mask: Field2,
    pub points: PointsConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Fails unless the file's SHA-256 equals `expected` (hex, any case).
pub fn verify_checksum(path: &Path, expected: &str) -> Result<()> {
    let got = sha256_hex(&std::fs::read(path)?);
    if got != expected.to_ascii_lowercase() {
        return Err(Error::Config(format!(
            "checksum mismatch for {}: expected {expected}, got {got}",
            path.display()
        )));
    }
    Ok(())
}

/// Grayscale intensity in `[0, 1]`; colour images give their green channel.
pub fn load_fundus(path: &Path) -> Result<Field2> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) => return crate::grid::io::load_image(path),
        other => other.to_rgb8().pixels().map(|p| p.0[1] as f64 / 255.0).collect(),
    };
    Ok(Field2 {
        width: w,
        height: h,
        data,
    })
}

#[derive(Debug, Deserialize)]
struct PointRow {
    kind: String,
    x: f64,
    y: f64,
}

fn read_points(path: &Path) -> Result<PointsConfig> {
    let mut pts = PointsConfig::default();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let r: PointRow = row?;
        let list = match r.kind.as_str() {
            "seed" => &mut pts.seeds,
            "tip" => &mut pts.tips,
            "bifurcation" => &mut pts.bifurcations,
            "crossing" => &mut pts.crossings,
            other => return Err(Error::Config(format!("unknown point kind '{other}' in {}", path.display()))),
        };
        list.push(vec![r.x, r.y]);
    }
    Ok(pts)
}

/// Loads every case of the manifest in `dir`, verifying checksums of all
/// listed files first.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Case>> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join("manifest.toml"))
        .map_err(|e| Error::Config(format!("cannot read manifest in {}: {e}", dir.display())))?;
    let manifest: Manifest = toml::from_str(&text)?;
    manifest
        .case
        .iter()
        .map(|c| {
            for (file, sum) in &c.sha256 {
                verify_checksum(&dir.join(file), sum)?;
            }
            let image = load_fundus(&dir.join(&c.image))?;
            let mask = load_fundus(&dir.join(&c.mask))?;
            if (mask.width, mask.height) != (image.width, image.height) {
                return Err(Error::DimensionMismatch(format!("mask of case {} differs in size", c.name)));
            }
            let mask = Field2 {
                data: mask.data.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect(),
                ..mask
            };
            Ok(Case {
                name: c.name.clone(),
                image,
                mask,
                points: read_points(&dir.join(&c.points))?,
            })
        })
        .collect()
}
