//! Raster georeferencing and ESRI world files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Coord};
use crate::scalar::Scalar;

/// North-up affine georeference. `origin` is the outer top-left corner of
/// pixel `(0, 0)`; `pixel_size_y` is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geotransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl Geotransform {
    /// Geotransform spanning `bounds` with `width × height` pixels.
    pub fn from_bounds<T: Scalar>(bounds: &Bounds<T>, width: u32, height: u32) -> Self {
        let b = bounds.cast::<f64>();
        Geotransform {
            origin_x: b.min_x,
            origin_y: b.max_y,
            pixel_size_x: b.width() / f64::from(width),
            pixel_size_y: -b.height() / f64::from(height),
        }
    }

    /// World coordinate of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: f64, row: f64) -> Coord<f64> {
        Coord::new(
            self.origin_x + (col + 0.5) * self.pixel_size_x,
            self.origin_y + (row + 0.5) * self.pixel_size_y,
        )
    }

    /// World coordinate of pixel-grid vertex `(col, row)`.
    pub fn vertex(&self, col: f64, row: f64) -> Coord<f64> {
        Coord::new(
            self.origin_x + col * self.pixel_size_x,
            self.origin_y + row * self.pixel_size_y,
        )
    }

    /// Continuous pixel-space coordinate of a world point (vertex convention).
    pub fn to_pixel(&self, p: Coord<f64>) -> Coord<f64> {
        Coord::new(
            (p.x - self.origin_x) / self.pixel_size_x,
            (p.y - self.origin_y) / self.pixel_size_y,
        )
    }

    pub fn bounds(&self, width: u32, height: u32) -> Bounds<f64> {
        let a = self.vertex(0.0, 0.0);
        let b = self.vertex(f64::from(width), f64::from(height));
        Bounds::new(a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y))
    }

    /// Area of one pixel in squared CRS units.
    pub fn pixel_area(&self) -> f64 {
        (self.pixel_size_x * self.pixel_size_y).abs()
    }

    /// Six-line world file text.
    pub fn to_world_file(&self) -> String {
        let c = self.pixel_center(0.0, 0.0);
        format!(
            "{}\n0\n0\n{}\n{}\n{}\n",
            fmt_f64(self.pixel_size_x),
            fmt_f64(self.pixel_size_y),
            fmt_f64(c.x),
            fmt_f64(c.y)
        )
    }

    pub fn parse_world_file(text: &str) -> Result<Self> {
        let vals = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Data(format!("world file value `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let [a, d, b, e, c, f] = vals[..] else {
            return Err(Error::Data(format!("world file has {} values, expected 6", vals.len())));
        };
        if d != 0.0 || b != 0.0 {
            return Err(Error::Data("rotated world files are not supported".into()));
        }
        Ok(Geotransform {
            origin_x: c - 0.5 * a,
            origin_y: f - 0.5 * e,
            pixel_size_x: a,
            pixel_size_y: e,
        })
    }
}

/// Shortest decimal that round-trips exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// `img.png` → `img.pgw`.
pub fn world_file_path(image: &Path) -> PathBuf {
    image.with_extension("pgw")
}

pub fn write_world_file(image: &Path, gt: &Geotransform) -> Result<()> {
    let path = world_file_path(image);
    std::fs::write(&path, gt.to_world_file()).map_err(|e| Error::io(path, e))
}

pub fn read_world_file(image: &Path) -> Result<Geotransform> {
    let path = world_file_path(image);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Geotransform::parse_world_file(&text)
}
