//! Per-tile class masks: rasterization of ground truth, vectorization back to
//! polygons, and pixel-space buffering.

mod rasterize;
mod vectorize;

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

pub use rasterize::{polygons_to_binary, rasterize, rasterize_polygon, rasterize_to};
pub use vectorize::vectorize;

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::georef::{read_world_file, write_world_file, Geotransform};
use crate::grid::{GridSpec, Tile};
use crate::morphology::{dilate, BinaryMask, StructuringElement};
use crate::scalar::{round_half_up, Scalar};

/// Raster of class ids aligned to a tile. 0 is background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMask {
    pub tile_id: u64,
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    pub geotransform: Geotransform,
    pub acquisition_tag: String,
}

impl ClassMask {
    pub fn empty(tile_id: u64, width: u32, height: u32, geotransform: Geotransform) -> Self {
        ClassMask {
            tile_id,
            width,
            height,
            data: vec![0; width as usize * height as usize],
            geotransform,
            acquisition_tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.acquisition_tag = tag.into();
        self
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn binary(&self, class_id: u8) -> BinaryMask {
        BinaryMask {
            width: self.width as usize,
            height: self.height as usize,
            data: self.data.iter().map(|v| *v == class_id).collect(),
        }
    }

    /// Pixel count per class id, indexed 0..=255.
    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for v in &self.data {
            h[*v as usize] += 1;
        }
        h
    }

    /// Every nonzero value is a class in `table`.
    pub fn validate(&self, table: &ClassTable) -> Result<()> {
        if self.data.len() != self.width as usize * self.height as usize {
            return Err(Error::Data(format!("mask {} has inconsistent dimensions", self.tile_id)));
        }
        let h = self.histogram();
        match (1..=255u8).find(|id| h[*id as usize] > 0 && !table.contains(*id)) {
            Some(id) => Err(Error::Data(format!(
                "mask {} contains class {id} not in the class table",
                self.tile_id
            ))),
            None => Ok(()),
        }
    }

    pub fn file_name(tile_id: u64, tag: &str) -> String {
        format!("mask_{tile_id}_{tag}.png")
    }

    /// Single-channel 8-bit PNG plus world file.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let img = GrayImage::from_raw(self.width, self.height, self.data.clone())
            .ok_or_else(|| Error::Data("mask buffer size mismatch".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)?;
        write_world_file(path, &self.geotransform)
    }

    pub fn read_png(path: &Path, tile_id: u64, tag: &str) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .into_luma8();
        let geotransform = read_world_file(path)?;
        let (width, height) = img.dimensions();
        Ok(ClassMask {
            tile_id,
            width,
            height,
            data: img.into_raw(),
            geotransform,
            acquisition_tag: tag.to_string(),
        })
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([self.get(x, y)]))
    }
}

/// Geotransform of a tile raster: the tile's provider bounds split into
/// `tile_size_px` square cells.
pub fn tile_geotransform<T: Scalar>(tile: &Tile<T>, spec: &GridSpec) -> Geotransform {
    Geotransform::from_bounds(&tile.bounds_provider, spec.tile_size_px, spec.tile_size_px)
}

/// Parse `mask_{id}_{tag}.png` style names: `(tile_id, tag)`.
pub fn parse_tile_file_name(name: &str, prefix: &str) -> Option<(u64, String)> {
    let stem = name.strip_suffix(".png")?.strip_prefix(prefix)?.strip_prefix('_')?;
    let (id, tag) = stem.split_once('_')?;
    Some((id.parse().ok()?, tag.to_string()))
}

/// All `mask_*_{tag}.png` files in `dir`, sorted by tile id.
pub fn list_masks(dir: &Path, tag: Option<&str>) -> Result<Vec<(u64, String, PathBuf)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((id, t)) = parse_tile_file_name(&name, "mask") {
            if tag.is_none_or(|want| want == t) {
                out.push((id, t, entry.path()));
            }
        }
    }
    out.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    Ok(out)
}

/// Pixel radius used for a metric buffer distance.
pub fn buffer_radius_px(radius_m: f64, resolution: f64) -> u32 {
    round_half_up(radius_m / resolution).max(0) as u32
}

/// Disk dilation by `round(radius_m / resolution)` pixels; radius 0 is the
/// identity.
pub fn buffer_mask(mask: &BinaryMask, radius_m: f64, resolution: f64) -> BinaryMask {
    let r = buffer_radius_px(radius_m, resolution);
    if r == 0 {
        return mask.clone();
    }
    dilate(mask, &StructuringElement::disk(r))
}
