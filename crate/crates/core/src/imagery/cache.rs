use std::io::Cursor;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::georef::Geotransform;
use crate::geometry::Bounds;
use crate::http::write_atomic;

use super::{ImageryEndpoint, RasterTile};

pub const CACHE_DIR_ENV: &str = "GEOSEG_CACHE_DIR";

/// Stable cache key over the request identity. Bounds are rounded to 1e-6
/// CRS units; the output size is part of the key so a changed tile size
/// never reuses stale rasters.
pub fn cache_key(endpoint: &ImageryEndpoint, bounds: &Bounds<f64>, size_px: u32, tag: &str) -> String {
    let q = |v: f64| (v * 1e6).round() as i64;
    let text = format!(
        "{}\n{}\n{}\n{} {} {} {}\n{}\n{}",
        endpoint.url_template,
        endpoint.layer,
        endpoint.matrix_label(),
        q(bounds.min_x),
        q(bounds.min_y),
        q(bounds.max_x),
        q(bounds.max_y),
        size_px,
        tag
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Read-through store of finished dataset tiles, one PNG plus world file per
/// key. Entries are published by atomic rename.
#[derive(Debug, Clone)]
pub struct TileCache {
    pub dir: PathBuf,
}

impl TileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(TileCache { dir })
    }

    /// Cache under `GEOSEG_CACHE_DIR` when set, else under `default`.
    pub fn from_env_or(default: &Path) -> Result<Self> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::new(PathBuf::from(d)),
            _ => Self::new(default),
        }
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}.png")), self.dir.join(format!("{key}.pgw")))
    }

    pub fn get(&self, key: &str, tile_id: u64, tag: &str) -> Result<Option<RasterTile>> {
        let (png, pgw) = self.paths(key);
        if !png.exists() {
            return Ok(None);
        }
        let img = image::open(&png)
            .map_err(|e| Error::Data(format!("{}: {e}", png.display())))?
            .into_rgb8();
        let text = std::fs::read_to_string(&pgw).map_err(|e| Error::io(&pgw, e))?;
        let gt = Geotransform::parse_world_file(&text)?;
        Ok(Some(RasterTile::from_image(tile_id, img, gt, tag)))
    }

    pub fn put(&self, key: &str, tile: &RasterTile) -> Result<()> {
        let (png, pgw) = self.paths(key);
        let mut bytes = Vec::new();
        tile.to_image()
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        // world file first: a visible PNG implies a complete entry
        write_atomic(&pgw, tile.geotransform.to_world_file().as_bytes())?;
        write_atomic(&png, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::TileMatrix;

    fn ep() -> ImageryEndpoint {
        let (m, res) = TileMatrix::web_mercator(17);
        ImageryEndpoint::xyz("http://h/{z}/{x}/{y}.png", "EPSG:3857", m, res)
    }

    #[test]
    fn key_identity() {
        let b = Bounds::new(0.0, 0.0, 102.4, 102.4);
        let k = cache_key(&ep(), &b, 1024, "2023");
        assert_eq!(k, cache_key(&ep(), &b, 1024, "2023"));
        let moved = Bounds::new(0.001, 0.0, 102.401, 102.4);
        assert_ne!(k, cache_key(&ep(), &moved, 1024, "2023"));
        assert_ne!(k, cache_key(&ep(), &b, 1024, "2001"));
        let tiny = Bounds::new(1e-8, 0.0, 102.4, 102.4);
        assert_eq!(k, cache_key(&ep(), &tiny, 1024, "2023"));
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TileCache::new(dir.path().join("c")).unwrap();
        let gt = Geotransform {
            origin_x: 0.0,
            origin_y: 4.0,
            pixel_size_x: 1.0,
            pixel_size_y: -1.0,
        };
        let img = image::RgbImage::from_fn(4, 4, |x, y| image::Rgb([x as u8, y as u8, 7]));
        let t = RasterTile::from_image(3, img, gt, "t");
        assert!(cache.get("k", 3, "t").unwrap().is_none());
        cache.put("k", &t).unwrap();
        assert_eq!(cache.get("k", 3, "t").unwrap(), Some(t));
    }
}
