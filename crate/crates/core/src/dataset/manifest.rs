use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::georef::{read_world_file, Geotransform};
use crate::grid::GridSpec;
use crate::http::write_atomic;
use crate::imagery::{EndpointKind, ImageryEndpoint, TileMatrix};

use super::Split;

pub const MANIFEST_FILE: &str = "manifest.json";

/// The imagery source without credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub kind: EndpointKind,
    pub url_template: String,
    pub layer: String,
    pub crs_id: String,
    pub provider_resolution: f64,
    pub tile_matrix_set: String,
    pub tile_matrix: Option<TileMatrix>,
}

impl From<&ImageryEndpoint> for ProviderInfo {
    fn from(e: &ImageryEndpoint) -> Self {
        ProviderInfo {
            kind: e.kind,
            url_template: e.url_template.clone(),
            layer: e.layer.clone(),
            crs_id: e.crs_id.clone(),
            provider_resolution: e.provider_resolution,
            tile_matrix_set: e.tile_matrix_set.clone(),
            tile_matrix: e.tile_matrix.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub tile_id: u64,
    pub split: Split,
    /// Relative to the dataset root.
    pub image: String,
    pub mask: String,
    pub acquisition_tag: String,
    /// Raw diversity statistic; absent for test tiles.
    pub diversity: Option<f64>,
    pub diversity_weight: f64,
    pub repetitions: u32,
    pub width: u32,
    pub height: u32,
    pub geotransform: Geotransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub created_unix: u64,
    pub config_hash: String,
    pub grid: GridSpec,
    pub provider: ProviderInfo,
    pub classes: ClassTable,
    /// Sorted by tile id.
    pub tiles: Vec<TileRecord>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        write_atomic(&root.join(MANIFEST_FILE), self.to_json().as_bytes())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &TileRecord> {
        self.tiles.iter().filter(move |t| t.split == split)
    }

    /// Same manifest with the timestamp zeroed, for comparisons.
    pub fn without_timestamp(&self) -> Self {
        Manifest {
            created_unix: 0,
            ..self.clone()
        }
    }
}

/// Referential integrity: every image and mask exists, has the declared
/// size and geotransform, and masks only use declared classes.
pub fn verify_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    ClassTable::new(manifest.classes.iter().cloned().collect())?;
    let mut seen = BTreeSet::new();
    let mut last = None;
    for t in &manifest.tiles {
        if !seen.insert(t.tile_id) {
            return Err(Error::Data(format!("tile {} listed twice", t.tile_id)));
        }
        if last.is_some_and(|l| l > t.tile_id) {
            return Err(Error::Data("manifest tiles are not sorted by id".into()));
        }
        last = Some(t.tile_id);
        if t.repetitions < 1 {
            return Err(Error::Data(format!("tile {}: repetitions must be at least 1", t.tile_id)));
        }
        for (rel, rgb) in [(&t.image, true), (&t.mask, false)] {
            let path = root.join(rel);
            let img = image::open(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if (img.width(), img.height()) != (t.width, t.height) {
                return Err(Error::Data(format!(
                    "{}: {}x{} pixels, manifest says {}x{}",
                    path.display(),
                    img.width(),
                    img.height(),
                    t.width,
                    t.height
                )));
            }
            if read_world_file(&path)? != t.geotransform {
                return Err(Error::Data(format!("{}: world file disagrees with manifest", path.display())));
            }
            if !rgb {
                let gray = img.into_luma8();
                if let Some(v) = gray.as_raw().iter().find(|v| **v != 0 && !manifest.classes.contains(**v)) {
                    return Err(Error::Data(format!("{}: undeclared class id {v}", path.display())));
                }
            }
        }
    }
    Ok(())
}
