//! Vector ground truth: file and Overpass loading, polygon repair, polygons
//! from line networks and the line coverage check.

mod lines;
pub mod overpass;
pub(crate) mod planar;
mod repair;

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub use lines::{line_coverage_ratio, lines_to_polygons, polygonize_checked, LineTag, CLAIM_SHARE, COVERAGE_GATE, DEFAULT_SNAP_TOL_M};
pub use overpass::{run_overpass, ElementKind, OverpassQuery, TagFilter};
pub use repair::{is_simple, repair_polygon};

use crate::classes::ClassTable;
use crate::crs::{transform_between, CrsTransform};
use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::scalar::Scalar;
use crate::vector::{self, Feature, Properties};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    File,
    Overpass,
    LineDerived,
    /// Traced back from a class mask.
    Vectorized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFeature<T> {
    pub polygon: Polygon<T>,
    pub class_id: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLayer<T> {
    pub features: Vec<GroundTruthFeature<T>>,
    pub crs_id: String,
    pub source: SourceTag,
    pub acquisition_tag: String,
}

impl<T: Scalar> GroundTruthLayer<T> {
    pub fn new(crs_id: &str, source: SourceTag) -> Self {
        GroundTruthLayer {
            features: Vec::new(),
            crs_id: crs_id.to_string(),
            source,
            acquisition_tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.acquisition_tag = tag.to_string();
        self
    }

    pub fn polygons(&self, class_id: u8) -> Vec<Polygon<T>> {
        self.features
            .iter()
            .filter(|f| f.class_id == class_id)
            .map(|f| f.polygon.clone())
            .collect()
    }

    /// Every class id is in `table` and every polygon is valid.
    pub fn validate(&self, table: &ClassTable) -> Result<()> {
        for (i, f) in self.features.iter().enumerate() {
            if !table.contains(f.class_id) {
                return Err(Error::Data(format!("feature {i}: class {} not in the class table", f.class_id)));
            }
            f.polygon
                .validate()
                .map_err(|e| Error::Data(format!("feature {i}: {e}")))?;
        }
        Ok(())
    }

    /// Coordinates mapped into `transform.target_crs()`; feature and hole
    /// counts are unchanged.
    pub fn reproject(&self, transform: &dyn CrsTransform) -> Result<Self> {
        let features = self
            .features
            .iter()
            .map(|f| {
                let polygon = f.polygon.map_coords(|c| {
                    transform
                        .forward(c.cast())
                        .map(|p| p.cast())
                })?;
                Ok(GroundTruthFeature {
                    polygon,
                    class_id: f.class_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundTruthLayer {
            features,
            crs_id: transform.target_crs().to_string(),
            source: self.source,
            acquisition_tag: self.acquisition_tag.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> GroundTruthLayer<U> {
        GroundTruthLayer {
            features: self
                .features
                .iter()
                .map(|f| GroundTruthFeature {
                    polygon: f.polygon.cast(),
                    class_id: f.class_id,
                })
                .collect(),
            crs_id: self.crs_id.clone(),
            source: self.source,
            acquisition_tag: self.acquisition_tag.clone(),
        }
    }

    /// Normalized GeoJSON: one feature per polygon with a `class_id` property
    /// and a `crs` member naming the layer CRS.
    pub fn to_geojson(&self) -> String {
        vector::features_to_geojson_crs(&self.to_features(), Some(&self.crs_id))
    }

    fn to_features(&self) -> Vec<Feature<T>> {
        self.features
            .iter()
            .map(|f| {
                let mut properties = Properties::new();
                properties.insert("class_id".into(), f.class_id.into());
                Feature {
                    polygon: f.polygon.clone(),
                    properties,
                }
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        vector::write_features(path, &self.to_features(), Some(&self.crs_id))
    }
}

/// Read a layer written by [`GroundTruthLayer::write`].
pub fn read_layer(path: &Path, source: SourceTag) -> Result<GroundTruthLayer<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let crs_id = vector::geojson_crs(&text)
        .ok_or_else(|| Error::Data(format!("{}: missing crs member", path.display())))?;
    let mut features = Vec::new();
    for f in vector::parse_polygon_features(&text)? {
        let class_id = f
            .properties
            .get("class_id")
            .and_then(Json::as_u64)
            .and_then(|v| u8::try_from(v).ok())
            .ok_or_else(|| Error::Data(format!("{}: feature without class_id", path.display())))?;
        features.push(GroundTruthFeature {
            polygon: f.polygon,
            class_id,
        });
    }
    Ok(GroundTruthLayer {
        features,
        crs_id,
        source,
        acquisition_tag: String::new(),
    })
}

/// Text form of an attribute value for class lookup: strings verbatim,
/// everything else as JSON.
pub(crate) fn attribute_text(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Maps values of one source attribute to class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMapping {
    pub attribute: String,
    pub values: BTreeMap<String, u8>,
}

impl ClassMapping {
    pub fn new(attribute: &str, pairs: &[(&str, u8)]) -> Self {
        ClassMapping {
            attribute: attribute.to_string(),
            values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn class_of(&self, props: &Properties) -> Option<u8> {
        let v = props.get(&self.attribute)?;
        self.values.get(&attribute_text(v)).copied()
    }
}

/// Bookkeeping from a file load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub read: usize,
    pub unmapped: usize,
    /// Input polygons that needed repair.
    pub repaired: usize,
    /// Input polygons with nothing left after repair.
    pub degenerate: usize,
}

/// Load a GeoJSON file into `target_crs`. The source CRS comes from the
/// file's `crs` member, else from `source_crs`.
pub fn load_vector_file(
    path: &Path,
    mapping: &ClassMapping,
    source_crs: Option<&str>,
    target_crs: &str,
) -> Result<GroundTruthLayer<f64>> {
    load_vector_file_with_report(path, mapping, source_crs, target_crs).map(|(l, _)| l)
}

pub fn load_vector_file_with_report(
    path: &Path,
    mapping: &ClassMapping,
    source_crs: Option<&str>,
    target_crs: &str,
) -> Result<(GroundTruthLayer<f64>, LoadReport)> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if !matches!(ext.as_str(), "geojson" | "json") {
        return Err(Error::Data(format!("{}: unsupported vector format", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let crs = vector::geojson_crs(&text)
        .or_else(|| source_crs.map(str::to_string))
        .ok_or_else(|| Error::Config(format!("{}: no CRS in file and none supplied", path.display())))?;
    let transform = transform_between(&crs, target_crs)?;

    let mut report = LoadReport::default();
    let mut layer = GroundTruthLayer::new(&crs, SourceTag::File);
    for f in vector::parse_polygon_features(&text)? {
        report.read += 1;
        let Some(class_id) = mapping.class_of(&f.properties) else {
            report.unmapped += 1;
            continue;
        };
        let parts = repair_polygon(&f.polygon);
        if parts.len() != 1 || parts[0] != f.polygon {
            report.repaired += 1;
        }
        if parts.is_empty() {
            report.degenerate += 1;
        }
        layer
            .features
            .extend(parts.into_iter().map(|polygon| GroundTruthFeature { polygon, class_id }));
    }
    if report.unmapped > 0 {
        warn!("{}: dropped {} unmapped features", path.display(), report.unmapped);
    }
    if report.repaired > 0 {
        warn!("{}: repaired {} invalid polygons", path.display(), report.repaired);
    }
    Ok((layer.reproject(&transform)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Coord;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const SQUARES: &str = r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"kind":"building"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[4,0],[4,4],[0,4],[0,0]]]}},
        {"type":"Feature","properties":{"kind":"tree"},"geometry":{"type":"Polygon","coordinates":[[[10,0],[11,0],[11,1],[10,0]]]}},
        {"type":"Feature","properties":{"kind":"building"},"geometry":{"type":"Polygon","coordinates":[[[0,10],[2,12],[2,10],[0,12],[0,10]]]}}
    ]}"#;

    #[test]
    fn mapping_and_repair_bookkeeping() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gt.geojson", SQUARES);
        let m = ClassMapping::new("kind", &[("building", 1)]);
        let (layer, report) = load_vector_file_with_report(&p, &m, Some("LOCAL"), "LOCAL").unwrap();
        assert_eq!(report.read, 3);
        assert_eq!(report.unmapped, 1);
        assert_eq!(report.repaired, 1);
        // square plus the two bow-tie lobes
        assert_eq!(layer.features.len(), 3);
        assert!(layer.features.iter().all(|f| f.class_id == 1 && f.polygon.validate().is_ok()));
    }

    #[test]
    fn missing_crs_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gt.geojson", SQUARES);
        let m = ClassMapping::new("kind", &[("building", 1)]);
        let err = load_vector_file(&p, &m, None, "LOCAL").unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Config);
    }

    #[test]
    fn unknown_format_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gt.shp", "");
        let m = ClassMapping::new("kind", &[]);
        assert!(load_vector_file(&p, &m, Some("LOCAL"), "LOCAL").is_err());
    }

    #[test]
    fn numeric_attribute_values_map() {
        let mut props = Properties::new();
        props.insert("code".into(), 7.into());
        assert_eq!(ClassMapping::new("code", &[("7", 2)]).class_of(&props), Some(2));
    }

    #[test]
    fn reprojection_keeps_counts() {
        let hole = vec![Coord::new(16.361, 48.201), Coord::new(16.362, 48.201), Coord::new(16.362, 48.202)];
        let poly = Polygon::new(Polygon::rect(16.36, 48.20, 16.37, 48.21).exterior, vec![hole]);
        let mut layer = GroundTruthLayer::new("EPSG:4326", SourceTag::File);
        layer.features.push(GroundTruthFeature { polygon: poly, class_id: 1 });
        let t = transform_between("EPSG:4326", "EPSG:32633").unwrap();
        let out = layer.reproject(&t).unwrap();
        assert_eq!(out.crs_id, "EPSG:32633");
        assert_eq!(out.features.len(), 1);
        assert_eq!(out.features[0].polygon.interiors.len(), 1);
        assert!(out.features[0].polygon.validate().is_ok());
    }

    #[test]
    fn layer_geojson_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut layer = GroundTruthLayer::new("EPSG:25830", SourceTag::File);
        layer.features.push(GroundTruthFeature {
            polygon: Polygon::rect(0.0, 0.0, 1.0, 2.0),
            class_id: 4,
        });
        let p = dir.path().join("out.geojson");
        layer.write(&p).unwrap();
        let back = read_layer(&p, SourceTag::File).unwrap();
        assert_eq!(back.crs_id, "EPSG:25830");
        assert_eq!(back.features[0].class_id, 4);
        assert_eq!(back.features[0].polygon.area(), 2.0);
    }
}
