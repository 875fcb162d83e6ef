//! GeoJSON reading and writing for polygon and line features.

use std::path::Path;

use geojson::{GeoJson, Geometry, Value};
use serde_json::{Map, Value as Json};

use crate::error::{Error, Result};
use crate::geometry::{ring_signed_area, Coord, Polygon};
use crate::scalar::Scalar;

pub type Properties = Map<String, Json>;

#[derive(Debug, Clone, PartialEq)]
pub struct Feature<T> {
    pub polygon: Polygon<T>,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineFeature<T> {
    pub points: Vec<Coord<T>>,
    pub properties: Properties,
}

fn position(p: &[f64]) -> Result<Coord<f64>> {
    match p {
        [x, y, ..] => Ok(Coord::new(*x, *y)),
        _ => Err(Error::Data(format!("position with {} ordinates", p.len()))),
    }
}

fn ring(r: &[Vec<f64>]) -> Result<Vec<Coord<f64>>> {
    r.iter().map(|p| position(p)).collect()
}

fn polygon(rings: &[Vec<Vec<f64>>]) -> Result<Polygon<f64>> {
    let (outer, inner) = rings
        .split_first()
        .ok_or_else(|| Error::Data("polygon without rings".into()))?;
    Ok(Polygon::new(
        ring(outer)?,
        inner.iter().map(|r| ring(r)).collect::<Result<Vec<_>>>()?,
    ))
}

fn collect_geometries(geojson: GeoJson) -> Vec<(Geometry, Properties)> {
    match geojson {
        GeoJson::FeatureCollection(fc) => fc
            .features
            .into_iter()
            .filter_map(|f| f.geometry.map(|g| (g, f.properties.unwrap_or_default())))
            .collect(),
        GeoJson::Feature(f) => f
            .geometry
            .map(|g| vec![(g, f.properties.unwrap_or_default())])
            .unwrap_or_default(),
        GeoJson::Geometry(g) => vec![(g, Properties::new())],
    }
}

fn flatten_polygons(value: &Value, props: &Properties, out: &mut Vec<Feature<f64>>) -> Result<()> {
    match value {
        Value::Polygon(rings) => out.push(Feature {
            polygon: polygon(rings)?,
            properties: props.clone(),
        }),
        Value::MultiPolygon(polys) => {
            for rings in polys {
                out.push(Feature {
                    polygon: polygon(rings)?,
                    properties: props.clone(),
                });
            }
        }
        Value::GeometryCollection(gs) => {
            for g in gs {
                flatten_polygons(&g.value, props, out)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn flatten_lines(value: &Value, props: &Properties, out: &mut Vec<LineFeature<f64>>) -> Result<()> {
    match value {
        Value::LineString(pts) => out.push(LineFeature {
            points: ring(pts)?,
            properties: props.clone(),
        }),
        Value::MultiLineString(lines) => {
            for pts in lines {
                out.push(LineFeature {
                    points: ring(pts)?,
                    properties: props.clone(),
                });
            }
        }
        Value::GeometryCollection(gs) => {
            for g in gs {
                flatten_lines(&g.value, props, out)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn parse(text: &str) -> Result<GeoJson> {
    text.parse::<GeoJson>()
        .map_err(|e| Error::Data(format!("GeoJSON: {e}")))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Polygon and MultiPolygon features; multipolygons are split into parts that
/// share the source properties. Other geometry types are ignored.
pub fn parse_polygon_features(text: &str) -> Result<Vec<Feature<f64>>> {
    let mut out = Vec::new();
    for (g, props) in collect_geometries(parse(text)?) {
        flatten_polygons(&g.value, &props, &mut out)?;
    }
    Ok(out)
}

pub fn read_polygon_features(path: &Path) -> Result<Vec<Feature<f64>>> {
    parse_polygon_features(&read_text(path)?)
}

pub fn parse_line_features(text: &str) -> Result<Vec<LineFeature<f64>>> {
    let mut out = Vec::new();
    for (g, props) in collect_geometries(parse(text)?) {
        flatten_lines(&g.value, &props, &mut out)?;
    }
    Ok(out)
}

pub fn read_line_features(path: &Path) -> Result<Vec<LineFeature<f64>>> {
    parse_line_features(&read_text(path)?)
}

fn closed_ring<T: Scalar>(r: &[Coord<T>], ccw: bool) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = r
        .iter()
        .map(|c| vec![c.x.to_f64_lossy(), c.y.to_f64_lossy()])
        .collect();
    if (ring_signed_area(r) > T::zero()) != ccw {
        pts.reverse();
    }
    if let Some(first) = pts.first().cloned() {
        pts.push(first);
    }
    pts
}

/// GeoJSON polygon with counter-clockwise shell and clockwise holes.
pub fn polygon_geometry<T: Scalar>(p: &Polygon<T>) -> Geometry {
    let mut rings = vec![closed_ring(&p.exterior, true)];
    rings.extend(p.interiors.iter().map(|h| closed_ring(h, false)));
    Geometry::new(Value::Polygon(rings))
}

/// CRS named by a legacy `crs` member, normalized to `EPSG:n`.
pub fn geojson_crs(text: &str) -> Option<String> {
    let v: Json = serde_json::from_str(text).ok()?;
    let name = v.get("crs")?.get("properties")?.get("name")?.as_str()?;
    normalize_crs_name(name)
}

fn normalize_crs_name(name: &str) -> Option<String> {
    if name.starts_with("LOCAL") || name.starts_with("EPSG:") {
        return Some(name.to_string());
    }
    if name.ends_with("CRS84") {
        return Some("EPSG:4326".into());
    }
    let code = name.rsplit(':').next()?;
    if code.chars().all(|c| c.is_ascii_digit()) && !code.is_empty() {
        Some(format!("EPSG:{code}"))
    } else {
        None
    }
}

pub fn features_to_geojson<T: Scalar>(features: &[Feature<T>]) -> String {
    features_to_geojson_crs(features, None)
}

/// As [`features_to_geojson`], naming `crs_id` in a `crs` member.
pub fn features_to_geojson_crs<T: Scalar>(features: &[Feature<T>], crs_id: Option<&str>) -> String {
    let foreign_members = crs_id.map(|id| {
        let mut m = Map::new();
        m.insert(
            "crs".into(),
            serde_json::json!({"type": "name", "properties": {"name": id}}),
        );
        m
    });
    let fc = geojson::FeatureCollection {
        bbox: None,
        features: features
            .iter()
            .map(|f| geojson::Feature {
                bbox: None,
                geometry: Some(polygon_geometry(&f.polygon)),
                id: None,
                properties: Some(f.properties.clone()),
                foreign_members: None,
            })
            .collect(),
        foreign_members,
    };
    GeoJson::FeatureCollection(fc).to_string()
}

pub fn write_features<T: Scalar>(path: &Path, features: &[Feature<T>], crs_id: Option<&str>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, features_to_geojson_crs(features, crs_id)).map_err(|e| Error::io(path, e))
}
