//! OpenStreetMap ground truth through the Overpass API.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{point_in_ring, Coord, Polygon};
use crate::http::{write_atomic, HttpRequest, HttpTransport};

use super::{repair_polygon, GroundTruthFeature, GroundTruthLayer, SourceTag};

pub const DEFAULT_ENDPOINT: &str = "https://overpass-api.de/api/interpreter";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFilter {
    pub key: String,
    /// `None` (or `"*"` in config files) matches any value.
    #[serde(default)]
    pub value: Option<String>,
}

impl TagFilter {
    pub fn new(key: &str, value: Option<&str>) -> Self {
        TagFilter {
            key: key.to_string(),
            value: value.filter(|v| *v != "*").map(str::to_string),
        }
    }

    fn ql(&self) -> String {
        match self.value.as_deref() {
            None | Some("*") => format!("[{}]", self.key),
            Some(v) => format!("[{}={}]", self.key, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Way,
    Relation,
}

fn default_kinds() -> Vec<ElementKind> {
    vec![ElementKind::Way, ElementKind::Relation]
}

fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.to_string()
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverpassQuery {
    pub tag_filters: Vec<TagFilter>,
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ElementKind>,
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// Class assigned to every returned area.
    pub class_id: u8,
}

impl OverpassQuery {
    pub fn new(tag_filters: Vec<TagFilter>, bbox: (f64, f64, f64, f64), class_id: u8) -> Self {
        OverpassQuery {
            tag_filters,
            south: bbox.0,
            west: bbox.1,
            north: bbox.2,
            east: bbox.3,
            kinds: default_kinds(),
            endpoint_url: default_endpoint(),
            timeout_s: default_timeout(),
            class_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.south < self.north && self.west < self.east) {
            return Err(Error::Config(format!(
                "overpass bbox ({}, {}, {}, {}) needs south < north and west < east",
                self.south, self.west, self.north, self.east
            )));
        }
        if self.tag_filters.is_empty() || self.kinds.is_empty() {
            return Err(Error::Config("overpass query needs tag filters and element kinds".into()));
        }
        Ok(())
    }

    pub fn to_ql(&self) -> String {
        let filters: String = self.tag_filters.iter().map(TagFilter::ql).collect();
        let bbox = format!("({},{},{},{})", self.south, self.west, self.north, self.east);
        let parts: Vec<String> = self
            .kinds
            .iter()
            .map(|k| {
                let kind = match k {
                    ElementKind::Way => "way",
                    ElementKind::Relation => "relation",
                };
                format!("{kind}{filters}{bbox};")
            })
            .collect();
        format!(
            "[out:json][timeout:{}]; ({}); out body; >; out skel qt;",
            self.timeout_s,
            parts.join(" ")
        )
    }

    pub fn cache_key(&self) -> String {
        hex::encode(Sha256::digest(self.to_ql().as_bytes()))
    }
}

#[derive(Debug, Deserialize)]
struct Response {
    elements: Vec<Element>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Element {
    Node {
        id: i64,
        lat: f64,
        lon: f64,
    },
    Way {
        id: i64,
        #[serde(default)]
        nodes: Vec<i64>,
        #[serde(default)]
        tags: HashMap<String, String>,
    },
    Relation {
        id: i64,
        #[serde(default)]
        members: Vec<Member>,
        #[serde(default)]
        tags: HashMap<String, String>,
    },
    #[serde(other)]
    Other,
}

#[derive(Debug, Deserialize)]
struct Member {
    #[serde(rename = "type")]
    kind: String,
    #[serde(rename = "ref")]
    id: i64,
    #[serde(default)]
    role: String,
}

/// What was skipped while assembling areas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverpassReport {
    pub open_ways: usize,
    pub broken_rings: usize,
}

/// Join way node sequences end to end into closed rings. Pieces that never
/// close are counted and dropped.
fn assemble_rings(mut pieces: Vec<Vec<i64>>, broken: &mut usize) -> Vec<Vec<i64>> {
    let mut rings = Vec::new();
    pieces.retain(|p| p.len() >= 2);
    while let Some(mut ring) = pieces.pop() {
        while ring.first() != ring.last() {
            let end = *ring.last().unwrap();
            let Some(i) = pieces
                .iter()
                .position(|p| p.first() == Some(&end) || p.last() == Some(&end))
            else {
                break;
            };
            let mut p = pieces.swap_remove(i);
            if p.first() != Some(&end) {
                p.reverse();
            }
            ring.extend_from_slice(&p[1..]);
        }
        if ring.first() == ring.last() && ring.len() >= 4 {
            rings.push(ring);
        } else {
            *broken += 1;
        }
    }
    rings
}

/// Parse an Overpass JSON response into polygons in EPSG:4326 (x = lon).
pub fn parse_overpass_json(text: &str, class_id: u8) -> Result<(GroundTruthLayer<f64>, OverpassReport)> {
    let resp: Response =
        serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed Overpass JSON: {e}")))?;
    let mut nodes: HashMap<i64, Coord<f64>> = HashMap::new();
    let mut ways: HashMap<i64, Vec<i64>> = HashMap::new();
    let mut tagged_ways: Vec<i64> = Vec::new();
    let mut relations = Vec::new();
    for el in resp.elements {
        match el {
            Element::Node { id, lat, lon } => {
                nodes.insert(id, Coord::new(lon, lat));
            }
            Element::Way { id, nodes: refs, tags } => {
                // A way may arrive twice (with tags, then as a skeleton).
                if !tags.is_empty() && !tagged_ways.contains(&id) {
                    tagged_ways.push(id);
                }
                ways.entry(id).or_insert(refs);
            }
            Element::Relation { id, members, tags } => relations.push((id, members, tags)),
            Element::Other => {}
        }
    }
    let mut report = OverpassReport::default();
    let coords = |ring: &[i64]| -> Option<Vec<Coord<f64>>> {
        ring[..ring.len() - 1].iter().map(|n| nodes.get(n).copied()).collect()
    };
    let mut polygons = Vec::new();
    for id in &tagged_ways {
        let refs = &ways[id];
        if refs.len() < 4 || refs.first() != refs.last() {
            report.open_ways += 1;
            continue;
        }
        match coords(refs) {
            Some(ring) => polygons.push(Polygon::new(ring, vec![])),
            None => report.broken_rings += 1,
        }
    }
    for (id, members, tags) in relations {
        if !matches!(tags.get("type").map(String::as_str), Some("multipolygon" | "boundary")) {
            continue;
        }
        let (mut outer, mut inner) = (Vec::new(), Vec::new());
        for m in members.iter().filter(|m| m.kind == "way") {
            let Some(refs) = ways.get(&m.id) else {
                report.broken_rings += 1;
                continue;
            };
            if m.role == "inner" {
                inner.push(refs.clone());
            } else {
                outer.push(refs.clone());
            }
        }
        let to_coords = |rings: Vec<Vec<i64>>, broken: &mut usize| -> Vec<Vec<Coord<f64>>> {
            rings
                .into_iter()
                .filter_map(|r| {
                    let c = coords(&r);
                    if c.is_none() {
                        *broken += 1;
                    }
                    c
                })
                .collect()
        };
        let outer_rings = assemble_rings(outer, &mut report.broken_rings);
        let outer = to_coords(outer_rings, &mut report.broken_rings);
        let inner_rings = assemble_rings(inner, &mut report.broken_rings);
        let inner = to_coords(inner_rings, &mut report.broken_rings);
        let mut holes: Vec<Vec<Vec<Coord<f64>>>> = vec![Vec::new(); outer.len()];
        for h in inner {
            match outer.iter().position(|o| point_in_ring(h[0], o)) {
                Some(i) => holes[i].push(h),
                None => warn!("relation {id}: inner ring outside every outer ring"),
            }
        }
        polygons.extend(outer.into_iter().zip(holes).map(|(o, h)| Polygon::new(o, h)));
    }
    if report.open_ways > 0 {
        warn!("discarded {} open ways", report.open_ways);
    }
    if report.broken_rings > 0 {
        warn!("discarded {} rings with missing members or nodes", report.broken_rings);
    }
    let mut layer = GroundTruthLayer::new("EPSG:4326", SourceTag::Overpass);
    for p in polygons {
        layer
            .features
            .extend(repair_polygon(&p).into_iter().map(|polygon| GroundTruthFeature { polygon, class_id }));
    }
    Ok((layer, report))
}

/// Run `query`, reading and filling the disk cache in `cache_dir` when given.
/// Identical QL text never reaches the network twice.
pub fn run_overpass(
    query: &OverpassQuery,
    transport: &dyn HttpTransport,
    cache_dir: Option<&Path>,
) -> Result<GroundTruthLayer<f64>> {
    query.validate()?;
    let ql = query.to_ql();
    let cache_path = cache_dir.map(|d| d.join(format!("overpass_{}.json", query.cache_key())));
    if let Some(p) = &cache_path {
        if let Ok(text) = std::fs::read_to_string(p) {
            return parse_overpass_json(&text, query.class_id).map(|(l, _)| l);
        }
    }
    let url = &query.endpoint_url;
    let resp = transport.send(&HttpRequest::post_form(url, &[("data", &ql)]))?;
    match resp.status {
        200..=299 => {}
        429 => {
            return Err(Error::RateLimited {
                url: url.clone(),
                retry_after_s: resp.retry_after_s,
            })
        }
        s => {
            return Err(Error::Http {
                url: url.clone(),
                reason: format!("status {s}"),
            })
        }
    }
    let text = String::from_utf8(resp.body).map_err(|_| Error::Data("Overpass response is not UTF-8".into()))?;
    let (layer, _) = parse_overpass_json(&text, query.class_id)?;
    if let Some(p) = &cache_path {
        write_atomic(p, text.as_bytes())?;
    }
    Ok(layer)
}
