//! Pipeline configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classes::{ClassSpec, ClassTable};
use crate::cleaning::CleaningPolicy;
use crate::error::{Error, Result};
use crate::evaluation::{MetricsOptions, DEFAULT_BUFFER_M};
use crate::grid::GridSpec;
use crate::groundtruth::{ClassMapping, TagFilter, COVERAGE_GATE, DEFAULT_SNAP_TOL_M};
use crate::imagery::{AuthHeader, EndpointKind, ImageryEndpoint, TileMatrix};
use crate::morphology::ElementShape;

fn default_root() -> PathBuf {
    PathBuf::from("dataset")
}
fn default_max_repetitions() -> u32 {
    4
}
fn default_format() -> String {
    "image/png".into()
}
fn default_style() -> String {
    "default".into()
}
fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    250
}
fn default_concurrency() -> usize {
    4
}
fn default_snap() -> f64 {
    DEFAULT_SNAP_TOL_M
}
fn default_gate() -> f64 {
    COVERAGE_GATE
}
fn default_buffer() -> f64 {
    DEFAULT_BUFFER_M
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    /// Output directory, relative to the config file.
    #[serde(default = "default_root")]
    pub root: PathBuf,
    #[serde(default = "default_max_repetitions")]
    pub max_repetitions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub path: PathBuf,
    /// CRS of the region file when it carries no `crs` member.
    #[serde(default)]
    pub crs: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagerySection {
    pub kind: EndpointKind,
    pub url: String,
    #[serde(default)]
    pub layer: String,
    /// Acquisition epoch used in file names.
    pub tag: String,
    /// Provider pixel size; derived from `zoom` when omitted.
    #[serde(default)]
    pub provider_resolution: Option<f64>,
    /// Web Mercator pyramid level, shorthand for `tile_matrix`.
    #[serde(default)]
    pub zoom: Option<u8>,
    #[serde(default)]
    pub tile_matrix: Option<TileMatrix>,
    #[serde(default)]
    pub tile_matrix_set: String,
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_style")]
    pub style: String,
    #[serde(default)]
    pub auth: Option<AuthHeader>,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    /// Tile cache; `GEOSEG_CACHE_DIR` takes precedence.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ImagerySection {
    pub fn endpoint(&self, provider_crs: &str) -> Result<ImageryEndpoint> {
        let mut tile_matrix = self.tile_matrix.clone();
        let mut resolution = self.provider_resolution;
        if let Some(z) = self.zoom {
            let (m, res) = TileMatrix::web_mercator(z);
            tile_matrix.get_or_insert(m);
            resolution.get_or_insert(res);
        }
        let provider_resolution = resolution
            .ok_or_else(|| Error::Config("[imagery] needs provider_resolution or zoom".into()))?;
        let ep = ImageryEndpoint {
            kind: self.kind,
            url_template: self.url.clone(),
            layer: self.layer.clone(),
            crs_id: provider_crs.to_string(),
            provider_resolution,
            tile_matrix_set: self.tile_matrix_set.clone(),
            tile_matrix,
            format: self.format.clone(),
            style: self.style.clone(),
            auth: self.auth.clone(),
            request_timeout_s: self.request_timeout_s,
            max_retries: self.max_retries,
            retry_base_ms: self.retry_base_ms,
            max_concurrent_requests: self.max_concurrent_requests,
        };
        ep.validate()?;
        Ok(ep)
    }
}

/// Cartographic line network turned into polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinesSource {
    pub path: PathBuf,
    #[serde(default)]
    pub crs: Option<String>,
    pub tag_key: String,
    #[serde(default)]
    pub tag_value: Option<String>,
    pub class_id: u8,
    #[serde(default = "default_snap")]
    pub snap_tol_m: f64,
    /// Minimum share of line length on face boundaries.
    #[serde(default = "default_gate")]
    pub coverage_gate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverpassSource {
    pub filters: Vec<TagFilter>,
    pub class_id: u8,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSection {
    /// Polygon file mapped through `attribute` and `mapping`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub crs: Option<String>,
    #[serde(default)]
    pub attribute: Option<String>,
    #[serde(default)]
    pub mapping: BTreeMap<String, u8>,
    #[serde(default)]
    pub lines: Vec<LinesSource>,
    #[serde(default)]
    pub overpass: Vec<OverpassSource>,
}

impl GroundTruthSection {
    pub fn class_mapping(&self) -> Result<Option<ClassMapping>> {
        if self.path.is_none() {
            return Ok(None);
        }
        let attribute = self
            .attribute
            .clone()
            .ok_or_else(|| Error::Config("[groundtruth] path needs an attribute".into()))?;
        Ok(Some(ClassMapping {
            attribute,
            values: self.mapping.clone(),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SplitsSection {
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub crs: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CleaningSection {
    /// Element shape for every class, overriding the class table.
    #[serde(default)]
    pub shape: Option<ElementShape>,
    /// Class names left untouched by the cleaner.
    #[serde(default)]
    pub disabled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_buffer")]
    pub buffer_m: f64,
    /// Class names; the class table groups are used when absent.
    #[serde(default)]
    pub street: Option<Vec<String>>,
    #[serde(default)]
    pub pedestrian: Option<Vec<String>>,
    /// Named trend regions, one polygon file each.
    #[serde(default)]
    pub regions: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub regions_crs: Option<String>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            buffer_m: DEFAULT_BUFFER_M,
            street: None,
            pedestrian: None,
            regions: BTreeMap::new(),
            regions_crs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub region: RegionSection,
    pub grid: GridSpec,
    pub imagery: ImagerySection,
    pub groundtruth: GroundTruthSection,
    pub classes: Vec<ClassSpec>,
    #[serde(default)]
    pub splits: Option<SplitsSection>,
    #[serde(default)]
    pub cleaning: CleaningSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn hash_json<T: Serialize>(v: &T) -> String {
    let text = serde_json::to_string(v).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("invalid configuration: "))))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let table = self.class_table()?;
        self.imagery.endpoint(&self.grid.provider_crs_id)?;
        if self.imagery.tag.is_empty() || self.imagery.tag.contains(['/', '\\']) {
            return Err(Error::Config(format!("bad imagery tag `{}`", self.imagery.tag)));
        }
        if self.dataset.max_repetitions == 0 {
            return Err(Error::Config("max_repetitions must be at least 1".into()));
        }
        let gt = &self.groundtruth;
        if gt.path.is_none() && gt.lines.is_empty() && gt.overpass.is_empty() {
            return Err(Error::Config("[groundtruth] names no source".into()));
        }
        gt.class_mapping()?;
        let mapped = gt
            .mapping
            .values()
            .chain(gt.lines.iter().map(|l| &l.class_id))
            .chain(gt.overpass.iter().map(|o| &o.class_id));
        for id in mapped {
            if !table.contains(*id) {
                return Err(Error::Config(format!("ground truth maps to unknown class id {id}")));
            }
        }
        for name in &self.cleaning.disabled {
            if table.by_name(name).is_none() {
                return Err(Error::Config(format!("[cleaning] unknown class `{name}`")));
            }
        }
        self.metrics_options(&table)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn root(&self) -> PathBuf {
        self.resolve(&self.dataset.root)
    }

    pub fn class_table(&self) -> Result<ClassTable> {
        ClassTable::new(self.classes.clone())
    }

    pub fn endpoint(&self) -> Result<ImageryEndpoint> {
        self.imagery.endpoint(&self.grid.provider_crs_id)
    }

    /// SHA-256 over the canonical serialization of every field.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    /// Hash of the fields that determine the fetched images.
    pub fn imagery_hash(&self) -> String {
        let i = &self.imagery;
        hash_json(&(&self.region, &self.grid, i.kind, &i.url, &i.layer, i.provider_resolution, i.zoom, &i.tile_matrix, &i.tile_matrix_set, &i.format, &i.style))
    }

    /// Hash of the fields that determine the rasterized masks.
    pub fn mask_hash(&self) -> String {
        hash_json(&(&self.region, &self.grid, &self.groundtruth, &self.classes))
    }

    pub fn cleaning_policy(&self, table: &ClassTable) -> CleaningPolicy {
        let mut p = CleaningPolicy::from_table(table, self.grid.resolution);
        if let Some(shape) = self.cleaning.shape {
            p = p.with_shape(shape);
        }
        for name in &self.cleaning.disabled {
            if let Some(c) = table.by_name(name) {
                if let Some(cp) = p.classes.get_mut(&c.class_id) {
                    cp.enabled = false;
                }
            }
        }
        p
    }

    pub fn metrics_options(&self, table: &ClassTable) -> Result<MetricsOptions> {
        let mut o = MetricsOptions::from_table(table);
        o.buffer_m = self.metrics.buffer_m;
        let ids = |names: &[String]| {
            names
                .iter()
                .map(|n| {
                    table
                        .by_name(n)
                        .map(|c| c.class_id)
                        .ok_or_else(|| Error::Config(format!("[metrics] unknown class `{n}`")))
                })
                .collect::<Result<Vec<u8>>>()
        };
        if let Some(s) = &self.metrics.street {
            o.street = ids(s)?;
        }
        if let Some(p) = &self.metrics.pedestrian {
            o.pedestrian = ids(p)?;
        }
        if !(o.buffer_m >= 0.0 && o.buffer_m.is_finite()) {
            return Err(Error::Config("buffer_m must be non-negative".into()));
        }
        Ok(o)
    }
}

#[cfg(test)]
pub(crate) const EXAMPLE: &str = r#"
[dataset]
name = "demo"
root = "out"

[region]
path = "region.geojson"
crs = "LOCAL"

[grid]
tile_size_px = 64
resolution_m = 0.5
overlap_m = 0.0
work_crs = "LOCAL"
provider_crs = "LOCAL"

[imagery]
kind = "xyz"
url = "http://127.0.0.1:1/{z}/{x}/{y}.png"
tag = "2023"
provider_resolution = 0.5
tile_matrix = { id = "0", origin_x = 0.0, origin_y = 96.0 }

[groundtruth]
path = "gt.geojson"
crs = "LOCAL"
attribute = "kind"
mapping = { parking = 6 }

[[classes]]
class_id = 6
name = "parking"
min_width_m = 1.5
min_area_m2 = 3.0

[splits]
train = "train.geojson"
"#;
