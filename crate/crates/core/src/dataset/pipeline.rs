use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::cleaning::{clean_mask, CleaningPolicy};
use crate::crs::{transform_between, CrsTransform};
use crate::error::{Error, Result};
use crate::evaluation::{class_metrics, trend, MetricsReport, TrendReport};
use crate::geometry::{Bounds, Coord, Polygon};
use crate::georef::world_file_path;
use crate::grid::{build_grid, grid_to_vector, DatasetRegion, TileGrid};
use crate::groundtruth::{
    load_vector_file, polygonize_checked, read_layer, run_overpass, GroundTruthLayer, LineTag,
    OverpassQuery, SourceTag,
};
use crate::http::{write_atomic, HttpTransport};
use crate::imagery::{cache_key, mosaic, EndpointKind, ImageryClient, RasterTile, TileCache, CACHE_DIR_ENV};
use crate::raster::{list_masks, rasterize, ClassMask};
use crate::vector::{self, LineFeature};

use super::config::Config;
use super::manifest::{Manifest, ProviderInfo, TileRecord};
use super::{assign_splits, class_proportions, diversity_from_proportions, Split};

const STAMP_FILE: &str = ".geoseg-stamp.json";
const GRID_FILE: &str = "grid.geojson";
const GROUNDTRUTH_FILE: &str = "groundtruth.geojson";
const IMAGES_DIR: &str = "images";
const MASKS_DIR: &str = "masks";

/// Config hashes the artifacts under the root were produced with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
struct Stamp {
    imagery: String,
    masks: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FetchSummary {
    pub fetched: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RasterizeSummary {
    pub written: usize,
    pub skipped: usize,
}

/// What a run would do, computed without touching the network or the disk.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Plan {
    pub tiles_total: usize,
    pub tiles_selected: usize,
    pub images_to_fetch: usize,
    /// Provider requests for the images not already cached.
    pub provider_requests: usize,
    pub masks_to_write: usize,
    pub overpass_requests: usize,
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tiles: {} in grid, {} selected", self.tiles_total, self.tiles_selected)?;
        writeln!(
            f,
            "images to fetch: {} ({} provider requests)",
            self.images_to_fetch, self.provider_requests
        )?;
        writeln!(f, "masks to write: {}", self.masks_to_write)?;
        write!(f, "overpass requests: {}", self.overpass_requests)
    }
}

fn read_polygons(path: &Path, fallback_crs: Option<&str>) -> Result<(Vec<Polygon<f64>>, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let crs = vector::geojson_crs(&text)
        .or_else(|| fallback_crs.map(str::to_string))
        .ok_or_else(|| Error::Config(format!("{}: no CRS in file and none configured", path.display())))?;
    let polygons = vector::parse_polygon_features(&text)?
        .into_iter()
        .map(|f| f.polygon)
        .collect();
    Ok((polygons, crs))
}

fn reproject_polygons(polygons: &[Polygon<f64>], t: &dyn CrsTransform) -> Result<Vec<Polygon<f64>>> {
    polygons.iter().map(|p| p.map_coords(|c| t.forward(c))).collect()
}

fn pair_exists(png: &Path) -> bool {
    png.is_file() && world_file_path(png).is_file()
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Read every `mask_*` file of `dir` with the given tag, in tile order.
pub fn load_masks(dir: &Path, tag: Option<&str>) -> Result<Vec<ClassMask>> {
    let found = list_masks(dir, tag)?;
    found
        .par_iter()
        .map(|(id, t, path)| ClassMask::read_png(path, *id, t))
        .collect()
}

/// Clean every predicted mask in `pred_dir` into `out_dir`, keeping file
/// names and world files.
pub fn clean_predictions(pred_dir: &Path, out_dir: &Path, tag: Option<&str>, policy: &CleaningPolicy) -> Result<usize> {
    let found = list_masks(pred_dir, tag)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    found
        .par_iter()
        .map(|(id, t, path)| {
            let run = || -> Result<()> {
                let m = ClassMask::read_png(path, *id, t)?;
                clean_mask(&m, policy)?.write_png(&out_dir.join(ClassMask::file_name(*id, t)))
            };
            run().map_err(|e| Error::stage(*id, "clean", e))
        })
        .collect::<Result<Vec<()>>>()
        .map(|v| v.len())
}

/// A configured dataset and the transport its network stages use.
pub struct Dataset<'a> {
    pub config: Config,
    pub root: PathBuf,
    transport: &'a dyn HttpTransport,
}

impl<'a> Dataset<'a> {
    pub fn new(config: Config, transport: &'a dyn HttpTransport) -> Self {
        let root = config.root();
        Dataset {
            config,
            root,
            transport,
        }
    }

    /// Write artifacts under `root` instead of the configured directory.
    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn tag(&self) -> &str {
        &self.config.imagery.tag
    }

    pub fn table(&self) -> Result<ClassTable> {
        self.config.class_table()
    }

    pub fn image_path(&self, tile_id: u64, tag: &str) -> PathBuf {
        self.root.join(IMAGES_DIR).join(RasterTile::file_name(tile_id, tag))
    }

    pub fn mask_path(&self, tile_id: u64, tag: &str) -> PathBuf {
        self.root.join(MASKS_DIR).join(ClassMask::file_name(tile_id, tag))
    }

    fn cache_dir(&self) -> PathBuf {
        match &self.config.imagery.cache_dir {
            Some(d) => self.config.resolve(d),
            None => self.root.join("cache"),
        }
    }

    fn tile_cache(&self) -> Result<TileCache> {
        TileCache::from_env_or(&self.cache_dir())
    }

    /// Dataset region in its own CRS.
    pub fn region(&self) -> Result<DatasetRegion<f64>> {
        let r = &self.config.region;
        let (polygons, crs) = read_polygons(&self.config.resolve(&r.path), r.crs.as_deref())?;
        DatasetRegion::new(polygons, crs)
    }

    /// The tile grid; pure, writes nothing.
    pub fn grid(&self) -> Result<TileGrid<f64>> {
        let spec = &self.config.grid;
        let region = self.region()?;
        let to_work = transform_between(&region.crs_id, &spec.work_crs_id)?;
        let region = region.reproject(&spec.work_crs_id, &to_work)?;
        let to_provider = transform_between(&spec.work_crs_id, &spec.provider_crs_id)?;
        build_grid(&region, spec, &to_provider)
    }

    fn current_stamp(&self) -> Stamp {
        Stamp {
            imagery: self.config.imagery_hash(),
            masks: self.config.mask_hash(),
        }
    }

    fn stored_stamp(&self) -> Stamp {
        std::fs::read_to_string(self.root.join(STAMP_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    /// Create the root and drop artifacts produced under a different config.
    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let old = self.stored_stamp();
        let new = self.current_stamp();
        if old == new {
            return Ok(());
        }
        let remove_dir = |name: &str| -> Result<()> {
            let p = self.root.join(name);
            if p.exists() {
                warn!("configuration changed; discarding {}", p.display());
                std::fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            }
            Ok(())
        };
        let remove_file = |name: &str| -> Result<()> {
            let p = self.root.join(name);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
            Ok(())
        };
        if old.imagery != new.imagery {
            remove_dir(IMAGES_DIR)?;
        }
        if old.masks != new.masks {
            remove_dir(MASKS_DIR)?;
            remove_file(GROUNDTRUTH_FILE)?;
        }
        remove_file(super::MANIFEST_FILE)?;
        let text = serde_json::to_string_pretty(&new).expect("stamp serializes");
        write_atomic(&self.root.join(STAMP_FILE), text.as_bytes())
    }

    /// Grid stage: `grid.geojson` with one rectangle per cell.
    pub fn stage_grid(&self) -> Result<TileGrid<f64>> {
        let grid = self.grid()?;
        self.prepare()?;
        let path = self.root.join(GRID_FILE);
        vector::write_features(&path, &grid_to_vector(&grid), Some(&grid.spec.provider_crs_id))?;
        info!(
            "grid: {} tiles, {} selected -> {}",
            grid.len(),
            grid.selected().count(),
            path.display()
        );
        Ok(grid)
    }

    /// Fetch stage: one image per selected tile for `tag`. Images already on
    /// disk are kept.
    pub fn stage_fetch(&self, tag: &str) -> Result<FetchSummary> {
        let grid = self.grid()?;
        self.prepare()?;
        let client = ImageryClient::new(self.config.endpoint()?, self.transport, Some(self.tile_cache()?))?;
        let tiles: Vec<_> = grid.selected().collect();
        let fetched = tiles
            .par_iter()
            .map(|tile| {
                let path = self.image_path(tile.id, tag);
                if pair_exists(&path) {
                    return Ok(false);
                }
                client
                    .fetch_tile(tile, &grid.spec, tag)
                    .and_then(|img| img.write_png(&path))
                    .map(|_| true)
                    .map_err(|e| Error::stage(tile.id, "fetch", e))
            })
            .collect::<Result<Vec<bool>>>()?;
        let n = fetched.iter().filter(|f| **f).count();
        let summary = FetchSummary {
            fetched: n,
            skipped: fetched.len() - n,
        };
        info!("fetch ({tag}): {} fetched, {} already present", summary.fetched, summary.skipped);
        Ok(summary)
    }

    fn line_layer(&self, src: &super::LinesSource, work_crs: &str) -> Result<GroundTruthLayer<f64>> {
        let path = self.config.resolve(&src.path);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let crs = vector::geojson_crs(&text)
            .or_else(|| src.crs.clone())
            .ok_or_else(|| Error::Config(format!("{}: no CRS in file and none configured", path.display())))?;
        // snapping and coverage tolerances are metric: work in the work CRS
        let t = transform_between(&crs, work_crs)?;
        let lines = vector::parse_line_features(&text)?
            .into_iter()
            .map(|l| {
                let points = l.points.iter().map(|p| t.forward(*p)).collect::<Result<Vec<Coord<f64>>>>()?;
                Ok(LineFeature {
                    points,
                    properties: l.properties,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let tag = LineTag::new(&src.tag_key, src.tag_value.as_deref());
        let (layer, ratio) = polygonize_checked(&lines, &tag, src.class_id, src.snap_tol_m, src.coverage_gate, work_crs)
            .map_err(|e| match e {
                Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
                other => other,
            })?;
        info!("{}: {} faces, line coverage {:.3}", path.display(), layer.features.len(), ratio);
        Ok(layer)
    }

    fn overpass_queries(&self) -> Result<Vec<OverpassQuery>> {
        let sources = &self.config.groundtruth.overpass;
        if sources.is_empty() {
            return Ok(Vec::new());
        }
        let region = self.region()?;
        let t = transform_between(&region.crs_id, "EPSG:4326")?;
        let pts = region
            .polygons
            .iter()
            .flat_map(|p| p.rings().flatten().copied().collect::<Vec<_>>())
            .map(|c| t.forward(c))
            .collect::<Result<Vec<_>>>()?;
        let b = Bounds::of_points(pts.iter()).ok_or_else(|| Error::Geometry("empty region".into()))?;
        Ok(sources
            .iter()
            .map(|s| {
                let mut q = OverpassQuery::new(s.filters.clone(), (b.min_y, b.min_x, b.max_y, b.max_x), s.class_id);
                if let Some(u) = &s.endpoint_url {
                    q.endpoint_url = u.clone();
                }
                if let Some(t) = s.timeout_s {
                    q.timeout_s = t;
                }
                q
            })
            .collect())
    }

    /// Ground-truth stage: every configured source merged in the provider
    /// CRS and written to `groundtruth.geojson`.
    pub fn stage_groundtruth(&self) -> Result<GroundTruthLayer<f64>> {
        let table = self.table()?;
        self.prepare()?;
        let gt = &self.config.groundtruth;
        let provider = self.config.grid.provider_crs_id.as_str();
        let work = self.config.grid.work_crs_id.as_str();
        let mut layers = Vec::new();
        if let (Some(path), Some(mapping)) = (&gt.path, gt.class_mapping()?) {
            layers.push(load_vector_file(&self.config.resolve(path), &mapping, gt.crs.as_deref(), provider)?);
        }
        for src in &gt.lines {
            let layer = self.line_layer(src, work)?;
            layers.push(layer.reproject(&transform_between(work, provider)?)?);
        }
        let queries = self.overpass_queries()?;
        if !queries.is_empty() {
            let cache = self.cache_dir();
            std::fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;
            let t = transform_between("EPSG:4326", provider)?;
            for q in &queries {
                layers.push(run_overpass(q, self.transport, Some(&cache))?.reproject(&t)?);
            }
        }
        let mut merged = GroundTruthLayer::new(provider, SourceTag::File).with_tag(self.tag());
        if let Some(first) = layers.first() {
            merged.source = first.source;
        }
        for l in layers {
            merged.features.extend(l.features);
        }
        merged.validate(&table)?;
        if merged.features.is_empty() {
            warn!("ground truth is empty; every mask will be background");
        }
        merged.write(&self.root.join(GROUNDTRUTH_FILE))?;
        info!("groundtruth: {} polygons", merged.features.len());
        Ok(merged)
    }

    fn split_regions(&self) -> Result<Option<Vec<(Split, Vec<Polygon<f64>>)>>> {
        let Some(s) = &self.config.splits else {
            return Ok(None);
        };
        let provider = &self.config.grid.provider_crs_id;
        let mut out = Vec::new();
        for (split, path) in [(Split::Train, &s.train), (Split::Test, &s.test)] {
            if let Some(p) = path {
                let (polys, crs) = read_polygons(&self.config.resolve(p), s.crs.as_deref())?;
                out.push((split, reproject_polygons(&polys, &transform_between(&crs, provider)?)?));
            }
        }
        Ok(Some(out))
    }

    /// Rasterize stage: a mask per selected tile (existing masks kept), then
    /// splits, diversity weights and `manifest.json`.
    pub fn stage_rasterize(&self) -> Result<(Manifest, RasterizeSummary)> {
        let grid = self.grid()?;
        let table = self.table()?;
        self.prepare()?;
        let gt_path = self.root.join(GROUNDTRUTH_FILE);
        if !gt_path.is_file() {
            self.stage_groundtruth()?;
        }
        let layer = read_layer(&gt_path, SourceTag::File)?.with_tag(self.tag());
        let tag = self.tag();
        let tiles: Vec<_> = grid.selected().collect();
        let written = tiles
            .par_iter()
            .map(|tile| {
                let path = self.mask_path(tile.id, tag);
                if pair_exists(&path) {
                    return Ok(false);
                }
                rasterize(&layer, tile, &grid.spec, &table)
                    .and_then(|m| m.with_tag(tag).write_png(&path))
                    .map(|_| true)
                    .map_err(|e| Error::stage(tile.id, "rasterize", e))
            })
            .collect::<Result<Vec<bool>>>()?;
        let n = written.iter().filter(|w| **w).count();
        let summary = RasterizeSummary {
            written: n,
            skipped: written.len() - n,
        };
        info!("rasterize: {} written, {} already present", summary.written, summary.skipped);
        let manifest = self.assemble(&grid, &table)?;
        manifest.write(&self.root)?;
        info!(
            "manifest: {} train, {} test tiles",
            manifest.split(Split::Train).count(),
            manifest.split(Split::Test).count()
        );
        Ok((manifest, summary))
    }

    fn assemble(&self, grid: &TileGrid<f64>, table: &ClassTable) -> Result<Manifest> {
        let tag = self.tag();
        let splits: BTreeMap<u64, Split> = match self.split_regions()? {
            Some(regions) => assign_splits(grid, &regions)?,
            None => grid.selected().map(|t| (t.id, Split::Train)).collect(),
        };
        for id in splits.keys() {
            let img = self.image_path(*id, tag);
            if !pair_exists(&img) {
                return Err(Error::stage(
                    *id,
                    "manifest",
                    Error::Data(format!("{} is missing; run the fetch stage", img.display())),
                ));
            }
        }
        let train: Vec<u64> = splits.iter().filter(|(_, s)| **s == Split::Train).map(|(id, _)| *id).collect();
        let proportions = train
            .par_iter()
            .map(|id| {
                ClassMask::read_png(&self.mask_path(*id, tag), *id, tag)
                    .and_then(|m| class_proportions(&m, table))
                    .map(|p| (*id, p))
                    .map_err(|e| Error::stage(*id, "diversity", e))
            })
            .collect::<Result<Vec<_>>>()?;
        let weights: BTreeMap<u64, super::DiversityWeight> = if proportions.is_empty() {
            BTreeMap::new()
        } else {
            diversity_from_proportions(&proportions, self.config.dataset.max_repetitions)?
                .into_iter()
                .map(|w| (w.tile_id, w))
                .collect()
        };
        let n = grid.spec.tile_size_px;
        let tiles = splits
            .iter()
            .map(|(id, split)| {
                let tile = grid.tile(*id).expect("split tile comes from the grid");
                let w = weights.get(id);
                TileRecord {
                    tile_id: *id,
                    split: *split,
                    image: format!("{IMAGES_DIR}/{}", RasterTile::file_name(*id, tag)),
                    mask: format!("{MASKS_DIR}/{}", ClassMask::file_name(*id, tag)),
                    acquisition_tag: tag.to_string(),
                    diversity: w.map(|w| w.diversity),
                    diversity_weight: w.map_or(1.0, |w| w.weight),
                    repetitions: w.map_or(1, |w| w.repetitions),
                    width: n,
                    height: n,
                    geotransform: crate::raster::tile_geotransform(tile, &grid.spec),
                }
            })
            .collect();
        Ok(Manifest {
            name: self.config.dataset.name.clone(),
            created_unix: now_unix(),
            config_hash: self.config.hash(),
            grid: grid.spec.clone(),
            provider: ProviderInfo::from(&self.config.endpoint()?),
            classes: table.clone(),
            tiles,
        })
    }

    /// Grid, fetch, ground truth, rasterize and manifest in one go.
    pub fn build(&self) -> Result<Manifest> {
        self.stage_grid()?;
        self.stage_fetch(self.tag())?;
        self.stage_groundtruth()?;
        self.stage_rasterize().map(|(m, _)| m)
    }

    /// Work a build with imagery `tag` would do.
    pub fn plan(&self, tag: &str) -> Result<Plan> {
        let grid = self.grid()?;
        let ep = self.config.endpoint()?;
        let old = self.stored_stamp();
        let new = self.current_stamp();
        let images_valid = old.imagery == new.imagery;
        let masks_valid = old.masks == new.masks;
        let cache_dir = match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.cache_dir(),
        };
        let mut plan = Plan {
            tiles_total: grid.len(),
            ..Plan::default()
        };
        for tile in grid.selected() {
            plan.tiles_selected += 1;
            if !(images_valid && pair_exists(&self.image_path(tile.id, tag))) {
                plan.images_to_fetch += 1;
                let key = cache_key(&ep, &tile.bounds_provider, grid.spec.tile_size_px, tag);
                if !cache_dir.join(format!("{key}.png")).is_file() {
                    plan.provider_requests += match (&ep.tile_matrix, ep.kind) {
                        (Some(m), EndpointKind::WmtsKvp | EndpointKind::Xyz) => {
                            let (c0, c1, r0, r1) = mosaic::tile_range(m, ep.provider_resolution, &tile.bounds_provider);
                            ((c1 - c0 + 1) * (r1 - r0 + 1)) as usize
                        }
                        _ => 1,
                    };
                }
            }
            if !(masks_valid && pair_exists(&self.mask_path(tile.id, tag))) {
                plan.masks_to_write += 1;
            }
        }
        if !(masks_valid && self.root.join(GROUNDTRUTH_FILE).is_file()) {
            plan.overpass_requests = self
                .overpass_queries()?
                .iter()
                .filter(|q| !cache_dir.join(format!("overpass_{}.json", q.cache_key())).is_file())
                .count();
        }
        Ok(plan)
    }

    fn gt_masks_for(&self, preds: &[ClassMask], tag: &str) -> Result<Vec<ClassMask>> {
        preds
            .par_iter()
            .map(|p| ClassMask::read_png(&self.mask_path(p.tile_id, tag), p.tile_id, tag))
            .collect()
    }

    /// Score the predictions in `pred_dir` for `tag` against the dataset
    /// masks of the same tiles and write the reports to `out`.
    pub fn evaluate(&self, pred_dir: &Path, tag: &str, out: &Path) -> Result<MetricsReport> {
        let table = self.table()?;
        let preds = load_masks(pred_dir, Some(tag))?;
        if preds.is_empty() {
            return Err(Error::Data(format!("no mask_*_{tag}.png files in {}", pred_dir.display())));
        }
        let gt = self.gt_masks_for(&preds, tag)?;
        let options = self.config.metrics_options(&table)?;
        let report = class_metrics(&preds, &gt, &table, self.config.grid.resolution, &options)?;
        report.write(out)?;
        Ok(report)
    }

    /// Compare the predictions of two epochs in `pred_dir` and write the
    /// trend table to `out`.
    pub fn trend(&self, pred_dir: &Path, tag_t1: &str, tag_t2: &str, out: &Path) -> Result<TrendReport> {
        let table = self.table()?;
        let t1 = load_masks(pred_dir, Some(tag_t1))?;
        let t2 = load_masks(pred_dir, Some(tag_t2))?;
        if t1.is_empty() || t2.is_empty() {
            return Err(Error::Data(format!(
                "{} needs masks for both {tag_t1} and {tag_t2}",
                pred_dir.display()
            )));
        }
        let m = &self.config.metrics;
        let provider = &self.config.grid.provider_crs_id;
        let mut regions = Vec::new();
        for (name, path) in &m.regions {
            let (polys, crs) = read_polygons(&self.config.resolve(path), m.regions_crs.as_deref())?;
            regions.push((name.clone(), reproject_polygons(&polys, &transform_between(&crs, provider)?)?));
        }
        let options = self.config.metrics_options(&table)?;
        let report = trend(&t1, &t2, &table, self.config.grid.resolution, &regions, &options)?;
        report.write(out)?;
        Ok(report)
    }
}
