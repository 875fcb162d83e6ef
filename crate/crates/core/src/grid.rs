//! Dataset region and tile grid construction.
//!
//! The grid is laid out in a metric work CRS, anchored at the region's
//! bounding-box minimum corner, and every tile is then mapped to the imagery
//! provider's CRS as the bounding box of its transformed outline.

use serde::{Deserialize, Serialize};

use crate::crs::CrsTransform;
use crate::error::{Error, Result};
use crate::geometry::{Bounds, Coord, Polygon};
use crate::scalar::{ceil_tolerant, Scalar};
use crate::vector::Feature;

/// Points sampled per tile edge when densified provider bounds are requested.
pub const DENSIFY_POINTS_PER_EDGE: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRegion<T> {
    pub polygons: Vec<Polygon<T>>,
    pub crs_id: String,
}

impl<T: Scalar> DatasetRegion<T> {
    pub fn new(polygons: Vec<Polygon<T>>, crs_id: impl Into<String>) -> Result<Self> {
        let region = DatasetRegion {
            polygons,
            crs_id: crs_id.into(),
        };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        if self.polygons.is_empty() {
            return Err(Error::Geometry("dataset region has no polygons".into()));
        }
        for p in &self.polygons {
            p.validate()?;
        }
        Ok(())
    }

    pub fn bounds(&self) -> Option<Bounds<T>> {
        self.polygons
            .iter()
            .filter_map(|p| p.bounds())
            .reduce(|a, b| a.union(&b))
    }

    /// Reproject every vertex through `transform`.
    pub fn reproject(&self, crs_id: &str, transform: &dyn CrsTransform) -> Result<Self> {
        let polygons = self
            .polygons
            .iter()
            .map(|p| {
                p.map_coords(|c| {
                    transform
                        .forward(c.cast())
                        .map(|q| q.cast::<T>())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DatasetRegion::new(polygons, crs_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub tile_size_px: u32,
    /// Meters per pixel.
    #[serde(alias = "resolution_m")]
    pub resolution: f64,
    #[serde(default)]
    pub overlap_m: f64,
    #[serde(alias = "work_crs")]
    pub work_crs_id: String,
    #[serde(alias = "provider_crs")]
    pub provider_crs_id: String,
    /// Sample tile edges instead of only corners when computing provider bounds.
    #[serde(default)]
    pub densify_edges: bool,
}

impl GridSpec {
    pub fn tile_side_m(&self) -> f64 {
        f64::from(self.tile_size_px) * self.resolution
    }

    pub fn step_m(&self) -> f64 {
        self.tile_side_m() - self.overlap_m
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size_px == 0 {
            return Err(Error::Config("tile_size_px must be positive".into()));
        }
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::Config("resolution must be positive".into()));
        }
        if !(self.overlap_m >= 0.0) || self.overlap_m >= self.tile_side_m() {
            return Err(Error::Config(format!(
                "overlap_m must satisfy 0 <= overlap_m < tile side ({} m), got {}",
                self.tile_side_m(),
                self.overlap_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile<T> {
    pub id: u64,
    pub row: u32,
    pub col: u32,
    pub bounds_work: Bounds<T>,
    pub bounds_provider: Bounds<T>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid<T> {
    pub spec: GridSpec,
    pub cols: u32,
    pub rows: u32,
    pub tiles: Vec<Tile<T>>,
}

impl<T: Scalar> TileGrid<T> {
    pub fn tile(&self, id: u64) -> Option<&Tile<T>> {
        self.tiles.get(usize::try_from(id).ok()?).filter(|t| t.id == id)
    }

    pub fn selected(&self) -> impl Iterator<Item = &Tile<T>> {
        self.tiles.iter().filter(|t| t.selected)
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

fn axis_count(extent: f64, side: f64, step: f64) -> u32 {
    if extent <= side {
        1
    } else {
        ceil_tolerant((extent - side) / step) as u32 + 1
    }
}

/// Lay out the tile grid over `region` and map every tile into the provider CRS.
pub fn build_grid<T: Scalar>(
    region: &DatasetRegion<T>,
    spec: &GridSpec,
    transform: &dyn CrsTransform,
) -> Result<TileGrid<T>> {
    spec.validate()?;
    region.validate()?;
    let bbox = region
        .bounds()
        .filter(|b| b.is_valid())
        .ok_or_else(|| Error::Geometry("dataset region has a degenerate bounding box".into()))?;

    let side = spec.tile_side_m();
    let step = spec.step_m();
    let cols = axis_count(bbox.width().to_f64_lossy(), side, step);
    let rows = axis_count(bbox.height().to_f64_lossy(), side, step);

    let poly_bounds: Vec<(Bounds<T>, &Polygon<T>)> = region
        .polygons
        .iter()
        .filter_map(|p| p.bounds().map(|b| (b, p)))
        .collect();

    let origin_x = bbox.min_x.to_f64_lossy();
    let origin_y = bbox.min_y.to_f64_lossy();
    let mut tiles = Vec::with_capacity(cols as usize * rows as usize);
    for row in 0..rows {
        let y0 = origin_y + f64::from(row) * step;
        for col in 0..cols {
            let x0 = origin_x + f64::from(col) * step;
            let work = Bounds::new(T::of(x0), T::of(y0), T::of(x0 + side), T::of(y0 + side));
            let selected = poly_bounds.iter().any(|(b, p)| {
                b.intersects(&work) && p.overlap_area(&work) > T::zero()
            });
            let bounds_provider = provider_bounds(&work, transform, spec.densify_edges)?;
            tiles.push(Tile {
                id: u64::from(row) * u64::from(cols) + u64::from(col),
                row,
                col,
                bounds_work: work,
                bounds_provider,
                selected,
            });
        }
    }
    Ok(TileGrid {
        spec: spec.clone(),
        cols,
        rows,
        tiles,
    })
}

/// Bounding box of the transformed tile outline.
pub fn provider_bounds<T: Scalar>(
    work: &Bounds<T>,
    transform: &dyn CrsTransform,
    densify: bool,
) -> Result<Bounds<T>> {
    let corners = work.corners();
    let mut pts: Vec<Coord<f64>> = Vec::new();
    if densify {
        let n = DENSIFY_POINTS_PER_EDGE;
        for i in 0..4 {
            let a = corners[i].cast::<f64>();
            let b = corners[(i + 1) % 4].cast::<f64>();
            for k in 0..n - 1 {
                let t = k as f64 / (n - 1) as f64;
                pts.push(a.add(b.sub(a).scale(t)));
            }
        }
    } else {
        pts.extend(corners.iter().map(|c| c.cast::<f64>()));
    }
    let mapped = pts
        .into_iter()
        .map(|p| transform.forward(p))
        .collect::<Result<Vec<_>>>()?;
    let b = Bounds::of_points(mapped.iter())
        .ok_or_else(|| Error::Geometry("non-finite provider bounds".into()))?;
    Ok(b.cast())
}

/// One provider-CRS rectangle per tile carrying `id` and `selected`.
pub fn grid_to_vector<T: Scalar>(grid: &TileGrid<T>) -> Vec<Feature<T>> {
    grid.tiles
        .iter()
        .map(|t| {
            let mut props = serde_json::Map::new();
            props.insert("id".into(), t.id.into());
            props.insert("selected".into(), t.selected.into());
            Feature {
                polygon: t.bounds_provider.to_polygon(),
                properties: props,
            }
        })
        .collect()
}
