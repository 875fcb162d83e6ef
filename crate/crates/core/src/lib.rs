//! Build aerial-imagery segmentation datasets from vector ground truth:
//! tile grids, imagery fetching, rasterization, mask cleaning, evaluation and
//! dataset assembly.
//!
//! Geometry, grid and rasterization code is generic over the coordinate
//! scalar (`f32` or `f64`); the aliases below fix it to `f64`, which is what
//! the pipeline uses end to end.

pub mod classes;
pub mod cleaning;
pub mod crs;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod georef;
pub mod grid;
pub mod groundtruth;
pub mod http;
pub mod imagery;
pub mod morphology;
pub mod raster;
pub mod scalar;
pub mod vector;

pub use classes::{ClassGroup, ClassSpec, ClassTable};
pub use error::{Error, ErrorKind, Result};
pub use georef::Geotransform;
pub use grid::GridSpec;
pub use raster::ClassMask;

pub type Coord = geometry::Coord<f64>;
pub type Bounds = geometry::Bounds<f64>;
pub type Polygon = geometry::Polygon<f64>;
pub type DatasetRegion = grid::DatasetRegion<f64>;
pub type Tile = grid::Tile<f64>;
pub type TileGrid = grid::TileGrid<f64>;
pub type GroundTruthLayer = groundtruth::GroundTruthLayer<f64>;
pub type GroundTruthFeature = groundtruth::GroundTruthFeature<f64>;

pub type PolygonF32 = geometry::Polygon<f32>;
pub type TileGridF32 = grid::TileGrid<f32>;
