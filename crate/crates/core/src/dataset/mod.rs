//! Dataset assembly: splits, diversity weights, manifest and the staged
//! build pipeline.

mod config;
mod manifest;
mod pipeline;

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::grid::TileGrid;
use crate::raster::ClassMask;
use crate::scalar::{round_half_up, Scalar};

pub use config::{
    CleaningSection, Config, DatasetSection, GroundTruthSection, ImagerySection, LinesSource, MetricsSection,
    OverpassSource, RegionSection, SplitsSection,
};
pub use manifest::{verify_manifest, Manifest, ProviderInfo, TileRecord, MANIFEST_FILE};
pub use pipeline::{clean_predictions, load_masks, Dataset, FetchSummary, Plan, RasterizeSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Relative slack on the covered-area test.
const CONTAIN_TOL: f64 = 1e-9;

fn contained<T: Scalar>(rect: &crate::geometry::Bounds<T>, polygons: &[Polygon<T>]) -> bool {
    let area = rect.area().to_f64_lossy();
    let covered: f64 = polygons
        .iter()
        .filter(|p| p.bounds().is_some_and(|b| b.intersects(rect)))
        .map(|p| p.overlap_area(rect).to_f64_lossy())
        .sum();
    covered >= area * (1.0 - CONTAIN_TOL)
}

/// Split of every selected tile whose provider rectangle lies entirely inside
/// one split region. Tiles inside neither are left out; a tile inside both is
/// an error. Polygons within one split are assumed not to overlap each other.
pub fn assign_splits<T: Scalar>(
    grid: &TileGrid<T>,
    regions: &[(Split, Vec<Polygon<T>>)],
) -> Result<BTreeMap<u64, Split>> {
    let mut out = BTreeMap::new();
    for tile in grid.selected() {
        let hits: Vec<Split> = regions
            .iter()
            .filter(|(_, polys)| contained(&tile.bounds_provider, polys))
            .map(|(s, _)| *s)
            .collect();
        match hits.as_slice() {
            [] => {}
            [s] => {
                out.insert(tile.id, *s);
            }
            [a, b, ..] if a != b => {
                return Err(Error::Config(format!(
                    "tile {} lies in both the {} and {} regions; split regions overlap",
                    tile.id,
                    a.as_str(),
                    b.as_str()
                )));
            }
            [s, ..] => {
                out.insert(tile.id, *s);
            }
        }
    }
    if !regions.iter().any(|(s, _)| *s == Split::Train) || !out.values().any(|s| *s == Split::Train) {
        warn!("train split is empty");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityWeight {
    pub tile_id: u64,
    /// Dot product of the tile's class proportions with the dataset median.
    pub diversity: f64,
    pub weight: f64,
    pub repetitions: u32,
}

/// Pixel share of background followed by each class of the table, in table
/// order.
pub fn class_proportions(mask: &ClassMask, table: &ClassTable) -> Result<Vec<f64>> {
    let hist = mask.histogram();
    let mut index = [None; 256];
    index[0] = Some(0);
    for (i, c) in table.iter().enumerate() {
        index[c.class_id as usize] = Some(i + 1);
    }
    let mut counts = vec![0u64; table.len() + 1];
    for (v, n) in hist.iter().enumerate().filter(|(_, n)| **n > 0) {
        let i = index[v].ok_or_else(|| Error::Data(format!("tile {}: class id {v} not in the class table", mask.tile_id)))?;
        counts[i] += n;
    }
    let total = (mask.data.len() as f64).max(1.0);
    Ok(counts.into_iter().map(|n| n as f64 / total).collect())
}

/// Mean of the two middle values for even lengths.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Repetition weights from per-tile class proportion vectors.
pub fn diversity_from_proportions(tiles: &[(u64, Vec<f64>)], max_repetitions: u32) -> Result<Vec<DiversityWeight>> {
    const EPS: f64 = 1e-9;
    let Some((_, first)) = tiles.first() else {
        return Err(Error::Data("diversity weights need at least one train tile".into()));
    };
    let dims = first.len();
    if tiles.iter().any(|(_, v)| v.len() != dims) {
        return Err(Error::Data("class proportion vectors differ in length".into()));
    }
    let m: Vec<f64> = (0..dims)
        .map(|k| median(&mut tiles.iter().map(|(_, v)| v[k]).collect::<Vec<_>>()))
        .collect();
    let d: Vec<f64> = tiles
        .iter()
        .map(|(_, v)| v.iter().zip(&m).map(|(a, b)| a * b).sum())
        .collect();
    let d_med = median(&mut d.clone());
    let max_rep = i64::from(max_repetitions.max(1));
    Ok(tiles
        .iter()
        .zip(d)
        .map(|((id, _), di)| {
            let weight = d_med / di.max(EPS);
            DiversityWeight {
                tile_id: *id,
                diversity: di,
                weight,
                repetitions: round_half_up(weight).clamp(1, max_rep) as u32,
            }
        })
        .collect())
}

/// Diversity weight of every train mask.
pub fn diversity_weights(masks: &[ClassMask], table: &ClassTable, max_repetitions: u32) -> Result<Vec<DiversityWeight>> {
    let props = masks
        .iter()
        .map(|m| class_proportions(m, table).map(|p| (m.tile_id, p)))
        .collect::<Result<Vec<_>>>()?;
    diversity_from_proportions(&props, max_repetitions)
}
