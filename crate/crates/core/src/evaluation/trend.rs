use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::raster::{polygons_to_binary, ClassMask};

use super::{csv_err, finish_csv, group_flags, pair_by_tile, tally_tile, ClassCounts, MetricsOptions};

/// Below this epoch-to-epoch `iou_200` a class is flagged unreliable.
pub const UNRELIABLE_IOU: f64 = 0.1;

/// Name of the row covering every tile.
pub const ALL_REGION: &str = "ALL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub region: String,
    pub class_id: u8,
    pub class_name: String,
    pub area_t1: f64,
    pub area_t2: f64,
    /// `area_t2 / area_t1`, undefined when the first epoch has none.
    pub area_ratio: Option<f64>,
    /// Second epoch against the buffered first epoch.
    pub iou_200: f64,
    pub unreliable: bool,
    /// `"ratio (iou_200)"` with two decimals.
    pub cell: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub tag_t1: String,
    pub tag_t2: String,
    pub resolution: f64,
    pub buffer_m: f64,
    pub rows: Vec<TrendRow>,
}

/// `0.81 (0.48)`; an undefined ratio prints as `n/a`.
pub fn format_trend_cell(ratio: Option<f64>, iou_200: f64) -> String {
    match ratio {
        Some(r) => format!("{r:.2} ({iou_200:.2})"),
        None => format!("n/a ({iou_200:.2})"),
    }
}

impl TrendReport {
    pub fn row(&self, region: &str, class_id: u8) -> Option<&TrendRow> {
        self.rows.iter().find(|r| r.region == region && r.class_id == class_id)
    }

    /// One line per region, one `ratio (iou_200)` column per class and a
    /// final column naming unreliable classes.
    pub fn to_csv(&self) -> Result<String> {
        let mut classes: Vec<(u8, String)> = Vec::new();
        let mut regions: Vec<String> = Vec::new();
        for r in &self.rows {
            if !classes.iter().any(|(id, _)| *id == r.class_id) {
                classes.push((r.class_id, r.class_name.clone()));
            }
            if !regions.contains(&r.region) {
                regions.push(r.region.clone());
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["region".to_string()];
        header.extend(classes.iter().map(|(_, n)| n.clone()));
        header.push("unreliable".into());
        w.write_record(&header).map_err(csv_err)?;
        for region in &regions {
            let mut rec = vec![region.clone()];
            let mut flagged = Vec::new();
            for (id, name) in &classes {
                match self.row(region, *id) {
                    Some(r) => {
                        rec.push(r.cell.clone());
                        if r.unreliable {
                            flagged.push(name.clone());
                        }
                    }
                    None => rec.push(String::new()),
                }
            }
            rec.push(flagged.join(";"));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// `trend.csv` and `trend.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("trend.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("trend.json");
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
    }
}

/// Compare two epochs of predictions over the same tiling, for the whole
/// tiling (region `ALL`) and for each named region. The first epoch plays the
/// reference role in `iou_200`.
pub fn trend(
    pred_t1: &[ClassMask],
    pred_t2: &[ClassMask],
    table: &ClassTable,
    resolution: f64,
    regions: &[(String, Vec<Polygon<f64>>)],
    options: &MetricsOptions,
) -> Result<TrendReport> {
    let pairs = pair_by_tile(pred_t2, pred_t1).map_err(|e| Error::Data(format!("epoch tiling mismatch: {e}")))?;
    for (a, b) in &pairs {
        if a.geotransform != b.geotransform {
            return Err(Error::Data(format!("epoch tiling mismatch at tile {}", a.tile_id)));
        }
    }
    let ids: Vec<u8> = table.iter().map(|c| c.class_id).collect();
    let no_group = group_flags(&[]);
    let px_area = resolution * resolution;
    let mut rows = Vec::new();
    let mut scopes: Vec<(&str, Option<&[Polygon<f64>]>)> = vec![(ALL_REGION, None)];
    scopes.extend(regions.iter().map(|(n, p)| (n.as_str(), Some(p.as_slice()))));
    for (name, polys) in scopes {
        let counts = pairs
            .par_iter()
            .map(|(p2, p1)| {
                let within = polys.map(|ps| polygons_to_binary(ps, &p1.geotransform, p1.width, p1.height).data);
                tally_tile(p2, p1, &ids, options.buffer_m, resolution, &no_group, &no_group, within.as_deref())
            })
            .reduce(
                || vec![ClassCounts::default(); ids.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        x.add(y);
                    }
                    a
                },
            );
        for (spec, k) in table.iter().zip(counts) {
            // pred = epoch 2, gt = epoch 1
            let area_ratio = (k.gt > 0).then(|| k.pred as f64 / k.gt as f64);
            let iou_200 = k.iou_buffered();
            rows.push(TrendRow {
                region: name.to_string(),
                class_id: spec.class_id,
                class_name: spec.name.clone(),
                area_t1: k.gt as f64 * px_area,
                area_t2: k.pred as f64 * px_area,
                area_ratio,
                iou_200,
                unreliable: iou_200 < UNRELIABLE_IOU,
                cell: format_trend_cell(area_ratio, iou_200),
            });
        }
    }
    let tag = |ms: &[ClassMask]| ms.first().map(|m| m.acquisition_tag.clone()).unwrap_or_default();
    Ok(TrendReport {
        tag_t1: tag(pred_t1),
        tag_t2: tag(pred_t2),
        resolution,
        buffer_m: options.buffer_m,
        rows,
    })
}
