//! Per-class evaluation of predicted masks against ground truth, confusion
//! matrices and cross-epoch trend reports.
//!
//! Counts are pooled over all tiles before any ratio is formed.

mod trend;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use trend::{format_trend_cell, trend, TrendReport, TrendRow, UNRELIABLE_IOU};

use crate::classes::{ClassGroup, ClassTable};
use crate::error::{Error, Result};
use crate::raster::{buffer_mask, ClassMask};

/// Ground-truth buffer used by `iou_200`, meters.
pub const DEFAULT_BUFFER_M: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsOptions {
    #[serde(default = "default_buffer")]
    pub buffer_m: f64,
    pub street: Vec<u8>,
    pub pedestrian: Vec<u8>,
}

fn default_buffer() -> f64 {
    DEFAULT_BUFFER_M
}

impl MetricsOptions {
    /// Groups taken from the class table.
    pub fn from_table(table: &ClassTable) -> Self {
        let ids = |g| table.iter().filter(|c| c.group == g).map(|c| c.class_id).collect();
        MetricsOptions {
            buffer_m: DEFAULT_BUFFER_M,
            street: ids(ClassGroup::Street),
            pedestrian: ids(ClassGroup::Pedestrian),
        }
    }
}

/// Raw pixel tallies for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub pred: u64,
    pub gt: u64,
    pub intersection: u64,
    /// Predicted pixels inside the buffered ground truth.
    pub buffered_intersection: u64,
    /// Predicted pixels on street-group ground truth.
    pub on_street: u64,
    pub on_pedestrian: u64,
}

impl ClassCounts {
    fn add(&mut self, o: &ClassCounts) {
        self.pred += o.pred;
        self.gt += o.gt;
        self.intersection += o.intersection;
        self.buffered_intersection += o.buffered_intersection;
        self.on_street += o.on_street;
        self.on_pedestrian += o.on_pedestrian;
    }

    pub fn union(&self) -> u64 {
        self.pred + self.gt - self.intersection
    }

    /// `|P∩G| / |P∪G|`; 1 when both sets are empty.
    pub fn iou(&self) -> f64 {
        match self.union() {
            0 => 1.0,
            u => self.intersection as f64 / u as f64,
        }
    }

    /// Buffered intersection over the unbuffered union.
    pub fn iou_buffered(&self) -> f64 {
        match self.union() {
            0 => 1.0,
            u => self.buffered_intersection as f64 / u as f64,
        }
    }

    pub fn f1(&self) -> f64 {
        match self.pred + self.gt {
            0 => 1.0,
            s => 2.0 * self.intersection as f64 / s as f64,
        }
    }

    fn share(&self, part: u64) -> Option<f64> {
        (self.pred > 0).then(|| part as f64 / self.pred as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u8,
    pub class_name: String,
    pub model_area: f64,
    pub gt_area: f64,
    pub iou: f64,
    pub iou_200: f64,
    pub f1: f64,
    pub street_ratio: Option<f64>,
    pub pedestrian_ratio: Option<f64>,
    pub area_ratio: Option<f64>,
    pub counts: ClassCounts,
}

/// Pixel counts indexed `[gt][pred]` over class ids `0..size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub size: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        ConfusionMatrix {
            size,
            counts: vec![vec![0; size]; size],
        }
    }

    fn add(&mut self, o: &ConfusionMatrix) {
        for (r, or) in self.counts.iter_mut().zip(&o.counts) {
            for (v, ov) in r.iter_mut().zip(or) {
                *v += ov;
            }
        }
    }

    /// Each row divided by its sum; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|v| if s == 0 { 0.0 } else { *v as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gt\\pred".to_string()];
        header.extend((0..self.size).map(|j| j.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.normalized().iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("CSV: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("CSV: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub resolution: f64,
    pub buffer_m: f64,
    pub classes: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub confusion_normalized: Vec<Vec<f64>>,
}

pub const METRICS_COLUMNS: [&str; 10] = [
    "class_id",
    "class_name",
    "model_area",
    "gt_area",
    "iou",
    "iou_200",
    "f1",
    "street_ratio",
    "pedestrian_ratio",
    "area_ratio",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn class(&self, id: u8) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class_id == id)
    }

    /// One row per class; undefined values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(METRICS_COLUMNS).map_err(csv_err)?;
        for c in &self.classes {
            w.write_record([
                c.class_id.to_string(),
                c.class_name.clone(),
                c.model_area.to_string(),
                c.gt_area.to_string(),
                c.iou.to_string(),
                c.iou_200.to_string(),
                c.f1.to_string(),
                opt(c.street_ratio),
                opt(c.pedestrian_ratio),
                opt(c.area_ratio),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `metrics.csv`, `metrics.json` and `confusion.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("metrics.csv", self.to_csv()?)?;
        put("metrics.json", self.to_json())?;
        put("confusion.csv", self.confusion.to_csv()?)
    }
}

/// Pair predictions with ground truth by tile id; both sets must cover the
/// same tiles with equal dimensions.
pub(crate) fn pair_by_tile<'a>(a: &'a [ClassMask], b: &'a [ClassMask]) -> Result<Vec<(&'a ClassMask, &'a ClassMask)>> {
    let mut a: Vec<&ClassMask> = a.iter().collect();
    let mut b: Vec<&ClassMask> = b.iter().collect();
    a.sort_by_key(|m| m.tile_id);
    b.sort_by_key(|m| m.tile_id);
    let ids = |v: &[&ClassMask]| v.iter().map(|m| m.tile_id).collect::<Vec<_>>();
    if ids(&a) != ids(&b) {
        return Err(Error::Data("mask sets cover different tile ids".into()));
    }
    for (x, y) in a.iter().zip(&b) {
        if (x.width, x.height) != (y.width, y.height) {
            return Err(Error::Data(format!("tile {}: mask dimensions differ", x.tile_id)));
        }
    }
    Ok(a.into_iter().zip(b).collect())
}

fn matrix_size(pairs: &[(&ClassMask, &ClassMask)], table: &ClassTable) -> usize {
    let seen = pairs
        .iter()
        .flat_map(|(p, g)| p.data.iter().chain(&g.data))
        .copied()
        .max()
        .unwrap_or(0);
    usize::from(seen.max(table.max_id())) + 1
}

fn tally_confusion(p: &ClassMask, g: &ClassMask, size: usize) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(size);
    for (pv, gv) in p.data.iter().zip(&g.data) {
        m.counts[*gv as usize][*pv as usize] += 1;
    }
    m
}

/// Row-normalizable confusion counts, rows = ground truth.
pub fn confusion_matrix(pred: &[ClassMask], gt: &[ClassMask], table: &ClassTable) -> Result<ConfusionMatrix> {
    let pairs = pair_by_tile(pred, gt)?;
    let size = matrix_size(&pairs, table);
    Ok(pairs
        .par_iter()
        .map(|(p, g)| tally_confusion(p, g, size))
        .reduce(|| ConfusionMatrix::new(size), |mut a, b| {
            a.add(&b);
            a
        }))
}

/// Tally one tile for every class in `ids`.
pub(crate) fn tally_tile(
    p: &ClassMask,
    g: &ClassMask,
    ids: &[u8],
    radius_m: f64,
    resolution: f64,
    street: &[bool; 256],
    pedestrian: &[bool; 256],
    within: Option<&[bool]>,
) -> Vec<ClassCounts> {
    let inside = |i: usize| within.is_none_or(|w| w[i]);
    ids.iter()
        .map(|&c| {
            let mut k = ClassCounts::default();
            let gb = g.binary(c);
            let buffered = buffer_mask(&gb, radius_m, resolution);
            for (i, (pv, gv)) in p.data.iter().zip(&g.data).enumerate() {
                if !inside(i) {
                    continue;
                }
                let (is_p, is_g) = (*pv == c, *gv == c);
                k.pred += u64::from(is_p);
                k.gt += u64::from(is_g);
                if is_p {
                    k.intersection += u64::from(is_g);
                    k.buffered_intersection += u64::from(buffered.data[i]);
                    k.on_street += u64::from(street[*gv as usize]);
                    k.on_pedestrian += u64::from(pedestrian[*gv as usize]);
                }
            }
            k
        })
        .collect()
}

pub(crate) fn group_flags(ids: &[u8]) -> [bool; 256] {
    let mut f = [false; 256];
    for id in ids {
        f[*id as usize] = true;
    }
    f
}

/// Per-class metrics pooled over all tiles, plus the confusion matrix.
pub fn class_metrics(
    pred: &[ClassMask],
    gt: &[ClassMask],
    table: &ClassTable,
    resolution: f64,
    options: &MetricsOptions,
) -> Result<MetricsReport> {
    if !(resolution > 0.0) {
        return Err(Error::Config("resolution must be positive".into()));
    }
    let pairs = pair_by_tile(pred, gt)?;
    for (p, g) in &pairs {
        p.validate(table)?;
        g.validate(table)?;
    }
    let ids: Vec<u8> = table.iter().map(|c| c.class_id).collect();
    let street = group_flags(&options.street);
    let pedestrian = group_flags(&options.pedestrian);
    let size = matrix_size(&pairs, table);
    let (counts, confusion) = pairs
        .par_iter()
        .map(|(p, g)| {
            (
                tally_tile(p, g, &ids, options.buffer_m, resolution, &street, &pedestrian, None),
                tally_confusion(p, g, size),
            )
        })
        .reduce(
            || (vec![ClassCounts::default(); ids.len()], ConfusionMatrix::new(size)),
            |(mut ca, mut ma), (cb, mb)| {
                for (a, b) in ca.iter_mut().zip(&cb) {
                    a.add(b);
                }
                ma.add(&mb);
                (ca, ma)
            },
        );
    let px_area = resolution * resolution;
    let classes = table
        .iter()
        .zip(counts)
        .map(|(spec, k)| ClassMetrics {
            class_id: spec.class_id,
            class_name: spec.name.clone(),
            model_area: k.pred as f64 * px_area,
            gt_area: k.gt as f64 * px_area,
            iou: k.iou(),
            iou_200: k.iou_buffered(),
            f1: k.f1(),
            street_ratio: k.share(k.on_street),
            pedestrian_ratio: k.share(k.on_pedestrian),
            area_ratio: (k.gt > 0).then(|| k.pred as f64 / k.gt as f64),
            counts: k,
        })
        .collect();
    let confusion_normalized = confusion.normalized();
    Ok(MetricsReport {
        resolution,
        buffer_m: options.buffer_m,
        classes,
        confusion,
        confusion_normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ClassSpec;
    use crate::georef::Geotransform;

    fn gt1() -> Geotransform {
        Geotransform {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: -1.0,
        }
    }

    fn table() -> ClassTable {
        ClassTable::new(vec![
            ClassSpec::new(1, "a", 1.0, 1.0),
            ClassSpec::new(2, "b", 1.0, 1.0).with_group(ClassGroup::Street),
        ])
        .unwrap()
    }

    fn row(values: impl Fn(u32) -> u8, w: u32) -> ClassMask {
        let mut m = ClassMask::empty(0, w, 1, gt1());
        for x in 0..w {
            m.set(x, 0, values(x));
        }
        m
    }

    #[test]
    fn strip_fixture() {
        let g = row(|x| u8::from(x < 10), 30);
        let p = row(|x| u8::from((5..15).contains(&x)), 30);
        let opts = MetricsOptions {
            buffer_m: 2.0,
            street: vec![],
            pedestrian: vec![],
        };
        let r = class_metrics(&[p], &[g], &table(), 1.0, &opts).unwrap();
        let a = r.class(1).unwrap();
        assert_eq!(a.counts.intersection, 5);
        assert_eq!(a.counts.union(), 15);
        assert_eq!(a.counts.buffered_intersection, 7);
        assert!((a.iou - 1.0 / 3.0).abs() < 1e-15);
        assert!((a.f1 - 0.5).abs() < 1e-15);
        assert!((a.iou_200 - 7.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn empty_conventions() {
        let z = row(|_| 0, 5);
        let r = class_metrics(&[z.clone()], &[z], &table(), 1.0, &MetricsOptions::from_table(&table())).unwrap();
        let a = r.class(1).unwrap();
        assert_eq!((a.iou, a.f1, a.iou_200), (1.0, 1.0, 1.0));
        assert_eq!((a.street_ratio, a.area_ratio), (None, None));
        let g = row(|x| u8::from(x == 0), 5);
        let z = row(|_| 0, 5);
        let r = class_metrics(&[z], &[g], &table(), 1.0, &MetricsOptions::from_table(&table())).unwrap();
        let a = r.class(1).unwrap();
        assert_eq!((a.iou, a.f1, a.area_ratio), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn street_ratio_and_confusion() {
        let g = row(|_| 2, 4);
        let p = row(|x| if x < 2 { 1 } else { 2 }, 4);
        let r = class_metrics(&[p], &[g], &table(), 0.5, &MetricsOptions::from_table(&table())).unwrap();
        assert_eq!(r.class(1).unwrap().street_ratio, Some(1.0));
        assert_eq!(r.class(2).unwrap().model_area, 0.5);
        assert_eq!(r.confusion_normalized[2], vec![0.0, 0.5, 0.5]);
        assert_eq!(r.confusion_normalized[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_header_exact() {
        let z = row(|_| 0, 2);
        let r = class_metrics(&[z.clone()], &[z], &table(), 1.0, &MetricsOptions::from_table(&table())).unwrap();
        let csv = r.to_csv().unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "class_id,class_name,model_area,gt_area,iou,iou_200,f1,street_ratio,pedestrian_ratio,area_ratio"
        );
        assert_eq!(csv.lines().nth(1).unwrap(), "1,a,0,0,1,1,1,,,");
    }

    #[test]
    fn mismatched_tiles_rejected() {
        let a = row(|_| 0, 2);
        let mut b = a.clone();
        b.tile_id = 5;
        assert!(class_metrics(&[a], &[b], &table(), 1.0, &MetricsOptions::from_table(&table())).is_err());
    }
}
