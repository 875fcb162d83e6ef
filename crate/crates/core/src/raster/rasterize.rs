use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::georef::Geotransform;
use crate::geometry::{Coord, Polygon};
use crate::grid::{GridSpec, Tile};
use crate::groundtruth::GroundTruthLayer;
use crate::morphology::BinaryMask;
use crate::scalar::Scalar;

use super::{tile_geotransform, ClassMask};

/// Mark every pixel whose center lies inside `polygon` (even-odd over all
/// rings, half-open on the right edge).
pub fn rasterize_polygon<T: Scalar>(
    polygon: &Polygon<T>,
    gt: &Geotransform,
    width: u32,
    height: u32,
    mut paint: impl FnMut(u32, u32),
) {
    let rings: Vec<Vec<Coord<f64>>> = polygon
        .rings()
        .map(|r| r.iter().map(|c| gt.to_pixel(c.cast())).collect())
        .collect();
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in rings.iter().flatten() {
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    if !(ymin.is_finite() && ymax.is_finite()) {
        return;
    }
    let row0 = (ymin - 0.5).ceil().max(0.0) as i64;
    let row1 = ((ymax - 0.5).floor() as i64).min(i64::from(height) - 1);
    let mut xs: Vec<f64> = Vec::new();
    for row in row0..=row1 {
        let cy = row as f64 + 0.5;
        xs.clear();
        for ring in &rings {
            let n = ring.len();
            for i in 0..n {
                let a = ring[(i + n - 1) % n];
                let b = ring[i];
                if (a.y <= cy) != (b.y <= cy) {
                    xs.push(a.x + (cy - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // centers cx = col + 0.5 with x0 <= cx < x1
            let c0 = (pair[0] - 0.5).ceil().max(0.0) as i64;
            let c1 = ((pair[1] - 0.5).ceil() as i64 - 1).min(i64::from(width) - 1);
            for col in c0..=c1 {
                paint(col as u32, row as u32);
            }
        }
    }
}

/// Binary coverage of a polygon set on a raster.
pub fn polygons_to_binary<T: Scalar>(
    polygons: &[Polygon<T>],
    gt: &Geotransform,
    width: u32,
    height: u32,
) -> BinaryMask {
    let mut m = BinaryMask::new(width as usize, height as usize);
    for p in polygons {
        rasterize_polygon(p, gt, width, height, |x, y| m.set(x as usize, y as usize, true));
    }
    m
}

/// Rasterize onto an arbitrary raster. Higher `priority` wins where classes
/// overlap; equal priorities fall back to the larger class id.
pub fn rasterize_to<T: Scalar>(
    layer: &GroundTruthLayer<T>,
    gt: &Geotransform,
    width: u32,
    height: u32,
    table: &ClassTable,
) -> Result<Vec<u8>> {
    if let Some(f) = layer.features.iter().find(|f| !table.contains(f.class_id)) {
        return Err(Error::Data(format!("class id {} is not in the class table", f.class_id)));
    }
    let mut order: Vec<usize> = (0..layer.features.len()).collect();
    order.sort_by_key(|&i| {
        let c = layer.features[i].class_id;
        (table.priority(c), c)
    });
    let bounds = gt.bounds(width, height);
    let mut data = vec![0u8; width as usize * height as usize];
    for i in order {
        let f = &layer.features[i];
        if let Some(b) = f.polygon.bounds() {
            if !b.cast::<f64>().intersects(&bounds) {
                continue;
            }
        }
        rasterize_polygon(&f.polygon, gt, width, height, |x, y| {
            data[y as usize * width as usize + x as usize] = f.class_id;
        });
    }
    Ok(data)
}

/// Class mask of one dataset tile under the pixel-center rule.
pub fn rasterize<T: Scalar>(
    layer: &GroundTruthLayer<T>,
    tile: &Tile<T>,
    spec: &GridSpec,
    table: &ClassTable,
) -> Result<ClassMask> {
    let gt = tile_geotransform(tile, spec);
    let n = spec.tile_size_px;
    let data = rasterize_to(layer, &gt, n, n, table)?;
    Ok(ClassMask {
        tile_id: tile.id,
        width: n,
        height: n,
        data,
        geotransform: gt,
        acquisition_tag: layer.acquisition_tag.clone(),
    })
}
