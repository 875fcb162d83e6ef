use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::georef::Geotransform;
use crate::geometry::Bounds;

use super::TileMatrix;

/// Stitched provider imagery with its georeference.
#[derive(Debug, Clone, PartialEq)]
pub struct Mosaic {
    pub image: RgbImage,
    pub geotransform: Geotransform,
}

/// Inclusive column and row range of matrix tiles intersecting `b`. Edges
/// that coincide with tile boundaries (up to 1e-9 tile) do not pull in the
/// neighbour.
pub(crate) fn tile_range(m: &TileMatrix, res: f64, b: &Bounds<f64>) -> (i64, i64, i64, i64) {
    const EPS: f64 = 1e-9;
    let sx = f64::from(m.tile_width_px) * res;
    let sy = f64::from(m.tile_height_px) * res;
    let c0 = ((b.min_x - m.origin_x) / sx + EPS).floor() as i64;
    let c1 = (((b.max_x - m.origin_x) / sx - EPS).ceil() as i64 - 1).max(c0);
    let r0 = ((m.origin_y - b.max_y) / sy + EPS).floor() as i64;
    let r1 = (((m.origin_y - b.min_y) / sy - EPS).ceil() as i64 - 1).max(r0);
    (c0, c1, r0, r1)
}

impl Mosaic {
    /// Paste `images` (row-major over `cols × rows`, starting at matrix tile
    /// `(c0, r0)`) into one raster.
    pub(crate) fn stitch(
        m: &TileMatrix,
        res: f64,
        c0: i64,
        r0: i64,
        cols: usize,
        rows: usize,
        images: &[RgbImage],
    ) -> Result<Self> {
        let (tw, th) = (m.tile_width_px, m.tile_height_px);
        let mut image = RgbImage::new(tw * cols as u32, th * rows as u32);
        for (i, img) in images.iter().enumerate() {
            if img.dimensions() != (tw, th) {
                return Err(Error::Data(format!(
                    "provider tile is {:?}, matrix says {tw}x{th}",
                    img.dimensions()
                )));
            }
            let (c, r) = ((i % cols) as u32, (i / cols) as u32);
            image::imageops::replace(&mut image, img, i64::from(c * tw), i64::from(r * th));
        }
        Ok(Mosaic {
            image,
            geotransform: Geotransform {
                origin_x: m.origin_x + c0 as f64 * f64::from(tw) * res,
                origin_y: m.origin_y - r0 as f64 * f64::from(th) * res,
                pixel_size_x: res,
                pixel_size_y: -res,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    Nearest,
    Bilinear,
}

impl Resampling {
    /// Nearest when provider and output pixel sizes agree, bilinear otherwise.
    pub fn choose(provider_px: f64, output_px: f64) -> Self {
        let (a, b) = (provider_px.abs(), output_px.abs());
        if (a - b).abs() <= 1e-9 * a.max(b) {
            Resampling::Nearest
        } else {
            Resampling::Bilinear
        }
    }
}

/// Bilinear sample at continuous pixel-center coordinates `(u, v)`, with
/// edge pixels replicated outward.
pub fn sample_bilinear(img: &RgbImage, u: f64, v: f64) -> [u8; 3] {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let cx = |x: i64| x.clamp(0, w - 1) as u32;
    let cy = |y: i64| y.clamp(0, h - 1) as u32;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let a = img.get_pixel(cx(x0), cy(y0)).0;
    let b = img.get_pixel(cx(x0 + 1), cy(y0)).0;
    let c = img.get_pixel(cx(x0), cy(y0 + 1)).0;
    let d = img.get_pixel(cx(x0 + 1), cy(y0 + 1)).0;
    let mut out = [0u8; 3];
    for k in 0..3 {
        let top = (1.0 - fx) * f64::from(a[k]) + fx * f64::from(b[k]);
        let bottom = (1.0 - fx) * f64::from(c[k]) + fx * f64::from(d[k]);
        out[k] = ((1.0 - fy) * top + fy * bottom).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Resample `mosaic` onto the `width × height` raster described by `gt`.
pub fn resample(mosaic: &Mosaic, gt: &Geotransform, width: u32, height: u32, method: Resampling) -> RgbImage {
    let src = &mosaic.image;
    let (w, h) = (i64::from(src.width()), i64::from(src.height()));
    RgbImage::from_fn(width, height, |x, y| {
        let p = mosaic
            .geotransform
            .to_pixel(gt.pixel_center(f64::from(x), f64::from(y)));
        let (u, v) = (p.x - 0.5, p.y - 0.5);
        match method {
            Resampling::Nearest => {
                let sx = (u.round() as i64).clamp(0, w - 1) as u32;
                let sy = (v.round() as i64).clamp(0, h - 1) as u32;
                *src.get_pixel(sx, sy)
            }
            Resampling::Bilinear => Rgb(sample_bilinear(src, u, v)),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix() -> TileMatrix {
        TileMatrix {
            id: "0".into(),
            origin_x: 0.0,
            origin_y: 100.0,
            tile_width_px: 10,
            tile_height_px: 10,
        }
    }

    #[test]
    fn aligned_range_is_one_tile() {
        let b = Bounds::new(10.0, 80.0, 20.0, 90.0);
        assert_eq!(tile_range(&matrix(), 1.0, &b), (1, 1, 1, 1));
        let b = Bounds::new(15.0, 75.0, 25.0, 85.0);
        assert_eq!(tile_range(&matrix(), 1.0, &b), (1, 2, 1, 2));
    }

    #[test]
    fn stitch_places_tiles() {
        let tiles: Vec<RgbImage> = (0..4u8)
            .map(|i| RgbImage::from_pixel(10, 10, Rgb([i, 0, 0])))
            .collect();
        let m = Mosaic::stitch(&matrix(), 1.0, 1, 1, 2, 2, &tiles).unwrap();
        assert_eq!(m.image.get_pixel(15, 5).0[0], 1);
        assert_eq!(m.image.get_pixel(5, 15).0[0], 2);
        assert_eq!(m.geotransform.origin_x, 10.0);
        assert_eq!(m.geotransform.origin_y, 90.0);
    }

    #[test]
    fn bilinear_midpoint() {
        let mut img = RgbImage::new(2, 1);
        img.put_pixel(0, 0, Rgb([0, 0, 0]));
        img.put_pixel(1, 0, Rgb([100, 200, 255]));
        assert_eq!(sample_bilinear(&img, 0.5, 0.0), [50, 100, 128]);
        assert_eq!(sample_bilinear(&img, -3.0, 0.0), [0, 0, 0]);
    }

    #[test]
    fn resampling_choice() {
        assert_eq!(Resampling::choose(0.1, 0.1 + 1e-15), Resampling::Nearest);
        assert_eq!(Resampling::choose(0.2, 0.1), Resampling::Bilinear);
    }
}
