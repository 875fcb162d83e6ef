//! Brute-force reference implementations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the library's algorithms;
//! library types are only used as containers.
#![allow(dead_code)]

use std::collections::VecDeque;

use geoseg::geometry::{Bounds, Polygon};
use geoseg::georef::Geotransform;
use geoseg::morphology::{BinaryMask, ElementShape};
use geoseg::raster::ClassMask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn north_up(origin_x: f64, origin_y: f64, res: f64) -> Geotransform {
    Geotransform {
        origin_x,
        origin_y,
        pixel_size_x: res,
        pixel_size_y: -res,
    }
}

/// Blobby random class mask: a few rectangles of random classes plus salt.
pub fn random_mask(rng: &mut ChaCha8Rng, tile_id: u64, n: u32, classes: u8, res: f64) -> ClassMask {
    let mut m = ClassMask::empty(tile_id, n, n, north_up(0.0, f64::from(n) * res, res));
    for _ in 0..rng.random_range(0..6) {
        let c = rng.random_range(1..=classes);
        let (x0, y0) = (rng.random_range(0..n), rng.random_range(0..n));
        let (w, h) = (rng.random_range(1..n / 2), rng.random_range(1..n / 2));
        for y in y0..(y0 + h).min(n) {
            for x in x0..(x0 + w).min(n) {
                m.set(x, y, c);
            }
        }
    }
    for _ in 0..rng.random_range(0..20) {
        m.set(rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..=classes));
    }
    m
}

// ---- metrics ----

#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct Tally {
    pub p: u64,
    pub g: u64,
    pub i: u64,
    pub bi: u64,
    pub street: u64,
    pub ped: u64,
}

/// Per-pixel double loop; the buffer is every pixel within Euclidean
/// distance `r` pixels of a ground-truth pixel of class `c`.
pub fn tally(pairs: &[(ClassMask, ClassMask)], c: u8, r: i64, street: &[u8], ped: &[u8]) -> Tally {
    let mut t = Tally::default();
    for (p, g) in pairs {
        let (w, h) = (i64::from(g.width), i64::from(g.height));
        for y in 0..h {
            for x in 0..w {
                let pv = p.get(x as u32, y as u32);
                let gv = g.get(x as u32, y as u32);
                let near = (-r..=r).any(|dy| {
                    (-r..=r).any(|dx| {
                        let (qx, qy) = (x + dx, y + dy);
                        dx * dx + dy * dy <= r * r
                            && (0..w).contains(&qx)
                            && (0..h).contains(&qy)
                            && g.get(qx as u32, qy as u32) == c
                    })
                });
                if pv == c {
                    t.p += 1;
                    t.i += u64::from(gv == c);
                    t.bi += u64::from(near);
                    t.street += u64::from(street.contains(&gv));
                    t.ped += u64::from(ped.contains(&gv));
                }
                t.g += u64::from(gv == c);
            }
        }
    }
    t
}

/// `[gt][pred]` pixel counts.
pub fn confusion(pairs: &[(ClassMask, ClassMask)], size: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; size]; size];
    for (p, g) in pairs {
        for y in 0..g.height {
            for x in 0..g.width {
                m[g.get(x, y) as usize][p.get(x, y) as usize] += 1;
            }
        }
    }
    m
}

// ---- morphology ----

pub fn in_element(shape: ElementShape, r: i64, dx: i64, dy: i64) -> bool {
    if dx.abs() > r || dy.abs() > r {
        return false;
    }
    match shape {
        ElementShape::Disk => dx * dx + dy * dy <= r * r,
        ElementShape::Rectangle => true,
        ElementShape::Octagon => dx.abs() + dy.abs() <= 2 * r - (r + 1) / 2,
    }
}

fn clamped(m: &BinaryMask, x: i64, y: i64) -> bool {
    let cx = x.clamp(0, m.width as i64 - 1) as usize;
    let cy = y.clamp(0, m.height as i64 - 1) as usize;
    m.data[cy * m.width + cx]
}

fn morph(m: &BinaryMask, shape: ElementShape, r: i64, erode: bool) -> BinaryMask {
    let mut out = BinaryMask::new(m.width, m.height);
    for y in 0..m.height as i64 {
        for x in 0..m.width as i64 {
            let mut all = true;
            let mut any = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    if in_element(shape, r, dx, dy) {
                        let v = clamped(m, x + dx, y + dy);
                        all &= v;
                        any |= v;
                    }
                }
            }
            out.data[y as usize * m.width + x as usize] = if erode { all } else { any };
        }
    }
    out
}

pub fn erode(m: &BinaryMask, shape: ElementShape, r: i64) -> BinaryMask {
    morph(m, shape, r, true)
}

pub fn dilate(m: &BinaryMask, shape: ElementShape, r: i64) -> BinaryMask {
    morph(m, shape, r, false)
}

/// 4-connected components of pixels equal to `value`, each as a list of
/// flat indices, in scan order of their first pixel.
pub fn components(m: &BinaryMask, value: bool) -> Vec<Vec<usize>> {
    let (w, h) = (m.width, m.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || m.data[start] != value {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut nb = Vec::with_capacity(4);
            if x > 0 {
                nb.push(i - 1);
            }
            if x + 1 < w {
                nb.push(i + 1);
            }
            if y > 0 {
                nb.push(i - w);
            }
            if y + 1 < h {
                nb.push(i + w);
            }
            for j in nb {
                if !seen[j] && m.data[j] == value {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn touches_border(comp: &[usize], w: usize, h: usize) -> bool {
    comp.iter().any(|i| {
        let (x, y) = (i % w, i / w);
        x == 0 || y == 0 || x + 1 == w || y + 1 == h
    })
}

/// The six steps: erode, drop small objects, dilate, dilate, fill small
/// enclosed holes, erode.
pub fn clean(m: &BinaryMask, shape: ElementShape, r: i64, min_object: usize, min_hole: usize) -> BinaryMask {
    let mut a = erode(m, shape, r);
    for comp in components(&a, true) {
        if comp.len() < min_object {
            for i in comp {
                a.data[i] = false;
            }
        }
    }
    let mut b = dilate(&dilate(&a, shape, r), shape, r);
    for comp in components(&b, false) {
        if comp.len() < min_hole && !touches_border(&comp, b.width, b.height) {
            for i in comp {
                b.data[i] = true;
            }
        }
    }
    erode(&b, shape, r)
}

/// Parking speck/hole fixture: a few solid blobs with holes punched in,
/// plus stray specks.
pub fn speck_fixture(rng: &mut ChaCha8Rng, n: usize) -> BinaryMask {
    let mut m = BinaryMask::new(n, n);
    for _ in 0..rng.random_range(1..4) {
        let (cx, cy) = (rng.random_range(0..n) as i64, rng.random_range(0..n) as i64);
        let (rx, ry) = (rng.random_range(3..20) as i64, rng.random_range(3..20) as i64);
        let round = rng.random_bool(0.5);
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                let (dx, dy) = (x - cx, y - cy);
                let inside = if round {
                    dx * dx * ry * ry + dy * dy * rx * rx <= rx * rx * ry * ry
                } else {
                    dx.abs() <= rx && dy.abs() <= ry
                };
                if inside {
                    m.set(x as usize, y as usize, true);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..6) {
        let (x0, y0) = (rng.random_range(0..n), rng.random_range(0..n));
        let (w, h) = (rng.random_range(1..10), rng.random_range(1..10));
        for y in y0..(y0 + h).min(n) {
            for x in x0..(x0 + w).min(n) {
                m.set(x, y, false);
            }
        }
    }
    for _ in 0..rng.random_range(0..40) {
        let v = rng.random_bool(0.7);
        m.set(rng.random_range(0..n), rng.random_range(0..n), v);
    }
    m
}

// ---- geometry ----

/// `(covered, total)`: the area of `poly` inside the union of `rects`, by
/// splitting the plane on every rectangle edge so each elementary cell is
/// either covered or not, and the area of `poly`. Everything is shifted to a
/// local origin first so projected coordinates do not swamp the shoelace sums.
pub fn coverage(poly: &Polygon<f64>, rects: &[Bounds<f64>]) -> (f64, f64) {
    let o = poly.exterior[0];
    let poly: Polygon<f64> = poly
        .map_coords(|c| Ok(geoseg::geometry::Coord::new(c.x - o.x, c.y - o.y)))
        .unwrap();
    let rects: Vec<Bounds<f64>> = rects
        .iter()
        .map(|r| Bounds::new(r.min_x - o.x, r.min_y - o.y, r.max_x - o.x, r.max_y - o.y))
        .collect();
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.min_x, r.max_x]).collect();
    let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r.min_y, r.max_y]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    xs.dedup();
    ys.dedup();
    let mut total = 0.0;
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            let (cx, cy) = ((wx[0] + wx[1]) / 2.0, (wy[0] + wy[1]) / 2.0);
            let covered = rects
                .iter()
                .any(|r| r.min_x < cx && cx < r.max_x && r.min_y < cy && cy < r.max_y);
            if covered {
                total += poly.overlap_area(&Bounds::new(wx[0], wy[0], wx[1], wy[1]));
            }
        }
    }
    (total, shoelace(&poly))
}

/// Shoelace area over all rings (holes are subtracted by orientation-free
/// absolute values).
pub fn shoelace(p: &Polygon<f64>) -> f64 {
    let ring = |r: &[geoseg::geometry::Coord<f64>]| {
        let n = r.len();
        (0..n)
            .map(|i| {
                let (a, b) = (r[i], r[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            .abs()
            / 2.0
    };
    ring(&p.exterior) - p.interiors.iter().map(|h| ring(h)).sum::<f64>()
}
