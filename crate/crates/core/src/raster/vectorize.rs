use std::collections::HashMap;

use crate::geometry::{ring_signed_area, simplify_collinear, Coord, Polygon};
use crate::groundtruth::{GroundTruthFeature, GroundTruthLayer, SourceTag};
use crate::morphology::BinaryMask;

use super::ClassMask;

/// Directed pixel edge between grid vertices, interior on the right in
/// raster (y-down) orientation.
#[derive(Clone, Copy)]
struct Edge {
    from: (i32, i32),
    dir: (i32, i32),
    label: u32,
}

impl Edge {
    fn to(&self) -> (i32, i32) {
        (self.from.0 + self.dir.0, self.from.1 + self.dir.1)
    }
}

fn turn_rank(incoming: (i32, i32), out: (i32, i32)) -> u8 {
    let left = (incoming.1, -incoming.0);
    if out == left {
        0
    } else if out == incoming {
        1
    } else {
        2
    }
}

/// Trace closed boundary rings of every labelled component. Rings follow one
/// label only, so diagonal pixels of different components never share a ring.
/// Where a component touches itself at a vertex the tracer turns left, which
/// splits the boundary into a shell and a hole meeting at that point instead
/// of one self-touching shell.
fn trace_rings(labels: &[u32], width: usize, height: usize) -> Vec<(u32, Vec<(i32, i32)>)> {
    let at = |x: i32, y: i32| -> u32 {
        if x < 0 || y < 0 || x >= width as i32 || y >= height as i32 {
            0
        } else {
            labels[y as usize * width + x as usize]
        }
    };
    let mut edges: Vec<Edge> = Vec::new();
    for y in 0..height as i32 {
        for x in 0..width as i32 {
            let l = at(x, y);
            if l == 0 {
                continue;
            }
            if at(x, y - 1) != l {
                edges.push(Edge { from: (x, y), dir: (1, 0), label: l });
            }
            if at(x + 1, y) != l {
                edges.push(Edge { from: (x + 1, y), dir: (0, 1), label: l });
            }
            if at(x, y + 1) != l {
                edges.push(Edge { from: (x + 1, y + 1), dir: (-1, 0), label: l });
            }
            if at(x - 1, y) != l {
                edges.push(Edge { from: (x, y + 1), dir: (0, -1), label: l });
            }
        }
    }
    let mut outgoing: HashMap<((i32, i32), u32), Vec<usize>> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        outgoing.entry((e.from, e.label)).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let label = edges[start].label;
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let e = edges[cur];
            ring.push(e.from);
            let next = outgoing
                .get(&(e.to(), label))
                .into_iter()
                .flatten()
                .copied()
                .filter(|&j| !used[j] || j == start)
                .min_by_key(|&j| turn_rank(e.dir, edges[j].dir));
            match next {
                Some(j) if j == start => break,
                Some(j) => cur = j,
                None => break,
            }
        }
        rings.push((label, ring));
    }
    rings
}

/// Polygons (shell plus holes) of the 4-connected components of a binary
/// mask, in pixel-vertex coordinates mapped through `to_world`.
pub(crate) fn binary_to_polygons(
    mask: &BinaryMask,
    to_world: impl Fn(f64, f64) -> Coord<f64>,
) -> Vec<Polygon<f64>> {
    let (labels, sizes) = crate::morphology::label_components(mask, true);
    let n = sizes.len();
    let mut shells: Vec<Option<Vec<Coord<f64>>>> = vec![None; n];
    let mut holes: Vec<Vec<Vec<Coord<f64>>>> = vec![Vec::new(); n];
    for (label, ring) in trace_rings(&labels, mask.width, mask.height) {
        // Simplify on exact integer vertices before georeferencing.
        let pixel: Vec<Coord<f64>> = ring
            .iter()
            .map(|&(x, y)| Coord::new(f64::from(x), f64::from(y)))
            .collect();
        let pixel = simplify_collinear(&pixel);
        let world: Vec<Coord<f64>> = pixel.iter().map(|c| to_world(c.x, c.y)).collect();
        // Outer boundaries come out with positive shoelace area in raster
        // vertex numbers; holes are negative.
        if ring_signed_area(&pixel) > 0.0 {
            shells[label as usize] = Some(world);
        } else {
            holes[label as usize].push(world);
        }
    }
    shells
        .into_iter()
        .zip(holes)
        .filter_map(|(s, h)| s.map(|s| Polygon::new(s, h)))
        .collect()
}

/// Trace every class region of `mask` into georeferenced polygons.
pub fn vectorize(mask: &ClassMask) -> GroundTruthLayer<f64> {
    let hist = mask.histogram();
    let gt = mask.geotransform;
    let mut features = Vec::new();
    for class_id in 1..=255u8 {
        if hist[class_id as usize] == 0 {
            continue;
        }
        let bin = mask.binary(class_id);
        for polygon in binary_to_polygons(&bin, |x, y| gt.vertex(x, y)) {
            features.push(GroundTruthFeature { polygon, class_id });
        }
    }
    GroundTruthLayer {
        features,
        crs_id: String::new(),
        source: SourceTag::Vectorized,
        acquisition_tag: mask.acquisition_tag.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::georef::Geotransform;

    fn gt(res: f64) -> Geotransform {
        Geotransform {
            origin_x: 100.0,
            origin_y: 200.0,
            pixel_size_x: res,
            pixel_size_y: -res,
        }
    }

    fn mask_from(rows: &[&str], res: f64) -> ClassMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let mut m = ClassMask::empty(0, w, h, gt(res));
        for (y, r) in rows.iter().enumerate() {
            for (x, ch) in r.chars().enumerate() {
                m.set(x as u32, y as u32, ch.to_digit(10).unwrap() as u8);
            }
        }
        m
    }

    #[test]
    fn empty_mask_has_no_features() {
        let m = ClassMask::empty(0, 5, 5, gt(1.0));
        assert!(vectorize(&m).features.is_empty());
    }

    #[test]
    fn square_three_by_three() {
        let m = mask_from(&["00000", "01110", "01110", "01110", "00000"], 0.1);
        let layer = vectorize(&m);
        assert_eq!(layer.features.len(), 1);
        let p = &layer.features[0].polygon;
        assert_eq!(p.exterior.len(), 4);
        let b = p.bounds().unwrap();
        assert!((b.width() - 0.3).abs() < 1e-9 && (b.height() - 0.3).abs() < 1e-9);
        assert!((p.area() - 0.09).abs() < 1e-9);
        assert!(p.interiors.is_empty());
    }

    #[test]
    fn donut_has_one_hole() {
        let m = mask_from(&["11111", "10001", "10001", "11111"], 1.0);
        let layer = vectorize(&m);
        assert_eq!(layer.features.len(), 1);
        assert_eq!(layer.features[0].polygon.interiors.len(), 1);
        assert_eq!(layer.features[0].polygon.area(), 14.0);
    }

    #[test]
    fn diagonal_pixels_are_separate_polygons() {
        let m = mask_from(&["10", "01"], 1.0);
        let layer = vectorize(&m);
        assert_eq!(layer.features.len(), 2);
        assert!(layer.features.iter().all(|f| f.polygon.area() == 1.0));
    }

    #[test]
    fn ring_with_diagonal_gap_pinches() {
        // The enclosed background touches the outside only diagonally.
        let m = mask_from(&["1100", "1010", "1111"], 1.0);
        let layer = vectorize(&m);
        assert_eq!(layer.features.len(), 1);
        assert_eq!(layer.features[0].polygon.interiors.len(), 1);
        assert_eq!(layer.features[0].polygon.area(), 8.0);
    }
}
