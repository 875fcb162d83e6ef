//! Zero-buffer style repair of self-intersecting polygons.
//!
//! All rings are noded into a planar arrangement and every bounded face that
//! lies inside the input under the even-odd rule is kept. A bow-tie therefore
//! becomes its two lobes with the total area preserved, rather than losing a
//! lobe to winding-number cancellation.

use crate::geometry::{point_in_ring, Coord, Polygon};

use super::planar::{interior_point, node_segments, InputSegment};

fn ring_segments(p: &Polygon<f64>) -> Vec<InputSegment> {
    p.rings()
        .flat_map(|r| {
            let n = r.len();
            (0..n).map(move |i| InputSegment {
                a: r[i],
                b: r[(i + 1) % n],
                flags: 0,
            })
        })
        .collect()
}

fn even_odd(p: &Polygon<f64>, q: Coord<f64>) -> bool {
    p.rings().filter(|r| point_in_ring(q, r)).count() % 2 == 1
}

/// Rings are simple and pairwise disjoint.
pub fn is_simple(p: &Polygon<f64>) -> bool {
    let segs = ring_segments(p);
    if segs.iter().any(|s| s.a == s.b) {
        return false;
    }
    let arr = node_segments(&segs);
    if arr.edges.len() != segs.len() || arr.edges.iter().any(|e| e.multiplicity != 1) {
        return false;
    }
    let mut degree = vec![0u32; arr.nodes.len()];
    for e in &arr.edges {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    degree.iter().all(|d| *d == 2)
}

/// Valid polygons covering the even-odd interior of `p`. Already valid input
/// comes back unchanged; degenerate input yields nothing.
pub fn repair_polygon(p: &Polygon<f64>) -> Vec<Polygon<f64>> {
    if p.exterior.iter().chain(p.interiors.iter().flatten()).any(|c| !c.is_finite()) {
        return Vec::new();
    }
    if is_simple(p) {
        return if p.validate().is_ok() { vec![p.clone()] } else { Vec::new() };
    }
    let mut arr = node_segments(&ring_segments(p));
    // Doubled edges do not separate inside from outside.
    arr.retain_edges(|e| e.multiplicity % 2 == 1);
    arr.faces()
        .into_iter()
        .map(|(face, _)| face)
        .filter(|face| interior_point(face).is_some_and(|q| even_odd(p, q)))
        .collect()
}
