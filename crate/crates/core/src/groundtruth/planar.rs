//! Planar arrangement of line segments: noding, face extraction and hole
//! assignment. Shared by line-network polygonization and ring repair.

use std::collections::HashMap;

use crate::geometry::{point_in_ring, ring_signed_area, segment_near_interval, Bounds, Coord, Polygon};

pub(crate) type Pt = Coord<f64>;

fn key(p: Pt) -> (u64, u64) {
    // +0.0 and -0.0 must collide
    ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())
}

/// Uniform-grid index over segments for proximity queries.
pub(crate) struct SegmentIndex {
    cell: f64,
    bins: HashMap<(i64, i64), Vec<usize>>,
    pub segments: Vec<(Pt, Pt)>,
}

impl SegmentIndex {
    pub fn new(segments: Vec<(Pt, Pt)>, pad: f64) -> Self {
        let mut lens: Vec<f64> = segments.iter().map(|(a, b)| a.dist(*b)).collect();
        lens.sort_by(f64::total_cmp);
        let median = lens.get(lens.len() / 2).copied().unwrap_or(1.0);
        let cell = median.max(4.0 * pad).max(1e-9);
        let mut idx = SegmentIndex {
            cell,
            bins: HashMap::new(),
            segments,
        };
        for i in 0..idx.segments.len() {
            let (a, b) = idx.segments[i];
            for c in idx.cells(a, b, pad) {
                idx.bins.entry(c).or_default().push(i);
            }
        }
        idx
    }

    fn cells(&self, a: Pt, b: Pt, pad: f64) -> Vec<(i64, i64)> {
        let x0 = ((a.x.min(b.x) - pad) / self.cell).floor() as i64;
        let x1 = ((a.x.max(b.x) + pad) / self.cell).floor() as i64;
        let y0 = ((a.y.min(b.y) - pad) / self.cell).floor() as i64;
        let y1 = ((a.y.max(b.y) + pad) / self.cell).floor() as i64;
        // Very long segments against a fine grid: fall back to a full scan.
        if (x1 - x0 + 1).saturating_mul(y1 - y0 + 1) > 1 << 16 {
            return vec![(i64::MIN, i64::MIN)];
        }
        (x0..=x1).flat_map(|x| (y0..=y1).map(move |y| (x, y))).collect()
    }

    /// Candidate segment ids whose padded boxes may reach `a–b`.
    pub fn candidates(&self, a: Pt, b: Pt, pad: f64) -> Vec<usize> {
        let cells = self.cells(a, b, pad);
        let mut out: Vec<usize> = if cells.first() == Some(&(i64::MIN, i64::MIN)) {
            (0..self.segments.len()).collect()
        } else {
            cells
                .iter()
                .filter_map(|c| self.bins.get(c))
                .flatten()
                .copied()
                .collect()
        };
        if let Some(all) = self.bins.get(&(i64::MIN, i64::MIN)) {
            out.extend(all);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Length of `a–b` lying within `tol` of any indexed segment.
    pub fn covered_length(&self, a: Pt, b: Pt, tol: f64) -> f64 {
        let len = a.dist(b);
        if len == 0.0 {
            return 0.0;
        }
        let mut ivs: Vec<(f64, f64)> = self
            .candidates(a, b, tol)
            .into_iter()
            .filter_map(|i| {
                let (c, d) = self.segments[i];
                segment_near_interval(a, b, c, d, tol)
            })
            .collect();
        crate::geometry::union_length(&mut ivs) * len
    }
}

/// Input segment with a caller-defined payload bitmask (e.g. "tagged").
#[derive(Debug, Clone, Copy)]
pub(crate) struct InputSegment {
    pub a: Pt,
    pub b: Pt,
    pub flags: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct PlanarEdge {
    pub a: usize,
    pub b: usize,
    /// OR of the flags of all input segments covering this edge.
    pub flags: u32,
    /// Number of input segments covering this edge.
    pub multiplicity: u32,
}

#[derive(Debug, Default)]
pub(crate) struct Arrangement {
    pub nodes: Vec<Pt>,
    pub edges: Vec<PlanarEdge>,
}

const PARAM_EPS: f64 = 1e-12;

/// Split every segment at its intersections with every other segment and
/// merge coincident pieces.
pub(crate) fn node_segments(input: &[InputSegment]) -> Arrangement {
    let segs: Vec<InputSegment> = input.iter().copied().filter(|s| s.a != s.b).collect();
    let mut splits: Vec<Vec<(f64, Pt)>> = segs.iter().map(|s| vec![(0.0, s.a), (1.0, s.b)]).collect();

    let mut order: Vec<usize> = (0..segs.len()).collect();
    let minx = |s: &InputSegment| s.a.x.min(s.b.x);
    let maxx = |s: &InputSegment| s.a.x.max(s.b.x);
    order.sort_by(|&i, &j| minx(&segs[i]).total_cmp(&minx(&segs[j])));
    for (oi, &i) in order.iter().enumerate() {
        let si = segs[i];
        let (ymin_i, ymax_i) = (si.a.y.min(si.b.y), si.a.y.max(si.b.y));
        for &j in &order[oi + 1..] {
            let sj = segs[j];
            if minx(&sj) > maxx(&si) {
                break;
            }
            if sj.a.y.min(sj.b.y) > ymax_i || sj.a.y.max(sj.b.y) < ymin_i {
                continue;
            }
            for (ti, tj, p) in intersections(&si, &sj) {
                splits[i].push((ti, p));
                splits[j].push((tj, p));
            }
        }
    }

    let mut arr = Arrangement::default();
    let mut node_of: HashMap<(u64, u64), usize> = HashMap::new();
    let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut node = |p: Pt, arr: &mut Arrangement| -> usize {
        *node_of.entry(key(p)).or_insert_with(|| {
            arr.nodes.push(p);
            arr.nodes.len() - 1
        })
    };
    for (s, mut sp) in segs.iter().zip(splits) {
        sp.sort_by(|x, y| x.0.total_cmp(&y.0));
        let ids: Vec<usize> = sp.iter().map(|(_, p)| node(*p, &mut arr)).collect();
        for w in ids.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let k = (a.min(b), a.max(b));
            match edge_of.get(&k) {
                Some(&e) => {
                    arr.edges[e].flags |= s.flags;
                    arr.edges[e].multiplicity += 1;
                }
                None => {
                    edge_of.insert(k, arr.edges.len());
                    arr.edges.push(PlanarEdge {
                        a: k.0,
                        b: k.1,
                        flags: s.flags,
                        multiplicity: 1,
                    });
                }
            }
        }
    }
    arr
}

/// Intersection parameters and points. Points at an existing endpoint reuse
/// that endpoint's exact coordinates so nodes merge bit-exactly.
fn intersections(s: &InputSegment, o: &InputSegment) -> Vec<(f64, f64, Pt)> {
    let r = s.b.sub(s.a);
    let q = o.b.sub(o.a);
    let denom = r.cross(q);
    let qp = o.a.sub(s.a);
    let scale = r.norm() * q.norm();
    let mut out = Vec::new();
    if denom.abs() > 1e-14 * scale {
        let t = qp.cross(q) / denom;
        let u = qp.cross(r) / denom;
        if !(-PARAM_EPS..=1.0 + PARAM_EPS).contains(&t) || !(-PARAM_EPS..=1.0 + PARAM_EPS).contains(&u) {
            return out;
        }
        let snap = |v: f64| {
            if v.abs() <= PARAM_EPS {
                Some(0.0)
            } else if (v - 1.0).abs() <= PARAM_EPS {
                Some(1.0)
            } else {
                None
            }
        };
        let (ts, us) = (snap(t), snap(u));
        let p = match (ts, us) {
            (Some(0.0), _) => s.a,
            (Some(_), _) => s.b,
            (None, Some(0.0)) => o.a,
            (None, Some(_)) => o.b,
            (None, None) => s.a.add(r.scale(t)),
        };
        out.push((ts.unwrap_or(t), us.unwrap_or(u), p));
        return out;
    }
    // Parallel: only collinear overlaps produce nodes.
    if qp.cross(r).abs() > 1e-12 * scale.max(1e-300).sqrt() * r.norm().max(1.0) {
        return out;
    }
    let rr = r.dot(r);
    let qq = q.dot(q);
    for (p, on_s) in [(o.a, true), (o.b, true), (s.a, false), (s.b, false)] {
        if on_s {
            let t = p.sub(s.a).dot(r) / rr;
            if t > PARAM_EPS && t < 1.0 - PARAM_EPS {
                let u = if p == o.a { 0.0 } else { 1.0 };
                out.push((t, u, p));
            }
        } else {
            let u = p.sub(o.a).dot(q) / qq;
            if u > PARAM_EPS && u < 1.0 - PARAM_EPS {
                let t = if p == s.a { 0.0 } else { 1.0 };
                out.push((t, u, p));
            }
        }
    }
    out
}

impl Arrangement {
    /// Keep only edges accepted by `keep`.
    pub fn retain_edges(&mut self, keep: impl Fn(&PlanarEdge) -> bool) {
        self.edges.retain(|e| keep(e));
    }

    /// Iteratively drop edges hanging off degree-1 nodes.
    pub fn remove_dangles(&mut self) {
        loop {
            let mut degree = vec![0usize; self.nodes.len()];
            for e in &self.edges {
                degree[e.a] += 1;
                degree[e.b] += 1;
            }
            let before = self.edges.len();
            self.edges.retain(|e| degree[e.a] > 1 && degree[e.b] > 1);
            if self.edges.len() == before {
                return;
            }
        }
    }

    /// Closed face cycles as `(node ids, edge ids)`, face on the left.
    pub fn face_cycles(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        // half-edge h: edge h/2, direction a->b when even
        let n_half = self.edges.len() * 2;
        let from = |h: usize| {
            let e = &self.edges[h / 2];
            if h % 2 == 0 { e.a } else { e.b }
        };
        let to = |h: usize| {
            let e = &self.edges[h / 2];
            if h % 2 == 0 { e.b } else { e.a }
        };
        let mut around: HashMap<usize, Vec<usize>> = HashMap::new();
        for h in 0..n_half {
            around.entry(from(h)).or_default().push(h);
        }
        let angle = |h: usize| {
            let d = self.nodes[to(h)].sub(self.nodes[from(h)]);
            d.y.atan2(d.x)
        };
        // position of each half-edge in its origin's CCW ordering
        let mut pos = vec![0usize; n_half];
        for list in around.values_mut() {
            list.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
            for (i, &h) in list.iter().enumerate() {
                pos[h] = i;
            }
        }
        let next = |h: usize| -> usize {
            let twin = h ^ 1;
            let list = &around[&to(h)];
            // clockwise neighbour of the twin keeps the face on the left
            list[(pos[twin] + list.len() - 1) % list.len()]
        };
        let mut seen = vec![false; n_half];
        let mut cycles = Vec::new();
        for start in 0..n_half {
            if seen[start] {
                continue;
            }
            let mut nodes = Vec::new();
            let mut edges = Vec::new();
            let mut h = start;
            while !seen[h] {
                seen[h] = true;
                nodes.push(from(h));
                edges.push(h / 2);
                h = next(h);
            }
            cycles.push((nodes, edges));
        }
        cycles
    }

    /// Bounded faces as polygons, with nested components attached as holes.
    /// Each face keeps the edge ids of its shell.
    pub fn faces(&self) -> Vec<(Polygon<f64>, Vec<usize>)> {
        let mut shells: Vec<(Vec<Pt>, f64, Vec<usize>)> = Vec::new();
        let mut outers: Vec<Vec<Pt>> = Vec::new();
        for (nodes, edges) in self.face_cycles() {
            let ring: Vec<Pt> = nodes.iter().map(|&i| self.nodes[i]).collect();
            let area = ring_signed_area(&ring);
            if area > 0.0 {
                shells.push((ring, area, edges));
            } else if area < 0.0 {
                outers.push(ring);
            }
        }
        let shell_bounds: Vec<Bounds<f64>> = shells
            .iter()
            .map(|(r, _, _)| Bounds::of_points(r.iter()).expect("non-empty ring"))
            .collect();
        let mut holes: Vec<Vec<Vec<Pt>>> = vec![Vec::new(); shells.len()];
        for outer in outers {
            // A component boundary is a hole of the smallest shell that
            // strictly contains it; a vertex not shared with the shell decides.
            let best = shells
                .iter()
                .enumerate()
                .filter(|(i, (ring, _, _))| {
                    let b = &shell_bounds[*i];
                    outer.iter().all(|p| b.contains_point(*p))
                        && outer
                            .iter()
                            .find(|p| !ring.contains(p))
                            .is_some_and(|p| point_in_ring(*p, ring))
                })
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, _)| i);
            if let Some(i) = best {
                holes[i].push(outer);
            }
        }
        shells
            .into_iter()
            .zip(holes)
            .map(|((ring, _, edges), h)| (Polygon::new(ring, h), edges))
            .collect()
    }
}

/// A point strictly inside `polygon` (shell minus holes).
pub(crate) fn interior_point(polygon: &Polygon<f64>) -> Option<Pt> {
    let mut ys: Vec<f64> = polygon.rings().flatten().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let shell_ys = polygon.exterior.iter().map(|p| p.y);
    let (lo, hi) = shell_ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    // widest gap between distinct vertex ordinates inside the shell's span
    let (y, _) = ys
        .windows(2)
        .filter(|w| w[0] >= lo && w[1] <= hi)
        .map(|w| ((w[0] + w[1]) / 2.0, w[1] - w[0]))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    let mut xs: Vec<f64> = Vec::new();
    for ring in polygon.rings() {
        let n = ring.len();
        for i in 0..n {
            let a = ring[(i + n - 1) % n];
            let b = ring[i];
            if (a.y <= y) != (b.y <= y) {
                xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks_exact(2)
        .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
        .map(|w| Coord::new((w[0] + w[1]) / 2.0, y))
}
