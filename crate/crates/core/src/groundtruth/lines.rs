//! Polygons from line networks, and the line-coverage quality check.

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, ring_length, Coord, Polygon};
use crate::vector::{LineFeature, Properties};

use super::planar::{node_segments, InputSegment, Pt, SegmentIndex};
use super::{GroundTruthFeature, GroundTruthLayer, SourceTag};

pub const DEFAULT_SNAP_TOL_M: f64 = 0.25;
/// Share of a face boundary that must follow tagged lines for the face to be
/// claimed.
pub const CLAIM_SHARE: f64 = 0.5;
/// Minimum line coverage ratio for a line-derived layer to be accepted.
pub const COVERAGE_GATE: f64 = 0.85;

/// Property filter selecting the lines that carry a class. A `None` value
/// matches any value of `key`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineTag {
    pub key: String,
    pub value: Option<String>,
}

impl LineTag {
    pub fn new(key: &str, value: Option<&str>) -> Self {
        LineTag {
            key: key.to_string(),
            value: value.map(str::to_string),
        }
    }

    pub fn matches(&self, props: &Properties) -> bool {
        match (props.get(&self.key), &self.value) {
            (None, _) | (Some(serde_json::Value::Null), _) => false,
            (Some(_), None) => true,
            (Some(v), Some(want)) => super::attribute_text(v) == *want,
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the representative is deterministic
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Snap polyline endpoints: nearby endpoints merge onto one representative,
/// then lone endpoints within `tol` of another segment move onto it.
fn snap_endpoints(lines: &mut [Vec<Pt>], tol: f64) {
    // endpoint k belongs to line k / 2; even = start, odd = end
    let ends: Vec<Pt> = lines
        .iter()
        .flat_map(|l| [l[0], l[l.len() - 1]])
        .collect();
    let mut uf = UnionFind((0..ends.len()).collect());
    let mut order: Vec<usize> = (0..ends.len()).collect();
    order.sort_by(|&a, &b| ends[a].x.total_cmp(&ends[b].x));
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if ends[j].x - ends[i].x > tol {
                break;
            }
            if ends[i].dist(ends[j]) <= tol {
                uf.union(i, j);
            }
        }
    }
    let mut cluster_size = vec![0usize; ends.len()];
    for k in 0..ends.len() {
        let r = uf.find(k);
        cluster_size[r] += 1;
    }
    let mut snapped = ends.clone();
    for (k, p) in snapped.iter_mut().enumerate() {
        *p = ends[uf.find(k)];
    }

    let mut segments = Vec::new();
    let mut owner = Vec::new();
    for (li, l) in lines.iter().enumerate() {
        let n = l.len();
        for s in 0..n - 1 {
            let a = if s == 0 { snapped[2 * li] } else { l[s] };
            let b = if s + 2 == n { snapped[2 * li + 1] } else { l[s + 1] };
            segments.push((a, b));
            owner.push((li, s));
        }
    }
    let index = SegmentIndex::new(segments, tol);
    for k in 0..ends.len() {
        let root = uf.find(k);
        if cluster_size[root] != 1 {
            continue;
        }
        let (li, at_end) = (k / 2, k % 2 == 1);
        let p = snapped[k];
        let own_seg = if at_end { lines[li].len() - 2 } else { 0 };
        let best = index
            .candidates(p, p, tol)
            .into_iter()
            .filter(|&i| owner[i] != (li, own_seg))
            .map(|i| {
                let (a, b) = index.segments[i];
                (point_segment_distance(p, a, b), i)
            })
            .filter(|(d, _)| *d > 0.0 && *d <= tol)
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if let Some((_, i)) = best {
            let (a, b) = index.segments[i];
            let ab = b.sub(a);
            let t = (p.sub(a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            snapped[k] = a.add(ab.scale(t));
        }
    }
    for (li, l) in lines.iter_mut().enumerate() {
        let n = l.len();
        l[0] = snapped[2 * li];
        l[n - 1] = snapped[2 * li + 1];
    }
}

fn clean_points(points: &[Coord<f64>]) -> Vec<Pt> {
    let mut out: Vec<Pt> = Vec::with_capacity(points.len());
    for p in points {
        if out.last() != Some(p) {
            out.push(*p);
        }
    }
    out
}

/// Rebuild closed areas from a line network. Faces whose boundary follows
/// lines matching `tag` for at least half its length get `class_id`.
pub fn lines_to_polygons(
    lines: &[LineFeature<f64>],
    tag: &LineTag,
    class_id: u8,
    snap_tol_m: f64,
    crs_id: &str,
) -> Result<GroundTruthLayer<f64>> {
    if !(snap_tol_m >= 0.0 && snap_tol_m.is_finite()) {
        return Err(Error::Config(format!("snap tolerance {snap_tol_m} must be finite and >= 0")));
    }
    let mut pts = Vec::new();
    let mut tagged = Vec::new();
    for l in lines {
        let p = clean_points(&l.points);
        if p.len() >= 2 && p.iter().all(|c| c.is_finite()) {
            pts.push(p);
            tagged.push(tag.matches(&l.properties));
        }
    }
    if pts.is_empty() {
        return Err(Error::Data("empty line set".into()));
    }
    snap_endpoints(&mut pts, snap_tol_m);

    let mut input = Vec::new();
    let mut tagged_segments = Vec::new();
    for (l, t) in pts.iter().zip(&tagged) {
        for w in l.windows(2) {
            input.push(InputSegment {
                a: w[0],
                b: w[1],
                flags: u32::from(*t),
            });
            if *t {
                tagged_segments.push((w[0], w[1]));
            }
        }
    }
    let mut arr = node_segments(&input);
    arr.remove_dangles();
    let tagged_index = SegmentIndex::new(tagged_segments, snap_tol_m);

    let features = arr
        .faces()
        .into_iter()
        .filter(|(face, _)| {
            let perimeter = ring_length(&face.exterior);
            let ring = &face.exterior;
            let n = ring.len();
            let covered: f64 = (0..n)
                .map(|i| tagged_index.covered_length(ring[i], ring[(i + 1) % n], snap_tol_m))
                .sum();
            perimeter > 0.0 && covered >= CLAIM_SHARE * perimeter
        })
        .map(|(polygon, _)| GroundTruthFeature { polygon, class_id })
        .collect();
    Ok(GroundTruthLayer {
        features,
        crs_id: crs_id.to_string(),
        source: SourceTag::LineDerived,
        acquisition_tag: String::new(),
    })
}

/// [`lines_to_polygons`] followed by the coverage check on the tagged lines.
/// Returns the layer and its coverage ratio, or a data error when the ratio
/// is below `gate`.
pub fn polygonize_checked(
    lines: &[LineFeature<f64>],
    tag: &LineTag,
    class_id: u8,
    snap_tol_m: f64,
    gate: f64,
    crs_id: &str,
) -> Result<(GroundTruthLayer<f64>, f64)> {
    let layer = lines_to_polygons(lines, tag, class_id, snap_tol_m, crs_id)?;
    let tagged: Vec<LineFeature<f64>> = lines.iter().filter(|l| tag.matches(&l.properties)).cloned().collect();
    let ratio = line_coverage_ratio(&tagged, &layer.polygons(class_id), snap_tol_m)?;
    if ratio < gate {
        return Err(Error::Data(format!("line coverage {ratio:.3} is below the {gate:.2} gate")));
    }
    Ok((layer, ratio))
}

/// Fraction of total line length lying within `tol_m` of any polygon
/// boundary (shells and holes).
pub fn line_coverage_ratio(lines: &[LineFeature<f64>], polygons: &[Polygon<f64>], tol_m: f64) -> Result<f64> {
    let mut boundary = Vec::new();
    for p in polygons {
        for r in p.rings() {
            let n = r.len();
            boundary.extend((0..n).map(|i| (r[i], r[(i + 1) % n])));
        }
    }
    let index = SegmentIndex::new(boundary, tol_m);
    let (mut total, mut covered) = (0.0, 0.0);
    for l in lines {
        for w in l.points.windows(2) {
            total += w[0].dist(w[1]);
            covered += index.covered_length(w[0], w[1], tol_m);
        }
    }
    if total <= 0.0 {
        return Err(Error::Data("line set has zero total length".into()));
    }
    Ok((covered / total).clamp(0.0, 1.0))
}
