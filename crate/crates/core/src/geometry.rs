//! Planar geometry primitives: coordinates, axis-aligned bounds, rings and
//! polygons with holes.
//!
//! Rings are stored open: the closing vertex is implied and never repeated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coord<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Coord<T> {
    pub fn new(x: T, y: T) -> Self {
        Coord { x, y }
    }

    pub fn sub(self, o: Self) -> Self {
        Coord::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Self) -> Self {
        Coord::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: T) -> Self {
        Coord::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Self) -> T {
        self.sub(o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Coord<U> {
        Coord::new(U::of(self.x.to_f64_lossy()), U::of(self.y.to_f64_lossy()))
    }
}

/// Axis-aligned rectangle `(min_x, min_y, max_x, max_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub min_x: T,
    pub min_y: T,
    pub max_x: T,
    pub max_y: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(min_x: T, min_y: T, max_x: T, max_y: T) -> Self {
        Bounds {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Bounding box of a point set, `None` when empty or non-finite.
    pub fn of_points<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Coord<T>>,
    {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Bounds::new(first.x, first.y, first.x, first.y);
        for p in it {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        b.is_finite().then_some(b)
    }

    pub fn width(&self) -> T {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> T {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn is_finite(&self) -> bool {
        self.min_x.is_finite()
            && self.min_y.is_finite()
            && self.max_x.is_finite()
            && self.max_y.is_finite()
    }

    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.min_x < self.max_x && self.min_y < self.max_y
    }

    pub fn union(&self, o: &Self) -> Self {
        Bounds::new(
            self.min_x.min(o.min_x),
            self.min_y.min(o.min_y),
            self.max_x.max(o.max_x),
            self.max_y.max(o.max_y),
        )
    }

    pub fn expand(&self, d: T) -> Self {
        Bounds::new(self.min_x - d, self.min_y - d, self.max_x + d, self.max_y + d)
    }

    pub fn contains_point(&self, p: Coord<T>) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// `other` lies inside `self`, allowing `tol` of slack on every side.
    pub fn contains_bounds(&self, other: &Self, tol: T) -> bool {
        other.min_x >= self.min_x - tol
            && other.min_y >= self.min_y - tol
            && other.max_x <= self.max_x + tol
            && other.max_y <= self.max_y + tol
    }

    /// Closed-set intersection test.
    pub fn intersects(&self, o: &Self) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }

    /// Corners counter-clockwise from `(min_x, min_y)`.
    pub fn corners(&self) -> [Coord<T>; 4] {
        [
            Coord::new(self.min_x, self.min_y),
            Coord::new(self.max_x, self.min_y),
            Coord::new(self.max_x, self.max_y),
            Coord::new(self.min_x, self.max_y),
        ]
    }

    pub fn to_polygon(&self) -> Polygon<T> {
        Polygon::new(self.corners().to_vec(), vec![])
    }

    pub fn cast<U: Scalar>(&self) -> Bounds<U> {
        Bounds::new(
            U::of(self.min_x.to_f64_lossy()),
            U::of(self.min_y.to_f64_lossy()),
            U::of(self.max_x.to_f64_lossy()),
            U::of(self.max_y.to_f64_lossy()),
        )
    }
}

/// Twice the signed area would overflow nothing here; positive means
/// counter-clockwise in a y-up frame.
pub fn ring_signed_area<T: Scalar>(ring: &[Coord<T>]) -> T {
    let n = ring.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc = acc + a.x * b.y - b.x * a.y;
    }
    acc / T::two()
}

pub fn ring_length<T: Scalar>(ring: &[Coord<T>]) -> T {
    let n = ring.len();
    (0..n).fold(T::zero(), |acc, i| acc + ring[i].dist(ring[(i + 1) % n]))
}

/// Crossing-number test with the half-open convention used by the
/// rasterizer: a point on a left or bottom edge counts as inside.
pub fn point_in_ring<T: Scalar>(p: Coord<T>, ring: &[Coord<T>]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let a = ring[j];
        let b = ring[i];
        if (a.y <= p.y) != (b.y <= p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Drop repeated consecutive vertices and a repeated closing vertex.
pub fn normalize_ring<T: Scalar>(ring: &[Coord<T>]) -> Vec<Coord<T>> {
    let mut out: Vec<Coord<T>> = Vec::with_capacity(ring.len());
    for &p in ring {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Remove vertices lying on the straight line through their neighbours.
pub fn simplify_collinear<T: Scalar>(ring: &[Coord<T>]) -> Vec<Coord<T>> {
    let mut pts = normalize_ring(ring);
    loop {
        let n = pts.len();
        if n < 4 {
            return pts;
        }
        let mut removed = false;
        let mut i = 0;
        while i < pts.len() && pts.len() >= 4 {
            let n = pts.len();
            let prev = pts[(i + n - 1) % n];
            let cur = pts[i];
            let next = pts[(i + 1) % n];
            if cur.sub(prev).cross(next.sub(cur)) == T::zero() {
                pts.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            return pts;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon<T> {
    pub exterior: Vec<Coord<T>>,
    pub interiors: Vec<Vec<Coord<T>>>,
}

impl<T: Scalar> Polygon<T> {
    pub fn new(exterior: Vec<Coord<T>>, interiors: Vec<Vec<Coord<T>>>) -> Self {
        Polygon {
            exterior: normalize_ring(&exterior),
            interiors: interiors.iter().map(|r| normalize_ring(r)).collect(),
        }
    }

    pub fn rect(min_x: T, min_y: T, max_x: T, max_y: T) -> Self {
        Bounds::new(min_x, min_y, max_x, max_y).to_polygon()
    }

    /// Unsigned area: exterior minus holes.
    pub fn area(&self) -> T {
        let holes = self
            .interiors
            .iter()
            .fold(T::zero(), |acc, h| acc + ring_signed_area(h).abs());
        ring_signed_area(&self.exterior).abs() - holes
    }

    pub fn bounds(&self) -> Option<Bounds<T>> {
        Bounds::of_points(self.exterior.iter())
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Coord<T>>> {
        std::iter::once(&self.exterior).chain(self.interiors.iter())
    }

    pub fn contains_point(&self, p: Coord<T>) -> bool {
        point_in_ring(p, &self.exterior) && !self.interiors.iter().any(|h| point_in_ring(p, h))
    }

    /// Structural checks: at least three distinct vertices and nonzero area.
    pub fn validate(&self) -> Result<()> {
        let distinct = {
            let mut v: Vec<(u64, u64)> = self
                .exterior
                .iter()
                .map(|c| (c.x.to_f64_lossy().to_bits(), c.y.to_f64_lossy().to_bits()))
                .collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        if distinct < 3 {
            return Err(Error::Geometry(format!(
                "polygon exterior has {distinct} distinct vertices, need at least 3"
            )));
        }
        if !self.rings().flatten().all(|c| c.is_finite()) {
            return Err(Error::Geometry("polygon has non-finite coordinates".into()));
        }
        if self.area() <= T::zero() {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        Ok(())
    }

    /// Area of the intersection with an axis-aligned rectangle.
    pub fn overlap_area(&self, rect: &Bounds<T>) -> T {
        let outer = ring_signed_area(&clip_ring_to_rect(&self.exterior, rect)).abs();
        let holes = self.interiors.iter().fold(T::zero(), |acc, h| {
            acc + ring_signed_area(&clip_ring_to_rect(h, rect)).abs()
        });
        outer - holes
    }

    pub fn map_coords<U: Scalar, F>(&self, mut f: F) -> Result<Polygon<U>>
    where
        F: FnMut(Coord<T>) -> Result<Coord<U>>,
    {
        let exterior = self.exterior.iter().map(|&c| f(c)).collect::<Result<Vec<_>>>()?;
        let interiors = self
            .interiors
            .iter()
            .map(|r| r.iter().map(|&c| f(c)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Polygon {
            exterior,
            interiors,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Polygon<U> {
        Polygon {
            exterior: self.exterior.iter().map(|c| c.cast()).collect(),
            interiors: self
                .interiors
                .iter()
                .map(|r| r.iter().map(|c| c.cast()).collect())
                .collect(),
        }
    }
}

/// Sutherland-Hodgman clip of a ring against a rectangle. The result may
/// contain degenerate zero-width spikes; its area is exact.
pub fn clip_ring_to_rect<T: Scalar>(ring: &[Coord<T>], rect: &Bounds<T>) -> Vec<Coord<T>> {
    #[derive(Clone, Copy)]
    enum Edge {
        Left,
        Right,
        Bottom,
        Top,
    }
    let inside = |p: Coord<T>, e: Edge| match e {
        Edge::Left => p.x >= rect.min_x,
        Edge::Right => p.x <= rect.max_x,
        Edge::Bottom => p.y >= rect.min_y,
        Edge::Top => p.y <= rect.max_y,
    };
    let cut = |a: Coord<T>, b: Coord<T>, e: Edge| -> Coord<T> {
        match e {
            Edge::Left | Edge::Right => {
                let x = if matches!(e, Edge::Left) { rect.min_x } else { rect.max_x };
                let t = (x - a.x) / (b.x - a.x);
                Coord::new(x, a.y + t * (b.y - a.y))
            }
            Edge::Bottom | Edge::Top => {
                let y = if matches!(e, Edge::Bottom) { rect.min_y } else { rect.max_y };
                let t = (y - a.y) / (b.y - a.y);
                Coord::new(a.x + t * (b.x - a.x), y)
            }
        }
    };
    let mut out: Vec<Coord<T>> = ring.to_vec();
    for e in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top] {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (ci, pi) = (inside(cur, e), inside(prev, e));
            if ci {
                if !pi {
                    out.push(cut(prev, cur, e));
                }
                out.push(cur);
            } else if pi {
                out.push(cut(prev, cur, e));
            }
        }
    }
    out
}

/// Sub-interval of `t ∈ [0, 1]` along segment `a→b` whose points lie within
/// `tol` of segment `c–d`. The tolerance region is a capsule, which is convex,
/// so the answer is a single interval.
pub fn segment_near_interval(
    a: Coord<f64>,
    b: Coord<f64>,
    c: Coord<f64>,
    d: Coord<f64>,
    tol: f64,
) -> Option<(f64, f64)> {
    let v = b.sub(a);
    let vv = v.dot(v);
    if vv == 0.0 {
        return (point_segment_distance(a, c, d) <= tol).then_some((0.0, 1.0));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut merge = |iv: Option<(f64, f64)>| {
        if let Some((l, h)) = iv {
            lo = lo.min(l);
            hi = hi.max(h);
        }
    };
    let disk = |center: Coord<f64>| -> Option<(f64, f64)> {
        let w = a.sub(center);
        let bq = 2.0 * v.dot(w);
        let cq = w.dot(w) - tol * tol;
        let disc = bq * bq - 4.0 * vv * cq;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some(((-bq - s) / (2.0 * vv), (-bq + s) / (2.0 * vv)))
    };
    merge(disk(c));
    merge(disk(d));
    let u = d.sub(c);
    let len = u.norm();
    if len > 0.0 {
        let u = u.scale(1.0 / len);
        let nrm = Coord::new(-u.y, u.x);
        let w = a.sub(c);
        // Liang-Barsky over two slabs: along in [0, len], across in [-tol, tol].
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        let mut ok = true;
        for (p0, dp, min, max) in [
            (w.dot(u), v.dot(u), 0.0, len),
            (w.dot(nrm), v.dot(nrm), -tol, tol),
        ] {
            if dp == 0.0 {
                if p0 < min || p0 > max {
                    ok = false;
                }
            } else {
                let ta = (min - p0) / dp;
                let tb = (max - p0) / dp;
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if ok && t0 <= t1 {
            merge(Some((t0, t1)));
        }
    }
    let (l, h) = (lo.max(0.0), hi.min(1.0));
    (l <= h).then_some((l, h))
}

pub fn point_segment_distance(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let v = b.sub(a);
    let vv = v.dot(v);
    if vv == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(v) / vv).clamp(0.0, 1.0);
    p.dist(a.add(v.scale(t)))
}

/// Total length of the union of closed intervals.
pub fn union_length(intervals: &mut [(f64, f64)]) -> f64 {
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(l, h) in intervals.iter() {
        match cur {
            Some((cl, ch)) if l <= ch => cur = Some((cl, ch.max(h))),
            Some((cl, ch)) => {
                total += ch - cl;
                cur = Some((l, h));
            }
            None => cur = Some((l, h)),
        }
    }
    if let Some((cl, ch)) = cur {
        total += ch - cl;
    }
    total
}
