//! Binary morphology on boolean rasters: structuring elements, erosion and
//! dilation with replicated borders, and 4-connected component filtering.
//!
//! Elements are stored as one horizontal half-width per row offset, which
//! covers every shape used here (all are symmetric and row-convex), and lets
//! erosion and dilation run on per-row prefix sums.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ElementShape {
    Disk,
    Rectangle,
    #[default]
    Octagon,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    pub shape: ElementShape,
    pub radius: u32,
    half_widths: Vec<u32>,
}

fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

impl StructuringElement {
    /// `radius` 0 yields the single-pixel element.
    pub fn new(shape: ElementShape, radius: u32) -> Self {
        let r = i64::from(radius);
        let cut = i64::from(radius.div_ceil(2));
        let half_widths = (-r..=r)
            .map(|dy| {
                let w = match shape {
                    ElementShape::Disk => isqrt((r * r - dy * dy) as u64) as i64,
                    ElementShape::Rectangle => r,
                    // square with ⌈r/2⌉-pixel corners cut at 45°: |dx| + |dy| ≤ 2r − ⌈r/2⌉
                    ElementShape::Octagon => (2 * r - cut - dy.abs()).min(r),
                };
                w as u32
            })
            .collect();
        StructuringElement {
            shape,
            radius,
            half_widths,
        }
    }

    pub fn disk(radius: u32) -> Self {
        Self::new(ElementShape::Disk, radius)
    }

    /// Half-width of the row at vertical offset `dy`.
    pub fn half_width(&self, dy: i32) -> Option<u32> {
        let idx = dy + self.radius as i32;
        usize::try_from(idx).ok().and_then(|i| self.half_widths.get(i)).copied()
    }

    pub fn contains(&self, dx: i32, dy: i32) -> bool {
        self.half_width(dy).is_some_and(|w| dx.unsigned_abs() <= w)
    }

    /// Offsets in row-major order.
    pub fn offsets(&self) -> Vec<(i32, i32)> {
        let r = self.radius as i32;
        (-r..=r)
            .flat_map(|dy| {
                let w = self.half_width(dy).unwrap_or(0) as i32;
                (-w..=w).map(move |dx| (dx, dy))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.half_widths.iter().map(|w| 2 * *w as usize + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn invert(&self) -> Self {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    fn row_prefix(&self) -> Vec<u32> {
        let w1 = self.width + 1;
        let mut p = vec![0u32; w1 * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                p[y * w1 + x + 1] = p[y * w1 + x] + u32::from(self.data[y * self.width + x]);
            }
        }
        p
    }
}

enum Op {
    Erode,
    Dilate,
}

fn morph(mask: &BinaryMask, se: &StructuringElement, op: Op) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    if w == 0 || h == 0 {
        return mask.clone();
    }
    let prefix = mask.row_prefix();
    let w1 = w + 1;
    let r = se.radius as i64;
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = matches!(op, Op::Erode);
            for dy in -r..=r {
                let hw = se.half_width(dy as i32).unwrap_or(0) as i64;
                // Clamped coordinates reproduce edge replication.
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let x0 = (x as i64 - hw).max(0) as usize;
                let x1 = ((x as i64 + hw) as usize).min(w - 1);
                let ones = prefix[yy * w1 + x1 + 1] - prefix[yy * w1 + x0];
                match op {
                    Op::Erode => {
                        if ones as usize != x1 - x0 + 1 {
                            acc = false;
                            break;
                        }
                    }
                    Op::Dilate => {
                        if ones > 0 {
                            acc = true;
                            break;
                        }
                    }
                }
            }
            out.data[y * w + x] = acc;
        }
    }
    out
}

/// Erosion with edge replication: a pixel survives iff every element offset,
/// clamped to the raster, is set.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    morph(mask, se, Op::Erode)
}

/// Dilation. Edge replication and zero padding agree for row-convex elements
/// whose half-widths shrink away from the center row.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    morph(mask, se, Op::Dilate)
}

/// 4-connected labelling of pixels equal to `value`. Labels start at 1; 0
/// marks pixels of the other value. Returns labels and per-label sizes
/// (index 0 unused).
pub fn label_components(mask: &BinaryMask, value: bool) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut parent: Vec<u32> = vec![0];
    let mut labels = vec![0u32; w * h];

    fn find(parent: &mut [u32], mut a: u32) -> u32 {
        while parent[a as usize] != a {
            parent[a as usize] = parent[parent[a as usize] as usize];
            a = parent[a as usize];
        }
        a
    }

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if mask.data[i] != value {
                continue;
            }
            let left = if x > 0 { labels[i - 1] } else { 0 };
            let up = if y > 0 { labels[i - w] } else { 0 };
            labels[i] = match (left, up) {
                (0, 0) => {
                    let l = parent.len() as u32;
                    parent.push(l);
                    l
                }
                (l, 0) | (0, l) => l,
                (l, u) => {
                    let (rl, ru) = (find(&mut parent, l), find(&mut parent, u));
                    if rl != ru {
                        let (lo, hi) = (rl.min(ru), rl.max(ru));
                        parent[hi as usize] = lo;
                    }
                    l.min(u)
                }
            };
        }
    }

    // Resolve to dense labels in first-seen scan order.
    let mut dense = vec![0u32; parent.len()];
    let mut sizes = vec![0usize];
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if dense[root] == 0 {
            dense[root] = sizes.len() as u32;
            sizes.push(0);
        }
        *l = dense[root];
        sizes[*l as usize] += 1;
    }
    (labels, sizes)
}

/// Clear foreground components with fewer than `min_px` pixels.
pub fn remove_small_objects(mask: &BinaryMask, min_px: usize) -> BinaryMask {
    let (labels, sizes) = label_components(mask, true);
    let mut out = mask.clone();
    for (v, l) in out.data.iter_mut().zip(&labels) {
        if *l != 0 && sizes[*l as usize] < min_px {
            *v = false;
        }
    }
    out
}

/// Fill background components with fewer than `min_px` pixels that do not
/// touch the raster border.
pub fn fill_small_holes(mask: &BinaryMask, min_px: usize) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let (labels, sizes) = label_components(mask, false);
    let mut touches = vec![false; sizes.len()];
    for x in 0..w {
        touches[labels[x] as usize] = true;
        touches[labels[(h - 1) * w + x] as usize] = true;
    }
    for y in 0..h {
        touches[labels[y * w] as usize] = true;
        touches[labels[y * w + w - 1] as usize] = true;
    }
    let mut out = mask.clone();
    for (v, l) in out.data.iter_mut().zip(&labels) {
        if *l != 0 && !touches[*l as usize] && sizes[*l as usize] < min_px {
            *v = true;
        }
    }
    out
}
