//! Floating point abstraction shared by the geometry, grid and rasterization code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for coordinates.
///
/// Implemented for `f32` and `f64`. Projection math is always evaluated in
/// `f64` and converted back, so `f32` grids lose precision only at the
/// storage boundary.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening to `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Narrowing from `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Round half up. Values within representation noise of a half, such as
/// `0.6 / 0.4 = 1.4999999999999998`, count as the half.
pub fn round_half_up(v: f64) -> i64 {
    let shifted = v + 0.5;
    let f = shifted.floor();
    if shifted - f >= 1.0 - 1e-9 * v.abs().max(1.0) {
        f as i64 + 1
    } else {
        f as i64
    }
}

/// Smallest integer `n` with `n >= v`, tolerant of representation noise such as
/// `1.5 / 0.01 = 150.00000000000003`.
pub fn ceil_tolerant(v: f64) -> u64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        v.ceil().max(0.0) as u64
    }
}
