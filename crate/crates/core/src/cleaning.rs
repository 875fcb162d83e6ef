//! Class-aware morphological cleaning of predicted masks.
//!
//! Each class is cleaned on its own binary slice in two passes: noise removal
//! (erode, drop small components, dilate) and hole filling (dilate, fill
//! small holes, erode). Slices are then recombined by priority.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{ClassSpec, ClassTable};
use crate::error::{Error, Result};
use crate::morphology::{dilate, erode, fill_small_holes, remove_small_objects, BinaryMask, ElementShape, StructuringElement};
use crate::raster::ClassMask;
use crate::scalar::{ceil_tolerant, round_half_up};

/// `max(1, round(min_width / (4 · resolution)))` pixels.
pub fn kernel_radius_px(min_width_m: f64, resolution: f64) -> u32 {
    round_half_up(min_width_m / (4.0 * resolution)).max(1) as u32
}

/// Smallest whole pixel count not below `area_m2 / resolution²`.
pub fn area_threshold_px(area_m2: f64, resolution: f64) -> usize {
    ceil_tolerant(area_m2 / (resolution * resolution)) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPolicy {
    pub class_id: u8,
    pub shape: ElementShape,
    pub radius_px: u32,
    /// Components smaller than this are removed in pass 1.
    pub min_object_px: usize,
    /// Enclosed holes smaller than this are filled in pass 2.
    pub min_hole_px: usize,
    pub priority: i32,
    pub enabled: bool,
}

impl ClassPolicy {
    pub fn for_class(cls: &ClassSpec, resolution: f64, shape: ElementShape) -> Self {
        ClassPolicy {
            class_id: cls.class_id,
            shape,
            radius_px: kernel_radius_px(cls.min_width_m, resolution),
            min_object_px: area_threshold_px(cls.min_area_m2 / 2.0, resolution),
            min_hole_px: area_threshold_px(cls.min_area_m2 / 4.0, resolution),
            priority: cls.priority,
            enabled: true,
        }
    }

    pub fn element(&self) -> StructuringElement {
        StructuringElement::new(self.shape, self.radius_px.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub classes: BTreeMap<u8, ClassPolicy>,
}

impl CleaningPolicy {
    /// Policy from the class table, each class using its configured element.
    pub fn from_table(table: &ClassTable, resolution: f64) -> Self {
        CleaningPolicy {
            classes: table
                .iter()
                .map(|c| (c.class_id, ClassPolicy::for_class(c, resolution, c.shape)))
                .collect(),
        }
    }

    /// Same policy with one element shape for every class.
    pub fn with_shape(mut self, shape: ElementShape) -> Self {
        for p in self.classes.values_mut() {
            p.shape = shape;
        }
        self
    }
}

/// The two-pass pipeline on one binary slice.
pub fn clean_binary(mask: &BinaryMask, policy: &ClassPolicy) -> BinaryMask {
    if !policy.enabled {
        return mask.clone();
    }
    let se = policy.element();
    let m = erode(mask, &se);
    let m = remove_small_objects(&m, policy.min_object_px);
    let m = dilate(&m, &se);
    let m = dilate(&m, &se);
    let m = fill_small_holes(&m, policy.min_hole_px);
    erode(&m, &se)
}

/// Clean the slice of one class; every other pixel is background.
pub fn clean_class(mask: &BinaryMask, cls: &ClassSpec, resolution: f64, shape: ElementShape) -> BinaryMask {
    clean_binary(mask, &ClassPolicy::for_class(cls, resolution, shape))
}

/// Clean every class present and recombine. A pixel goes to the highest
/// priority class whose cleaned slice covers it; on equal priority the class
/// that held it before cleaning keeps it, then the lower class id wins.
/// Pixels no slice covers become background.
pub fn clean_mask(mask: &ClassMask, policy: &CleaningPolicy) -> Result<ClassMask> {
    let hist = mask.histogram();
    let present: Vec<u8> = (1..=255u8).filter(|c| hist[*c as usize] > 0).collect();
    if let Some(c) = present.iter().find(|c| !policy.classes.contains_key(c)) {
        return Err(Error::Config(format!("no cleaning policy for class {c}")));
    }
    let cleaned: Vec<(u8, i32, BinaryMask)> = present
        .par_iter()
        .map(|&c| {
            let p = &policy.classes[&c];
            (c, p.priority, clean_binary(&mask.binary(c), p))
        })
        .collect();
    let mut out = mask.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        let holder = mask.data[i];
        *v = cleaned
            .iter()
            .filter(|(_, _, m)| m.data[i])
            .max_by_key(|(c, prio, _)| (*prio, *c == holder, std::cmp::Reverse(*c)))
            .map_or(0, |(c, _, _)| *c);
    }
    Ok(out)
}
