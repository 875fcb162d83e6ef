//! Segmentation class identities and their geometric rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::ElementShape;

/// Metric grouping used by the street and pedestrian ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassGroup {
    Street,
    Pedestrian,
    #[default]
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// 1..=255; 0 is background.
    pub class_id: u8,
    pub name: String,
    pub min_width_m: f64,
    pub min_area_m2: f64,
    #[serde(default)]
    pub group: ClassGroup,
    /// Rasterization and conflict precedence, highest wins.
    #[serde(default)]
    pub priority: i32,
    /// Structuring element used by the mask cleaner.
    #[serde(default)]
    pub shape: ElementShape,
}

impl ClassSpec {
    pub fn new(class_id: u8, name: &str, min_width_m: f64, min_area_m2: f64) -> Self {
        ClassSpec {
            class_id,
            name: name.to_string(),
            min_width_m,
            min_area_m2,
            group: ClassGroup::Neither,
            priority: 0,
            shape: ElementShape::default(),
        }
    }

    pub fn with_group(mut self, group: ClassGroup) -> Self {
        self.group = group;
        self
    }

    pub fn with_priority(mut self, priority: i32) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_shape(mut self, shape: ElementShape) -> Self {
        self.shape = shape;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ClassTable {
    classes: Vec<ClassSpec>,
}

impl ClassTable {
    pub fn new(mut classes: Vec<ClassSpec>) -> Result<Self> {
        classes.sort_by_key(|c| c.class_id);
        for c in &classes {
            if c.class_id == 0 {
                return Err(Error::Config(format!("class `{}` uses reserved id 0", c.name)));
            }
            if !(c.min_width_m > 0.0) || !(c.min_area_m2 > 0.0) {
                return Err(Error::Config(format!(
                    "class `{}` needs positive min_width_m and min_area_m2",
                    c.name
                )));
            }
        }
        if let Some(w) = classes.windows(2).find(|w| w[0].class_id == w[1].class_id) {
            return Err(Error::Config(format!("duplicate class id {}", w[0].class_id)));
        }
        Ok(ClassTable { classes })
    }

    pub fn get(&self, id: u8) -> Option<&ClassSpec> {
        self.classes
            .binary_search_by_key(&id, |c| c.class_id)
            .ok()
            .map(|i| &self.classes[i])
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassSpec> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn contains(&self, id: u8) -> bool {
        self.get(id).is_some()
    }

    /// Classes in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &ClassSpec> {
        self.classes.iter()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Largest class id, 0 for an empty table.
    pub fn max_id(&self) -> u8 {
        self.classes.last().map_or(0, |c| c.class_id)
    }

    pub fn priority(&self, id: u8) -> i32 {
        self.get(id).map_or(i32::MIN, |c| c.priority)
    }

    pub fn in_group(&self, id: u8, group: ClassGroup) -> bool {
        self.get(id).is_some_and(|c| c.group == group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rejects_duplicates_and_zero() {
        let a = ClassSpec::new(1, "a", 1.0, 1.0);
        assert!(ClassTable::new(vec![a.clone(), a.clone()]).is_err());
        assert!(ClassTable::new(vec![ClassSpec::new(0, "bg", 1.0, 1.0)]).is_err());
        assert!(ClassTable::new(vec![ClassSpec::new(2, "x", 0.0, 1.0)]).is_err());
    }

    #[test]
    fn lookup_sorted() {
        let t = ClassTable::new(vec![
            ClassSpec::new(6, "parking", 1.5, 3.0).with_group(ClassGroup::Street),
            ClassSpec::new(2, "road", 3.0, 10.0).with_group(ClassGroup::Street),
        ])
        .unwrap();
        assert_eq!(t.iter().map(|c| c.class_id).collect::<Vec<_>>(), vec![2, 6]);
        assert_eq!(t.max_id(), 6);
        assert!(t.in_group(6, ClassGroup::Street));
        assert!(!t.contains(3));
        assert_eq!(t.by_name("road").unwrap().class_id, 2);
    }
}
