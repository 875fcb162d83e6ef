use geoseg::classes::{ClassSpec, ClassTable};
use geoseg::cleaning::{clean_binary, clean_mask, ClassPolicy, CleaningPolicy};
use geoseg::morphology::{dilate, erode, BinaryMask, ElementShape, StructuringElement};
use geoseg::raster::ClassMask;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod oracle;

const SHAPES: [ElementShape; 3] = [ElementShape::Octagon, ElementShape::Disk, ElementShape::Rectangle];

fn parking(shape: ElementShape) -> ClassPolicy {
    ClassPolicy::for_class(&ClassSpec::new(6, "parking", 1.5, 3.0), 0.1, shape)
}

#[test]
fn element_membership_matches_formulas() {
    for shape in SHAPES {
        for r in 0..9u32 {
            let se = StructuringElement::new(shape, r);
            let ri = i64::from(r);
            let mut n = 0;
            for dy in -ri - 1..=ri + 1 {
                for dx in -ri - 1..=ri + 1 {
                    let want = oracle::in_element(shape, ri, dx, dy);
                    assert_eq!(se.contains(dx as i32, dy as i32), want, "{shape:?} r={r} ({dx},{dy})");
                    n += usize::from(want);
                }
            }
            assert_eq!(se.len(), n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn erosion_and_dilation_match_oracle(seed in any::<u64>(), r in 0u32..5, shape in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let mut m = BinaryMask::new(w, h);
        m.data.iter_mut().for_each(|v| *v = rng.random_bool(0.6));
        let se = StructuringElement::new(SHAPES[shape], r);
        prop_assert_eq!(erode(&m, &se), oracle::erode(&m, SHAPES[shape], i64::from(r)));
        prop_assert_eq!(dilate(&m, &se), oracle::dilate(&m, SHAPES[shape], i64::from(r)));
    }

    #[test]
    fn cleaning_matches_six_step_oracle(seed in any::<u64>(), shape in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = oracle::speck_fixture(&mut rng, 64);
        let p = parking(SHAPES[shape]);
        let want = oracle::clean(&m, SHAPES[shape], 4, 150, 75);
        prop_assert_eq!(clean_binary(&m, &p), want);
    }

    #[test]
    fn small_components_never_survive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = oracle::speck_fixture(&mut rng, 64);
        let out = clean_binary(&m, &parking(ElementShape::Octagon));
        for comp in oracle::components(&out, true) {
            prop_assert!(comp.len() >= 150, "component of {} px", comp.len());
        }
    }
}

/// Components that contain the element at a connected run of at least
/// `min_object` centers keep those pixels after cleaning.
#[test]
fn wide_components_survive() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let m = oracle::speck_fixture(&mut rng, 64);
        let p = parking(ElementShape::Octagon);
        let out = clean_binary(&m, &p);
        let core = oracle::erode(&m, ElementShape::Octagon, 4);
        for comp in oracle::components(&core, true) {
            if comp.len() >= 150 {
                assert!(comp.iter().all(|i| out.data[*i]));
            }
        }
    }
}

#[test]
fn rectangles_change_only_at_corners() {
    let m = BinaryMask::from_fn(64, 64, |x, y| (10..40).contains(&x) && (12..50).contains(&y));
    assert_eq!(clean_binary(&m, &parking(ElementShape::Rectangle)), m);
    for shape in [ElementShape::Octagon, ElementShape::Disk] {
        let out = clean_binary(&m, &parking(shape));
        assert_eq!(clean_binary(&out, &parking(shape)), out, "{shape:?} not idempotent");
        for y in 0..64usize {
            for x in 0..64usize {
                if out.get(x, y) != m.get(x, y) {
                    let near_corner = [(10, 12), (39, 12), (10, 49), (39, 49)]
                        .iter()
                        .any(|(cx, cy)| x.abs_diff(*cx) + y.abs_diff(*cy) <= 8);
                    assert!(near_corner && m.get(x, y), "{shape:?} ({x},{y})");
                }
            }
        }
    }
}

#[test]
fn disabled_class_passes_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = oracle::speck_fixture(&mut rng, 64);
    let mut p = parking(ElementShape::Octagon);
    p.enabled = false;
    assert_eq!(clean_binary(&m, &p), m);
}

fn two_class_table() -> ClassTable {
    ClassTable::new(vec![
        ClassSpec::new(1, "building", 1.5, 3.0).with_priority(2),
        ClassSpec::new(6, "parking", 1.5, 3.0).with_priority(1),
    ])
    .unwrap()
}

#[test]
fn recombination_follows_priority() {
    let table = two_class_table();
    let policy = CleaningPolicy::from_table(&table, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = oracle::speck_fixture(&mut rng, 48);
        let b = oracle::speck_fixture(&mut rng, 48);
        let mut mask = ClassMask::empty(0, 48, 48, oracle::north_up(0.0, 4.8, 0.1));
        for (i, v) in mask.data.iter_mut().enumerate() {
            *v = if a.data[i] { 1 } else if b.data[i] { 6 } else { 0 };
        }
        let out = clean_mask(&mask, &policy).unwrap();
        let ca = oracle::clean(&mask.binary(1), ElementShape::Octagon, 4, 150, 75);
        let cb = oracle::clean(&mask.binary(6), ElementShape::Octagon, 4, 150, 75);
        for i in 0..out.data.len() {
            let want = if ca.data[i] { 1 } else if cb.data[i] { 6 } else { 0 };
            assert_eq!(out.data[i], want);
        }
    }
}

#[test]
fn touching_equal_priority_regions_keep_their_edge() {
    let table = ClassTable::new(vec![
        ClassSpec::new(1, "a", 1.5, 3.0),
        ClassSpec::new(2, "b", 1.5, 3.0),
    ])
    .unwrap();
    let policy = CleaningPolicy::from_table(&table, 0.1).with_shape(ElementShape::Rectangle);
    // two touching rectangles keep their shared edge
    let mut mask = ClassMask::empty(0, 60, 40, oracle::north_up(0.0, 4.0, 0.1));
    for y in 5..35 {
        for x in 5..55 {
            mask.set(x, y, if x < 30 { 2 } else { 1 });
        }
    }
    let out = clean_mask(&mask, &policy).unwrap();
    for y in 5..35 {
        for x in 5..55 {
            assert_eq!(out.get(x, y), mask.get(x, y), "({x},{y})");
        }
    }
}

#[test]
fn unknown_class_is_an_error() {
    let policy = CleaningPolicy::from_table(&two_class_table(), 0.1);
    let mut mask = ClassMask::empty(0, 4, 4, oracle::north_up(0.0, 0.4, 0.1));
    mask.set(0, 0, 9);
    assert!(clean_mask(&mask, &policy).is_err());
}
