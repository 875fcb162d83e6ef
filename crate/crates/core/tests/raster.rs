use geoseg::classes::{ClassSpec, ClassTable};
use geoseg::georef::Geotransform;
use geoseg::raster::{rasterize_to, vectorize, ClassMask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod oracle;

fn table(classes: u8) -> ClassTable {
    ClassTable::new((1..=classes).map(|c| ClassSpec::new(c, &format!("c{c}"), 1.0, 1.0)).collect()).unwrap()
}

fn round_trip(mask: &ClassMask, t: &ClassTable) -> Vec<u8> {
    let layer = vectorize(mask);
    rasterize_to(&layer, &mask.geotransform, mask.width, mask.height, t).unwrap()
}

/// Salt-and-pepper masks stress pinch points and nested holes.
fn noisy_mask(rng: &mut ChaCha8Rng, n: u32, classes: u8, gt: Geotransform) -> ClassMask {
    let mut m = ClassMask::empty(0, n, n, gt);
    let p = rng.random_range(0.1..0.9);
    for v in m.data.iter_mut() {
        if rng.random_bool(p) {
            *v = rng.random_range(1..=classes);
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn vectorize_then_rasterize_is_identity(seed in any::<u64>(), noisy in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.random_range(1..=4u8);
        let res = [0.1, 0.25, 1.0, 0.3][rng.random_range(0..4)];
        let n = rng.random_range(4..48u32);
        let gt = oracle::north_up(rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4), res);
        let m = if noisy {
            noisy_mask(&mut rng, n, classes, gt)
        } else {
            let mut m = oracle::random_mask(&mut rng, 0, n.max(4), classes, res);
            m.geotransform = gt;
            m
        };
        prop_assert_eq!(round_trip(&m, &table(classes)), m.data);
    }

    #[test]
    fn world_file_round_trip(x in -1e6f64..1e6, y in -1e7f64..1e7, k in 1u32..64) {
        let res = f64::from(k) / 16.0;
        let gt = oracle::north_up(x.round(), y.round(), res);
        let back = Geotransform::parse_world_file(&gt.to_world_file()).unwrap();
        prop_assert_eq!(back, gt);
    }
}

#[test]
fn polygon_area_equals_pixel_count() {
    let res = 0.1;
    let mut m = ClassMask::empty(0, 40, 30, oracle::north_up(500.0, 900.0, res));
    let rects = [(2, 3, 10, 7, 1u8), (15, 5, 30, 25, 2), (18, 8, 22, 12, 0), (31, 0, 40, 30, 1)];
    for (x0, y0, x1, y1, c) in rects {
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, c);
            }
        }
    }
    let layer = vectorize(&m);
    let hist = m.histogram();
    for c in [1u8, 2] {
        let area: f64 = layer.features.iter().filter(|f| f.class_id == c).map(|f| oracle::shoelace(&f.polygon)).sum();
        let want = hist[c as usize] as f64 * res * res;
        assert!((area - want).abs() <= 1e-9 * want, "class {c}: {area} vs {want}");
    }
    // class 2 has one hole
    let ring_count: usize = layer.features.iter().filter(|f| f.class_id == 2).map(|f| f.polygon.interiors.len()).sum();
    assert_eq!(ring_count, 1);
}

#[test]
fn exact_area_at_unit_resolution() {
    let mut m = ClassMask::empty(0, 16, 16, oracle::north_up(0.0, 16.0, 1.0));
    for y in 3..9 {
        for x in 4..13 {
            m.set(x, y, 1);
        }
    }
    let layer = vectorize(&m);
    assert_eq!(layer.features.len(), 1);
    assert_eq!(oracle::shoelace(&layer.features[0].polygon), 54.0);
    assert_eq!(layer.features[0].polygon.area(), 54.0);
}

#[test]
fn png_and_world_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = oracle::random_mask(&mut rng, 3, 32, 4, 0.25).with_tag("2020");
    let path = dir.path().join(ClassMask::file_name(3, "2020"));
    m.write_png(&path).unwrap();
    assert!(dir.path().join("mask_3_2020.pgw").is_file());
    assert_eq!(ClassMask::read_png(&path, 3, "2020").unwrap(), m);
}
