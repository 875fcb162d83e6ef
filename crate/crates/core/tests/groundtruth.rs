use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use geoseg::geometry::Coord;
use geoseg::groundtruth::{
    line_coverage_ratio, load_vector_file_with_report, polygonize_checked, run_overpass, ClassMapping, LineTag,
    OverpassQuery, TagFilter, COVERAGE_GATE, DEFAULT_SNAP_TOL_M,
};
use geoseg::http::ReqwestTransport;
use geoseg::vector::{LineFeature, Properties};
use geoseg::{Error, ErrorKind};

fn line(points: &[(f64, f64)], tagged: bool) -> LineFeature<f64> {
    let mut properties = Properties::new();
    if tagged {
        properties.insert("amenity".into(), "parking".into());
    }
    LineFeature {
        points: points.iter().map(|&(x, y)| Coord::new(x, y)).collect(),
        properties,
    }
}

/// A row of ten 2.5 m × 5 m stalls: a tagged back line, eleven tagged
/// dividers that stop just short of it, and an untagged curb line in front.
/// Dividers listed in `displaced` are shifted off the row.
fn comb(displaced: &[usize]) -> Vec<LineFeature<f64>> {
    let mut lines = vec![line(&[(0.0, 0.0), (25.0, 0.0)], true), line(&[(0.0, 5.0), (25.0, 5.0)], false)];
    for i in 0..=10 {
        let x = 2.5 * i as f64;
        let l = if displaced.contains(&i) {
            line(&[(x + 1.25, 0.6), (x + 1.25, 5.6)], true)
        } else {
            line(&[(x, 0.1), (x, 5.0)], true)
        };
        lines.push(l);
    }
    lines
}

fn tag() -> LineTag {
    LineTag::new("amenity", Some("parking"))
}

#[test]
fn comb_polygonizes_into_ten_stalls() {
    let (layer, ratio) = polygonize_checked(&comb(&[]), &tag(), 6, DEFAULT_SNAP_TOL_M, COVERAGE_GATE, "LOCAL").unwrap();
    assert_eq!(layer.features.len(), 10);
    for f in &layer.features {
        assert!((f.polygon.area() - 12.5).abs() < 1e-9);
    }
    assert!(ratio >= 0.99, "{ratio}");
}

#[test]
fn displaced_comb_fails_the_gate() {
    // 3 of 13 lines moved; tagged length is 25 + 8 * 4.9 + 3 * 5, and of a
    // moved divider only the 0.5 m crossing the curb stays within tolerance
    let lines = comb(&[3, 5, 7]);
    let e = polygonize_checked(&lines, &tag(), 6, DEFAULT_SNAP_TOL_M, COVERAGE_GATE, "LOCAL").unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Data);
    let layer = geoseg::groundtruth::lines_to_polygons(&lines, &tag(), 6, DEFAULT_SNAP_TOL_M, "LOCAL").unwrap();
    let tagged: Vec<_> = lines.iter().filter(|l| tag().matches(&l.properties)).cloned().collect();
    let ratio = line_coverage_ratio(&tagged, &layer.polygons(6), DEFAULT_SNAP_TOL_M).unwrap();
    assert!((ratio - (25.0 + 39.2 + 1.5) / 79.2).abs() < 1e-9, "{ratio}");
}

const OVERPASS_JSON: &str = r#"{"elements":[
    {"type":"way","id":1,"nodes":[1,2,3,4,1],"tags":{"amenity":"parking"}},
    {"type":"node","id":1,"lat":40.0,"lon":-3.7},
    {"type":"node","id":2,"lat":40.0,"lon":-3.699},
    {"type":"node","id":3,"lat":40.001,"lon":-3.699},
    {"type":"node","id":4,"lat":40.001,"lon":-3.7}]}"#;

struct Mock {
    url: String,
    hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl Mock {
    fn start(status: u16) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let hits = Arc::new(AtomicUsize::new(0));
        let (s, h) = (server.clone(), hits.clone());
        let handle = std::thread::spawn(move || {
            for mut req in s.incoming_requests() {
                h.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let ok = req.method() == &tiny_http::Method::Post && body.starts_with("data=");
                let code = if ok { status } else { 400 };
                let _ = req.respond(tiny_http::Response::from_string(OVERPASS_JSON).with_status_code(code));
            }
        });
        Mock {
            url: format!("http://127.0.0.1:{port}/api/interpreter"),
            hits,
            server,
            handle: Some(handle),
        }
    }
}

impl Drop for Mock {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn query(url: &str) -> OverpassQuery {
    let mut q = OverpassQuery::new(vec![TagFilter::new("amenity", Some("parking"))], (39.99, -3.71, 40.01, -3.69), 6);
    q.endpoint_url = url.to_string();
    q
}

#[test]
fn overpass_is_fetched_once_then_cached() {
    let mock = Mock::start(200);
    let dir = tempfile::tempdir().unwrap();
    let t = ReqwestTransport::new(Duration::from_secs(10)).unwrap();
    let a = run_overpass(&query(&mock.url), &t, Some(dir.path())).unwrap();
    let b = run_overpass(&query(&mock.url), &t, Some(dir.path())).unwrap();
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
    assert_eq!(a, b);
    assert_eq!(a.crs_id, "EPSG:4326");
    assert_eq!(a.features.len(), 1);
    assert_eq!(a.features[0].class_id, 6);
}

#[test]
fn overpass_rate_limit_is_a_network_error() {
    let mock = Mock::start(429);
    let t = ReqwestTransport::new(Duration::from_secs(10)).unwrap();
    let e = run_overpass(&query(&mock.url), &t, None).unwrap_err();
    assert!(matches!(e, Error::RateLimited { .. }), "{e}");
    assert_eq!(e.kind(), ErrorKind::Network);
}

#[test]
fn vector_file_is_mapped_repaired_and_reprojected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.geojson");
    std::fs::write(
        &path,
        r#"{"type":"FeatureCollection",
            "crs":{"type":"name","properties":{"name":"urn:ogc:def:crs:EPSG::4326"}},
            "features":[
            {"type":"Feature","properties":{"kind":"parking"},"geometry":{"type":"Polygon","coordinates":[[[-3.7,40.0],[-3.699,40.0],[-3.699,40.001],[-3.7,40.001],[-3.7,40.0]]]}},
            {"type":"Feature","properties":{"kind":"parking"},"geometry":{"type":"Polygon","coordinates":[[[-3.7,40.0],[-3.699,40.001],[-3.699,40.0],[-3.7,40.001],[-3.7,40.0]]]}},
            {"type":"Feature","properties":{"kind":"tree"},"geometry":{"type":"Polygon","coordinates":[[[-3.7,40.0],[-3.699,40.0],[-3.699,40.001],[-3.7,40.0]]]}}
        ]}"#,
    )
    .unwrap();
    let mapping = ClassMapping::new("kind", &[("parking", 6)]);
    let (layer, report) = load_vector_file_with_report(&path, &mapping, None, "EPSG:25830").unwrap();
    assert_eq!(layer.crs_id, "EPSG:25830");
    assert_eq!((report.read, report.unmapped, report.repaired), (3, 1, 1));
    // the square plus the two triangles of the bow tie
    assert_eq!(layer.features.len(), 3);
    let square = layer.features[0].polygon.area();
    // ~85 m × 111 m at 40° N
    assert!((8_000.0..10_500.0).contains(&square), "{square}");
    let bow: f64 = layer.features[1..].iter().map(|f| f.polygon.area()).sum();
    assert!((bow - square / 2.0).abs() < square * 0.01, "{bow}");
}

#[test]
fn vector_file_without_crs_needs_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.geojson");
    std::fs::write(&path, r#"{"type":"FeatureCollection","features":[]}"#).unwrap();
    let mapping = ClassMapping::new("kind", &[]);
    let e = load_vector_file_with_report(&path, &mapping, None, "LOCAL").unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Config);
    assert!(load_vector_file_with_report(&path, &mapping, Some("LOCAL"), "LOCAL").is_ok());
    let shp = dir.path().join("gt.shp");
    std::fs::write(&shp, b"").unwrap();
    assert!(load_vector_file_with_report(&shp, &mapping, Some("LOCAL"), "LOCAL").is_err());
}
