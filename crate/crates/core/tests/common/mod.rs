#![allow(dead_code)]

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use image::{Rgb, RgbImage};

/// Color of global provider pixel `(gx, gy)` in the synthetic imagery.
pub fn source_pixel(gx: u32, gy: u32) -> [u8; 3] {
    [
        ((gx * 5 + gy * 3) % 251) as u8,
        ((gx ^ gy) & 0xff) as u8,
        ((gx / 7 + gy / 11) % 256) as u8,
    ]
}

pub fn source_tile(x: u32, y: u32) -> RgbImage {
    RgbImage::from_fn(256, 256, |px, py| Rgb(source_pixel(x * 256 + px, y * 256 + py)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ok,
    /// The first `n` requests get 503.
    FailFirst(usize),
    /// Every response is HTML.
    Html,
}

/// Local `/{z}/{x}/{y}.png` tile server over the synthetic imagery.
pub struct XyzServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl XyzServer {
    pub fn start(mode: Mode) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let hits = Arc::new(AtomicUsize::new(0));
        let (s, h) = (server.clone(), hits.clone());
        let handle = std::thread::spawn(move || {
            for req in s.incoming_requests() {
                let n = h.fetch_add(1, Ordering::SeqCst);
                let parts: Vec<u32> = req
                    .url()
                    .trim_start_matches('/')
                    .trim_end_matches(".png")
                    .split('/')
                    .filter_map(|p| p.parse().ok())
                    .collect();
                let fail = matches!(mode, Mode::FailFirst(k) if n < k);
                let resp = match (parts.as_slice(), mode) {
                    _ if fail => tiny_http::Response::from_data(b"busy".to_vec()).with_status_code(503),
                    (_, Mode::Html) => tiny_http::Response::from_data(b"<html></html>".to_vec())
                        .with_header("Content-Type: text/html".parse::<tiny_http::Header>().unwrap()),
                    ([_, x, y], _) => {
                        let mut bytes = Vec::new();
                        source_tile(*x, *y)
                            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
                            .unwrap();
                        tiny_http::Response::from_data(bytes)
                            .with_header("Content-Type: image/png".parse::<tiny_http::Header>().unwrap())
                    }
                    _ => tiny_http::Response::from_data(Vec::new()).with_status_code(404),
                };
                let _ = req.respond(resp);
            }
        });
        XyzServer {
            url: format!("http://127.0.0.1:{port}/{{z}}/{{x}}/{{y}}.png"),
            hits,
            server,
            handle: Some(handle),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for XyzServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn rect_feature(min_x: f64, min_y: f64, max_x: f64, max_y: f64, props: &str) -> String {
    format!(
        r#"{{"type":"Feature","properties":{props},"geometry":{{"type":"Polygon","coordinates":[[[{min_x},{min_y}],[{max_x},{min_y}],[{max_x},{max_y}],[{min_x},{max_y}],[{min_x},{min_y}]]]}}}}"#
    )
}

pub fn collection(features: &[String]) -> String {
    format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
}

/// Synthetic dataset: a 192 m square region in a local metric frame, 3×3
/// tiles of 64 px at 1 m, provider pixels of 1 m aligned with the grid,
/// parking and building polygons, 6 train tiles (two bottom rows) and 3 test
/// tiles (top row). Returns the config path.
pub fn write_fixture(dir: &Path, tile_url: &str) -> PathBuf {
    let w = |name: &str, body: String| std::fs::write(dir.join(name), body).unwrap();
    w("region.geojson", collection(&[rect_feature(0.0, 0.0, 192.0, 192.0, "{}")]));
    w(
        "gt.geojson",
        collection(&[
            rect_feature(10.0, 10.0, 40.0, 30.0, r#"{"kind":"parking"}"#),
            rect_feature(70.0, 20.0, 120.0, 60.0, r#"{"kind":"building"}"#),
            rect_feature(100.0, 100.0, 180.0, 120.0, r#"{"kind":"parking"}"#),
            rect_feature(20.0, 140.0, 60.0, 180.0, r#"{"kind":"building"}"#),
            rect_feature(0.0, 0.0, 5.0, 5.0, r#"{"kind":"tree"}"#),
        ]),
    );
    w("train.geojson", collection(&[rect_feature(0.0, 0.0, 192.0, 128.0, "{}")]));
    w("test.geojson", collection(&[rect_feature(0.0, 128.0, 192.0, 192.0, "{}")]));
    let config = format!(
        r#"
[dataset]
name = "synthetic"
root = "out"

[region]
path = "region.geojson"
crs = "LOCAL"

[grid]
tile_size_px = 64
resolution_m = 1.0
overlap_m = 0.0
work_crs = "LOCAL"
provider_crs = "LOCAL"

[imagery]
kind = "xyz"
url = "{tile_url}"
tag = "2023"
provider_resolution = 1.0
tile_matrix = {{ id = "0", origin_x = 0.0, origin_y = 192.0 }}
cache_dir = "cache"

[groundtruth]
path = "gt.geojson"
crs = "LOCAL"
attribute = "kind"
mapping = {{ parking = 6, building = 1 }}

[[classes]]
class_id = 1
name = "building"
min_width_m = 3.0
min_area_m2 = 20.0
priority = 1

[[classes]]
class_id = 6
name = "parking"
min_width_m = 1.5
min_area_m2 = 3.0
group = "street"

[splits]
train = "train.geojson"
test = "test.geojson"
crs = "LOCAL"
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}
