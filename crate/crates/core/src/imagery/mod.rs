//! Imagery acquisition from WMTS, WMS 1.3.0 and XYZ services: provider tile
//! fetching, mosaicking, resampling onto dataset tiles and a disk cache.

mod cache;
pub(crate) mod mosaic;

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use image::RgbImage;
use log::warn;
use serde::{Deserialize, Serialize};

pub use cache::{cache_key, TileCache, CACHE_DIR_ENV};
pub use mosaic::{resample, sample_bilinear, Mosaic, Resampling};

use crate::crs::Crs;
use crate::error::{Error, Result};
use crate::georef::{write_world_file, Geotransform};
use crate::geometry::Bounds;
use crate::grid::{GridSpec, Tile};
use crate::http::{HttpRequest, HttpTransport};
use crate::raster::tile_geotransform;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointKind {
    #[serde(rename = "wmts-kvp", alias = "WMTS-KVP")]
    WmtsKvp,
    #[serde(rename = "wms-1.3.0", alias = "WMS-1.3.0")]
    Wms130,
    #[serde(rename = "xyz", alias = "XYZ-template")]
    Xyz,
}

/// Regular tile pyramid level. Tile `(col, row)` covers
/// `[origin_x + col·w·res, origin_x + (col+1)·w·res)` horizontally and
/// extends downwards from `origin_y` by rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMatrix {
    /// Matrix identifier (`TILEMATRIX` for WMTS, `{z}` for XYZ).
    pub id: String,
    pub origin_x: f64,
    pub origin_y: f64,
    #[serde(default = "default_tile_px")]
    pub tile_width_px: u32,
    #[serde(default = "default_tile_px")]
    pub tile_height_px: u32,
}

fn default_tile_px() -> u32 {
    256
}

/// Half the equatorial circumference of the spherical Mercator.
pub const WEB_MERCATOR_HALF_EXTENT: f64 = 20_037_508.342_789_244;

impl TileMatrix {
    /// Standard XYZ / GoogleMapsCompatible level `z` with 256 px tiles.
    pub fn web_mercator(z: u8) -> (Self, f64) {
        let res = 2.0 * WEB_MERCATOR_HALF_EXTENT / 256.0 / f64::from(1u32 << z);
        (
            TileMatrix {
                id: z.to_string(),
                origin_x: -WEB_MERCATOR_HALF_EXTENT,
                origin_y: WEB_MERCATOR_HALF_EXTENT,
                tile_width_px: 256,
                tile_height_px: 256,
            },
            res,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthHeader {
    pub name: String,
    pub value: String,
}

fn default_format() -> String {
    "image/png".into()
}
fn default_style() -> String {
    "default".into()
}
fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    250
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageryEndpoint {
    pub kind: EndpointKind,
    /// Base URL for WMTS/WMS; `{z}/{x}/{y}` template for XYZ.
    pub url_template: String,
    #[serde(default)]
    pub layer: String,
    pub crs_id: String,
    /// Provider pixel size in CRS units at the chosen level.
    pub provider_resolution: f64,
    #[serde(default)]
    pub tile_matrix_set: String,
    /// Required for WMTS and XYZ.
    #[serde(default)]
    pub tile_matrix: Option<TileMatrix>,
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_style")]
    pub style: String,
    #[serde(default)]
    pub auth: Option<AuthHeader>,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
}

impl ImageryEndpoint {
    pub fn xyz(url_template: &str, crs_id: &str, matrix: TileMatrix, provider_resolution: f64) -> Self {
        ImageryEndpoint {
            kind: EndpointKind::Xyz,
            url_template: url_template.to_string(),
            layer: String::new(),
            crs_id: crs_id.to_string(),
            provider_resolution,
            tile_matrix_set: String::new(),
            tile_matrix: Some(matrix),
            format: default_format(),
            style: default_style(),
            auth: None,
            request_timeout_s: default_timeout(),
            max_retries: default_retries(),
            retry_base_ms: default_retry_base_ms(),
            max_concurrent_requests: default_concurrency(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.provider_resolution > 0.0 && self.provider_resolution.is_finite()) {
            return Err(Error::Config("provider_resolution must be positive".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(Error::Config("max_concurrent_requests must be at least 1".into()));
        }
        match (self.kind, &self.tile_matrix) {
            (EndpointKind::WmtsKvp | EndpointKind::Xyz, None) => {
                Err(Error::Config("WMTS and XYZ endpoints need a tile_matrix".into()))
            }
            (_, Some(m)) if m.tile_width_px == 0 || m.tile_height_px == 0 => {
                Err(Error::Config("tile matrix tile size must be positive".into()))
            }
            _ => Crs::parse(&self.crs_id).map(|_| ()),
        }
    }

    /// Matrix identity used in cache keys.
    pub fn matrix_label(&self) -> String {
        match &self.tile_matrix {
            Some(m) => format!("{}/{}", self.tile_matrix_set, m.id),
            None => format!("wms@{}", self.provider_resolution),
        }
    }

    fn join_query(&self, query: &str) -> String {
        let base = &self.url_template;
        let sep = if base.contains('?') {
            if base.ends_with('?') || base.ends_with('&') { "" } else { "&" }
        } else {
            "?"
        };
        format!("{base}{sep}{query}")
    }

    /// URL of provider tile `(col, row)` in the configured matrix.
    pub fn tile_url(&self, col: i64, row: i64) -> String {
        let matrix = self.tile_matrix.as_ref().map(|m| m.id.as_str()).unwrap_or("");
        match self.kind {
            EndpointKind::Xyz => self
                .url_template
                .replace("{z}", matrix)
                .replace("{x}", &col.to_string())
                .replace("{y}", &row.to_string()),
            EndpointKind::WmtsKvp => self.join_query(&format!(
                "SERVICE=WMTS&REQUEST=GetTile&VERSION=1.0.0&LAYER={}&STYLE={}&TILEMATRIXSET={}&TILEMATRIX={}&TILEROW={row}&TILECOL={col}&FORMAT={}",
                self.layer, self.style, self.tile_matrix_set, matrix, self.format
            )),
            EndpointKind::Wms130 => self.url_template.clone(),
        }
    }

    /// WMS 1.3.0 GetMap URL. Geographic CRSs take the bbox in lat/lon order.
    pub fn getmap_url(&self, b: &Bounds<f64>, width: u32, height: u32) -> String {
        let geographic = Crs::parse(&self.crs_id).map(|c| c.is_geographic()).unwrap_or(false);
        let bbox = if geographic {
            format!("{:?},{:?},{:?},{:?}", b.min_y, b.min_x, b.max_y, b.max_x)
        } else {
            format!("{:?},{:?},{:?},{:?}", b.min_x, b.min_y, b.max_x, b.max_y)
        };
        self.join_query(&format!(
            "SERVICE=WMS&VERSION=1.3.0&REQUEST=GetMap&LAYERS={}&STYLES=&CRS={}&BBOX={bbox}&WIDTH={width}&HEIGHT={height}&FORMAT={}",
            self.layer, self.crs_id, self.format
        ))
    }
}

/// 8-bit RGB dataset tile image.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterTile {
    pub tile_id: u64,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
    pub geotransform: Geotransform,
    pub acquisition_tag: String,
    /// Every pixel has the same color.
    pub blank: bool,
}

impl RasterTile {
    pub fn from_image(tile_id: u64, img: RgbImage, geotransform: Geotransform, tag: &str) -> Self {
        let (width, height) = img.dimensions();
        let data = img.into_raw();
        let blank = is_uniform(&data);
        RasterTile {
            tile_id,
            width,
            height,
            data,
            geotransform,
            acquisition_tag: tag.to_string(),
            blank,
        }
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.data.clone()).expect("buffer matches dimensions")
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn file_name(tile_id: u64, tag: &str) -> String {
        format!("img_{tile_id}_{tag}.png")
    }

    /// PNG plus world file.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.to_image().save_with_format(path, image::ImageFormat::Png)?;
        write_world_file(path, &self.geotransform)
    }

    pub fn read_png(path: &Path, tile_id: u64, tag: &str) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .into_rgb8();
        let gt = crate::georef::read_world_file(path)?;
        Ok(Self::from_image(tile_id, img, gt, tag))
    }
}

fn is_uniform(rgb: &[u8]) -> bool {
    rgb.chunks_exact(3).all(|p| p == &rgb[..3])
}

/// Counting semaphore bounding in-flight requests.
struct Budget {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Budget {
    fn new(n: usize) -> Self {
        Budget {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> BudgetGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        BudgetGuard(self)
    }
}

struct BudgetGuard<'a>(&'a Budget);

impl Drop for BudgetGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Fetches dataset tiles from one endpoint. Shareable across threads; the
/// request budget applies to all tiles fetched through the same instance.
pub struct ImageryClient<'a> {
    pub endpoint: ImageryEndpoint,
    transport: &'a dyn HttpTransport,
    cache: Option<TileCache>,
    budget: Budget,
}

impl<'a> ImageryClient<'a> {
    pub fn new(endpoint: ImageryEndpoint, transport: &'a dyn HttpTransport, cache: Option<TileCache>) -> Result<Self> {
        endpoint.validate()?;
        let budget = Budget::new(endpoint.max_concurrent_requests);
        Ok(ImageryClient {
            endpoint,
            transport,
            cache,
            budget,
        })
    }

    /// One provider image with retries and exponential backoff.
    fn fetch_image(&self, url: &str) -> Result<RgbImage> {
        let ep = &self.endpoint;
        let mut request = HttpRequest::get(url);
        if let Some(a) = &ep.auth {
            request = request.header(&a.name, &a.value);
        }
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _slot = self.budget.acquire();
                self.transport.send(&request)
            };
            let retry_after = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let ct = resp.content_type.clone().unwrap_or_default();
                    if !ct.to_ascii_lowercase().starts_with("image/") {
                        return Err(Error::ContentType {
                            url: url.to_string(),
                            content_type: ct,
                        });
                    }
                    return image::load_from_memory(&resp.body)
                        .map(|i| i.into_rgb8())
                        .map_err(|e| Error::Data(format!("{url}: {e}")));
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    if attempt >= ep.max_retries {
                        return Err(if resp.status == 429 {
                            Error::RateLimited {
                                url: url.to_string(),
                                retry_after_s: resp.retry_after_s,
                            }
                        } else {
                            Error::Http {
                                url: url.to_string(),
                                reason: format!("status {} after {} attempts", resp.status, attempt + 1),
                            }
                        });
                    }
                    resp.retry_after_s
                }
                Ok(resp) => {
                    return Err(Error::Http {
                        url: url.to_string(),
                        reason: format!("status {}", resp.status),
                    })
                }
                Err(e) if attempt >= ep.max_retries => return Err(e),
                Err(_) => None,
            };
            let backoff = ep.retry_base_ms.saturating_mul(1u64 << attempt.min(16));
            let wait = retry_after.map_or(backoff, |s| backoff.max(s.saturating_mul(1000)));
            std::thread::sleep(Duration::from_millis(wait));
            attempt += 1;
        }
    }

    /// Fetch every URL with at most `max_concurrent_requests` in flight.
    /// Results keep input order whatever the completion order.
    fn fetch_all(&self, urls: &[String]) -> Result<Vec<RgbImage>> {
        let workers = self.endpoint.max_concurrent_requests.min(urls.len()).max(1);
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<RgbImage>>>> = urls.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= urls.len() {
                        break;
                    }
                    let r = self.fetch_image(&urls[i]);
                    let failed = r.is_err();
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
                    if failed {
                        // stop handing out work; the tile is lost anyway
                        next.store(urls.len(), std::sync::atomic::Ordering::SeqCst);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(urls.len());
        for slot in slots {
            match slot.into_inner().unwrap_or_else(|e| e.into_inner()) {
                Some(r) => out.push(r?),
                None => {}
            }
        }
        if out.len() != urls.len() {
            return Err(Error::Data("provider tile fetch aborted".into()));
        }
        Ok(out)
    }

    /// Provider imagery covering `bounds`, in provider pixel space.
    pub fn fetch_mosaic(&self, bounds: &Bounds<f64>) -> Result<Mosaic> {
        let ep = &self.endpoint;
        let res = ep.provider_resolution;
        match &ep.tile_matrix {
            None => {
                // WMS: one GetMap at native resolution over the bounds.
                let w = (bounds.width() / res).round().max(1.0) as u32;
                let h = (bounds.height() / res).round().max(1.0) as u32;
                let img = self.fetch_all(&[ep.getmap_url(bounds, w, h)])?.remove(0);
                if img.dimensions() != (w, h) {
                    return Err(Error::Data(format!(
                        "GetMap returned {:?}, requested {w}x{h}",
                        img.dimensions()
                    )));
                }
                Ok(Mosaic {
                    image: img,
                    geotransform: Geotransform::from_bounds(bounds, w, h),
                })
            }
            Some(m) => {
                let (c0, c1, r0, r1) = mosaic::tile_range(m, res, bounds);
                let cols: Vec<i64> = (c0..=c1).collect();
                let rows: Vec<i64> = (r0..=r1).collect();
                let urls: Vec<String> = rows
                    .iter()
                    .flat_map(|r| cols.iter().map(move |c| ep.tile_url(*c, *r)))
                    .collect();
                let images = self.fetch_all(&urls)?;
                Mosaic::stitch(m, res, c0, r0, cols.len(), rows.len(), &images)
            }
        }
    }

    /// Dataset tile image for `tile`, via the cache when one is configured.
    pub fn fetch_tile<T: Scalar>(&self, tile: &Tile<T>, spec: &GridSpec, tag: &str) -> Result<RasterTile> {
        let bounds = tile.bounds_provider.cast::<f64>();
        if !bounds.is_finite() || !bounds.is_valid() {
            return Err(Error::Data(format!("tile {} has invalid provider bounds", tile.id)));
        }
        let key = cache_key(&self.endpoint, &bounds, spec.tile_size_px, tag);
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(&key, tile.id, tag)? {
                hit.tile_id = tile.id;
                return Ok(hit);
            }
        }
        let gt = tile_geotransform(tile, spec);
        let mosaic = self.fetch_mosaic(&bounds)?;
        let method = Resampling::choose(self.endpoint.provider_resolution, gt.pixel_size_x);
        let img = resample(&mosaic, &gt, spec.tile_size_px, spec.tile_size_px, method);
        let out = RasterTile::from_image(tile.id, img, gt, tag);
        if out.blank {
            warn!("tile {} ({tag}) is a single uniform color", tile.id);
        }
        if let Some(cache) = &self.cache {
            cache.put(&key, &out)?;
        }
        Ok(out)
    }
}
