//! Coordinate reference systems and point transforms.
//!
//! Built in: geographic lon/lat (`EPSG:4326`, `EPSG:4258`), UTM on WGS84
//! (`EPSG:326zz` north, `EPSG:327zz` south), UTM on GRS80 (`EPSG:258zz`),
//! and spherical Web Mercator (`EPSG:3857`). Any id maps to itself through the
//! identity transform, so local metric frames such as `LOCAL` work for
//! synthetic data. Other pairs can be supplied through [`CrsTransform`].
//!
//! Geographic coordinates are always `x = longitude`, `y = latitude` in
//! degrees internally; axis swapping is a wire-format concern.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Coord;

const WGS84_A: f64 = 6_378_137.0;
const WGS84_INV_F: f64 = 298.257_223_563;
const GRS80_INV_F: f64 = 298.257_222_101;
const UTM_K0: f64 = 0.9996;
const UTM_FALSE_EASTING: f64 = 500_000.0;
const UTM_FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

/// Forward and inverse point maps between two CRSs.
pub trait CrsTransform: Send + Sync {
    fn source_crs(&self) -> &str;
    fn target_crs(&self) -> &str;
    fn forward(&self, p: Coord<f64>) -> Result<Coord<f64>>;
    fn inverse(&self, p: Coord<f64>) -> Result<Coord<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ellipsoid {
    Wgs84,
    Grs80,
}

impl Ellipsoid {
    fn flattening(self) -> f64 {
        match self {
            Ellipsoid::Wgs84 => 1.0 / WGS84_INV_F,
            Ellipsoid::Grs80 => 1.0 / GRS80_INV_F,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Crs {
    Geographic,
    Utm {
        zone: u8,
        north: bool,
        ellipsoid: Ellipsoid,
    },
    WebMercator,
    /// Opaque frame only reachable through the identity transform.
    Local(String),
}

impl Crs {
    pub fn parse(id: &str) -> Result<Crs> {
        let norm = id.trim().to_ascii_uppercase();
        let code = norm
            .strip_prefix("EPSG:")
            .and_then(|c| c.parse::<u32>().ok());
        let crs = match code {
            Some(4326) | Some(4258) => Crs::Geographic,
            Some(3857) | Some(900913) => Crs::WebMercator,
            Some(c @ 32601..=32660) => Crs::Utm {
                zone: (c - 32600) as u8,
                north: true,
                ellipsoid: Ellipsoid::Wgs84,
            },
            Some(c @ 32701..=32760) => Crs::Utm {
                zone: (c - 32700) as u8,
                north: false,
                ellipsoid: Ellipsoid::Wgs84,
            },
            Some(c @ 25828..=25838) => Crs::Utm {
                zone: (c - 25800) as u8,
                north: true,
                ellipsoid: Ellipsoid::Grs80,
            },
            Some(_) => return Err(Error::UnsupportedCrs(id.to_string())),
            None if norm.starts_with("LOCAL") => Crs::Local(norm),
            None => return Err(Error::UnsupportedCrs(id.to_string())),
        };
        Ok(crs)
    }

    pub fn is_geographic(&self) -> bool {
        matches!(self, Crs::Geographic)
    }

    fn to_geographic(&self, p: Coord<f64>) -> Option<Coord<f64>> {
        match self {
            Crs::Geographic => Some(p),
            Crs::Utm {
                zone,
                north,
                ellipsoid,
            } => {
                let tm = TransverseMercator::utm(*zone, *ellipsoid);
                let fn_ = if *north { 0.0 } else { UTM_FALSE_NORTHING_SOUTH };
                let (lon, lat) = tm.inverse(p.x - UTM_FALSE_EASTING, p.y - fn_)?;
                Some(Coord::new(lon, lat))
            }
            Crs::WebMercator => {
                let lon = (p.x / WGS84_A).to_degrees();
                let lat = (2.0 * (p.y / WGS84_A).exp().atan() - PI / 2.0).to_degrees();
                Some(Coord::new(lon, lat))
            }
            Crs::Local(_) => None,
        }
    }

    fn from_geographic(&self, g: Coord<f64>) -> Option<Coord<f64>> {
        if !(g.y.abs() <= 90.0) || !g.x.is_finite() {
            return None;
        }
        match self {
            Crs::Geographic => Some(g),
            Crs::Utm {
                zone,
                north,
                ellipsoid,
            } => {
                let tm = TransverseMercator::utm(*zone, *ellipsoid);
                let (e, n) = tm.forward(g.x, g.y)?;
                let fn_ = if *north { 0.0 } else { UTM_FALSE_NORTHING_SOUTH };
                Some(Coord::new(e + UTM_FALSE_EASTING, n + fn_))
            }
            Crs::WebMercator => {
                if g.y.abs() >= 89.999 {
                    return None;
                }
                let x = WGS84_A * g.x.to_radians();
                let y = WGS84_A * (PI / 4.0 + g.y.to_radians() / 2.0).tan().ln();
                Some(Coord::new(x, y))
            }
            Crs::Local(_) => None,
        }
    }
}

/// Transverse Mercator on an ellipsoid using the sixth-order Krüger series.
/// Coordinates returned without false easting/northing.
#[derive(Debug, Clone)]
pub struct TransverseMercator {
    lon0: f64,
    k0: f64,
    e: f64,
    a_rect: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

impl TransverseMercator {
    pub fn new(lon0_deg: f64, k0: f64, a: f64, f: f64) -> Self {
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let a_rect = a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ];
        TransverseMercator {
            lon0: lon0_deg,
            k0,
            e: (f * (2.0 - f)).sqrt(),
            a_rect,
            alpha,
            beta,
        }
    }

    pub fn utm(zone: u8, ellipsoid: Ellipsoid) -> Self {
        let lon0 = -183.0 + 6.0 * f64::from(zone);
        TransverseMercator::new(lon0, UTM_K0, WGS84_A, ellipsoid.flattening())
    }

    fn tau_prime(&self, tau: f64) -> f64 {
        let e = self.e;
        let sigma = (e * (e * tau / (1.0 + tau * tau).sqrt()).atanh()).sinh();
        tau * (1.0 + sigma * sigma).sqrt() - sigma * (1.0 + tau * tau).sqrt()
    }

    pub fn forward(&self, lon_deg: f64, lat_deg: f64) -> Option<(f64, f64)> {
        let mut dlon = lon_deg - self.lon0;
        dlon = (dlon + 180.0).rem_euclid(360.0) - 180.0;
        if dlon.abs() >= 90.0 {
            return None;
        }
        let lam = dlon.to_radians();
        let phi = lat_deg.to_radians();
        let tp = self.tau_prime(phi.tan());
        let xi_p = tp.atan2(lam.cos());
        let eta_p = (lam.sin() / (tp * tp + lam.cos() * lam.cos()).sqrt()).asinh();
        let mut xi = xi_p;
        let mut eta = eta_p;
        for (j, a) in self.alpha.iter().enumerate() {
            let k = 2.0 * (j as f64 + 1.0);
            xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
            eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
        }
        let x = self.k0 * self.a_rect * eta;
        let y = self.k0 * self.a_rect * xi;
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    pub fn inverse(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let xi = y / (self.k0 * self.a_rect);
        let eta = x / (self.k0 * self.a_rect);
        let mut xi_p = xi;
        let mut eta_p = eta;
        for (j, b) in self.beta.iter().enumerate() {
            let k = 2.0 * (j as f64 + 1.0);
            xi_p -= b * (k * xi).sin() * (k * eta).cosh();
            eta_p -= b * (k * xi).cos() * (k * eta).sinh();
        }
        let sh = eta_p.sinh();
        let tau_p = xi_p.sin() / (sh * sh + xi_p.cos() * xi_p.cos()).sqrt();
        let lam = sh.atan2(xi_p.cos());
        let e2 = self.e * self.e;
        let mut tau = tau_p;
        for _ in 0..10 {
            let tpi = self.tau_prime(tau);
            let dt = (tau_p - tpi) / (1.0 + tpi * tpi).sqrt() * (1.0 + (1.0 - e2) * tau * tau)
                / ((1.0 - e2) * (1.0 + tau * tau).sqrt());
            tau += dt;
            if dt.abs() < 1e-14 * tau.abs().max(1.0) {
                break;
            }
        }
        let lat = tau.atan().to_degrees();
        let lon = self.lon0 + lam.to_degrees();
        (lat.is_finite() && lon.is_finite()).then_some((lon, lat))
    }
}

/// Transform between two built-in CRSs, pivoting through geographic
/// coordinates. Equal ids short-circuit to the identity.
#[derive(Debug, Clone)]
pub struct BuiltinTransform {
    source_id: String,
    target_id: String,
    source: Crs,
    target: Crs,
    identity: bool,
}

impl BuiltinTransform {
    pub fn new(source_id: &str, target_id: &str) -> Result<Self> {
        let identity = normalize_id(source_id) == normalize_id(target_id);
        let source = Crs::parse(source_id)?;
        let target = Crs::parse(target_id)?;
        if !identity && (matches!(source, Crs::Local(_)) || matches!(target, Crs::Local(_))) {
            return Err(Error::UnsupportedCrs(format!("{source_id} -> {target_id}")));
        }
        Ok(BuiltinTransform {
            source_id: source_id.to_string(),
            target_id: target_id.to_string(),
            source,
            target,
            identity,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn inverted(&self) -> Self {
        BuiltinTransform {
            source_id: self.target_id.clone(),
            target_id: self.source_id.clone(),
            source: self.target.clone(),
            target: self.source.clone(),
            identity: self.identity,
        }
    }

    fn map(&self, from: &Crs, to: &Crs, p: Coord<f64>, fid: &str, tid: &str) -> Result<Coord<f64>> {
        let fail = || Error::Transform {
            from: fid.to_string(),
            to: tid.to_string(),
            x: p.x,
            y: p.y,
        };
        if !p.is_finite() {
            return Err(fail());
        }
        if self.identity {
            return Ok(p);
        }
        let g = from.to_geographic(p).ok_or_else(fail)?;
        let q = to.from_geographic(g).ok_or_else(fail)?;
        if q.is_finite() {
            Ok(q)
        } else {
            Err(fail())
        }
    }
}

impl CrsTransform for BuiltinTransform {
    fn source_crs(&self) -> &str {
        &self.source_id
    }

    fn target_crs(&self) -> &str {
        &self.target_id
    }

    fn forward(&self, p: Coord<f64>) -> Result<Coord<f64>> {
        self.map(&self.source, &self.target, p, &self.source_id, &self.target_id)
    }

    fn inverse(&self, p: Coord<f64>) -> Result<Coord<f64>> {
        self.map(&self.target, &self.source, p, &self.target_id, &self.source_id)
    }
}

/// Identity between two frames that share a name.
#[derive(Debug, Clone)]
pub struct Identity(pub String);

impl CrsTransform for Identity {
    fn source_crs(&self) -> &str {
        &self.0
    }

    fn target_crs(&self) -> &str {
        &self.0
    }

    fn forward(&self, p: Coord<f64>) -> Result<Coord<f64>> {
        Ok(p)
    }

    fn inverse(&self, p: Coord<f64>) -> Result<Coord<f64>> {
        Ok(p)
    }
}

fn normalize_id(id: &str) -> String {
    let n = id.trim().to_ascii_uppercase();
    match n.as_str() {
        "EPSG:4258" => "EPSG:4326".to_string(),
        "EPSG:900913" => "EPSG:3857".to_string(),
        _ => n,
    }
}

pub fn transform_between(source_id: &str, target_id: &str) -> Result<BuiltinTransform> {
    BuiltinTransform::new(source_id, target_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parse_ids() {
        assert_eq!(Crs::parse("EPSG:4326").unwrap(), Crs::Geographic);
        assert_eq!(
            Crs::parse("epsg:32633").unwrap(),
            Crs::Utm {
                zone: 33,
                north: true,
                ellipsoid: Ellipsoid::Wgs84
            }
        );
        assert!(matches!(Crs::parse("EPSG:25830").unwrap(), Crs::Utm { zone: 30, .. }));
        assert!(Crs::parse("EPSG:31256").is_err());
        assert!(matches!(Crs::parse("LOCAL").unwrap(), Crs::Local(_)));
    }

    #[test]
    fn utm_reference_points() {
        // Central meridian on the equator maps to the false easting exactly.
        let t = transform_between("EPSG:4326", "EPSG:32633").unwrap();
        let p = t.forward(Coord::new(15.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.x, 500_000.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-6);
        // Meridian arc to 45°N scaled by k0: 4_984_944.378 m (WGS84).
        let q = t.forward(Coord::new(15.0, 45.0)).unwrap();
        assert_abs_diff_eq!(q.y, 0.9996 * 4_984_944.378, epsilon = 1e-2);
    }

    #[test]
    fn utm_roundtrip_off_meridian() {
        let t = transform_between("EPSG:4326", "EPSG:32630").unwrap();
        for &(lon, lat) in &[(-3.7038, 40.4168), (-5.9, 36.0), (-0.1, 43.7), (-3.0, -10.0)] {
            let p = t.forward(Coord::new(lon, lat)).unwrap();
            let g = t.inverse(p).unwrap();
            assert_abs_diff_eq!(g.x, lon, epsilon = 1e-9);
            assert_abs_diff_eq!(g.y, lat, epsilon = 1e-9);
        }
    }

    #[test]
    fn web_mercator_known_value() {
        let t = transform_between("EPSG:4326", "EPSG:3857").unwrap();
        let p = t.forward(Coord::new(180.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.x, 20_037_508.342_789_244, epsilon = 1e-6);
        let q = t.inverse(t.forward(Coord::new(16.37, 48.2)).unwrap()).unwrap();
        assert_abs_diff_eq!(q.y, 48.2, epsilon = 1e-10);
    }

    #[test]
    fn local_frames_only_map_to_themselves() {
        assert!(transform_between("LOCAL", "LOCAL").unwrap().is_identity());
        assert!(transform_between("LOCAL", "EPSG:4326").is_err());
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let t = transform_between("EPSG:4326", "EPSG:32633").unwrap();
        assert!(t.forward(Coord::new(120.0, 10.0)).is_err());
        assert!(t.forward(Coord::new(15.0, 95.0)).is_err());
        assert!(t.forward(Coord::new(f64::NAN, 0.0)).is_err());
    }
}
