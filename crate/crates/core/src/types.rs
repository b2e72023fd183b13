//! Shared domain types: coordinates, hourly epochs, meteorological factors
//! and the timing-difference unit.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius (IUGG) used by every distance computation.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("timestamp {0} is not on a whole hour")]
    NotWholeHour(String),
    #[error("{factor} value {value} outside valid range")]
    OutOfRange { factor: MetFactor, value: f64 },
    #[error("timing difference {0} ns is not a plausible PPS offset")]
    InvalidTd(f64),
    #[error("unknown meteorological factor `{0}`")]
    UnknownFactor(String),
    #[error("duplicate factor {0} in factor set")]
    DuplicateFactor(MetFactor),
    #[error("invalid timestamp `{0}`")]
    InvalidTimestamp(String),
}

/// WGS-84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint", into = "RawGeoPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = TypeError;
    fn try_from(raw: RawGeoPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawGeoPoint {
    fn from(p: GeoPoint) -> Self {
        RawGeoPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, TypeError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            // NaN fails both range checks
            return Err(TypeError::InvalidCoordinate { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Unit vector on the sphere (x towards lon 0, z towards the north pole).
    pub(crate) fn to_unit_vector(self) -> [f64; 3] {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    pub(crate) fn from_unit_vector(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let lat = (v[2] / norm).clamp(-1.0, 1.0).asin().to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        GeoPoint { lat, lon }
    }

    /// Point reached by travelling `distance_km` from `self` along the
    /// great circle with initial bearing `bearing_deg` (clockwise from north).
    pub fn destination(&self, bearing_deg: f64, distance_km: f64) -> GeoPoint {
        let delta = distance_km / EARTH_RADIUS_KM;
        let theta = bearing_deg.to_radians();
        let (lat1, lon1) = (self.lat.to_radians(), self.lon.to_radians());
        let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).asin();
        let lon2 = lon1 + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
        let lon2 = (lon2.to_degrees() + 540.0) % 360.0 - 180.0;
        GeoPoint { lat: lat2.to_degrees(), lon: lon2 }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// A UTC instant truncated to the whole hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EpochHour(DateTime<Utc>);

impl EpochHour {
    pub fn new(instant: DateTime<Utc>) -> Result<Self, TypeError> {
        if instant.minute() != 0 || instant.second() != 0 || instant.nanosecond() != 0 {
            return Err(TypeError::NotWholeHour(instant.to_rfc3339()));
        }
        Ok(EpochHour(instant))
    }

    /// The hour containing `instant`.
    pub fn containing(instant: DateTime<Utc>) -> Self {
        let secs = instant.timestamp().div_euclid(3600) * 3600;
        EpochHour(Utc.timestamp_opt(secs, 0).single().expect("in range"))
    }

    pub fn from_unix_hours(hours: i64) -> Self {
        EpochHour(Utc.timestamp_opt(hours * 3600, 0).single().expect("in range"))
    }

    pub fn from_ymdh(year: i32, month: u32, day: u32, hour: u32) -> Result<Self, TypeError> {
        let dt = Utc
            .with_ymd_and_hms(year, month, day, hour, 0, 0)
            .single()
            .ok_or_else(|| TypeError::InvalidTimestamp(format!("{year}-{month}-{day} {hour}h")))?;
        Ok(EpochHour(dt))
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.0
    }

    pub fn unix_hours(&self) -> i64 {
        self.0.timestamp().div_euclid(3600)
    }

    pub fn unix_seconds(&self) -> i64 {
        self.0.timestamp()
    }

    pub fn plus_hours(&self, hours: i64) -> Self {
        EpochHour(self.0 + Duration::hours(hours))
    }
}

impl fmt::Display for EpochHour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl FromStr for EpochHour {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dt = parse_utc(s)?;
        EpochHour::new(dt)
    }
}

impl TryFrom<String> for EpochHour {
    type Error = TypeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EpochHour> for String {
    fn from(e: EpochHour) -> String {
        e.to_string()
    }
}

/// Parses an ISO-8601 / RFC 3339 UTC timestamp. A bare `YYYY-MM-DDTHH:MM:SS`
/// without offset is read as UTC.
pub fn parse_utc(s: &str) -> Result<DateTime<Utc>, TypeError> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .map(|n| n.and_utc())
        .map_err(|_| TypeError::InvalidTimestamp(s.to_string()))
}

/// The eleven meteorological factors, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetFactor {
    PressureHpa,
    CloudCoverUnitless,
    HumidityPct,
    PrecipitationMm,
    SnowDepthCm,
    SunshineHr,
    TemperatureC,
    VaporPressureHpa,
    VisibilityM,
    WindDirDeg,
    WindSpeedMs,
}

impl MetFactor {
    pub const ALL: [MetFactor; 11] = [
        MetFactor::PressureHpa,
        MetFactor::CloudCoverUnitless,
        MetFactor::HumidityPct,
        MetFactor::PrecipitationMm,
        MetFactor::SnowDepthCm,
        MetFactor::SunshineHr,
        MetFactor::TemperatureC,
        MetFactor::VaporPressureHpa,
        MetFactor::VisibilityM,
        MetFactor::WindDirDeg,
        MetFactor::WindSpeedMs,
    ];

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in CSV headers and config files.
    pub fn name(self) -> &'static str {
        match self {
            MetFactor::PressureHpa => "pressure_hpa",
            MetFactor::CloudCoverUnitless => "cloud_cover_unitless",
            MetFactor::HumidityPct => "humidity_pct",
            MetFactor::PrecipitationMm => "precipitation_mm",
            MetFactor::SnowDepthCm => "snow_depth_cm",
            MetFactor::SunshineHr => "sunshine_hr",
            MetFactor::TemperatureC => "temperature_c",
            MetFactor::VaporPressureHpa => "vapor_pressure_hpa",
            MetFactor::VisibilityM => "visibility_m",
            MetFactor::WindDirDeg => "wind_dir_deg",
            MetFactor::WindSpeedMs => "wind_speed_ms",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            MetFactor::PressureHpa | MetFactor::VaporPressureHpa => "hPa",
            MetFactor::CloudCoverUnitless => "-",
            MetFactor::HumidityPct => "%",
            MetFactor::PrecipitationMm => "mm",
            MetFactor::SnowDepthCm => "cm",
            MetFactor::SunshineHr => "hr",
            MetFactor::TemperatureC => "degC",
            MetFactor::VisibilityM => "m",
            MetFactor::WindDirDeg => "deg",
            MetFactor::WindSpeedMs => "m/s",
        }
    }

    /// Inclusive physical validity range.
    pub fn valid_range(self) -> (f64, f64) {
        match self {
            MetFactor::PressureHpa => (850.0, 1100.0),
            MetFactor::CloudCoverUnitless => (0.0, 10.0),
            MetFactor::HumidityPct => (0.0, 100.0),
            MetFactor::PrecipitationMm => (0.0, 300.0),
            MetFactor::SnowDepthCm => (0.0, 500.0),
            MetFactor::SunshineHr => (0.0, 1.0),
            MetFactor::TemperatureC => (-60.0, 60.0),
            MetFactor::VaporPressureHpa => (0.0, 100.0),
            MetFactor::VisibilityM => (0.0, 100_000.0),
            MetFactor::WindDirDeg => (0.0, 360.0),
            MetFactor::WindSpeedMs => (0.0, 100.0),
        }
    }

    /// Cloud cover is reported in integer tenths.
    pub fn is_integer_valued(self) -> bool {
        matches!(self, MetFactor::CloudCoverUnitless)
    }
}

impl fmt::Display for MetFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetFactor {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        MetFactor::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TypeError::UnknownFactor(s.to_string()))
    }
}

/// Returns `v` if it is a physically valid reading of `factor`.
pub fn validate_factor_value(factor: MetFactor, v: f64) -> Result<f64, TypeError> {
    let (lo, hi) = factor.valid_range();
    let in_range = v.is_finite() && v >= lo && v <= hi;
    let integral = !factor.is_integer_valued() || v.fract() == 0.0;
    if in_range && integral {
        Ok(v)
    } else {
        Err(TypeError::OutOfRange { factor, value: v })
    }
}

/// Signed eLoran-minus-GPS PPS offset in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TdNanoseconds(f64);

impl TdNanoseconds {
    pub fn new(value: f64) -> Result<Self, TypeError> {
        if value.is_finite() && value.abs() < 1e9 {
            Ok(TdNanoseconds(value))
        } else {
            Err(TypeError::InvalidTd(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TdNanoseconds {
    type Error = TypeError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        TdNanoseconds::new(v)
    }
}

impl From<TdNanoseconds> for f64 {
    fn from(td: TdNanoseconds) -> f64 {
        td.0
    }
}

/// Ordered subset of [`MetFactor`], always kept in canonical order so that
/// matrix columns are reproducible.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "Vec<MetFactor>")]
pub struct FactorSet(Vec<MetFactor>);

impl FactorSet {
    pub fn new(factors: impl IntoIterator<Item = MetFactor>) -> Result<Self, TypeError> {
        let mut v: Vec<MetFactor> = factors.into_iter().collect();
        v.sort();
        if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
            return Err(TypeError::DuplicateFactor(w[0]));
        }
        Ok(FactorSet(v))
    }

    pub fn empty() -> Self {
        FactorSet(Vec::new())
    }

    pub fn all() -> Self {
        FactorSet(MetFactor::ALL.to_vec())
    }

    /// Temperature, humidity and atmospheric pressure.
    pub fn three() -> Self {
        use MetFactor::*;
        FactorSet::new([TemperatureC, HumidityPct, PressureHpa]).expect("distinct")
    }

    /// Temperature, humidity, vapor pressure, visibility and wind speed.
    pub fn five() -> Self {
        use MetFactor::*;
        FactorSet::new([TemperatureC, HumidityPct, VaporPressureHpa, VisibilityM, WindSpeedMs]).expect("distinct")
    }

    /// The seven factors retained by correlation screening.
    pub fn seven() -> Self {
        use MetFactor::*;
        FactorSet::new([
            PressureHpa,
            CloudCoverUnitless,
            HumidityPct,
            TemperatureC,
            VaporPressureHpa,
            VisibilityM,
            WindSpeedMs,
        ])
        .expect("distinct")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[MetFactor] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = MetFactor> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, f: MetFactor) -> bool {
        self.0.binary_search(&f).is_ok()
    }

    /// Column position of `f` in this set.
    pub fn position(&self, f: MetFactor) -> Option<usize> {
        self.0.binary_search(&f).ok()
    }
}

impl TryFrom<Vec<MetFactor>> for FactorSet {
    type Error = TypeError;
    fn try_from(v: Vec<MetFactor>) -> Result<Self, Self::Error> {
        FactorSet::new(v)
    }
}

/// Accepts a list of factor names or one of the preset sizes 3, 5, 7, 11.
impl<'de> Deserialize<'de> for FactorSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::{self, SeqAccess, Unexpected, Visitor};

        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FactorSet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of factor names or one of 3, 5, 7, 11")
            }

            fn visit_u64<E: de::Error>(self, n: u64) -> Result<FactorSet, E> {
                match n {
                    3 => Ok(FactorSet::three()),
                    5 => Ok(FactorSet::five()),
                    7 => Ok(FactorSet::seven()),
                    11 => Ok(FactorSet::all()),
                    _ => Err(E::invalid_value(Unexpected::Unsigned(n), &self)),
                }
            }

            fn visit_i64<E: de::Error>(self, n: i64) -> Result<FactorSet, E> {
                match u64::try_from(n) {
                    Ok(n) => self.visit_u64(n),
                    Err(_) => Err(E::invalid_value(Unexpected::Signed(n), &self)),
                }
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<FactorSet, A::Error> {
                let mut v = Vec::new();
                while let Some(f) = seq.next_element::<MetFactor>()? {
                    v.push(f);
                }
                FactorSet::new(v).map_err(de::Error::custom)
            }
        }

        d.deserialize_any(V)
    }
}

impl From<FactorSet> for Vec<MetFactor> {
    fn from(s: FactorSet) -> Self {
        s.0
    }
}

impl fmt::Display for FactorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|x| x.name()).collect();
        f.write_str(&names.join("+"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn factor_sets_parse_from_sizes_or_names() {
        let seven: FactorSet = serde_json::from_str("7").unwrap();
        assert_eq!(seven, FactorSet::seven());
        let named: FactorSet = serde_json::from_str(r#"["temperature_c", "pressure_hpa"]"#).unwrap();
        assert_eq!(named.factors(), &[MetFactor::PressureHpa, MetFactor::TemperatureC]);
        assert_eq!(serde_json::to_string(&named).unwrap(), r#"["pressure_hpa","temperature_c"]"#);
        assert!(serde_json::from_str::<FactorSet>("4").is_err());
        assert!(serde_json::from_str::<FactorSet>(r#"["temperature_c", "temperature_c"]"#).is_err());
        assert!(serde_json::from_str::<FactorSet>(r#"["dew_point"]"#).is_err());
    }

    #[test]
    fn haversine_identity_is_zero() {
        let p = GeoPoint::new(36.2, 128.1).unwrap();
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn haversine_half_great_circle() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(0.0, 180.0).unwrap();
        let expected = std::f64::consts::PI * EARTH_RADIUS_KM;
        assert!((haversine_km(a, b) - expected).abs() < 0.01);
        assert!((expected - 20015.114).abs() < 0.001);
    }

    #[test]
    fn geopoint_rejects_nan_and_out_of_bounds() {
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(0.0, f64::NAN).is_err());
        assert!(GeoPoint::new(90.1, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn validate_examples() {
        assert_eq!(validate_factor_value(MetFactor::HumidityPct, 55.0), Ok(55.0));
        assert!(validate_factor_value(MetFactor::CloudCoverUnitless, 10.0).is_ok());
        assert!(matches!(
            validate_factor_value(MetFactor::CloudCoverUnitless, 11.0),
            Err(TypeError::OutOfRange { .. })
        ));
        assert!(validate_factor_value(MetFactor::CloudCoverUnitless, 4.5).is_err());
        assert!(validate_factor_value(MetFactor::TemperatureC, f64::NAN).is_err());
    }

    #[test]
    fn epoch_hour_requires_whole_hour() {
        let dt = Utc.with_ymd_and_hms(2024, 10, 1, 3, 0, 1).unwrap();
        assert!(EpochHour::new(dt).is_err());
        assert_eq!(EpochHour::containing(dt), EpochHour::from_ymdh(2024, 10, 1, 3).unwrap());
        let e: EpochHour = "2024-12-01T05:00:00Z".parse().unwrap();
        assert_eq!(e.to_string(), "2024-12-01T05:00:00Z");
        assert!("2024-12-01T05:30:00Z".parse::<EpochHour>().is_err());
    }

    #[test]
    fn factor_set_is_canonical() {
        let s = FactorSet::new([MetFactor::WindSpeedMs, MetFactor::PressureHpa]).unwrap();
        assert_eq!(s.factors(), &[MetFactor::PressureHpa, MetFactor::WindSpeedMs]);
        assert!(FactorSet::new([MetFactor::HumidityPct, MetFactor::HumidityPct]).is_err());
        assert_eq!(FactorSet::seven().len(), 7);
        assert_eq!(MetFactor::ALL.len(), 11);
        for (i, f) in MetFactor::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(f.name().parse::<MetFactor>().unwrap(), *f);
        }
    }

    #[test]
    fn destination_round_trips_distance() {
        let tx = GeoPoint::new(36.193, 129.338).unwrap();
        let p = tx.destination(-83.0, 179.28);
        assert_relative_eq!(haversine_km(tx, p), 179.28, max_relative = 1e-9);
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-89.0f64..89.0, -179.0f64..179.0).prop_map(|(a, b)| GeoPoint::new(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn haversine_triangle_inequality(a in point(), b in point(), c in point()) {
            let ab = haversine_km(a, b);
            let bc = haversine_km(b, c);
            let ac = haversine_km(a, c);
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-9) + 1e-9);
            prop_assert!((ab - haversine_km(b, a)).abs() < 1e-9);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn epoch_order_matches_timestamps(h1 in 0i64..500_000, h2 in 0i64..500_000) {
            let (a, b) = (EpochHour::from_unix_hours(h1), EpochHour::from_unix_hours(h2));
            prop_assert_eq!(a.cmp(&b), a.unix_seconds().cmp(&b.unix_seconds()));
        }
    }
}
