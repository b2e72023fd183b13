//! Seeded synthetic corpora with a known timing-difference recipe.
//!
//! Weather is climate mean + seasonal and diurnal cycles + a regional AR(1)
//! anomaly shared by all stations + a local AR(1) anomaly whose innovations
//! are correlated as `exp(-d / 50 km)`. Timing differences are the recipe
//! evaluated on the published (rounded) weather plus hourly noise and
//! per-sample jitter. Separate RNG streams drive weather, terrain, noise and
//! station placement, so changing one part leaves the others untouched.

pub mod oracle;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agrnn::ElevationTransform;
use crate::gridmap::sample_elevation;
use crate::ingest::{ElevationGrid, Station, StationRegistry, TdSample, TdSeries1Hz, WeatherSeries};
use crate::types::{haversine_km, EpochHour, FactorSet, GeoPoint, MetFactor, TdNanoseconds};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("epoch {0} is outside the scenario")]
    OutOfRange(EpochHour),
    #[error("weather missing for {station} at {epoch}")]
    MissingWeather { station: String, epoch: EpochHour },
}

const STREAM_WEATHER: u64 = 1;
const STREAM_TERRAIN: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_STATIONS: u64 = 4;

/// Fixed centering/scaling of one factor inside recipe terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub factor: MetFactor,
    pub center: f64,
    pub scale: f64,
}

/// `coef · Π z_f` over one to three (possibly repeated) factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub factors: Vec<MetFactor>,
    pub coef: f64,
}

/// Ground-truth map from station weather and terrain to TD (ns).
///
/// Each station contributes `Σ terms` evaluated on its normalized weather,
/// weighted by `(1 - gain + gain · h̃_j) / l` where `h̃` are the floored,
/// mean-normalized station elevations. With `receiver_only` the receiver
/// station alone contributes, with weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub bias_ns: f64,
    pub terms: Vec<Term>,
    /// Factors absent here enter terms unnormalized.
    pub normalization: Vec<Normalization>,
    pub elevation_gain: f64,
    pub receiver_only: bool,
}

fn climate_normalization() -> Vec<Normalization> {
    use MetFactor::*;
    [
        (TemperatureC, 8.0, 8.0),
        (HumidityPct, 65.0, 15.0),
        (PressureHpa, 1018.0, 7.0),
        (VaporPressureHpa, 10.0, 5.0),
        (VisibilityM, 15000.0, 8000.0),
        (WindSpeedMs, 3.0, 1.5),
        (CloudCoverUnitless, 5.0, 3.0),
    ]
    .into_iter()
    .map(|(factor, center, scale)| Normalization { factor, center, scale })
    .collect()
}

impl Recipe {
    /// TD identically zero.
    pub fn zero() -> Self {
        Recipe { bias_ns: 0.0, terms: Vec::new(), normalization: Vec::new(), elevation_gain: 0.0, receiver_only: false }
    }

    /// Linear station drives with terrain-weighted station contributions.
    pub fn elevation_coupled() -> Self {
        use MetFactor::*;
        Recipe {
            bias_ns: 40.0,
            terms: vec![
                Term { factors: vec![TemperatureC], coef: 25.0 },
                Term { factors: vec![HumidityPct], coef: 10.0 },
                Term { factors: vec![PressureHpa], coef: -15.0 },
            ],
            normalization: climate_normalization(),
            elevation_gain: 1.0,
            receiver_only: false,
        }
    }

    /// Degree-3 polynomial of receiver weather.
    pub fn cubic() -> Self {
        use MetFactor::*;
        Recipe {
            bias_ns: 40.0,
            terms: vec![
                Term { factors: vec![TemperatureC], coef: 25.0 },
                Term { factors: vec![HumidityPct], coef: 10.0 },
                Term { factors: vec![PressureHpa], coef: -15.0 },
                Term { factors: vec![TemperatureC, HumidityPct], coef: 6.0 },
                Term { factors: vec![TemperatureC, TemperatureC, TemperatureC], coef: 4.0 },
                Term { factors: vec![TemperatureC, HumidityPct, PressureHpa], coef: -6.0 },
                Term { factors: vec![HumidityPct, HumidityPct, WindSpeedMs], coef: 5.0 },
            ],
            normalization: climate_normalization(),
            elevation_gain: 0.0,
            receiver_only: true,
        }
    }

    pub fn preset(name: &str) -> Option<Recipe> {
        match name {
            "zero" => Some(Recipe::zero()),
            "elevation_coupled" => Some(Recipe::elevation_coupled()),
            "cubic" => Some(Recipe::cubic()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let finite = self.bias_ns.is_finite()
            && self.elevation_gain.is_finite()
            && self.terms.iter().all(|t| t.coef.is_finite() && (1..=3).contains(&t.factors.len()))
            && self.normalization.iter().all(|n| n.center.is_finite() && n.scale.is_finite() && n.scale != 0.0);
        if finite {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig("recipe terms must be finite, with 1 to 3 factors".into()))
        }
    }

    fn normalize(&self, factor: MetFactor, v: f64) -> f64 {
        match self.normalization.iter().find(|n| n.factor == factor) {
            Some(n) => (v - n.center) / n.scale,
            None => v,
        }
    }

    /// Every factor the recipe reads.
    pub fn factors(&self) -> FactorSet {
        let mut all: Vec<MetFactor> = self.terms.iter().flat_map(|t| t.factors.iter().copied()).collect();
        all.sort();
        all.dedup();
        FactorSet::new(all).expect("deduplicated")
    }

    /// Contribution weight of each station given its elevation (m).
    pub fn station_weights(&self, heights: &[f64], receiver: usize) -> Vec<f64> {
        let l = heights.len();
        if self.receiver_only {
            return (0..l).map(|j| if j == receiver { 1.0 } else { 0.0 }).collect();
        }
        let htilde = ElevationTransform::default().apply(heights);
        htilde.iter().map(|h| (1.0 - self.elevation_gain + self.elevation_gain * h) / l as f64).collect()
    }

    /// Recipe value for one station's factor record.
    pub fn station_drive(&self, get: impl Fn(MetFactor) -> Option<f64>) -> Option<f64> {
        let mut total = 0.0;
        for t in &self.terms {
            let mut p = t.coef;
            for &f in &t.factors {
                p *= self.normalize(f, get(f)?);
            }
            total += p;
        }
        Some(total)
    }
}

fn recipe_or_preset<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Recipe, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Preset(String),
        Full(Recipe),
    }
    match Repr::deserialize(d)? {
        Repr::Preset(name) => Recipe::preset(&name).ok_or_else(|| {
            serde::de::Error::custom(format!("unknown recipe `{name}` (expected zero, elevation_coupled or cubic)"))
        }),
        Repr::Full(r) => Ok(r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    pub cell_deg: f64,
    /// Margin around the station/path bounding box.
    pub margin_deg: f64,
    pub ridge_lon: f64,
    pub ridge_height_m: f64,
    pub hills: usize,
    /// Terrain east of this longitude falls to sea level.
    pub coast_lon: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig {
            cell_deg: 0.005,
            margin_deg: 0.1,
            ridge_lon: 128.3,
            ridge_height_m: 700.0,
            hills: 12,
            coast_lon: 129.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub start: EpochHour,
    pub duration_hours: usize,
    pub stations: usize,
    pub transmitter: GeoPoint,
    pub receiver: GeoPoint,
    /// A full recipe table or a preset name (`zero`, `elevation_coupled`, `cubic`).
    #[serde(deserialize_with = "recipe_or_preset")]
    pub recipe: Recipe,
    /// Standard deviation of the hourly TD noise (ns).
    pub noise_sd_ns: f64,
    /// Standard deviation of independent per-sample jitter (ns).
    pub jitter_sd_ns: f64,
    pub sample_interval_s: u32,
    pub terrain: TerrainConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            start: EpochHour::from_ymdh(2024, 10, 1, 0).expect("valid date"),
            duration_hours: 121 * 24,
            stations: 10,
            transmitter: GeoPoint::new(36.193, 129.338).expect("valid"),
            receiver: GeoPoint::new(36.375, 127.3506).expect("valid"),
            recipe: Recipe::elevation_coupled(),
            noise_sd_ns: 10.0,
            jitter_sd_ns: 5.0,
            sample_interval_s: 60,
            terrain: TerrainConfig::default(),
        }
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.stations < 2 {
            return bad("need at least 2 stations");
        }
        if self.duration_hours == 0 {
            return bad("duration must be positive");
        }
        if !(self.noise_sd_ns >= 0.0 && self.jitter_sd_ns >= 0.0) {
            return bad("noise sd must be non-negative");
        }
        if self.sample_interval_s == 0 || 3600 % self.sample_interval_s != 0 {
            return bad("sample interval must divide 3600 s");
        }
        if !(self.terrain.cell_deg > 0.0 && self.terrain.margin_deg >= 0.0) {
            return bad("terrain cell size must be positive");
        }
        self.recipe.validate()
    }

    /// Samples an hour needs to count as covered: half of the hour.
    pub fn min_samples_per_hour(&self) -> usize {
        1800_usize.div_ceil(self.sample_interval_s as usize)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// What a corpus directory records about its own generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub config: ScenarioConfig,
    pub receiver_station: String,
    pub min_samples_per_hour: usize,
    pub end: EpochHour,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub config: ScenarioConfig,
    pub registry: StationRegistry,
    pub weather: WeatherSeries,
    pub td: TdSeries1Hz,
    pub dem: ElevationGrid,
    pub receiver_station: String,
}

impl SyntheticScenario {
    pub fn meta(&self) -> ScenarioMeta {
        ScenarioMeta {
            config: self.config.clone(),
            receiver_station: self.receiver_station.clone(),
            min_samples_per_hour: self.config.min_samples_per_hour(),
            end: self.config.start.plus_hours(self.config.duration_hours as i64 - 1),
        }
    }

    pub fn epochs(&self) -> impl Iterator<Item = EpochHour> + '_ {
        (0..self.config.duration_hours as i64).map(|h| self.config.start.plus_hours(h))
    }
}

/// Station ids are `S01`, `S02`, ...; `S01` sits 3 km from the receiver and
/// the rest are spread along the path with 1–4 km lateral offsets.
fn place_stations(cfg: &ScenarioConfig) -> Vec<Station> {
    let mut rng = cfg.rng(STREAM_STATIONS);
    let (rx, tx) = (cfg.receiver, cfg.transmitter);
    let path_km = haversine_km(rx, tx);
    let bearing = initial_bearing(rx, tx);
    let mut out = Vec::with_capacity(cfg.stations);
    for k in 0..cfg.stations {
        let location = if k == 0 {
            rx.destination(rng.random_range(0.0..360.0), 3.0)
        } else {
            let frac = (k as f64 + rng.random_range(-0.3..0.3)) / cfg.stations as f64;
            let along = rx.destination(bearing, frac * path_km);
            let side = if rng.random_bool(0.5) { 90.0 } else { -90.0 };
            along.destination(bearing + side, rng.random_range(1.0..4.0))
        };
        out.push(Station { id: format!("S{:02}", k + 1), location });
    }
    out
}

fn initial_bearing(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let dl = (b.lon() - a.lon()).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Ridge + seeded hills over a lowland base, dropping to sea level east of
/// the coast longitude.
fn generate_terrain(cfg: &ScenarioConfig, stations: &[Station]) -> ElevationGrid {
    let t = cfg.terrain;
    let mut rng = cfg.rng(STREAM_TERRAIN);
    let pts = stations.iter().map(|s| s.location).chain([cfg.transmitter, cfg.receiver]);
    let (mut s, mut n, mut w, mut e) = (90.0f64, -90.0f64, 180.0f64, -180.0f64);
    for p in pts {
        s = s.min(p.lat());
        n = n.max(p.lat());
        w = w.min(p.lon());
        e = e.max(p.lon());
    }
    let snap = |v: f64| (v / t.cell_deg).floor() * t.cell_deg;
    let (south, west) = (snap(s - t.margin_deg), snap(w - t.margin_deg));
    let nrows = ((n + t.margin_deg - south) / t.cell_deg).ceil() as usize;
    let ncols = ((e + t.margin_deg - west) / t.cell_deg).ceil() as usize;
    let hills: Vec<(f64, f64, f64, f64)> = (0..t.hills)
        .map(|_| {
            (
                rng.random_range(south..south + nrows as f64 * t.cell_deg),
                rng.random_range(west..west + ncols as f64 * t.cell_deg),
                rng.random_range(80.0..450.0),
                rng.random_range(0.04..0.15),
            )
        })
        .collect();
    let mut values = Vec::with_capacity(nrows * ncols);
    for r in 0..nrows {
        let lat = south + (nrows - r) as f64 * t.cell_deg - 0.5 * t.cell_deg;
        for c in 0..ncols {
            let lon = west + (c as f64 + 0.5) * t.cell_deg;
            let mut h = 60.0 + t.ridge_height_m * (-((lon - t.ridge_lon) / 0.25).powi(2)).exp();
            for &(hl, hn, height, width) in &hills {
                let d2 = ((lat - hl) / width).powi(2) + ((lon - hn) * (lat.to_radians().cos()) / width).powi(2);
                h += height * (-d2).exp();
            }
            let coast = ((t.coast_lon + 0.08 - lon) / 0.08).clamp(0.0, 1.0);
            values.push(Some(((h * coast) * 10.0).round() / 10.0));
        }
    }
    ElevationGrid::new(GeoPoint::new(south, west).expect("inside range"), t.cell_deg, nrows, ncols, values)
        .expect("consistent raster")
}

/// AR(1) with stationary standard deviation `sd`.
struct Ar1 {
    phi: f64,
    innov: f64,
}

impl Ar1 {
    fn new(phi: f64, sd: f64) -> Self {
        Ar1 { phi, innov: sd * (1.0 - phi * phi).sqrt() }
    }
}

const N_LATENT: usize = 6;
const LAT_TEMP: usize = 0;
const LAT_PRES: usize = 1;
const LAT_HUM: usize = 2;
const LAT_CLOUD: usize = 3;
const LAT_WIND: usize = 4;
const LAT_DIR: usize = 5;

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn round_dp(v: f64, dp: i32) -> f64 {
    let k = 10f64.powi(dp);
    (v * k).round() / k
}

/// Hourly weather for every station, with all eleven factor columns. Terrain
/// plays no part, so only the recipe can couple TD to elevation.
fn generate_weather(cfg: &ScenarioConfig, stations: &[Station]) -> WeatherSeries {
    let mut rng = cfg.rng(STREAM_WEATHER);
    let l = stations.len();
    let corr = DMatrix::from_fn(l, l, |a, b| (-haversine_km(stations[a].location, stations[b].location) / 50.0).exp());
    let chol = corr.cholesky().expect("exponential kernel is positive definite").l();
    let regional = [
        Ar1::new(0.97, 3.0),
        Ar1::new(0.985, 6.0),
        Ar1::new(0.95, 12.0),
        Ar1::new(0.93, 1.0),
        Ar1::new(0.9, 1.0),
        Ar1::new(0.95, 1.0),
    ];
    let local = [
        Ar1::new(0.9, 0.8),
        Ar1::new(0.9, 0.6),
        Ar1::new(0.85, 4.0),
        Ar1::new(0.8, 0.3),
        Ar1::new(0.8, 0.35),
        Ar1::new(0.8, 0.3),
    ];
    let mut reg_state = [0.0; N_LATENT];
    let mut loc_state = vec![[0.0; N_LATENT]; l];
    let mut snow = vec![0.0; l];
    let mut series = WeatherSeries::new(FactorSet::all());
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    for h in 0..cfg.duration_hours as i64 {
        let epoch = cfg.start.plus_hours(h);
        for (k, ar) in regional.iter().enumerate() {
            reg_state[k] = ar.phi * reg_state[k] + ar.innov * normal(&mut rng);
        }
        for (k, ar) in local.iter().enumerate() {
            let z = DVector::from_fn(l, |_, _| normal(&mut rng));
            let shocks = &chol * z;
            for j in 0..l {
                loc_state[j][k] = ar.phi * loc_state[j][k] + ar.innov * shocks[j];
            }
        }
        let instant = epoch.instant();
        let doy = chrono::Datelike::ordinal0(&instant) as f64 + chrono::Timelike::hour(&instant) as f64 / 24.0;
        let winter = (2.0 * PI * (doy - 20.0) / 365.25).cos();
        // local solar time is about UTC+8.5 here
        let local_hour = (chrono::Timelike::hour(&instant) as f64 + 8.5).rem_euclid(24.0);
        let diurnal = (2.0 * PI * (local_hour - 15.0) / 24.0).cos();
        let daylight = (7.0..18.0).contains(&local_hour);

        for (j, st) in stations.iter().enumerate() {
            let lat = |k: usize| reg_state[k] + loc_state[j][k];
            let temp = 11.0 - 12.0 * winter + 4.0 * diurnal + lat(LAT_TEMP);
            let pressure = 1016.0 + 4.0 * winter + lat(LAT_PRES);
            let humidity = 65.0 - 5.0 * winter - 10.0 * diurnal + lat(LAT_HUM);
            let cloud_latent = lat(LAT_CLOUD) + 0.03 * (humidity - 65.0);
            let cloud = (5.0 + 3.0 * cloud_latent).round().clamp(0.0, 10.0);
            let temp = round_dp(temp.clamp(-40.0, 45.0), 1);
            let humidity = round_dp(humidity.clamp(5.0, 100.0), 0);
            let precip =
                if cloud_latent > 1.0 && humidity >= 80.0 { round_dp(2.0 * (cloud_latent - 1.0), 1) } else { 0.0 };
            snow[j] = if temp < 1.0 { snow[j] + precip } else { (snow[j] - 0.3 * (temp - 1.0)).max(0.0) };
            snow[j] = round_dp(snow[j].min(200.0), 1);
            let sat = 6.112 * (17.62 * temp / (243.12 + temp)).exp();
            let vapor = round_dp(humidity / 100.0 * sat, 1);
            let visibility = round_to(
                (24000.0 * (1.0 - (humidity / 100.0).powi(3)) + 800.0 - 1500.0 * precip).clamp(100.0, 50000.0),
                10.0,
            );
            let sunshine = if daylight { round_dp(1.0 - cloud / 10.0, 1) } else { 0.0 };
            let wind = round_dp((2.8 + 1.5 * lat(LAT_WIND) + 0.5 * diurnal).max(0.0), 1);
            let dir = round_dp((300.0 + 50.0 * lat(LAT_DIR)).rem_euclid(360.0), 0);
            use MetFactor::*;
            let values = [
                (PressureHpa, round_dp(pressure, 1)),
                (CloudCoverUnitless, cloud),
                (HumidityPct, humidity),
                (PrecipitationMm, precip),
                (SnowDepthCm, snow[j]),
                (SunshineHr, sunshine),
                (TemperatureC, temp),
                (VaporPressureHpa, vapor),
                (VisibilityM, visibility),
                (WindDirDeg, if dir >= 360.0 { 0.0 } else { dir }),
                (WindSpeedMs, wind),
            ];
            for (f, v) in values {
                series.insert(&st.id, epoch, f, v).expect("generator stays inside valid ranges");
            }
        }
    }
    series
}

/// Station elevations read from the terrain raster.
pub fn station_heights(registry: &StationRegistry, dem: &ElevationGrid) -> Vec<f64> {
    registry.stations().iter().map(|s| sample_elevation(dem, s.location).unwrap_or(0.0)).collect()
}

/// Noise-free TD at `epoch`, recomputed from the corpus pieces.
pub fn recipe_td(
    recipe: &Recipe,
    registry: &StationRegistry,
    weather: &WeatherSeries,
    dem: &ElevationGrid,
    receiver_station: &str,
    epoch: EpochHour,
) -> Result<f64, SynthError> {
    let heights = station_heights(registry, dem);
    let receiver = registry.stations().iter().position(|s| s.id == receiver_station).unwrap_or(0);
    let weights = recipe.station_weights(&heights, receiver);
    let mut td = recipe.bias_ns;
    for (st, w) in registry.stations().iter().zip(&weights) {
        if *w == 0.0 {
            continue;
        }
        let drive = recipe
            .station_drive(|f| weather.get(&st.id, epoch, f))
            .ok_or_else(|| SynthError::MissingWeather { station: st.id.clone(), epoch })?;
        td += w * drive;
    }
    Ok(td)
}

pub fn ground_truth_td(scenario: &SyntheticScenario, epoch: EpochHour) -> Result<f64, SynthError> {
    let start = scenario.config.start;
    let offset = epoch.unix_hours() - start.unix_hours();
    if offset < 0 || offset >= scenario.config.duration_hours as i64 {
        return Err(SynthError::OutOfRange(epoch));
    }
    recipe_td(
        &scenario.config.recipe,
        &scenario.registry,
        &scenario.weather,
        &scenario.dem,
        &scenario.receiver_station,
        epoch,
    )
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<SyntheticScenario, SynthError> {
    cfg.validate()?;
    let stations = place_stations(cfg);
    let dem = generate_terrain(cfg, &stations);
    let registry = StationRegistry::new(stations).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let weather = generate_weather(cfg, registry.stations());
    let receiver_station = registry.stations()[0].id.clone();

    let mut scenario =
        SyntheticScenario { config: cfg.clone(), registry, weather, td: TdSeries1Hz::default(), dem, receiver_station };
    let mut rng = cfg.rng(STREAM_NOISE);
    let hourly = Normal::new(0.0, cfg.noise_sd_ns).expect("sd checked");
    let jitter = Normal::new(0.0, cfg.jitter_sd_ns).expect("sd checked");
    let per_hour = 3600 / cfg.sample_interval_s as i64;
    let mut samples = Vec::with_capacity(cfg.duration_hours * per_hour as usize);
    let epochs: Vec<EpochHour> = scenario.epochs().collect();
    for epoch in epochs {
        let level = ground_truth_td(&scenario, epoch)? + hourly.sample(&mut rng);
        for k in 0..per_hour {
            let v = round_dp(level + jitter.sample(&mut rng), 2);
            samples.push(TdSample {
                unix_s: epoch.unix_seconds() + k * cfg.sample_interval_s as i64,
                td: TdNanoseconds::new(v).expect("finite"),
            });
        }
    }
    scenario.td = TdSeries1Hz::new(samples).expect("increasing by construction");
    Ok(scenario)
}
