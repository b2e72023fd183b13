//! Corpus directories, feature tensors per location mode, and date splits.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridmap::{
    sample_elevation, sample_path, GridError, GridSpec, LocationSampler, DEFAULT_CELL_DEG, DEFAULT_PADDING_DEG,
};
use crate::ingest::{
    aggregate_hourly, align_epochs, create, parse_dem, parse_station_registry, parse_td_csv, parse_weather_csv,
    write_dem, write_station_registry, write_td_csv, write_weather_csv, ElevationGrid, HourlyTdSeries, IngestError,
    StationRegistry, TdSeries1Hz, WeatherSeries, DEFAULT_MIN_SAMPLES_PER_HOUR,
};
use crate::synth::{ScenarioMeta, SyntheticScenario};
use crate::types::{EpochHour, FactorSet, GeoPoint};

pub const STATIONS_FILE: &str = "stations.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const TD_FILE: &str = "td.csv";
pub const DEM_FILE: &str = "dem.asc";
pub const META_FILE: &str = "scenario.meta";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {message}")]
    Meta { path: String, message: String },
    #[error("unknown station `{0}`")]
    UnknownStation(String),
    #[error("{0}")]
    Split(String),
    #[error("path endpoints unknown: set tx/rx in the configuration")]
    MissingEndpoints,
}

/// Raw inputs read from (or written to) a corpus directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub registry: StationRegistry,
    pub weather: WeatherSeries,
    pub td_raw: TdSeries1Hz,
    pub dem: ElevationGrid,
    pub meta: Option<ScenarioMeta>,
}

impl Corpus {
    /// Hourly TD; the minimum sample count comes from `override_min`, the
    /// scenario metadata, or the 1 Hz default, in that order.
    pub fn hourly_td(&self, override_min: Option<usize>) -> HourlyTdSeries {
        let min =
            override_min.or(self.meta.as_ref().map(|m| m.min_samples_per_hour)).unwrap_or(DEFAULT_MIN_SAMPLES_PER_HOUR);
        aggregate_hourly(&self.td_raw, min)
    }
}

impl From<SyntheticScenario> for Corpus {
    fn from(s: SyntheticScenario) -> Self {
        let meta = Some(s.meta());
        Corpus { registry: s.registry, weather: s.weather, td_raw: s.td, dem: s.dem, meta }
    }
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, DatasetError> {
    let dir = dir.as_ref();
    let registry = parse_station_registry(dir.join(STATIONS_FILE))?;
    let weather = parse_weather_csv(dir.join(WEATHER_FILE), &registry)?;
    let td_raw = parse_td_csv(dir.join(TD_FILE))?;
    let dem = parse_dem(dir.join(DEM_FILE))?;
    let meta_path = dir.join(META_FILE);
    let meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path)
            .map_err(|e| DatasetError::Meta { path: meta_path.display().to_string(), message: e.to_string() })?;
        Some(
            serde_json::from_str(&text)
                .map_err(|e| DatasetError::Meta { path: meta_path.display().to_string(), message: e.to_string() })?,
        )
    } else {
        None
    };
    Ok(Corpus { registry, weather, td_raw, dem, meta })
}

pub fn write_corpus(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.display().to_string(), source })?;
    write_station_registry(&corpus.registry, create(&dir.join(STATIONS_FILE))?)?;
    write_weather_csv(&corpus.weather, create(&dir.join(WEATHER_FILE))?)?;
    write_td_csv(&corpus.td_raw, create(&dir.join(TD_FILE))?)?;
    write_dem(&corpus.dem, create(&dir.join(DEM_FILE))?)?;
    if let Some(meta) = &corpus.meta {
        let path = dir.join(META_FILE);
        let mut text = serde_json::to_string_pretty(meta).expect("meta serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}

/// Where features are read along the propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationMode {
    /// The station nearest the receiver, as observed.
    ReceiverOnly,
    /// Every registry station, as observed.
    Stations,
    /// `l` great-circle points from transmitter to receiver, read from
    /// IDW-filled grid maps.
    Path,
}

impl LocationMode {
    pub fn name(self) -> &'static str {
        match self {
            LocationMode::ReceiverOnly => "receiver_only",
            LocationMode::Stations => "stations",
            LocationMode::Path => "path",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSpec {
    pub factors: FactorSet,
    pub mode: LocationMode,
    /// Sample points in path mode.
    pub path_points: usize,
    pub cell_deg: f64,
    pub padding_deg: f64,
    pub transmitter: Option<GeoPoint>,
    pub receiver: Option<GeoPoint>,
    /// Defaults to the scenario's receiver station, else the station
    /// nearest the receiver.
    pub receiver_station: Option<String>,
    pub min_samples_per_hour: Option<usize>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            factors: FactorSet::seven(),
            mode: LocationMode::Stations,
            path_points: 198,
            cell_deg: DEFAULT_CELL_DEG,
            padding_deg: DEFAULT_PADDING_DEG,
            transmitter: None,
            receiver: None,
            receiver_station: None,
            min_samples_per_hour: None,
        }
    }
}

/// Aligned features: `epochs × locations × factors` raw values with the
/// hourly TD target and the terrain height at each location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub mode: LocationMode,
    pub factors: FactorSet,
    pub epochs: Vec<EpochHour>,
    pub td: Vec<f64>,
    pub locations: Vec<GeoPoint>,
    pub labels: Vec<String>,
    pub heights: Vec<f64>,
    pub values: Vec<f64>,
    /// Hours with timing data but not enough samples.
    pub dropped_hours: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn block_len(&self) -> usize {
        self.n_locations() * self.n_factors()
    }

    pub fn block(&self, t: usize) -> &[f64] {
        let w = self.block_len();
        &self.values[t * w..(t + 1) * w]
    }

    /// Rows at the given positions, in order.
    pub fn select(&self, rows: &[usize]) -> FeatureSet {
        let mut values = Vec::with_capacity(rows.len() * self.block_len());
        for &t in rows {
            values.extend_from_slice(self.block(t));
        }
        FeatureSet {
            epochs: rows.iter().map(|&t| self.epochs[t]).collect(),
            td: rows.iter().map(|&t| self.td[t]).collect(),
            values,
            ..self.clone()
        }
    }
}

/// Transmitter and receiver, from `spec` or the scenario metadata.
pub fn path_endpoints(corpus: &Corpus, spec: &FeatureSpec) -> Result<(GeoPoint, GeoPoint), DatasetError> {
    let meta = corpus.meta.as_ref();
    let tx = spec.transmitter.or(meta.map(|m| m.config.transmitter));
    let rx = spec.receiver.or(meta.map(|m| m.config.receiver));
    tx.zip(rx).ok_or(DatasetError::MissingEndpoints)
}

/// Station standing in for the receiver.
pub fn receiver_station(corpus: &Corpus, spec: &FeatureSpec) -> Result<String, DatasetError> {
    if let Some(id) = spec.receiver_station.clone().or(corpus.meta.as_ref().map(|m| m.receiver_station.clone())) {
        return if corpus.registry.contains(&id) { Ok(id) } else { Err(DatasetError::UnknownStation(id)) };
    }
    let (_, rx) = path_endpoints(corpus, spec)?;
    let nearest = corpus
        .registry
        .stations()
        .iter()
        .min_by(|a, b| {
            crate::types::haversine_km(a.location, rx).total_cmp(&crate::types::haversine_km(b.location, rx))
        })
        .expect("registry is nonempty");
    Ok(nearest.id.clone())
}

fn height_at(dem: &ElevationGrid, p: GeoPoint) -> f64 {
    if dem.contains(p) {
        sample_elevation(dem, p).unwrap_or(0.0)
    } else {
        0.0
    }
}

pub fn build_features(corpus: &Corpus, spec: &FeatureSpec) -> Result<FeatureSet, DatasetError> {
    let hourly = corpus.hourly_td(spec.min_samples_per_hour);
    let dropped_hours = hourly.dropped_hours();
    let station_rows = |ids: Vec<String>| -> Result<FeatureSet, DatasetError> {
        let aligned = align_epochs(&corpus.weather, &hourly, &spec.factors, &ids)?;
        let locations: Vec<GeoPoint> =
            ids.iter().map(|id| corpus.registry.get(id).expect("registry station").location).collect();
        Ok(FeatureSet {
            mode: spec.mode,
            factors: spec.factors.clone(),
            epochs: aligned.epochs,
            td: aligned.td,
            heights: locations.iter().map(|&p| height_at(&corpus.dem, p)).collect(),
            locations,
            labels: ids,
            values: aligned.values,
            dropped_hours,
        })
    };
    match spec.mode {
        LocationMode::ReceiverOnly => station_rows(vec![receiver_station(corpus, spec)?]),
        LocationMode::Stations => station_rows(corpus.registry.ids()),
        LocationMode::Path => {
            let (tx, rx) = path_endpoints(corpus, spec)?;
            let path = sample_path(tx, rx, spec.path_points)?;
            let grid = GridSpec::covering(tx, rx, spec.cell_deg, spec.padding_deg)?;
            let sampler = LocationSampler::new(&grid, &corpus.registry, path.points())?;
            let heights = crate::gridmap::elevation_profile(&corpus.dem, path.points())?.0;
            let mut out = FeatureSet {
                mode: spec.mode,
                factors: spec.factors.clone(),
                epochs: Vec::new(),
                td: Vec::new(),
                locations: path.points().to_vec(),
                labels: (0..path.len()).map(|j| format!("p{j:03}")).collect(),
                heights,
                values: Vec::new(),
                dropped_hours,
            };
            let (l, n) = (path.len(), spec.factors.len());
            let mut per_factor: Vec<Vec<f64>> = vec![Vec::with_capacity(l); n];
            'epochs: for (epoch, td) in hourly.iter() {
                for (i, f) in spec.factors.iter().enumerate() {
                    per_factor[i].clear();
                    match sampler.sample(&corpus.weather, epoch, f, &mut per_factor[i]) {
                        Ok(()) => {}
                        Err(GridError::NoObservations { .. }) => continue 'epochs,
                        Err(e) => return Err(e.into()),
                    }
                }
                out.epochs.push(epoch);
                out.td.push(td.mean.value());
                for j in 0..l {
                    out.values.extend(per_factor.iter().map(|col| col[j]));
                }
            }
            if out.epochs.is_empty() {
                return Err(IngestError::EmptyIntersection.into());
            }
            Ok(out)
        }
    }
}

/// Inclusive range of UTC calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, epoch: EpochHour) -> bool {
        let d = epoch.instant().date_naive();
        d >= self.start && d <= self.end
    }

    fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn first_epoch(&self) -> EpochHour {
        EpochHour::new(self.start.and_hms_opt(0, 0, 0).expect("midnight").and_utc()).expect("on the hour")
    }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: Vec<DateRange>,
    pub test: Vec<DateRange>,
    /// Length of the contiguous evaluation folds, in days.
    pub fold_days: u32,
}

impl Default for SplitSpec {
    /// October, November and late January for training; December to mid
    /// January for testing.
    fn default() -> Self {
        SplitSpec {
            train: vec![
                DateRange::new(date(2024, 10, 1), date(2024, 11, 30)),
                DateRange::new(date(2025, 1, 15), date(2025, 1, 29)),
            ],
            test: vec![DateRange::new(date(2024, 12, 1), date(2025, 1, 14))],
            fold_days: 7,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        for r in self.train.iter().chain(&self.test) {
            if r.end < r.start {
                return Err(DatasetError::Split(format!("range {} to {} ends before it starts", r.start, r.end)));
            }
        }
        for a in &self.train {
            for b in &self.test {
                if a.overlaps(b) {
                    return Err(DatasetError::Split(format!(
                        "train range {}..{} overlaps test range {}..{}",
                        a.start, a.end, b.start, b.end
                    )));
                }
            }
        }
        if self.fold_days == 0 {
            return Err(DatasetError::Split("fold_days must be at least 1".into()));
        }
        Ok(())
    }

    pub fn train_rows(&self, epochs: &[EpochHour]) -> Vec<usize> {
        (0..epochs.len()).filter(|&t| self.train.iter().any(|r| r.contains(epochs[t]))).collect()
    }

    pub fn test_rows(&self, epochs: &[EpochHour]) -> Vec<usize> {
        (0..epochs.len()).filter(|&t| self.test.iter().any(|r| r.contains(epochs[t]))).collect()
    }

    /// Fold index of every test epoch: whole `fold_days` blocks counted from
    /// the start of the earliest test range.
    pub fn folds(&self, epochs: &[EpochHour]) -> Vec<usize> {
        let origin = self.test.iter().map(|r| r.start).min().map(|d| DateRange::new(d, d).first_epoch());
        let span = 24 * self.fold_days as i64;
        epochs
            .iter()
            .map(|e| origin.map(|o| ((e.unix_hours() - o.unix_hours()).max(0) / span) as usize).unwrap_or(0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scenario, Recipe, ScenarioConfig};
    use crate::types::MetFactor;

    fn small() -> Corpus {
        let cfg =
            ScenarioConfig { duration_hours: 72, recipe: Recipe::elevation_coupled(), ..ScenarioConfig::default() };
        generate_scenario(&cfg).unwrap().into()
    }

    #[test]
    fn corpus_round_trip() {
        let corpus = small();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &corpus).unwrap();
        for f in [STATIONS_FILE, WEATHER_FILE, TD_FILE, DEM_FILE, META_FILE] {
            assert!(dir.path().join(f).exists());
        }
        assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
    }

    #[test]
    fn modes_have_expected_shapes() {
        let corpus = small();
        let spec = FeatureSpec::default();
        let st = build_features(&corpus, &spec).unwrap();
        assert_eq!((st.len(), st.n_locations(), st.n_factors()), (72, 10, 7));
        let rx = build_features(&corpus, &FeatureSpec { mode: LocationMode::ReceiverOnly, ..spec.clone() }).unwrap();
        assert_eq!(rx.labels, vec!["S01".to_string()]);
        assert_eq!(rx.block(5), &st.block(5)[..7]);
        let path = build_features(&corpus, &FeatureSpec { mode: LocationMode::Path, path_points: 20, ..spec }).unwrap();
        assert_eq!((path.len(), path.n_locations()), (72, 20));
        assert!(path.heights.iter().all(|h| h.is_finite() && *h >= 0.0));
        // path values stay within the station range of each factor (IDW convexity)
        for t in 0..72 {
            for i in 0..7 {
                let col: Vec<f64> = (0..10).map(|j| st.block(t)[j * 7 + i]).collect();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for j in 0..20 {
                    let v = path.block(t)[j * 7 + i];
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }
    }

    #[test]
    fn missing_endpoints_without_meta() {
        let mut corpus = small();
        corpus.meta = None;
        let spec = FeatureSpec { mode: LocationMode::Path, ..FeatureSpec::default() };
        assert!(matches!(build_features(&corpus, &spec), Err(DatasetError::MissingEndpoints)));
        // without metadata the 1 Hz coverage rule drops every 60 s hour
        let st = build_features(&corpus, &FeatureSpec::default());
        assert!(matches!(st, Err(DatasetError::Ingest(IngestError::EmptyIntersection))));
        let ok =
            build_features(&corpus, &FeatureSpec { min_samples_per_hour: Some(30), ..FeatureSpec::default() }).unwrap();
        assert_eq!(ok.len(), 72);
    }

    #[test]
    fn default_split() {
        let s = SplitSpec::default();
        s.validate().unwrap();
        let epochs: Vec<EpochHour> =
            (0..121 * 24).map(|h| EpochHour::from_ymdh(2024, 10, 1, 0).unwrap().plus_hours(h)).collect();
        let train = s.train_rows(&epochs);
        let test = s.test_rows(&epochs);
        assert_eq!(train.len(), (61 + 15) * 24);
        assert_eq!(test.len(), 45 * 24);
        assert!(train.iter().all(|t| !test.contains(t)));
        let test_epochs: Vec<EpochHour> = test.iter().map(|&t| epochs[t]).collect();
        let folds = s.folds(&test_epochs);
        assert_eq!(folds[0], 0);
        assert_eq!(folds[24 * 7], 1);
        assert_eq!(*folds.last().unwrap(), 6);
        let bad =
            SplitSpec { test: vec![DateRange::new(date(2024, 11, 30), date(2024, 12, 5))], ..SplitSpec::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn select_keeps_rows() {
        let st = build_features(
            &small(),
            &FeatureSpec { factors: FactorSet::new([MetFactor::TemperatureC]).unwrap(), ..FeatureSpec::default() },
        )
        .unwrap();
        let sub = st.select(&[3, 1]);
        assert_eq!(sub.epochs, vec![st.epochs[3], st.epochs[1]]);
        assert_eq!(sub.block(0), st.block(3));
    }
}
