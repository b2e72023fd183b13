//! Readers and writers for the corpus files (station registry, hourly
//! weather, 1 Hz timing-difference log, DEM) and hourly epoch alignment.
//!
//! All timestamps are UTC. Missing weather values stay absent; epochs with
//! any missing requested value are dropped by [`align_epochs`] rather than
//! imputed.

mod dem;
mod td;
mod weather;

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EpochHour, FactorSet, GeoPoint, MetFactor, TypeError};

pub use dem::{parse_dem, read_dem, write_dem, ElevationGrid};
pub use td::{
    aggregate_hourly, parse_td_csv, read_td_csv, write_td_csv, HourlyTd, HourlyTdSeries, TdSample, TdSeries1Hz,
    DEFAULT_MIN_SAMPLES_PER_HOUR,
};
pub use weather::{parse_weather_csv, read_weather_csv, write_weather_csv, FactorRecord, WeatherSeries};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate station id `{0}`")]
    DuplicateStation(String),
    #[error("unknown station `{id}` at line {line}")]
    UnknownStation { id: String, line: u64 },
    #[error("line {line}: {source}")]
    OutOfRange {
        line: u64,
        #[source]
        source: TypeError,
    },
    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),
    #[error("no epoch has timing data and every requested value")]
    EmptyIntersection,
    #[error("missing station `{0}` in weather series")]
    MissingStation(String),
}

impl IngestError {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        IngestError::Parse { line, message: message.into() }
    }
}

pub(crate) fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

/// Creates (or truncates) `path`, attaching the path to any error.
pub fn create(path: &Path) -> Result<File, IngestError> {
    File::create(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

pub(crate) fn csv_error(err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io { path: String::from("<stream>"), source },
        other => IngestError::parse(line, format!("{other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub location: GeoPoint,
}

/// Weather stations keyed by unique id, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRegistry {
    entries: Vec<Station>,
}

impl StationRegistry {
    pub fn new(entries: Vec<Station>) -> Result<Self, IngestError> {
        if entries.is_empty() {
            return Err(IngestError::parse(1, "station registry has no entries"));
        }
        let mut seen = HashSet::new();
        for s in &entries {
            if !seen.insert(s.id.as_str()) {
                return Err(IngestError::DuplicateStation(s.id.clone()));
            }
        }
        Ok(StationRegistry { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Station> {
        self.entries.iter().find(|s| s.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|s| s.id.clone()).collect()
    }
}

pub fn parse_station_registry(path: impl AsRef<Path>) -> Result<StationRegistry, IngestError> {
    read_station_registry(open(path.as_ref())?)
}

/// Reads `station_id,lat,lon` CSV.
pub fn read_station_registry(reader: impl Read) -> Result<StationRegistry, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["station_id", "lat", "lon"];
    if header.len() != 3 || header.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(IngestError::parse(1, "expected header `station_id,lat,lon`"));
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(IngestError::parse(line, "empty station id"));
        }
        let lat: f64 = rec[1].parse().map_err(|_| IngestError::parse(line, "bad lat"))?;
        let lon: f64 = rec[2].parse().map_err(|_| IngestError::parse(line, "bad lon"))?;
        let location = GeoPoint::new(lat, lon).map_err(|e| IngestError::parse(line, e.to_string()))?;
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateStation(id));
        }
        entries.push(Station { id, location });
    }
    if entries.is_empty() {
        return Err(IngestError::parse(2, "station registry has no data rows"));
    }
    StationRegistry::new(entries)
}

pub fn write_station_registry(registry: &StationRegistry, writer: impl Write) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["station_id", "lat", "lon"]).map_err(csv_error)?;
    for s in registry.stations() {
        w.write_record([s.id.clone(), s.location.lat().to_string(), s.location.lon().to_string()])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: String::from("<stream>"), source })
}

/// Station-level training table: epochs where timing data exists and every
/// requested factor is present at every requested station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDataset {
    pub epochs: Vec<EpochHour>,
    /// Hourly mean timing difference per epoch (ns).
    pub td: Vec<f64>,
    pub factors: FactorSet,
    pub stations: Vec<String>,
    /// Row-major `epochs × stations × factors`.
    pub values: Vec<f64>,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn value(&self, epoch: usize, station: usize, factor: usize) -> f64 {
        let (s, n) = (self.stations.len(), self.factors.len());
        self.values[(epoch * s + station) * n + factor]
    }

    /// `stations × factors` block of one epoch.
    pub fn epoch_block(&self, epoch: usize) -> &[f64] {
        let w = self.stations.len() * self.factors.len();
        &self.values[epoch * w..(epoch + 1) * w]
    }
}

pub fn align_epochs(
    weather: &WeatherSeries,
    td: &HourlyTdSeries,
    factors: &FactorSet,
    stations: &[String],
) -> Result<AlignedDataset, IngestError> {
    let mut out = AlignedDataset {
        epochs: Vec::new(),
        td: Vec::new(),
        factors: factors.clone(),
        stations: stations.to_vec(),
        values: Vec::new(),
    };
    let mut block = Vec::with_capacity(stations.len() * factors.len());
    'epochs: for (epoch, hourly) in td.iter() {
        block.clear();
        for station in stations {
            for f in factors.iter() {
                match weather.get(station, epoch, f) {
                    Some(v) => block.push(v),
                    None => continue 'epochs,
                }
            }
        }
        out.epochs.push(epoch);
        out.td.push(hourly.mean.value());
        out.values.extend_from_slice(&block);
    }
    if out.epochs.is_empty() {
        return Err(IngestError::EmptyIntersection);
    }
    Ok(out)
}

/// Every factor with a column in the weather source, for reports.
pub fn available_factors(weather: &WeatherSeries) -> Vec<MetFactor> {
    weather.columns().iter().collect()
}
