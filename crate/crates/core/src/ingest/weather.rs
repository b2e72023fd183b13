use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use super::{csv_error, open, IngestError, StationRegistry};
use crate::types::{validate_factor_value, EpochHour, FactorSet, MetFactor};

/// One station-hour: a value slot per factor in canonical order.
pub type FactorRecord = [Option<f64>; 11];

/// Hourly station observations. Values are validated on insertion; missing
/// readings are `None`, never sentinel numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeatherSeries {
    columns: FactorSet,
    records: BTreeMap<EpochHour, BTreeMap<String, FactorRecord>>,
}

impl WeatherSeries {
    /// Empty series whose source provides `columns`.
    pub fn new(columns: FactorSet) -> Self {
        WeatherSeries { columns, records: BTreeMap::new() }
    }

    pub fn columns(&self) -> &FactorSet {
        &self.columns
    }

    pub fn insert(
        &mut self,
        station: &str,
        epoch: EpochHour,
        factor: MetFactor,
        value: f64,
    ) -> Result<(), crate::types::TypeError> {
        let v = validate_factor_value(factor, value)?;
        let rec = self.records.entry(epoch).or_default().entry(station.to_string()).or_insert([None; 11]);
        rec[factor.index()] = Some(v);
        Ok(())
    }

    /// Ensures a (possibly all-absent) row exists for `station` at `epoch`.
    pub fn touch(&mut self, station: &str, epoch: EpochHour) {
        self.records.entry(epoch).or_default().entry(station.to_string()).or_insert([None; 11]);
    }

    pub fn get(&self, station: &str, epoch: EpochHour, factor: MetFactor) -> Option<f64> {
        self.records.get(&epoch)?.get(station)?[factor.index()]
    }

    pub fn record(&self, station: &str, epoch: EpochHour) -> Option<&FactorRecord> {
        self.records.get(&epoch)?.get(station)
    }

    pub fn epochs(&self) -> impl Iterator<Item = EpochHour> + '_ {
        self.records.keys().copied()
    }

    pub fn epoch_count(&self) -> usize {
        self.records.len()
    }

    /// Rows in (epoch, station id) order.
    pub fn rows(&self) -> impl Iterator<Item = (EpochHour, &str, &FactorRecord)> + '_ {
        self.records.iter().flat_map(|(e, m)| m.iter().map(move |(s, r)| (*e, s.as_str(), r)))
    }
}

pub fn parse_weather_csv(path: impl AsRef<Path>, registry: &StationRegistry) -> Result<WeatherSeries, IngestError> {
    read_weather_csv(open(path.as_ref())?, registry)
}

/// Reads `station_id,timestamp,<factor columns>`. Factor columns may be any
/// subset of the canonical names, in any order; blank cells are absent.
pub fn read_weather_csv(reader: impl Read, registry: &StationRegistry) -> Result<WeatherSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("station_id") || !header[1].eq_ignore_ascii_case("timestamp")
    {
        return Err(IngestError::parse(1, "expected header `station_id,timestamp,...`"));
    }
    let mut cols = Vec::with_capacity(header.len() - 2);
    for name in header.iter().skip(2) {
        let f: MetFactor = name.parse().map_err(|_| IngestError::parse(1, format!("unknown column `{name}`")))?;
        cols.push(f);
    }
    let columns = FactorSet::new(cols.iter().copied()).map_err(|e| IngestError::parse(1, e.to_string()))?;
    let mut series = WeatherSeries::new(columns);
    let mut seen: HashSet<(EpochHour, String)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let station = &rec[0];
        if !registry.contains(station) {
            return Err(IngestError::UnknownStation { id: station.to_string(), line });
        }
        let epoch: EpochHour =
            rec[1].parse().map_err(|e: crate::types::TypeError| IngestError::parse(line, e.to_string()))?;
        if !seen.insert((epoch, station.to_string())) {
            return Err(IngestError::parse(line, format!("duplicate row for {station} at {epoch}")));
        }
        series.touch(station, epoch);
        for (cell, &factor) in rec.iter().skip(2).zip(&cols) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| IngestError::parse(line, format!("bad number `{cell}`")))?;
            series.insert(station, epoch, factor, v).map_err(|source| IngestError::OutOfRange { line, source })?;
        }
    }
    Ok(series)
}

pub fn write_weather_csv(series: &WeatherSeries, writer: impl Write) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["station_id".to_string(), "timestamp".to_string()];
    header.extend(series.columns().iter().map(|f| f.name().to_string()));
    w.write_record(&header).map_err(csv_error)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (epoch, station, rec) in series.rows() {
        row.clear();
        row.push(station.to_string());
        row.push(epoch.to_string());
        for f in series.columns().iter() {
            row.push(rec[f.index()].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: String::from("<stream>"), source })
}
