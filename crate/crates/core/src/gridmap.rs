//! Meteorological grid maps and path sampling.
//!
//! Station readings are snapped to the nearest cell of a regular lat/lon
//! grid; every other cell is filled with Shepard inverse-distance weighting
//! (weights exactly `1 / dist`, great-circle km between cell centers, all
//! assigned cells participating). Features along the propagation path are
//! read from the cell nearest to each path point.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ElevationGrid, StationRegistry, WeatherSeries};
use crate::types::{haversine_km, EpochHour, FactorSet, GeoPoint, MetFactor};

pub const DEFAULT_CELL_DEG: f64 = 0.01;
pub const DEFAULT_PADDING_DEG: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("no station reports {factor} at {epoch}")]
    NoObservations { factor: MetFactor, epoch: EpochHour },
    #[error("transmitter and receiver coincide")]
    DegeneratePath,
    #[error("path needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("location {0} lies outside the elevation model")]
    OutOfExtent(usize),
    #[error("no elevation data around location {0}")]
    NoElevationData(usize),
    #[error("no grid map for {factor} at {epoch}")]
    MissingMap { factor: MetFactor, epoch: EpochHour },
    #[error("point {0} lies outside the grid")]
    OutsideGrid(GeoPoint),
}

/// Regular lat/lon grid. The box edges sit on multiples of the cell size;
/// row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    cell_deg: f64,
    south_idx: i64,
    west_idx: i64,
    nrows: usize,
    ncols: usize,
}

impl GridSpec {
    /// Smallest cell-aligned box containing `a` and `b`, padded by `padding_deg`.
    pub fn covering(a: GeoPoint, b: GeoPoint, cell_deg: f64, padding_deg: f64) -> Result<Self, GridError> {
        if !(cell_deg > 0.0) || !cell_deg.is_finite() {
            return Err(GridError::InvalidSpec(format!("cell size {cell_deg}")));
        }
        if !(padding_deg >= 0.0) {
            return Err(GridError::InvalidSpec(format!("padding {padding_deg}")));
        }
        let south = a.lat().min(b.lat()) - padding_deg;
        let north = a.lat().max(b.lat()) + padding_deg;
        let west = a.lon().min(b.lon()) - padding_deg;
        let east = a.lon().max(b.lon()) + padding_deg;
        let south_idx = (south / cell_deg).floor() as i64;
        let north_idx = (north / cell_deg).ceil() as i64;
        let west_idx = (west / cell_deg).floor() as i64;
        let east_idx = (east / cell_deg).ceil() as i64;
        let nrows = (north_idx - south_idx).max(1) as usize;
        let ncols = (east_idx - west_idx).max(1) as usize;
        if nrows * ncols > 50_000_000 {
            return Err(GridError::InvalidSpec(format!("{nrows}x{ncols} cells is too large")));
        }
        let spec = GridSpec { cell_deg, south_idx, west_idx, nrows, ncols };
        for p in [a, b] {
            spec.nearest_cell(p).ok_or(GridError::OutsideGrid(p))?;
        }
        Ok(spec)
    }

    pub fn cell_deg(&self) -> f64 {
        self.cell_deg
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn len(&self) -> usize {
        self.nrows * self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (south, west, north, east) edges in degrees.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let c = self.cell_deg;
        (
            self.south_idx as f64 * c,
            self.west_idx as f64 * c,
            (self.south_idx + self.nrows as i64) as f64 * c,
            (self.west_idx + self.ncols as i64) as f64 * c,
        )
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.ncols, cell % self.ncols)
    }

    pub fn cell_center(&self, cell: usize) -> GeoPoint {
        let (row, col) = self.row_col(cell);
        let lat_idx = self.south_idx + (self.nrows - 1 - row) as i64;
        let lon_idx = self.west_idx + col as i64;
        let lat = (lat_idx as f64 + 0.5) * self.cell_deg;
        let lon = (lon_idx as f64 + 0.5) * self.cell_deg;
        GeoPoint::new(lat, lon).expect("grid lies on the globe")
    }

    /// Cell containing `p`, or `None` outside the box.
    pub fn nearest_cell(&self, p: GeoPoint) -> Option<usize> {
        let lat_idx = (p.lat() / self.cell_deg).floor() as i64 - self.south_idx;
        let lon_idx = (p.lon() / self.cell_deg).floor() as i64 - self.west_idx;
        if lat_idx < 0 || lon_idx < 0 || lat_idx >= self.nrows as i64 || lon_idx >= self.ncols as i64 {
            return None;
        }
        let row = self.nrows - 1 - lat_idx as usize;
        Some(self.cell_index(row, lon_idx as usize))
    }
}

/// One factor at one epoch over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub spec: GridSpec,
    pub factor: MetFactor,
    pub epoch: EpochHour,
    values: Vec<f64>,
    assigned: Vec<bool>,
}

impl GridMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn assigned_mask(&self) -> &[bool] {
        &self.assigned
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Assigned cells in cell-index order.
    pub fn assigned_cells(&self) -> Vec<(usize, f64)> {
        self.assigned.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| (i, self.values[i])).collect()
    }

    /// Builds a partial map from explicit (cell, value) assignments; used by
    /// tests and by [`assign_observations`].
    pub fn from_assignments(spec: GridSpec, factor: MetFactor, epoch: EpochHour, cells: &[(usize, f64)]) -> Self {
        let mut buckets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &(c, v) in cells {
            buckets.entry(c).or_default().push(v);
        }
        let mut values = vec![f64::NAN; spec.len()];
        let mut assigned = vec![false; spec.len()];
        for (c, vals) in buckets {
            values[c] = collision_mean(vals);
            assigned[c] = true;
        }
        GridMap { spec, factor, epoch, values, assigned }
    }
}

/// Arithmetic mean summed in sorted order so the result does not depend on
/// station order.
fn collision_mean(mut vals: Vec<f64>) -> f64 {
    if vals.len() == 1 {
        return vals[0];
    }
    vals.sort_by(f64::total_cmp);
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Places each reporting station's value at its nearest cell. Stations
/// outside the grid are ignored; several stations in one cell are averaged.
pub fn assign_observations(
    spec: &GridSpec,
    registry: &StationRegistry,
    weather: &WeatherSeries,
    epoch: EpochHour,
    factor: MetFactor,
) -> Result<GridMap, GridError> {
    let cells: Vec<(usize, f64)> = registry
        .stations()
        .iter()
        .filter_map(|s| {
            let v = weather.get(&s.id, epoch, factor)?;
            let cell = spec.nearest_cell(s.location)?;
            Some((cell, v))
        })
        .collect();
    if cells.is_empty() {
        return Err(GridError::NoObservations { factor, epoch });
    }
    Ok(GridMap::from_assignments(spec.clone(), factor, epoch, &cells))
}

/// Shepard interpolation from (distance, value) pairs. A zero distance
/// returns that value unchanged.
pub fn shepard_interpolate(samples: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (d, v) in samples {
        if d == 0.0 {
            return v;
        }
        let w = 1.0 / d;
        num += w * v;
        den += w;
    }
    num / den
}

/// Fills every unassigned cell by Shepard IDW over all assigned cells.
pub fn idw_fill(partial: &GridMap) -> Result<GridMap, GridError> {
    let assigned = partial.assigned_cells();
    if assigned.is_empty() {
        return Err(GridError::NoObservations { factor: partial.factor, epoch: partial.epoch });
    }
    let spec = &partial.spec;
    let sources: Vec<(GeoPoint, f64)> = assigned.iter().map(|&(c, v)| (spec.cell_center(c), v)).collect();
    let mut out = partial.clone();
    for cell in 0..spec.len() {
        if out.assigned[cell] {
            continue;
        }
        let center = spec.cell_center(cell);
        out.values[cell] = shepard_interpolate(sources.iter().map(|&(p, v)| (haversine_km(center, p), v)));
    }
    Ok(out)
}

/// Ordered locations from transmitter to receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoints(Vec<GeoPoint>);

impl PathPoints {
    pub fn points(&self) -> &[GeoPoint] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `count` points evenly spaced along the great circle from `tx` to `rx`
/// (spherical linear interpolation at fractions `k / (count - 1)`).
pub fn sample_path(tx: GeoPoint, rx: GeoPoint, count: usize) -> Result<PathPoints, GridError> {
    if count < 2 {
        return Err(GridError::TooFewPoints(count));
    }
    let a = tx.to_unit_vector();
    let b = rx.to_unit_vector();
    let omega = haversine_km(tx, rx) / crate::types::EARTH_RADIUS_KM;
    if omega == 0.0 {
        return Err(GridError::DegeneratePath);
    }
    let s = omega.sin();
    let mut pts = Vec::with_capacity(count);
    pts.push(tx);
    for k in 1..count - 1 {
        let f = k as f64 / (count - 1) as f64;
        let wa = ((1.0 - f) * omega).sin() / s;
        let wb = (f * omega).sin() / s;
        pts.push(GeoPoint::from_unit_vector([wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]]));
    }
    pts.push(rx);
    Ok(PathPoints(pts))
}

/// Terrain elevation (m) at each location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationProfile(pub Vec<f64>);

impl ElevationProfile {
    pub fn heights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bilinear elevation between the four surrounding cell centers. NODATA
/// corners are dropped and the remaining weights renormalized.
pub fn sample_elevation(dem: &ElevationGrid, p: GeoPoint) -> Option<f64> {
    let (fr, fc) = dem.fractional_index(p);
    let fr = fr.clamp(0.0, (dem.nrows() - 1) as f64);
    let fc = fc.clamp(0.0, (dem.ncols() - 1) as f64);
    let (r0, c0) = (fr.floor() as usize, fc.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(dem.nrows() - 1), (c0 + 1).min(dem.ncols() - 1));
    let (tr, tc) = (fr - r0 as f64, fc - c0 as f64);
    // rows here count from the south; the raster stores north first
    let at = |rs: usize, c: usize| dem.value(dem.nrows() - 1 - rs, c);
    let corners = [
        (at(r0, c0), (1.0 - tr) * (1.0 - tc)),
        (at(r0, c1), (1.0 - tr) * tc),
        (at(r1, c0), tr * (1.0 - tc)),
        (at(r1, c1), tr * tc),
    ];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut valid = 0usize;
    let mut plain = 0.0;
    for (v, w) in corners {
        if let Some(v) = v {
            num += w * v;
            den += w;
            plain += v;
            valid += 1;
        }
    }
    if valid == 0 {
        None
    } else if den > 0.0 {
        Some(num / den)
    } else {
        // point sits on a NODATA center; fall back to the valid neighbours
        Some(plain / valid as f64)
    }
}

pub fn elevation_profile(dem: &ElevationGrid, points: &[GeoPoint]) -> Result<ElevationProfile, GridError> {
    points
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if !dem.contains(p) {
                return Err(GridError::OutOfExtent(j));
            }
            sample_elevation(dem, p).ok_or(GridError::NoElevationData(j))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(ElevationProfile)
}

/// `epochs × locations × factors` feature array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFeatureTensor {
    pub epochs: Vec<EpochHour>,
    pub locations: Vec<GeoPoint>,
    pub factors: FactorSet,
    values: Vec<f64>,
}

impl PathFeatureTensor {
    pub fn new(epochs: Vec<EpochHour>, locations: Vec<GeoPoint>, factors: FactorSet, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), epochs.len() * locations.len() * factors.len());
        PathFeatureTensor { epochs, locations, factors, values }
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn get(&self, t: usize, j: usize, i: usize) -> f64 {
        self.values[(t * self.n_locations() + j) * self.n_factors() + i]
    }

    /// `locations × factors` block for epoch `t`.
    pub fn epoch(&self, t: usize) -> &[f64] {
        let w = self.n_locations() * self.n_factors();
        &self.values[t * w..(t + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the listed epoch positions, in the given order.
    pub fn select(&self, rows: &[usize]) -> PathFeatureTensor {
        let mut values = Vec::with_capacity(rows.len() * self.n_locations() * self.n_factors());
        for &t in rows {
            values.extend_from_slice(self.epoch(t));
        }
        PathFeatureTensor {
            epochs: rows.iter().map(|&t| self.epochs[t]).collect(),
            locations: self.locations.clone(),
            factors: self.factors.clone(),
            values,
        }
    }
}

/// Reads `tensor[t][j][i]` from the filled map of factor `i` at epoch `t`,
/// at the cell nearest to location `j`.
pub fn extract_path_features(
    maps: &[GridMap],
    epochs: &[EpochHour],
    factors: &FactorSet,
    locations: &[GeoPoint],
) -> Result<PathFeatureTensor, GridError> {
    let index: HashMap<(MetFactor, EpochHour), &GridMap> = maps.iter().map(|m| ((m.factor, m.epoch), m)).collect();
    let mut values = Vec::with_capacity(epochs.len() * locations.len() * factors.len());
    let mut cells: Option<Vec<usize>> = None;
    for &epoch in epochs {
        for (j, &p) in locations.iter().enumerate() {
            for f in factors.iter() {
                let map = index.get(&(f, epoch)).ok_or(GridError::MissingMap { factor: f, epoch })?;
                let cells = cells.get_or_insert_with(|| {
                    locations.iter().map(|&q| map.spec.nearest_cell(q).unwrap_or(usize::MAX)).collect()
                });
                let cell = cells[j];
                if cell == usize::MAX {
                    return Err(GridError::OutsideGrid(p));
                }
                values.push(map.value(cell));
            }
        }
    }
    Ok(PathFeatureTensor::new(epochs.to_vec(), locations.to_vec(), factors.clone(), values))
}

/// Evaluates filled-map values only at the cells nearest to a fixed set of
/// locations, without building whole maps. Produces bit-identical values to
/// [`idw_fill`] followed by [`extract_path_features`].
#[derive(Debug, Clone)]
pub struct LocationSampler {
    spec: GridSpec,
    /// Grid cell of every registry station (None if outside the grid).
    station_cells: Vec<Option<usize>>,
    station_ids: Vec<String>,
    target_cells: Vec<usize>,
    /// Distance from each distinct target cell to each station cell.
    dist: HashMap<(usize, usize), f64>,
}

impl LocationSampler {
    pub fn new(spec: &GridSpec, registry: &StationRegistry, locations: &[GeoPoint]) -> Result<Self, GridError> {
        let station_cells: Vec<Option<usize>> =
            registry.stations().iter().map(|s| spec.nearest_cell(s.location)).collect();
        let target_cells = locations
            .iter()
            .map(|&p| spec.nearest_cell(p).ok_or(GridError::OutsideGrid(p)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut dist = HashMap::new();
        for &t in &target_cells {
            let center = spec.cell_center(t);
            for &c in station_cells.iter().flatten() {
                dist.entry((t, c)).or_insert_with(|| haversine_km(center, spec.cell_center(c)));
            }
        }
        Ok(LocationSampler { spec: spec.clone(), station_cells, station_ids: registry.ids(), target_cells, dist })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Filled-map value at every location for one (factor, epoch).
    pub fn sample(
        &self,
        weather: &WeatherSeries,
        epoch: EpochHour,
        factor: MetFactor,
        out: &mut Vec<f64>,
    ) -> Result<(), GridError> {
        let mut buckets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (id, cell) in self.station_ids.iter().zip(&self.station_cells) {
            if let (Some(cell), Some(v)) = (cell, weather.get(id, epoch, factor)) {
                buckets.entry(*cell).or_default().push(v);
            }
        }
        if buckets.is_empty() {
            return Err(GridError::NoObservations { factor, epoch });
        }
        let assigned: Vec<(usize, f64)> = buckets.into_iter().map(|(c, vals)| (c, collision_mean(vals))).collect();
        for &t in &self.target_cells {
            let v = match assigned.binary_search_by_key(&t, |&(c, _)| c) {
                Ok(k) => assigned[k].1,
                Err(_) => shepard_interpolate(assigned.iter().map(|&(c, v)| (self.dist[&(t, c)], v))),
            };
            out.push(v);
        }
        Ok(())
    }
}

/// Writes `lat,lon,value` rows north-to-south, west-to-east.
pub fn write_gridmap_csv(map: &GridMap, writer: impl Write) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "lat,lon,value")?;
    for cell in 0..map.spec.len() {
        let c = map.spec.cell_center(cell);
        writeln!(w, "{:.6},{:.6},{}", c.lat(), c.lon(), map.value(cell))?;
    }
    w.flush()
}
