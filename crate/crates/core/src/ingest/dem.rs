use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IngestError};
use crate::types::GeoPoint;

/// Terrain raster in geographic coordinates, as carried by an ESRI ASCII
/// grid. Row 0 is the northernmost row; NODATA cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationGrid {
    ncols: usize,
    nrows: usize,
    /// Longitude of the western edge.
    xll: f64,
    /// Latitude of the southern edge.
    yll: f64,
    cell_deg: f64,
    nodata_value: f64,
    values: Vec<Option<f64>>,
}

impl ElevationGrid {
    pub fn new(
        origin: GeoPoint,
        cell_deg: f64,
        nrows: usize,
        ncols: usize,
        values: Vec<Option<f64>>,
    ) -> Result<Self, IngestError> {
        Self::with_nodata(origin.lon(), origin.lat(), cell_deg, nrows, ncols, values, -9999.0)
    }

    fn with_nodata(
        xll: f64,
        yll: f64,
        cell_deg: f64,
        nrows: usize,
        ncols: usize,
        values: Vec<Option<f64>>,
        nodata_value: f64,
    ) -> Result<Self, IngestError> {
        if nrows == 0 || ncols == 0 {
            return Err(IngestError::InconsistentDimensions("empty grid".into()));
        }
        if !(cell_deg > 0.0) || !cell_deg.is_finite() {
            return Err(IngestError::InconsistentDimensions(format!("cell size {cell_deg}")));
        }
        if values.len() != nrows * ncols {
            return Err(IngestError::InconsistentDimensions(format!(
                "{} values for {nrows}x{ncols} grid",
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(IngestError::InconsistentDimensions("non-finite elevation".into()));
        }
        Ok(ElevationGrid { ncols, nrows, xll, yll, cell_deg, nodata_value, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn cell_deg(&self) -> f64 {
        self.cell_deg
    }

    /// South-west corner of the raster.
    pub fn origin(&self) -> (f64, f64) {
        (self.yll, self.xll)
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.ncols + col]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Center of cell (`row`, `col`) as (lat, lon).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let lat = self.yll + (self.nrows - row) as f64 * self.cell_deg - 0.5 * self.cell_deg;
        let lon = self.xll + (col as f64 + 0.5) * self.cell_deg;
        (lat, lon)
    }

    /// Whether `p` lies within the raster's outer edges.
    pub fn contains(&self, p: GeoPoint) -> bool {
        let north = self.yll + self.nrows as f64 * self.cell_deg;
        let east = self.xll + self.ncols as f64 * self.cell_deg;
        p.lat() >= self.yll && p.lat() <= north && p.lon() >= self.xll && p.lon() <= east
    }

    /// Fractional (row-from-south, col) position measured between cell centers.
    pub(crate) fn fractional_index(&self, p: GeoPoint) -> (f64, f64) {
        let fr = (p.lat() - self.yll) / self.cell_deg - 0.5;
        let fc = (p.lon() - self.xll) / self.cell_deg - 0.5;
        (fr, fc)
    }
}

pub fn parse_dem(path: impl AsRef<Path>) -> Result<ElevationGrid, IngestError> {
    read_dem(open(path.as_ref())?)
}

/// Reads an ESRI ASCII grid (`ncols`, `nrows`, `xllcorner`/`xllcenter`,
/// `yllcorner`/`yllcenter`, `cellsize`, optional `NODATA_value`; keywords are
/// case-insensitive) followed by one line of values per row.
pub fn read_dem(mut reader: impl Read) -> Result<ElevationGrid, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|source| IngestError::Io { path: String::from("<stream>"), source })?;
    let mut ncols = None;
    let mut nrows = None;
    let mut x = None;
    let mut y = None;
    let mut centered = (false, false);
    let mut cell = None;
    let mut nodata = -9999.0;
    let mut lines = text.lines().enumerate().peekable();
    while let Some((_, l)) = lines.peek() {
        let mut tok = l.split_whitespace();
        let Some(key) = tok.next() else {
            lines.next();
            continue;
        };
        if !key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            break;
        }
        let (i, _) = lines.next().expect("peeked");
        let line_no = i as u64 + 1;
        let val = tok.next().ok_or_else(|| IngestError::parse(line_no, format!("missing value for {key}")))?;
        let num = |v: &str| -> Result<f64, IngestError> {
            v.parse().map_err(|_| IngestError::parse(line_no, format!("bad value `{v}`")))
        };
        let count = |v: &str| -> Result<usize, IngestError> {
            v.parse().map_err(|_| IngestError::parse(line_no, format!("bad count `{v}`")))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(count(val)?),
            "nrows" => nrows = Some(count(val)?),
            "xllcorner" => x = Some(num(val)?),
            "yllcorner" => y = Some(num(val)?),
            "xllcenter" => {
                x = Some(num(val)?);
                centered.0 = true;
            }
            "yllcenter" => {
                y = Some(num(val)?);
                centered.1 = true;
            }
            "cellsize" => cell = Some(num(val)?),
            "nodata_value" => nodata = num(val)?,
            other => return Err(IngestError::parse(line_no, format!("unknown keyword `{other}`"))),
        }
    }
    let missing = |k: &str| IngestError::parse(1, format!("missing header `{k}`"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cell = cell.ok_or_else(|| missing("cellsize"))?;
    let mut x = x.ok_or_else(|| missing("xllcorner"))?;
    let mut y = y.ok_or_else(|| missing("yllcorner"))?;
    if centered.0 {
        x -= 0.5 * cell;
    }
    if centered.1 {
        y -= 0.5 * cell;
    }
    let mut values = Vec::with_capacity(nrows * ncols);
    let mut rows = 0usize;
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let before = values.len();
        for tok in l.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| IngestError::parse(line_no, format!("bad value `{tok}`")))?;
            values.push(if v == nodata { None } else { Some(v) });
        }
        if values.len() - before != ncols {
            return Err(IngestError::InconsistentDimensions(format!(
                "line {line_no}: {} values, ncols = {ncols}",
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != nrows {
        return Err(IngestError::InconsistentDimensions(format!("{rows} rows, nrows = {nrows}")));
    }
    ElevationGrid::with_nodata(x, y, cell, nrows, ncols, values, nodata)
}

pub fn write_dem(grid: &ElevationGrid, writer: impl Write) -> Result<(), IngestError> {
    let io = |source| IngestError::Io { path: String::from("<stream>"), source };
    let mut w = BufWriter::new(writer);
    writeln!(w, "ncols {}", grid.ncols).map_err(io)?;
    writeln!(w, "nrows {}", grid.nrows).map_err(io)?;
    writeln!(w, "xllcorner {}", grid.xll).map_err(io)?;
    writeln!(w, "yllcorner {}", grid.yll).map_err(io)?;
    writeln!(w, "cellsize {}", grid.cell_deg).map_err(io)?;
    writeln!(w, "NODATA_value {}", grid.nodata_value).map_err(io)?;
    let mut line = String::new();
    for r in 0..grid.nrows {
        line.clear();
        for c in 0..grid.ncols {
            if c > 0 {
                line.push(' ');
            }
            let v = grid.value(r, c).unwrap_or(grid.nodata_value);
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}
