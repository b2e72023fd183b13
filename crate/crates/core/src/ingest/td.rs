use std::collections::BTreeMap;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{TimeZone, Utc};

use super::{csv_error, open, IngestError};
use crate::types::{parse_utc, EpochHour, TdNanoseconds};

/// Half an hour of 1 Hz samples.
pub const DEFAULT_MIN_SAMPLES_PER_HOUR: usize = 1800;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdSample {
    pub unix_s: i64,
    pub td: TdNanoseconds,
}

/// Raw timing-difference log, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TdSeries1Hz {
    samples: Vec<TdSample>,
}

impl TdSeries1Hz {
    pub fn new(samples: Vec<TdSample>) -> Result<Self, IngestError> {
        if let Some(i) = samples.windows(2).position(|w| w[1].unix_s <= w[0].unix_s) {
            return Err(IngestError::parse(i as u64 + 3, "timestamps must be strictly increasing"));
        }
        Ok(TdSeries1Hz { samples })
    }

    pub fn samples(&self) -> &[TdSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyTd {
    pub mean: TdNanoseconds,
    pub count: usize,
}

/// Hour-averaged timing difference. Hours with fewer than `min_samples`
/// samples are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyTdSeries {
    min_samples: usize,
    hours: BTreeMap<EpochHour, HourlyTd>,
    dropped: usize,
}

impl HourlyTdSeries {
    pub fn new(min_samples: usize) -> Self {
        HourlyTdSeries { min_samples, hours: BTreeMap::new(), dropped: 0 }
    }

    pub fn insert(&mut self, epoch: EpochHour, value: HourlyTd) {
        self.hours.insert(epoch, value);
    }

    pub fn get(&self, epoch: EpochHour) -> Option<&HourlyTd> {
        self.hours.get(&epoch)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EpochHour, &HourlyTd)> + '_ {
        self.hours.iter().map(|(e, v)| (*e, v))
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples
    }

    /// Hours that had samples but fewer than `min_samples`.
    pub fn dropped_hours(&self) -> usize {
        self.dropped
    }
}

/// Averages a 1 Hz log into whole hours.
///
/// Values inside an hour are summed in sorted order, so the mean does not
/// depend on how samples are ordered within the hour.
pub fn aggregate_hourly(td: &TdSeries1Hz, min_samples: usize) -> HourlyTdSeries {
    let mut out = HourlyTdSeries::new(min_samples);
    let mut bucket: Vec<f64> = Vec::with_capacity(3600);
    let mut current: Option<i64> = None;
    let flush = |hour: i64, bucket: &mut Vec<f64>, out: &mut HourlyTdSeries| {
        if bucket.len() >= min_samples.max(1) {
            bucket.sort_by(f64::total_cmp);
            let sum: f64 = bucket.iter().sum();
            let mean = sum / bucket.len() as f64;
            let mean = TdNanoseconds::new(mean).expect("mean of valid samples is valid");
            out.insert(EpochHour::from_unix_hours(hour), HourlyTd { mean, count: bucket.len() });
        } else if !bucket.is_empty() {
            out.dropped += 1;
        }
        bucket.clear();
    };
    for s in td.samples() {
        let hour = s.unix_s.div_euclid(3600);
        if current != Some(hour) {
            if let Some(h) = current {
                flush(h, &mut bucket, &mut out);
            }
            current = Some(hour);
        }
        bucket.push(s.td.value());
    }
    if let Some(h) = current {
        flush(h, &mut bucket, &mut out);
    }
    out
}

/// Formats unix seconds as `YYYY-MM-DDTHH:MM:SSZ`, caching the hour prefix.
struct TimestampFormatter {
    hour: i64,
    prefix: String,
}

impl TimestampFormatter {
    fn new() -> Self {
        TimestampFormatter { hour: i64::MIN, prefix: String::new() }
    }

    fn format(&mut self, unix_s: i64, out: &mut String) {
        let hour = unix_s.div_euclid(3600);
        if hour != self.hour {
            let dt = Utc.timestamp_opt(hour * 3600, 0).single().expect("in range");
            self.prefix = dt.format("%Y-%m-%dT%H:").to_string();
            self.hour = hour;
        }
        let rem = unix_s.rem_euclid(3600);
        out.push_str(&self.prefix);
        out.push_str(&format!("{:02}:{:02}Z", rem / 60, rem % 60));
    }
}

/// Parses timestamps, short-circuiting the common case of consecutive
/// samples sharing the same `YYYY-MM-DDTHH:` prefix.
struct TimestampParser {
    prefix: Vec<u8>,
    hour_start: i64,
}

impl TimestampParser {
    fn new() -> Self {
        TimestampParser { prefix: Vec::new(), hour_start: 0 }
    }

    fn two_digits(b: &[u8]) -> Option<i64> {
        if b.len() == 2 && b[0].is_ascii_digit() && b[1].is_ascii_digit() {
            Some(((b[0] - b'0') * 10 + (b[1] - b'0')) as i64)
        } else {
            None
        }
    }

    fn parse(&mut self, raw: &[u8]) -> Option<i64> {
        let fast = raw.len() == 20 && raw[16] == b':' && raw[19] == b'Z';
        if fast && !self.prefix.is_empty() && raw[..14] == self.prefix[..] {
            let mm = Self::two_digits(&raw[14..16])?;
            let ss = Self::two_digits(&raw[17..19])?;
            if mm < 60 && ss < 60 {
                return Some(self.hour_start + mm * 60 + ss);
            }
            return None;
        }
        let s = std::str::from_utf8(raw).ok()?;
        let secs = parse_utc(s).ok()?.timestamp();
        if fast {
            self.prefix = raw[..14].to_vec();
            self.hour_start = secs.div_euclid(3600) * 3600;
        }
        Some(secs)
    }
}

pub fn parse_td_csv(path: impl AsRef<Path>) -> Result<TdSeries1Hz, IngestError> {
    read_td_csv(std::io::BufReader::with_capacity(1 << 20, open(path.as_ref())?))
}

/// Reads `timestamp,td_ns` with ISO-8601 UTC second timestamps.
pub fn read_td_csv(reader: impl Read) -> Result<TdSeries1Hz, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.byte_headers().map_err(csv_error)?.clone();
    if header.len() != 2 || !header[0].eq_ignore_ascii_case(b"timestamp") || !header[1].eq_ignore_ascii_case(b"td_ns") {
        return Err(IngestError::parse(1, "expected header `timestamp,td_ns`"));
    }
    let mut parser = TimestampParser::new();
    let mut samples = Vec::new();
    let mut rec = csv::ByteRecord::new();
    let mut line: u64 = 1;
    while rdr.read_byte_record(&mut rec).map_err(csv_error)? {
        line += 1;
        let unix_s = parser.parse(&rec[0]).ok_or_else(|| IngestError::parse(line, "bad timestamp"))?;
        let v: f64 = std::str::from_utf8(&rec[1])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IngestError::parse(line, "bad td_ns"))?;
        let td = TdNanoseconds::new(v).map_err(|e| IngestError::parse(line, e.to_string()))?;
        if let Some(prev) = samples.last().map(|s: &TdSample| s.unix_s) {
            if unix_s <= prev {
                return Err(IngestError::parse(line, "timestamps must be strictly increasing"));
            }
        }
        samples.push(TdSample { unix_s, td });
    }
    TdSeries1Hz::new(samples)
}

pub fn write_td_csv(series: &TdSeries1Hz, writer: impl Write) -> Result<(), IngestError> {
    let io = |source| IngestError::Io { path: String::from("<stream>"), source };
    let mut w = BufWriter::with_capacity(1 << 20, writer);
    w.write_all(b"timestamp,td_ns\n").map_err(io)?;
    let mut fmt = TimestampFormatter::new();
    let mut line = String::with_capacity(48);
    for s in series.samples() {
        line.clear();
        fmt.format(s.unix_s, &mut line);
        line.push(',');
        line.push_str(&s.td.value().to_string());
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: i64 = 1_727_740_800; // 2024-10-01T00:00:00Z

    fn series(values: &[(i64, f64)]) -> TdSeries1Hz {
        TdSeries1Hz::new(
            values.iter().map(|&(s, v)| TdSample { unix_s: s, td: TdNanoseconds::new(v).unwrap() }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_hour() {
        let s: Vec<(i64, f64)> = (0..3600).map(|i| (T0 + i, 100.0)).collect();
        let h = aggregate_hourly(&series(&s), 1800);
        let (e, v) = h.iter().next().unwrap();
        assert_eq!(e.unix_seconds(), T0);
        assert_eq!(v.mean.value(), 100.0);
        assert_eq!(v.count, 3600);
    }

    #[test]
    fn arithmetic_series_mean() {
        let s: Vec<(i64, f64)> = (0..3600).map(|i| (T0 + i, i as f64)).collect();
        let h = aggregate_hourly(&series(&s), 1800);
        assert_eq!(h.iter().next().unwrap().1.mean.value(), 1799.5);
    }

    #[test]
    fn sparse_hour_omitted() {
        let s: Vec<(i64, f64)> = (0..10).map(|i| (T0 + i, 1.0)).collect();
        let h = aggregate_hourly(&series(&s), 1800);
        assert!(h.is_empty());
        assert_eq!(h.dropped_hours(), 1);
    }

    #[test]
    fn non_increasing_rejected() {
        let csv = "timestamp,td_ns\n2024-10-01T00:00:01Z,1\n2024-10-01T00:00:01Z,2\n";
        assert!(read_td_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn fast_parser_agrees_with_chrono() {
        let mut p = TimestampParser::new();
        let mut f = TimestampFormatter::new();
        for s in [T0, T0 + 1, T0 + 3599, T0 + 3600, T0 + 86_399 + 3600 * 24 * 70] {
            let mut buf = String::new();
            f.format(s, &mut buf);
            assert_eq!(p.parse(buf.as_bytes()), Some(s));
            assert_eq!(parse_utc(&buf).unwrap().timestamp(), s);
        }
        assert_eq!(p.parse(b"2024-10-01T00:61:00Z"), None);
        assert_eq!(p.parse(b"2024-10-01T00:00:05+00:00"), Some(T0 + 5));
    }

    proptest! {
        #[test]
        fn within_hour_order_invariance(
            values in proptest::collection::vec(-5e5f64..5e5, 1..200),
            seed in 0u64..1000,
        ) {
            let s: Vec<(i64, f64)> =
                values.iter().enumerate().map(|(i, v)| (T0 + i as i64, *v)).collect();
            let mut shuffled = values.clone();
            // deterministic Fisher-Yates with a tiny LCG
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let s2: Vec<(i64, f64)> =
                shuffled.iter().enumerate().map(|(i, v)| (T0 + i as i64, *v)).collect();
            prop_assert_eq!(aggregate_hourly(&series(&s), 1), aggregate_hourly(&series(&s2), 1));
        }

        #[test]
        fn csv_round_trip(values in proptest::collection::vec((1i64..5000, -1e6f64..1e6), 0..100)) {
            let mut t = T0 - 7200;
            let mut samples = Vec::new();
            for (dt, v) in values {
                t += dt;
                samples.push((t, v));
            }
            let s = series(&samples);
            let mut buf = Vec::new();
            write_td_csv(&s, &mut buf).unwrap();
            prop_assert_eq!(read_td_csv(buf.as_slice()).unwrap(), s);
        }
    }
}
