//! Hourly record ingestion and the feature pipeline.
//!
//! `load_csv → join_sources → fill_missing → fit_normalization →
//! build_features → make_windows → split_train_val`, plus a seeded synthetic
//! generator that produces records in the same shape as real input files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Name of the prediction target column.
pub const TARGET: &str = "pm25_aqi";
/// Month one-hot (12) + hour one-hot (24) + holiday flag (1).
pub const CALENDAR_DIM: usize = 37;

const TIMESTAMP: &str = "timestamp";
const STATION: &str = "station_id";
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Clone, Debug, PartialEq)]
pub struct HourlyRecord {
    pub timestamp: NaiveDateTime,
    pub station_id: String,
    pub pm25_aqi: Option<f64>,
    pub features: BTreeMap<String, Option<f64>>,
}

impl HourlyRecord {
    /// Value of a numeric field, where `pm25_aqi` is addressed by name too.
    pub fn value(&self, name: &str) -> Option<f64> {
        if name == TARGET {
            self.pm25_aqi
        } else {
            self.features.get(name).copied().flatten()
        }
    }

    fn value_mut(&mut self, name: &str) -> &mut Option<f64> {
        if name == TARGET {
            &mut self.pm25_aqi
        } else {
            self.features.entry(name.to_string()).or_insert(None)
        }
    }
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TS_FORMAT).to_string()
}

/// Parses an hour-resolution ISO-8601 civil timestamp. Minutes and seconds
/// must be zero.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    let formats = [
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%d %H:%M:%S",
    ];
    let ts = formats
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            // bare hour, e.g. 2018-01-15T09
            NaiveDateTime::parse_from_str(&format!("{s}:00"), "%Y-%m-%dT%H:%M").ok()
        })
        .ok_or_else(|| Error::InvalidArgument(format!("unparseable timestamp `{s}`")))?;
    if ts.minute() != 0 || ts.second() != 0 {
        return Err(Error::InvalidArgument(format!(
            "timestamp `{s}` is not on the hour"
        )));
    }
    Ok(ts)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadOutcome {
    pub records: Vec<HourlyRecord>,
    pub rejects: Vec<Rejection>,
    /// Numeric covariate columns in file order.
    pub feature_columns: Vec<String>,
}

fn parse_optional(field: &str) -> std::result::Result<Option<f64>, String> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("non-numeric value `{t}`")),
    }
}

/// Reads hourly records from CSV text. With `require_target` unset the
/// `pm25_aqi` column may be absent (covariate-only sources).
pub fn read_records<R: Read>(reader: R, source: &Path, require_target: bool) -> Result<LoadOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let missing = |column: &str| Error::MissingColumn {
        column: column.into(),
        path: source.to_path_buf(),
    };
    let ts_col = position(TIMESTAMP).ok_or_else(|| missing(TIMESTAMP))?;
    let st_col = position(STATION).ok_or_else(|| missing(STATION))?;
    let target_col = position(TARGET);
    if require_target && target_col.is_none() {
        return Err(missing(TARGET));
    }
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ts_col && *i != st_col && Some(*i) != target_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut out = LoadOutcome {
        feature_columns: feature_cols.iter().map(|(_, h)| h.clone()).collect(),
        ..Default::default()
    };
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Rejection {
                    line,
                    reason: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        if row.len() != headers.len() {
            out.rejects.push(Rejection {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
            continue;
        }
        let parsed = (|| -> std::result::Result<HourlyRecord, String> {
            let timestamp = parse_timestamp(&row[ts_col]).map_err(|e| e.to_string())?;
            let station_id = row[st_col].to_string();
            if station_id.is_empty() {
                return Err("empty station_id".into());
            }
            let pm25_aqi = match target_col {
                Some(c) => parse_optional(&row[c]).map_err(|e| format!("{TARGET}: {e}"))?,
                None => None,
            };
            if pm25_aqi.is_some_and(|v| v < 0.0) {
                return Err(format!("{TARGET}: negative value"));
            }
            let mut features = BTreeMap::new();
            for (c, name) in &feature_cols {
                let v = parse_optional(&row[*c]).map_err(|e| format!("{name}: {e}"))?;
                features.insert(name.clone(), v);
            }
            Ok(HourlyRecord {
                timestamp,
                station_id,
                pm25_aqi,
                features,
            })
        })();
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejects.push(Rejection { line, reason }),
        }
    }
    Ok(out)
}

/// Loads a CSV with required columns `timestamp`, `station_id`, `pm25_aqi`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, path, true)
}

/// Loads a covariate-only CSV (`pm25_aqi` optional), e.g. a weather source.
pub fn load_covariates_csv(path: impl AsRef<Path>) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, path, false)
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records in the canonical input layout: `timestamp, station_id,
/// pm25_aqi`, then every covariate name in sorted order.
pub fn write_csv(path: impl AsRef<Path>, records: &[HourlyRecord]) -> Result<()> {
    let path = path.as_ref();
    let names: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.features.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![TIMESTAMP, STATION, TARGET];
    header.extend(names.iter().copied());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            format_timestamp(&r.timestamp),
            r.station_id.clone(),
            fmt_value(r.pm25_aqi),
        ];
        row.extend(names.iter().map(|n| fmt_value(r.features.get(*n).copied().flatten())));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_rejections(path: impl AsRef<Path>, rejects: &[Rejection]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "reason"])?;
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.clone()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Join

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unmatched {
    pub source: &'static str,
    pub station_id: String,
    pub timestamp: NaiveDateTime,
}

#[derive(Clone, Debug, Default)]
pub struct JoinReport {
    pub matched: usize,
    pub unmatched: Vec<Unmatched>,
}

impl JoinReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "reason"])?;
        for (i, u) in self.unmatched.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                format!(
                    "unmatched {} key ({}, {})",
                    u.source,
                    u.station_id,
                    format_timestamp(&u.timestamp)
                ),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

type Key = (String, NaiveDateTime);

fn index_by_key<'a>(records: &'a [HourlyRecord], name: &str) -> Result<BTreeMap<Key, &'a HourlyRecord>> {
    let mut map = BTreeMap::new();
    for r in records {
        let key = (r.station_id.clone(), r.timestamp);
        if map.insert(key, r).is_some() {
            return Err(Error::DuplicateKey {
                key: format!("({}, {})", r.station_id, format_timestamp(&r.timestamp)),
                source_name: name.into(),
            });
        }
    }
    Ok(map)
}

/// Inner join on `(station_id, timestamp)`. The target comes from `aqi`;
/// covariates are the union of both sides, `aqi` winning on name clashes.
pub fn join_sources(weather: &[HourlyRecord], aqi: &[HourlyRecord]) -> Result<(Vec<HourlyRecord>, JoinReport)> {
    let w = index_by_key(weather, "weather")?;
    let a = index_by_key(aqi, "aqi")?;
    let mut report = JoinReport::default();
    let mut out = Vec::new();
    for (key, ar) in &a {
        match w.get(key) {
            Some(wr) => {
                let mut features = wr.features.clone();
                features.extend(ar.features.iter().map(|(k, v)| (k.clone(), *v)));
                out.push(HourlyRecord {
                    timestamp: ar.timestamp,
                    station_id: ar.station_id.clone(),
                    pm25_aqi: ar.pm25_aqi,
                    features,
                });
                report.matched += 1;
            }
            None => report.unmatched.push(Unmatched {
                source: "aqi",
                station_id: key.0.clone(),
                timestamp: key.1,
            }),
        }
    }
    for key in w.keys().filter(|k| !a.contains_key(*k)) {
        report.unmatched.push(Unmatched {
            source: "weather",
            station_id: key.0.clone(),
            timestamp: key.1,
        });
    }
    Ok((out, report))
}

// ---------------------------------------------------------------------------
// Gap repair

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapAction {
    /// Interior gap filled by linear interpolation.
    Repaired,
    /// Leading or trailing gap filled from the nearest observation.
    EdgeFilled,
    /// Interior gap longer than the cap, left missing.
    Retained,
    /// Field never observed for the station.
    NoData,
    /// Second record for an already seen hour, dropped.
    DuplicateDropped,
}

impl GapAction {
    pub fn as_str(self) -> &'static str {
        match self {
            GapAction::Repaired => "repaired",
            GapAction::EdgeFilled => "edge_filled",
            GapAction::Retained => "retained",
            GapAction::NoData => "no_data",
            GapAction::DuplicateDropped => "duplicate_dropped",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapEntry {
    pub station_id: String,
    pub field: String,
    pub start: NaiveDateTime,
    pub hours: usize,
    pub action: GapAction,
}

#[derive(Clone, Debug, Default)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    /// Hourly rows inserted to make each station's index contiguous.
    pub inserted_rows: usize,
}

impl GapReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "station_id", "field", "start", "hours", "reason"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                e.station_id.clone(),
                e.field.clone(),
                format_timestamp(&e.start),
                e.hours.to_string(),
                e.action.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn group_by_station(records: &[HourlyRecord]) -> BTreeMap<String, Vec<HourlyRecord>> {
    let mut by_station: BTreeMap<String, Vec<HourlyRecord>> = BTreeMap::new();
    for r in records {
        by_station.entry(r.station_id.clone()).or_default().push(r.clone());
    }
    for rows in by_station.values_mut() {
        rows.sort_by_key(|r| r.timestamp);
    }
    by_station
}

/// Repairs missing values per station and field.
///
/// Each station is first re-indexed onto a contiguous hourly grid. Interior
/// runs of at most `max_gap_hours` missing values are linearly interpolated;
/// leading and trailing runs take the nearest observed value; longer interior
/// runs stay missing so windowing skips them.
pub fn fill_missing(records: &[HourlyRecord], max_gap_hours: usize) -> (Vec<HourlyRecord>, GapReport) {
    let mut report = GapReport::default();
    let mut out = Vec::with_capacity(records.len());
    for (station, rows) in group_by_station(records) {
        let names: BTreeSet<String> = rows.iter().flat_map(|r| r.features.keys().cloned()).collect();
        let template: BTreeMap<String, Option<f64>> = names.iter().map(|n| (n.clone(), None)).collect();

        let mut grid: Vec<HourlyRecord> = Vec::with_capacity(rows.len());
        for r in rows {
            if let Some(last) = grid.last() {
                if r.timestamp == last.timestamp {
                    report.entries.push(GapEntry {
                        station_id: station.clone(),
                        field: "*".into(),
                        start: r.timestamp,
                        hours: 1,
                        action: GapAction::DuplicateDropped,
                    });
                    continue;
                }
                let mut t = last.timestamp + Duration::hours(1);
                while t < r.timestamp {
                    grid.push(HourlyRecord {
                        timestamp: t,
                        station_id: station.clone(),
                        pm25_aqi: None,
                        features: template.clone(),
                    });
                    report.inserted_rows += 1;
                    t += Duration::hours(1);
                }
            }
            let mut r = r;
            for n in &names {
                r.features.entry(n.clone()).or_insert(None);
            }
            grid.push(r);
        }

        let fields: Vec<String> = std::iter::once(TARGET.to_string()).chain(names).collect();
        for field in &fields {
            let values: Vec<Option<f64>> = grid.iter().map(|r| r.value(field)).collect();
            let (filled, entries) = fill_series(&values, max_gap_hours);
            for (r, v) in grid.iter_mut().zip(filled) {
                *r.value_mut(field) = v;
            }
            for (start, hours, action) in entries {
                report.entries.push(GapEntry {
                    station_id: station.clone(),
                    field: field.clone(),
                    start: grid[start].timestamp,
                    hours,
                    action,
                });
            }
        }
        out.extend(grid);
    }
    (out, report)
}

/// Fills one series. Returns the repaired values and `(start, len, action)`
/// for every run of missing values.
fn fill_series(values: &[Option<f64>], max_gap: usize) -> (Vec<Option<f64>>, Vec<(usize, usize, GapAction)>) {
    let mut out = values.to_vec();
    let mut entries = Vec::new();
    let observed: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
        if !values.is_empty() {
            entries.push((0, values.len(), GapAction::NoData));
        }
        return (out, entries);
    };
    if first > 0 {
        let v = values[first];
        out[..first].iter_mut().for_each(|x| *x = v);
        entries.push((0, first, GapAction::EdgeFilled));
    }
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = b - a - 1;
        if len == 0 {
            continue;
        }
        if len <= max_gap {
            let (va, vb) = (values[a].unwrap(), values[b].unwrap());
            for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
                let frac = (k - a) as f64 / (b - a) as f64;
                *slot = Some(va + (vb - va) * frac);
            }
            entries.push((a + 1, len, GapAction::Repaired));
        } else {
            entries.push((a + 1, len, GapAction::Retained));
        }
    }
    if last + 1 < values.len() {
        let v = values[last];
        out[last + 1..].iter_mut().for_each(|x| *x = v);
        entries.push((last + 1, values.len() - last - 1, GapAction::EdgeFilled));
    }
    (out, entries)
}

// ---------------------------------------------------------------------------
// Features and normalization

/// Z-score statistics (population standard deviation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats { mean: 0.0, std: 1.0 };

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Ordered numeric inputs plus their normalization statistics. The calendar
/// block is always appended after the numeric features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpec {
    /// Numeric inputs in order; may include `pm25_aqi` itself as a lagged
    /// input.
    pub numeric: Vec<String>,
    /// One entry per numeric feature once fitted, else empty.
    pub stats: Vec<NormStats>,
    pub target_stats: Option<NormStats>,
}

impl FeatureSpec {
    pub fn new(numeric: Vec<String>) -> Self {
        FeatureSpec {
            numeric,
            stats: Vec::new(),
            target_stats: None,
        }
    }

    /// The target as a lagged input followed by every covariate column.
    pub fn with_target_and(columns: &[String]) -> Self {
        let mut numeric = vec![TARGET.to_string()];
        numeric.extend(columns.iter().filter(|c| c.as_str() != TARGET).cloned());
        Self::new(numeric)
    }

    /// Removes the named numeric features, e.g. for ablation runs.
    pub fn without(&self, drop: &[String]) -> Self {
        let keep: Vec<usize> = (0..self.numeric.len())
            .filter(|&i| !drop.contains(&self.numeric[i]))
            .collect();
        FeatureSpec {
            numeric: keep.iter().map(|&i| self.numeric[i].clone()).collect(),
            stats: if self.stats.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&i| self.stats[i]).collect()
            },
            target_stats: self.target_stats,
        }
    }

    pub fn dim(&self) -> usize {
        self.numeric.len() + CALENDAR_DIM
    }

    pub fn is_fitted(&self) -> bool {
        self.target_stats.is_some() && self.stats.len() == self.numeric.len()
    }

    pub fn target(&self) -> NormStats {
        self.target_stats.unwrap_or(NormStats::IDENTITY)
    }
}

fn known_fields(records: &[HourlyRecord]) -> BTreeSet<&str> {
    let mut names: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.features.keys().map(String::as_str))
        .collect();
    names.insert(TARGET);
    names
}

fn fit_one(name: &str, values: &[f64], warnings: &mut Vec<String>) -> Result<NormStats> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "feature `{name}` has {} observed training values, need at least 2",
            values.len()
        )));
    }
    if values.iter().all(|&v| v == values[0]) {
        let msg = format!("feature `{name}` is constant ({}); using stddev 1", values[0]);
        log::warn!("{msg}");
        warnings.push(msg);
        return Ok(NormStats {
            mean: values[0],
            std: 1.0,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(NormStats {
        mean,
        std: var.sqrt(),
    })
}

/// Fits z-score statistics on `training` records only. Returns the fitted
/// spec and any warnings (constant features).
pub fn fit_normalization(training: &[HourlyRecord], spec: &FeatureSpec) -> Result<(FeatureSpec, Vec<String>)> {
    if training.is_empty() {
        return Err(Error::Empty("no training records to fit normalization on".into()));
    }
    let known = known_fields(training);
    let mut warnings = Vec::new();
    let mut stats = Vec::with_capacity(spec.numeric.len());
    for name in &spec.numeric {
        if !known.contains(name.as_str()) {
            return Err(Error::UnknownFeature(name.clone()));
        }
        let values: Vec<f64> = training.iter().filter_map(|r| r.value(name)).collect();
        stats.push(fit_one(name, &values, &mut warnings)?);
    }
    let target_values: Vec<f64> = training.iter().filter_map(|r| r.pm25_aqi).collect();
    let target = fit_one(TARGET, &target_values, &mut warnings)?;
    Ok((
        FeatureSpec {
            numeric: spec.numeric.clone(),
            stats,
            target_stats: Some(target),
        },
        warnings,
    ))
}

/// One station's feature rows. A row is `None` when any input or the target
/// is missing.
#[derive(Clone, Debug)]
pub struct StationTable {
    pub station_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub features: Vec<Option<Vec<f64>>>,
    /// Normalized target per hour.
    pub target: Vec<Option<f64>>,
}

/// Parses holiday dates: one ISO date per line, `#` starts a comment.
pub fn parse_holidays(text: &str) -> Result<BTreeSet<NaiveDate>> {
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let d = NaiveDate::parse_from_str(content, "%Y-%m-%d").map_err(|_| {
            Error::InvalidArgument(format!("holiday file line {}: bad date `{content}`", i + 1))
        })?;
        out.insert(d);
    }
    Ok(out)
}

pub fn load_holidays(path: impl AsRef<Path>) -> Result<BTreeSet<NaiveDate>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_holidays(&text)
}

/// Month one-hot, hour one-hot and holiday flag for one hour.
pub fn calendar_encoding(ts: &NaiveDateTime, holidays: &BTreeSet<NaiveDate>) -> [f64; CALENDAR_DIM] {
    let mut v = [0.0; CALENDAR_DIM];
    v[ts.month0() as usize] = 1.0;
    v[12 + ts.hour() as usize] = 1.0;
    if holidays.contains(&ts.date()) {
        v[36] = 1.0;
    }
    v
}

/// Builds `[normalized numeric ; month(12) ; hour(24) ; holiday]` vectors per
/// station. `spec` must carry fitted statistics.
pub fn build_features(
    records: &[HourlyRecord],
    spec: &FeatureSpec,
    holidays: &BTreeSet<NaiveDate>,
) -> Result<Vec<StationTable>> {
    if !spec.is_fitted() {
        return Err(Error::InvalidArgument("feature spec has no normalization statistics".into()));
    }
    let known = known_fields(records);
    if let Some(unknown) = spec.numeric.iter().find(|n| !known.contains(n.as_str())) {
        return Err(Error::UnknownFeature(unknown.clone()));
    }
    let target = spec.target();
    let mut tables = Vec::new();
    for (station, rows) in group_by_station(records) {
        let mut table = StationTable {
            station_id: station,
            timestamps: Vec::with_capacity(rows.len()),
            features: Vec::with_capacity(rows.len()),
            target: Vec::with_capacity(rows.len()),
        };
        for r in &rows {
            let numeric: Option<Vec<f64>> = spec
                .numeric
                .iter()
                .zip(&spec.stats)
                .map(|(n, s)| r.value(n).map(|v| s.normalize(v)))
                .collect();
            let row = numeric.map(|mut v| {
                v.extend_from_slice(&calendar_encoding(&r.timestamp, holidays));
                v
            });
            table.timestamps.push(r.timestamp);
            table.features.push(row);
            table.target.push(r.pm25_aqi.map(|v| target.normalize(v)));
        }
        tables.push(table);
    }
    Ok(tables)
}

// ---------------------------------------------------------------------------
// Windows

/// One training instance: `t_enc` consecutive feature rows and the
/// normalized target of the `horizon` hours that follow.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `t_enc × d`, one row per hour.
    pub encoder_block: Matrix,
    pub target: Vec<f64>,
    /// Normalized target at the last encoder hour; first decoder input.
    pub last_observed: f64,
    pub station_id: String,
    /// Timestamp of the first encoder row.
    pub origin: NaiveDateTime,
}

impl WindowSample {
    /// Timestamp of target step `k` (0-based).
    pub fn target_time(&self, k: usize) -> NaiveDateTime {
        self.origin + Duration::hours((self.encoder_block.rows() + k) as i64)
    }
}

/// Rows usable as part of a window: complete features and target, and one
/// hour after the previous usable row.
fn usable_runs(table: &StationTable) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..table.timestamps.len() {
        let ok = table.features[i].is_some() && table.target[i].is_some();
        let contiguous = i > 0 && table.timestamps[i] - table.timestamps[i - 1] == Duration::hours(1);
        match (start, ok) {
            (Some(_), true) if contiguous => {}
            (Some(s), true) => {
                runs.push((s, i));
                start = Some(i);
            }
            (Some(s), false) => {
                runs.push((s, i));
                start = None;
            }
            (None, true) => start = Some(i),
            (None, false) => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, table.timestamps.len()));
    }
    runs
}

/// Stride-1 sliding windows per station. Windows never cross a missing row
/// or a break in the hourly index. Series shorter than `t_enc + horizon`
/// contribute nothing.
pub fn make_windows(tables: &[StationTable], t_enc: usize, horizon: usize) -> Result<Vec<WindowSample>> {
    if t_enc == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(format!(
            "t_enc and horizon must be positive (got {t_enc}, {horizon})"
        )));
    }
    let span = t_enc + horizon;
    let mut out = Vec::new();
    for table in tables {
        for (lo, hi) in usable_runs(table) {
            if hi - lo < span {
                continue;
            }
            for s in lo..=hi - span {
                let rows: Vec<f64> = (s..s + t_enc)
                    .flat_map(|i| table.features[i].as_ref().unwrap().iter().copied())
                    .collect();
                let d = rows.len() / t_enc;
                out.push(WindowSample {
                    encoder_block: Matrix::new(t_enc, d, rows)?,
                    target: (s + t_enc..s + span).map(|i| table.target[i].unwrap()).collect(),
                    last_observed: table.target[s + t_enc - 1].unwrap(),
                    station_id: table.station_id.clone(),
                    origin: table.timestamps[s],
                });
            }
        }
    }
    Ok(out)
}

/// Seeded random split. The validation part holds `round(fraction × N)`
/// items; both parts keep the input order.
pub fn split_train_val<T>(items: Vec<T>, seed: u64, fraction: f64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::Empty("nothing to split".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("validation fraction must be in (0,1), got {fraction}")));
    }
    let n = items.len();
    let n_val = (fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val_set: BTreeSet<usize> = idx[..n_val].iter().copied().collect();
    let mut train = Vec::with_capacity(n - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (i, item) in items.into_iter().enumerate() {
        if val_set.contains(&i) {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Upstream pollution pulses that reach the station after a fixed lag.
///
/// Each hour a pulse starts with probability `rate_per_hour`, with amplitude
/// uniform in `amplitude`, decaying by `exp(-1/decay_hours)` per hour. The
/// covariate `upstream_pm` reports `background + pulse(t + lag_hours)`, so it
/// leads the target; the target receives `coupling × pulse(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpstreamPulses {
    pub rate_per_hour: f64,
    pub amplitude: (f64, f64),
    pub decay_hours: f64,
    pub lag_hours: usize,
    pub coupling: f64,
    pub background: f64,
}

impl Default for UpstreamPulses {
    fn default() -> Self {
        UpstreamPulses {
            rate_per_hour: 1.0 / 36.0,
            amplitude: (20.0, 60.0),
            decay_hours: 8.0,
            lag_hours: 12,
            coupling: 0.9,
            background: 15.0,
        }
    }
}

/// Shape of a synthetic hourly series.
///
/// ```text
/// annual(t)  = annual_amplitude  · cos(2π (doy(t) − 14.5) / 365.25)   peak mid-January
/// diurnal(t) = diurnal_amplitude · cos(2π (hour(t) − 20) / 24)        evening peak
/// pm25_aqi   = max(0, base + annual + diurnal + coupling · pulse(t) + N(0, noise_std²))
/// temperature = 12 − 11 · cos(2π (doy − 14.5)/365.25) + 4 · cos(2π (hour − 15)/24) + N(0, 1)
/// humidity    = clamp(60 + 0.3 · (s(t) − base) + N(0, 5²), 5, 100)
/// wind_speed  = max(0, 3.5 − 0.03 · (s(t) − base) + N(0, 0.8²))
/// ```
///
/// where `s(t)` is the noise-free pollution signal and `doy` the fractional
/// zero-based day of year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthProfile {
    pub station_id: String,
    pub start: NaiveDateTime,
    pub base: f64,
    pub annual_amplitude: f64,
    pub diurnal_amplitude: f64,
    pub noise_std: f64,
    pub weather: bool,
    pub upstream: Option<UpstreamPulses>,
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile {
            station_id: "synth-01".into(),
            start: NaiveDate::from_ymd_opt(2016, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            base: 60.0,
            annual_amplitude: 25.0,
            diurnal_amplitude: 10.0,
            noise_std: 3.0,
            weather: true,
            upstream: Some(UpstreamPulses::default()),
        }
    }
}

impl SynthProfile {
    /// A second pollution regime: higher baseline, stronger daily swing and
    /// stronger upstream coupling.
    pub fn shifted() -> Self {
        SynthProfile {
            base: 85.0,
            diurnal_amplitude: 14.0,
            upstream: Some(UpstreamPulses {
                coupling: 1.1,
                ..UpstreamPulses::default()
            }),
            ..SynthProfile::default()
        }
    }

    /// Default profile with the upstream covariate removed.
    pub fn without_upstream() -> Self {
        SynthProfile {
            upstream: None,
            ..SynthProfile::default()
        }
    }
}

fn day_of_year(ts: &NaiveDateTime) -> f64 {
    ts.ordinal0() as f64 + ts.hour() as f64 / 24.0
}

/// Noise-free seasonal part: `base + annual + diurnal`.
pub fn seasonal_signal(profile: &SynthProfile, ts: &NaiveDateTime) -> f64 {
    use std::f64::consts::PI;
    let annual = profile.annual_amplitude * (2.0 * PI * (day_of_year(ts) - 14.5) / 365.25).cos();
    let diurnal = profile.diurnal_amplitude * (2.0 * PI * (ts.hour() as f64 - 20.0) / 24.0).cos();
    profile.base + annual + diurnal
}

/// Deterministic synthetic hourly series for one station.
pub fn synth_generate(seed: u64, hours: usize, profile: &SynthProfile) -> Vec<HourlyRecord> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    // Pulse train covering [0, hours + lag) so the leading covariate exists
    // for every generated hour.
    let pulses: Vec<f64> = match &profile.upstream {
        Some(up) => {
            let decay = (-1.0 / up.decay_hours).exp();
            let mut level = 0.0;
            (0..hours + up.lag_hours)
                .map(|_| {
                    level *= decay;
                    if rng.gen::<f64>() < up.rate_per_hour {
                        level += rng.gen_range(up.amplitude.0..=up.amplitude.1);
                    }
                    level
                })
                .collect()
        }
        None => Vec::new(),
    };

    (0..hours)
        .map(|h| {
            let ts = profile.start + Duration::hours(h as i64);
            let mut signal = seasonal_signal(profile, &ts);
            let mut features = BTreeMap::new();
            if let Some(up) = &profile.upstream {
                signal += up.coupling * pulses[h];
                features.insert(
                    "upstream_pm".to_string(),
                    Some(up.background + pulses[h + up.lag_hours]),
                );
            }
            let noise = if profile.noise_std > 0.0 {
                profile.noise_std * std_normal.sample(&mut rng)
            } else {
                0.0
            };
            let pm = (signal + noise).max(0.0);
            if profile.weather {
                let doy = day_of_year(&ts);
                let excess = signal - profile.base;
                let temperature = 12.0 - 11.0 * (2.0 * PI * (doy - 14.5) / 365.25).cos()
                    + 4.0 * (2.0 * PI * (ts.hour() as f64 - 15.0) / 24.0).cos()
                    + std_normal.sample(&mut rng);
                let humidity = (60.0 + 0.3 * excess + 5.0 * std_normal.sample(&mut rng)).clamp(5.0, 100.0);
                let wind = (3.5 - 0.03 * excess + 0.8 * std_normal.sample(&mut rng)).max(0.0);
                features.insert("temperature".to_string(), Some(temperature));
                features.insert("humidity".to_string(), Some(humidity));
                features.insert("wind_speed".to_string(), Some(wind));
            }
            HourlyRecord {
                timestamp: ts,
                station_id: profile.station_id.clone(),
                pm25_aqi: Some(pm),
                features,
            }
        })
        .collect()
}

/// Two consecutive regimes on one station: `hours_first` hours of `first`
/// followed by `hours_second` hours of `second`, re-timed to be contiguous.
pub fn synth_two_regime(
    seed: u64,
    first: &SynthProfile,
    hours_first: usize,
    second: &SynthProfile,
    hours_second: usize,
) -> Vec<HourlyRecord> {
    let mut out = synth_generate(seed, hours_first, first);
    let mut second = second.clone();
    second.start = first.start + Duration::hours(hours_first as i64);
    second.station_id = first.station_id.clone();
    out.extend(synth_generate(seed.wrapping_add(1), hours_second, &second));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn read(text: &str) -> Result<LoadOutcome> {
        read_records(text.as_bytes(), &PathBuf::from("mem.csv"), true)
    }

    fn rec(station: &str, t: &str, pm: Option<f64>, feats: &[(&str, Option<f64>)]) -> HourlyRecord {
        HourlyRecord {
            timestamp: ts(t),
            station_id: station.into(),
            pm25_aqi: pm,
            features: feats.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn load_empty_and_simple_rows() {
        let out = read("timestamp,station_id,pm25_aqi\n").unwrap();
        assert!(out.records.is_empty() && out.rejects.is_empty());

        let out = read("timestamp,station_id,pm25_aqi,temp\n2018-01-15T09:00,a,42,3.5\n").unwrap();
        let r = &out.records[0];
        assert_eq!(r.timestamp.hour(), 9);
        assert_eq!(r.timestamp.month(), 1);
        assert_eq!(r.pm25_aqi, Some(42.0));
        assert_eq!(r.features["temp"], Some(3.5));
        assert_eq!(out.feature_columns, vec!["temp".to_string()]);
    }

    #[test]
    fn load_reports_bad_rows() {
        let text = "timestamp,station_id,pm25_aqi\n\
                    2018-01-15T09:00,a,42\n\
                    2018-01-15T10:00,a,abc\n\
                    2018-01-15T10:30,a,1\n\
                    2018-01-15T11:00,a,-3\n\
                    2018-01-15T12:00,a,\n";
        let out = read(text).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[1].pm25_aqi, None);
        let lines: Vec<usize> = out.rejects.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
        assert!(out.rejects[0].reason.contains("pm25_aqi"));
    }

    #[test]
    fn load_requires_columns() {
        let err = read("timestamp,pm25_aqi\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "station_id"));
        let err = read("timestamp,station_id\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "pm25_aqi"));
        assert!(read_records("timestamp,station_id,wind\n".as_bytes(), Path::new("w"), false).is_ok());
        assert!(load_csv("/nonexistent/file.csv").is_err());
    }

    #[test]
    fn join_examples() {
        let w: Vec<_> = ["2018-01-01T00:00", "2018-01-01T01:00", "2018-01-01T02:00"]
            .iter()
            .map(|t| rec("a", t, None, &[("wind", Some(1.0))]))
            .collect();
        let a: Vec<_> = ["2018-01-01T00:00", "2018-01-01T01:00"]
            .iter()
            .map(|t| rec("a", t, Some(5.0), &[]))
            .collect();
        let (joined, report) = join_sources(&w, &a).unwrap();
        assert_eq!(joined.len(), 2);
        assert_eq!(report.unmatched.len(), 1);
        assert_eq!(joined[0].features["wind"], Some(1.0));
        assert_eq!(joined[0].pm25_aqi, Some(5.0));

        let (same, rep) = join_sources(&w, &w).unwrap();
        assert_eq!(same.len(), 3);
        assert!(rep.unmatched.is_empty());

        let other: Vec<_> = w.iter().map(|r| HourlyRecord { station_id: "b".into(), ..r.clone() }).collect();
        let (none, rep) = join_sources(&w, &other).unwrap();
        assert!(none.is_empty());
        assert_eq!(rep.unmatched.len(), 6);

        let dup = vec![w[0].clone(), w[0].clone()];
        let err = join_sources(&dup, &a).unwrap_err();
        assert!(err.to_string().contains("2018-01-01T00:00"));
    }

    #[test]
    fn fill_examples() {
        let (v, e) = fill_series(&[Some(1.0), None, Some(3.0)], 5);
        assert_eq!(v, vec![Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(e, vec![(1, 1, GapAction::Repaired)]);

        let (v, _) = fill_series(&[None, Some(2.0)], 5);
        assert_eq!(v, vec![Some(2.0), Some(2.0)]);

        let mut series = vec![Some(1.0)];
        series.extend(std::iter::repeat_n(None, 6));
        series.push(Some(8.0));
        let (v, e) = fill_series(&series, 5);
        assert!(v[1..7].iter().all(Option::is_none));
        assert_eq!(e, vec![(1, 6, GapAction::Retained)]);
    }

    #[test]
    fn fill_reindexes_missing_hours() {
        let records = vec![
            rec("a", "2018-01-01T00:00", Some(10.0), &[("w", Some(0.0))]),
            rec("a", "2018-01-01T04:00", Some(50.0), &[("w", Some(4.0))]),
        ];
        let (out, report) = fill_missing(&records, 5);
        assert_eq!(out.len(), 5);
        assert_eq!(report.inserted_rows, 3);
        assert_eq!(out[2].pm25_aqi, Some(30.0));
        assert_eq!(out[3].features["w"], Some(3.0));
        assert!(report
            .entries
            .iter()
            .all(|e| e.action == GapAction::Repaired && e.hours == 3));
    }

    #[test]
    fn long_gap_blocks_windows() {
        let mut records = Vec::new();
        for h in 0..40 {
            let t = NaiveDate::from_ymd_opt(2018, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
                + Duration::hours(h);
            let pm = if (10..16).contains(&h) { None } else { Some(h as f64) };
            records.push(HourlyRecord {
                timestamp: t,
                station_id: "a".into(),
                pm25_aqi: pm,
                features: BTreeMap::new(),
            });
        }
        let (filled, report) = fill_missing(&records, 5);
        assert!(report.entries.iter().any(|e| e.action == GapAction::Retained && e.hours == 6));
        let (spec, _) = fit_normalization(&filled, &FeatureSpec::with_target_and(&[])).unwrap();
        let tables = build_features(&filled, &spec, &BTreeSet::new()).unwrap();
        let windows = make_windows(&tables, 3, 2).unwrap();
        for w in &windows {
            let start = (w.origin - records[0].timestamp).num_hours();
            assert!(start + 5 <= 10 || start >= 16, "window at {start} crosses gap");
        }
        // 0..10 gives 10-5+1 = 6 windows; 16..40 gives 24-5+1 = 20.
        assert_eq!(windows.len(), 26);
    }

    #[test]
    fn calendar_encoding_example() {
        let mut holidays = BTreeSet::new();
        holidays.insert(NaiveDate::from_ymd_opt(2018, 1, 1).unwrap());
        let v = calendar_encoding(&ts("2018-01-01T09:00"), &holidays);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[12 + 9], 1.0);
        assert_eq!(v[36], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 3.0);
        assert_eq!(FeatureSpec::new(vec![]).dim(), 37);
    }

    #[test]
    fn holiday_parsing() {
        let h = parse_holidays("# national\n2018-01-01\n\n2018-02-16  # lunar new year\n").unwrap();
        assert_eq!(h.len(), 2);
        assert!(parse_holidays("2018-13-01\n").is_err());
    }

    #[test]
    fn normalization_examples() {
        let records = vec![
            rec("a", "2018-01-01T00:00", Some(0.0), &[("k", Some(7.0))]),
            rec("a", "2018-01-01T01:00", Some(10.0), &[("k", Some(7.0))]),
        ];
        let spec = FeatureSpec::with_target_and(&["k".into()]);
        let (fitted, warnings) = fit_normalization(&records, &spec).unwrap();
        let s = fitted.stats[0];
        assert_eq!((s.mean, s.std), (5.0, 5.0));
        assert_eq!((s.normalize(0.0), s.normalize(10.0)), (-1.0, 1.0));
        assert_eq!(warnings.len(), 1);
        assert_eq!(fitted.stats[1].normalize(7.0), 0.0);

        assert!(fit_normalization(&[], &spec).is_err());
        let bad = FeatureSpec::new(vec!["nope".into()]);
        assert!(matches!(fit_normalization(&records, &bad), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn build_features_rejects_unknown_names() {
        let records = vec![rec("a", "2018-01-01T00:00", Some(1.0), &[])];
        let spec = FeatureSpec {
            numeric: vec!["ghost".into()],
            stats: vec![NormStats::IDENTITY],
            target_stats: Some(NormStats::IDENTITY),
        };
        assert!(matches!(
            build_features(&records, &spec, &BTreeSet::new()),
            Err(Error::UnknownFeature(_))
        ));
    }

    fn ramp_table(len: usize) -> StationTable {
        let start = ts("2018-01-01T00:00");
        StationTable {
            station_id: "a".into(),
            timestamps: (0..len).map(|h| start + Duration::hours(h as i64)).collect(),
            features: (0..len).map(|h| Some(vec![h as f64])).collect(),
            target: (0..len).map(|h| Some(h as f64)).collect(),
        }
    }

    #[test]
    fn window_counts_and_indexing() {
        assert_eq!(make_windows(&[ramp_table(40)], 24, 8).unwrap().len(), 9);
        assert_eq!(make_windows(&[ramp_table(31)], 24, 8).unwrap().len(), 0);
        let ws = make_windows(&[ramp_table(40)], 24, 8).unwrap();
        for (t, w) in ws.iter().enumerate() {
            let expected: Vec<f64> = (t + 24..t + 32).map(|h| h as f64).collect();
            assert_eq!(w.target, expected);
            assert_eq!(w.last_observed, (t + 23) as f64);
            assert_eq!(w.encoder_block.get(0, 0), t as f64);
        }
        assert!(make_windows(&[ramp_table(40)], 0, 8).is_err());
    }

    #[test]
    fn split_examples() {
        let items: Vec<usize> = (0..10).collect();
        let (train, val) = split_train_val(items.clone(), 3, 0.2).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
        let (train2, val2) = split_train_val(items.clone(), 3, 0.2).unwrap();
        assert_eq!((train.clone(), val.clone()), (train2, val2));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert!(split_train_val(Vec::<usize>::new(), 1, 0.2).is_err());
        assert!(split_train_val(items, 1, 1.0).is_err());
    }

    #[test]
    fn synth_determinism_and_closed_form() {
        let p = SynthProfile::default();
        assert_eq!(synth_generate(7, 200, &p), synth_generate(7, 200, &p));
        assert_ne!(synth_generate(7, 200, &p), synth_generate(8, 200, &p));

        let quiet = SynthProfile {
            noise_std: 0.0,
            upstream: None,
            weather: false,
            ..SynthProfile::default()
        };
        use std::f64::consts::PI;
        for r in synth_generate(1, 500, &quiet) {
            let doy = r.timestamp.ordinal0() as f64 + r.timestamp.hour() as f64 / 24.0;
            let expected = 60.0
                + 25.0 * (2.0 * PI * (doy - 14.5) / 365.25).cos()
                + 10.0 * (2.0 * PI * (r.timestamp.hour() as f64 - 20.0) / 24.0).cos();
            assert_eq!(r.pm25_aqi, Some(expected));
        }
    }

    #[test]
    fn synth_january_exceeds_september() {
        let recs = synth_generate(11, 2 * 8760, &SynthProfile::default());
        let month_mean = |m: u32| {
            let v: Vec<f64> = recs
                .iter()
                .filter(|r| r.timestamp.month() == m)
                .filter_map(|r| r.pm25_aqi)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(month_mean(1) > month_mean(9));
    }

    #[test]
    fn upstream_covariate_leads_target() {
        let p = SynthProfile {
            noise_std: 0.0,
            weather: false,
            ..SynthProfile::default()
        };
        let up = p.upstream.clone().unwrap();
        let recs = synth_generate(3, 2000, &p);
        for h in 0..2000 - up.lag_hours {
            let pulse_now = recs[h + up.lag_hours].pm25_aqi.unwrap()
                - seasonal_signal(&p, &recs[h + up.lag_hours].timestamp);
            let led = recs[h].features["upstream_pm"].unwrap() - up.background;
            assert!((pulse_now - up.coupling * led).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn windows_are_finite_contiguous_and_counted(
            len in 1usize..80,
            t_enc in 1usize..12,
            horizon in 1usize..6,
            hole in prop::option::of(0usize..80),
        ) {
            let mut table = ramp_table(len);
            if let Some(h) = hole.filter(|&h| h < len) {
                table.features[h] = None;
            }
            let ws = make_windows(&[table.clone()], t_enc, horizon).unwrap();
            let span = t_enc + horizon;
            let segments: Vec<usize> = match hole.filter(|&h| h < len) {
                Some(h) => vec![h, len - h - 1],
                None => vec![len],
            };
            let expected: usize = segments.iter().map(|&s| (s + 1).saturating_sub(span)).sum();
            prop_assert_eq!(ws.len(), expected);
            for w in &ws {
                prop_assert_eq!(w.encoder_block.rows(), t_enc);
                prop_assert!(w.encoder_block.is_finite());
            }
            // origins are stride-1 within each segment
            for pair in ws.windows(2) {
                let gap = (pair[1].origin - pair[0].origin).num_hours();
                prop_assert!(gap == 1 || gap > span as i64 - 1);
            }
        }

        #[test]
        fn one_hot_slots(h in 0i64..(24 * 400)) {
            let t = ts("2017-01-01T00:00") + Duration::hours(h);
            let v = calendar_encoding(&t, &BTreeSet::new());
            prop_assert_eq!(v[..12].iter().filter(|&&x| x == 1.0).count(), 1);
            prop_assert_eq!(v[12..36].iter().filter(|&&x| x == 1.0).count(), 1);
            prop_assert_eq!(v[..36].iter().sum::<f64>(), 2.0);
        }

        #[test]
        fn normalization_round_trip(
            values in prop::collection::vec(-500.0f64..500.0, 2..30),
            x in -1000.0f64..1000.0,
        ) {
            let mut w = Vec::new();
            let s = fit_one("f", &values, &mut w).unwrap();
            prop_assert!((s.denormalize(s.normalize(x)) - x).abs() <= 1e-12 * x.abs().max(1.0) * s.std.max(1.0));
        }
    }
}
