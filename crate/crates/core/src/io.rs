//! CSV interchange: sensor records, station readings, grid frames, images,
//! hourly series and predictions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::Path;

use crate::checkpoint::write_atomic;
use crate::datagen::StationReading;
use crate::error::{Error, Result};
use crate::fsum::ExactSum;
use crate::geogrid::{time_bucket, GridFrame, GridSpec, PollutionImage};
use crate::hybrid::WeatherVector;
use crate::lstm::SequenceWindow;
use crate::record::{Pollutant, SensorRecord};

pub const SENSOR_COLUMNS: [&str; 14] = [
    "timestamp",
    "lat",
    "lon",
    "pm25",
    "pm10",
    "co",
    "no2",
    "so2",
    "temperature",
    "humidity",
    "pressure",
    "precipitation",
    "wind_speed",
    "wind_direction",
];
pub const STATION_COLUMNS: [&str; 3] = ["bucket_start", "station_id", "pm25"];
pub const FRAME_COLUMNS: [&str; 5] = ["bucket_start", "row", "col", "sum", "count"];
pub const IMAGE_COLUMNS: [&str; 4] = ["bucket_start", "row", "col", "pixel"];
pub const SERIES_COLUMNS: [&str; 7] =
    ["bucket_start", "city_avg_pm25", "temperature", "humidity", "precipitation", "wind_speed", "wind_direction"];

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file))
}

/// Reads a CSV whose first row must equal `columns`; returns the data rows.
fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = open(path)?;
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(Error::MissingHeader(path.to_path_buf())),
    };
    if header.iter().ne(columns.iter().copied()) {
        return Err(Error::MissingHeader(path.to_path_buf()));
    }
    rows.map(|r| r.map_err(Error::from)).collect()
}

fn write_table(path: &Path, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(columns)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    row.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{}: line {}: bad value {:?} in column {}",
            path.display(),
            row.position().map_or(0, |p| p.line()),
            row.get(i).unwrap_or(""),
            i + 1
        ))
    })
}

/// Outcome of reading a sensor CSV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub read: usize,
    pub accepted: usize,
    pub bad_schema: usize,
    pub out_of_range: usize,
    pub out_of_bounds: usize,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.bad_schema + self.out_of_range + self.out_of_bounds
    }

    pub fn is_consistent(&self) -> bool {
        self.read == self.accepted + self.rejected()
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "read {} accepted {} rejected {} (schema {}, range {}, bounds {})",
            self.read,
            self.accepted,
            self.rejected(),
            self.bad_schema,
            self.out_of_range,
            self.out_of_bounds
        )
    }
}

fn parse_record(row: &csv::StringRecord) -> Option<SensorRecord> {
    if row.len() != SENSOR_COLUMNS.len() {
        return None;
    }
    let mut v = [0.0; 13];
    for (slot, text) in v.iter_mut().zip(row.iter().skip(1)) {
        *slot = text.parse().ok()?;
    }
    Some(SensorRecord {
        timestamp: row.get(0)?.parse().ok()?,
        lat: v[0],
        lon: v[1],
        pm25: v[2],
        pm10: v[3],
        co: v[4],
        no2: v[5],
        so2: v[6],
        temperature: v[7],
        humidity: v[8],
        pressure: v[9],
        precipitation: v[10],
        wind_speed: v[11],
        wind_direction: v[12],
    })
}

/// Reads sensor records in [`SENSOR_COLUMNS`] order. Unparseable rows, rows
/// violating record invariants and (when `bounds` is given) rows outside the
/// box are skipped and tallied.
pub fn ingest_csv(path: &Path, bounds: Option<&GridSpec>) -> Result<(Vec<SensorRecord>, IngestReport)> {
    let mut reader = open(path)?;
    let mut rows = reader.records();
    match rows.next() {
        Some(h) if h.as_ref().is_ok_and(|h| h.iter().eq(SENSOR_COLUMNS.iter().copied())) => {}
        _ => return Err(Error::MissingHeader(path.to_path_buf())),
    }
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for row in rows {
        report.read += 1;
        let Some(record) = row.ok().as_ref().and_then(parse_record) else {
            report.bad_schema += 1;
            continue;
        };
        if let Err(why) = record.validate() {
            log::debug!("rejecting record at {}: {why}", record.timestamp);
            report.out_of_range += 1;
            continue;
        }
        if bounds.is_some_and(|g| !g.contains(record.lat, record.lon)) {
            report.out_of_bounds += 1;
            continue;
        }
        report.accepted += 1;
        records.push(record);
    }
    Ok((records, report))
}

pub fn write_records_csv(path: &Path, records: &[SensorRecord]) -> Result<()> {
    write_table(
        path,
        &SENSOR_COLUMNS,
        records.iter().map(|r| {
            vec![
                r.timestamp.to_string(),
                r.lat.to_string(),
                r.lon.to_string(),
                r.pm25.to_string(),
                r.pm10.to_string(),
                r.co.to_string(),
                r.no2.to_string(),
                r.so2.to_string(),
                r.temperature.to_string(),
                r.humidity.to_string(),
                r.pressure.to_string(),
                r.precipitation.to_string(),
                r.wind_speed.to_string(),
                r.wind_direction.to_string(),
            ]
        }),
    )
}

pub fn write_report_csv(path: &Path, report: &IngestReport) -> Result<()> {
    let rows = [
        ("read", report.read),
        ("accepted", report.accepted),
        ("bad_schema", report.bad_schema),
        ("out_of_range", report.out_of_range),
        ("out_of_bounds", report.out_of_bounds),
    ];
    write_table(path, &["field", "rows"], rows.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))
}

/// An empty `pm25` field means the station was silent that hour.
pub fn write_stations_csv(path: &Path, readings: &[StationReading]) -> Result<()> {
    write_table(
        path,
        &STATION_COLUMNS,
        readings.iter().map(|s| {
            vec![s.bucket_start.to_string(), s.station_id.to_string(), s.pm25.map_or(String::new(), |v| v.to_string())]
        }),
    )
}

pub fn read_stations_csv(path: &Path) -> Result<Vec<StationReading>> {
    read_table(path, &STATION_COLUMNS)?
        .iter()
        .map(|row| {
            let pm25 = match row.get(2) {
                None | Some("") => None,
                Some(_) => Some(field(row, 2, path)?),
            };
            Ok(StationReading { bucket_start: field(row, 0, path)?, station_id: field(row, 1, path)?, pm25 })
        })
        .collect()
}

/// Station readings grouped by bucket, ordered by station id.
pub fn stations_by_bucket(readings: &[StationReading]) -> BTreeMap<i64, Vec<Option<f64>>> {
    let mut grouped: BTreeMap<i64, BTreeMap<usize, Option<f64>>> = BTreeMap::new();
    for s in readings {
        grouped.entry(s.bucket_start).or_default().insert(s.station_id, s.pm25);
    }
    grouped.into_iter().map(|(k, v)| (k, v.into_values().collect())).collect()
}

/// Non-empty cells only.
pub fn write_frames_csv(path: &Path, frames: &[GridFrame]) -> Result<()> {
    let rows = frames.iter().flat_map(|f| {
        (0..f.rows * f.cols).filter(|&i| f.count[i] > 0).map(move |i| {
            vec![
                f.bucket_start.to_string(),
                (i / f.cols).to_string(),
                (i % f.cols).to_string(),
                f.sum[i].to_string(),
                f.count[i].to_string(),
            ]
        })
    });
    write_table(path, &FRAME_COLUMNS, rows)
}

pub fn read_frames_csv(path: &Path, rows: usize, cols: usize, pollutant: Pollutant) -> Result<Vec<GridFrame>> {
    let mut frames: BTreeMap<i64, GridFrame> = BTreeMap::new();
    for row in read_table(path, &FRAME_COLUMNS)? {
        let bucket: i64 = field(&row, 0, path)?;
        let (r, c): (usize, usize) = (field(&row, 1, path)?, field(&row, 2, path)?);
        if r >= rows || c >= cols {
            return Err(Error::ShapeMismatch(format!(
                "{}: cell ({r}, {c}) is outside a {rows}x{cols} grid",
                path.display()
            )));
        }
        let frame = frames.entry(bucket).or_insert_with(|| GridFrame::empty(bucket, pollutant, rows, cols));
        frame.sum[r * cols + c] = field(&row, 3, path)?;
        frame.count[r * cols + c] = field(&row, 4, path)?;
    }
    Ok(frames.into_values().collect())
}

/// Non-zero pixels only.
pub fn write_images_csv(path: &Path, images: &[(i64, PollutionImage)]) -> Result<()> {
    let rows = images.iter().flat_map(|(bucket, img)| {
        img.pixels.iter().enumerate().filter(|(_, p)| **p != 0.0).map(move |(i, p)| {
            vec![bucket.to_string(), (i / img.cols).to_string(), (i % img.cols).to_string(), p.to_string()]
        })
    });
    write_table(path, &IMAGE_COLUMNS, rows)
}

/// One hour of the city-wide series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub bucket_start: i64,
    pub city_avg_pm25: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub precipitation: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
}

impl SeriesRow {
    pub fn weather(&self) -> WeatherVector {
        WeatherVector::from_raw(self.temperature, self.humidity, self.precipitation, self.wind_speed, self.wind_direction)
    }
}

/// Per-bucket means of all records; wind direction is averaged on the circle.
pub fn hourly_series(records: &[SensorRecord], interval: i64) -> Vec<SeriesRow> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        sums: [ExactSum; 7],
    }
    let mut buckets: BTreeMap<i64, Acc> = BTreeMap::new();
    for r in records {
        let acc = buckets.entry(time_bucket(r.timestamp, interval)).or_default();
        acc.n += 1;
        let (s, c) = r.wind_direction.to_radians().sin_cos();
        for (sum, v) in acc.sums.iter_mut().zip([r.pm25, r.temperature, r.humidity, r.precipitation, r.wind_speed, s, c]) {
            sum.add(v);
        }
    }
    buckets
        .into_iter()
        .map(|(bucket_start, acc)| {
            let m: Vec<f64> = acc.sums.iter().map(|s| s.value() / acc.n as f64).collect();
            let dir = m[5].atan2(m[6]).to_degrees().rem_euclid(360.0);
            SeriesRow {
                bucket_start,
                city_avg_pm25: m[0],
                temperature: m[1],
                humidity: m[2],
                precipitation: m[3],
                wind_speed: m[4],
                wind_direction: if dir >= 360.0 { 0.0 } else { dir },
            }
        })
        .collect()
}

pub fn write_series_csv(path: &Path, series: &[SeriesRow]) -> Result<()> {
    write_table(
        path,
        &SERIES_COLUMNS,
        series.iter().map(|s| {
            vec![
                s.bucket_start.to_string(),
                s.city_avg_pm25.to_string(),
                s.temperature.to_string(),
                s.humidity.to_string(),
                s.precipitation.to_string(),
                s.wind_speed.to_string(),
                s.wind_direction.to_string(),
            ]
        }),
    )
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRow>> {
    read_table(path, &SERIES_COLUMNS)?
        .iter()
        .map(|row| {
            Ok(SeriesRow {
                bucket_start: field(row, 0, path)?,
                city_avg_pm25: field(row, 1, path)?,
                temperature: field(row, 2, path)?,
                humidity: field(row, 3, path)?,
                precipitation: field(row, 4, path)?,
                wind_speed: field(row, 5, path)?,
                wind_direction: field(row, 6, path)?,
            })
        })
        .collect()
}

/// Sliding windows over runs of consecutive buckets; a missing hour starts a
/// new run. Each target carries the weather of its own hour.
pub fn series_windows(series: &[SeriesRow], window: usize, interval: i64) -> Vec<SequenceWindow> {
    let mut out = Vec::new();
    let mut run_start = 0;
    for end in 1..=series.len() {
        let broken = end == series.len() || series[end].bucket_start - series[end - 1].bucket_start != interval;
        if !broken {
            continue;
        }
        let run = &series[run_start..end];
        for t in window..run.len() {
            out.push(SequenceWindow {
                inputs: run[t - window..t].iter().map(|r| r.city_avg_pm25).collect(),
                target: run[t].city_avg_pm25,
                weather: run[t].weather(),
            });
        }
        run_start = end;
    }
    out
}

/// Reads one numeric column of a headed CSV, by name or else the last one.
pub fn read_value_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = open(path)?;
    let mut rows = reader.records();
    let header = rows.next().transpose()?.ok_or_else(|| Error::MissingHeader(path.to_path_buf()))?;
    let index = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("{}: no column named {name:?}", path.display())))?,
        None => header.len().saturating_sub(1),
    };
    rows.map(|row| field(&row?, index, path)).collect()
}

pub fn write_rows_csv(path: &Path, columns: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_table(path, columns, rows)
}

#[cfg(test)]
mod tests {
    use tempfile::tempdir;

    use super::*;
    use crate::record::sample_record;

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn header_only_file_has_no_records() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write(&p, &format!("{}\n", SENSOR_COLUMNS.join(",")));
        let (records, report) = ingest_csv(&p, None).unwrap();
        assert!(records.is_empty());
        assert_eq!(report, IngestReport::default());
    }

    #[test]
    fn rejections_are_tallied_by_reason() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let good = sample_record();
        let humid = SensorRecord { humidity: 150.0, ..good };
        let far = SensorRecord { lat: 10.0, ..good };
        write_records_csv(&p, &[good, humid, good, far, good]).unwrap();
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("1,2,3\nnot,a,number,row,,,,,,,,,,\n");
        write(&p, &text);
        let grid = GridSpec::square32(good.lat - 0.1, good.lat + 0.1, good.lon - 0.1, good.lon + 0.1).unwrap();
        let (records, report) = ingest_csv(&p, Some(&grid)).unwrap();
        assert_eq!(records, vec![good; 3]);
        assert_eq!(
            report,
            IngestReport { read: 7, accepted: 3, bad_schema: 2, out_of_range: 1, out_of_bounds: 1 }
        );
        assert!(report.is_consistent());
    }

    #[test]
    fn missing_file_and_header() {
        let dir = tempdir().unwrap();
        assert!(matches!(ingest_csv(&dir.path().join("nope.csv"), None), Err(Error::FileNotFound(_))));
        let p = dir.path().join("empty.csv");
        write(&p, "");
        assert!(matches!(ingest_csv(&p, None), Err(Error::MissingHeader(_))));
        write(&p, "lat,lon\n1,2\n");
        assert!(matches!(ingest_csv(&p, None), Err(Error::MissingHeader(_))));
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let r = SensorRecord { pm25: 0.1 + 0.2, lat: 35.123456789012345, ..sample_record() };
        write_records_csv(&p, &[r]).unwrap();
        assert_eq!(ingest_csv(&p, None).unwrap().0, vec![r]);
    }

    #[test]
    fn stations_round_trip_with_gaps() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("st.csv");
        let readings = vec![
            StationReading { bucket_start: 3600, station_id: 1, pm25: Some(20.5) },
            StationReading { bucket_start: 3600, station_id: 0, pm25: None },
            StationReading { bucket_start: 0, station_id: 0, pm25: Some(3.0) },
        ];
        write_stations_csv(&p, &readings).unwrap();
        let back = read_stations_csv(&p).unwrap();
        assert_eq!(back, readings);
        let grouped = stations_by_bucket(&back);
        assert_eq!(grouped[&3600], vec![None, Some(20.5)]);
        assert_eq!(grouped[&0], vec![Some(3.0)]);
    }

    #[test]
    fn frames_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let mut f = GridFrame::empty(7200, Pollutant::Pm25, 4, 4);
        f.sum[5] = 12.25;
        f.count[5] = 3;
        f.sum[15] = 0.0;
        f.count[15] = 1;
        write_frames_csv(&p, &[f.clone()]).unwrap();
        assert_eq!(read_frames_csv(&p, 4, 4, Pollutant::Pm25).unwrap(), vec![f]);
        assert!(matches!(read_frames_csv(&p, 2, 2, Pollutant::Pm25), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn series_means_and_windows() {
        let base = sample_record();
        let mk = |t, pm25, dir| SensorRecord { timestamp: t, pm25, wind_direction: dir, ..base };
        let records =
            vec![mk(3600, 10.0, 350.0), mk(3700, 20.0, 10.0), mk(7200, 30.0, 90.0), mk(14400, 40.0, 90.0)];
        let series = hourly_series(&records, 3600);
        assert_eq!(series.iter().map(|s| s.bucket_start).collect::<Vec<_>>(), vec![3600, 7200, 14400]);
        assert_eq!(series[0].city_avg_pm25, 15.0);
        assert!(series[0].wind_direction.min(360.0 - series[0].wind_direction) < 1e-9);

        let series: Vec<SeriesRow> = (0..6)
            .map(|h| SeriesRow { bucket_start: if h < 4 { h * 3600 } else { (h + 1) * 3600 }, city_avg_pm25: h as f64, ..series[1] })
            .collect();
        let windows = series_windows(&series, 2, 3600);
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].inputs, vec![0.0, 1.0]);
        assert_eq!(windows[1].target, 3.0);
    }
}
