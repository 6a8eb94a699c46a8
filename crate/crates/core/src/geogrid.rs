//! Bins geolocated records into a lat/lon grid and hourly buckets, aggregates
//! each cell, and renders normalized pollution images.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fsum::ExactSum;
use crate::nn::Tensor;
use crate::record::{Pollutant, SensorRecord};

const KM_PER_DEGREE: f64 = 111.32;
/// Positions within this fraction of a cell below a boundary snap to the next
/// cell, absorbing decimal-degree representation error.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64, rows: usize, cols: usize) -> Result<Self> {
        let spec = Self { lat_min, lat_max, lon_min, lon_max, rows, cols };
        spec.validate()?;
        let (dy, dx) = spec.cell_edges_km();
        if dy < 1.0 || dx < 1.0 {
            log::warn!("grid cells are {dy:.3} km x {dx:.3} km, under the 1 km minimum edge");
        }
        Ok(spec)
    }

    /// 32x32 grid over the given box.
    pub fn square32(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        Self::new(lat_min, lat_max, lon_min, lon_max, 32, 32)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max].iter().all(|v| v.is_finite());
        if !finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::InvalidGrid(format!(
                "bounding box lat [{}, {}] lon [{}, {}] is empty",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGrid(format!("grid must be at least 1x1, got {}x{}", self.rows, self.cols)));
        }
        Ok(())
    }

    pub fn step_lat(&self) -> f64 {
        (self.lat_max - self.lat_min) / self.rows as f64
    }

    pub fn step_lon(&self) -> f64 {
        (self.lon_max - self.lon_min) / self.cols as f64
    }

    /// Physical (north-south, east-west) cell edge lengths at the box's mid latitude.
    pub fn cell_edges_km(&self) -> (f64, f64) {
        let mid = 0.5 * (self.lat_min + self.lat_max);
        (self.step_lat() * KM_PER_DEGREE, self.step_lon() * KM_PER_DEGREE * mid.to_radians().cos())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Center of cell `(row, col)` in degrees.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.lat_min + (row as f64 + 0.5) * self.step_lat(),
            self.lon_min + (col as f64 + 0.5) * self.step_lon(),
        )
    }
}

fn bin(value: f64, min: f64, max: f64, n: usize) -> usize {
    let pos = (value - min) / (max - min) * n as f64;
    ((pos + SNAP).floor() as usize).min(n - 1)
}

/// Cell `(row, col)` holding the point; the max edges belong to the last cell.
pub fn grid_index(lat: f64, lon: f64, spec: &GridSpec) -> Result<(usize, usize)> {
    if !spec.contains(lat, lon) {
        return Err(Error::OutOfBounds { lat, lon });
    }
    Ok((bin(lat, spec.lat_min, spec.lat_max, spec.rows), bin(lon, spec.lon_min, spec.lon_max, spec.cols)))
}

/// Start of the interval containing `timestamp`.
pub fn time_bucket(timestamp: i64, interval: i64) -> i64 {
    assert!(interval > 0, "interval must be positive");
    timestamp.div_euclid(interval) * interval
}

/// Per-cell aggregate of one pollutant over one time bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFrame {
    pub bucket_start: i64,
    pub pollutant: Pollutant,
    pub rows: usize,
    pub cols: usize,
    /// Row-major per-cell sums.
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GridFrame {
    pub fn empty(bucket_start: i64, pollutant: Pollutant, rows: usize, cols: usize) -> Self {
        Self { bucket_start, pollutant, rows, cols, sum: vec![0.0; rows * cols], count: vec![0; rows * cols] }
    }

    pub fn mean(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        (self.count[i] > 0).then(|| self.sum[i] / self.count[i] as f64)
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().map(|&c| c as u64).sum()
    }

    pub fn max_mean(&self) -> Option<f64> {
        self.sum
            .iter()
            .zip(&self.count)
            .filter(|(_, &c)| c > 0)
            .map(|(&s, &c)| s / c as f64)
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))))
    }
}

#[derive(Debug, Clone, Default)]
struct CellAccumulator {
    sum: ExactSum,
    count: u32,
}

/// Partial per-(bucket, cell) aggregates. Merging is associative and
/// commutative, so records may be split across workers arbitrarily.
#[derive(Debug, Clone)]
pub struct FrameAccumulator {
    spec: GridSpec,
    interval: i64,
    pollutant: Pollutant,
    cells: BTreeMap<(i64, usize), CellAccumulator>,
    accepted: usize,
    out_of_bounds: usize,
}

impl FrameAccumulator {
    pub fn new(spec: GridSpec, interval: i64, pollutant: Pollutant) -> Result<Self> {
        spec.validate()?;
        if interval <= 0 {
            return Err(Error::InvalidArgument(format!("interval must be positive, got {interval}")));
        }
        Ok(Self { spec, interval, pollutant, cells: BTreeMap::new(), accepted: 0, out_of_bounds: 0 })
    }

    pub fn add(&mut self, record: &SensorRecord) {
        match grid_index(record.lat, record.lon, &self.spec) {
            Ok((row, col)) => {
                let key = (time_bucket(record.timestamp, self.interval), row * self.spec.cols + col);
                let cell = self.cells.entry(key).or_default();
                cell.sum.add(self.pollutant.value(record));
                cell.count += 1;
                self.accepted += 1;
            }
            Err(_) => self.out_of_bounds += 1,
        }
    }

    pub fn merge(&mut self, other: FrameAccumulator) -> Result<()> {
        if self.spec != other.spec || self.interval != other.interval || self.pollutant != other.pollutant {
            return Err(Error::InvalidArgument("cannot merge accumulators with different settings".into()));
        }
        for (key, cell) in other.cells {
            let mine = self.cells.entry(key).or_default();
            mine.sum.merge(&cell.sum);
            mine.count += cell.count;
        }
        self.accepted += other.accepted;
        self.out_of_bounds += other.out_of_bounds;
        Ok(())
    }

    pub fn finish(self) -> Result<Aggregation> {
        if self.accepted == 0 {
            return Err(Error::EmptyInput);
        }
        let mut frames: Vec<GridFrame> = Vec::new();
        for ((bucket, cell), acc) in self.cells {
            if frames.last().is_none_or(|f| f.bucket_start != bucket) {
                frames.push(GridFrame::empty(bucket, self.pollutant, self.spec.rows, self.spec.cols));
            }
            let frame = frames.last_mut().expect("just pushed");
            frame.sum[cell] = acc.sum.value();
            frame.count[cell] = acc.count;
        }
        Ok(Aggregation { frames, accepted: self.accepted, out_of_bounds: self.out_of_bounds })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    /// One frame per populated bucket, sorted by `bucket_start`.
    pub frames: Vec<GridFrame>,
    pub accepted: usize,
    pub out_of_bounds: usize,
}

/// Groups records by (time bucket, grid cell). Out-of-bounds records are
/// dropped and tallied.
pub fn aggregate_frames(
    records: &[SensorRecord],
    spec: &GridSpec,
    interval: i64,
    pollutant: Pollutant,
) -> Result<Aggregation> {
    let mut acc = FrameAccumulator::new(*spec, interval, pollutant)?;
    for r in records {
        acc.add(r);
    }
    acc.finish()
}

/// Single-channel image with values in `[0, 1]`; empty cells are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PollutionImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
    pub scale: f64,
}

impl PollutionImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>, scale: f64) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{} pixels for a {rows}x{cols} image", pixels.len())));
        }
        if let Some(&bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::UnnormalizedInput(bad));
        }
        Ok(Self { rows, cols, pixels, scale })
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }

    /// `rows x cols x 1` tensor for the CNN.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.rows, self.cols, 1], self.pixels.clone()).expect("pixel count checked")
    }
}

/// `clamp(mean / scale, 0, 1)` per populated cell, 0 elsewhere.
pub fn render_image(frame: &GridFrame, scale: f64) -> Result<PollutionImage> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NonPositiveScale(scale));
    }
    let pixels = frame
        .sum
        .iter()
        .zip(&frame.count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64 / scale).clamp(0.0, 1.0) })
        .collect();
    Ok(PollutionImage { rows: frame.rows, cols: frame.cols, pixels, scale })
}

/// Largest cell mean over all frames: the global normalization scale.
pub fn max_cell_mean(frames: &[GridFrame]) -> Option<f64> {
    frames.iter().filter_map(GridFrame::max_mean).fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.max(m))))
}
