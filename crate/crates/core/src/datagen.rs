//! Seeded synthetic city: taxis random-walking through a PM2.5 field made of
//! wind-advected Gaussian plumes, plus noiseless reference stations.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geogrid::GridSpec;
use crate::record::SensorRecord;
use crate::seed::rng_for;

pub const STATION_COUNT: usize = 13;
/// 2018-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_514_764_800;
const METERS_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindConfig {
    /// m/s
    pub mean_speed: f64,
    /// Amplitude of the slow (30 h) speed cycle.
    pub speed_amplitude: f64,
    /// Standard deviation of the hour-to-hour gusts.
    pub speed_noise: f64,
    /// Degrees; the direction the air moves toward.
    pub mean_direction: f64,
    pub direction_swing: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        Self { mean_speed: 3.0, speed_amplitude: 1.5, speed_noise: 1.2, mean_direction: 250.0, direction_swing: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_taxis: usize,
    pub duration_hours: usize,
    pub grid: GridSpec,
    pub n_sources: usize,
    /// µg/m³ swing of the daily cycle.
    pub diurnal_amplitude: f64,
    pub wind: WindConfig,
    /// µg/m³ background level.
    pub baseline: f64,
    /// Standard deviation of the taxi sensor noise.
    pub noise_std: f64,
    /// How far plumes are carried downwind, in seconds of wind travel.
    pub plume_drift_s: f64,
    pub start: i64,
}

/// A bounding box of roughly 33 km x 34 km, so 32x32 cells stay above 1 km.
pub fn default_grid() -> GridSpec {
    GridSpec { lat_min: 35.70, lat_max: 36.00, lon_min: 128.40, lon_max: 128.78, rows: 32, cols: 32 }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_taxis: 40,
            duration_hours: 720,
            grid: default_grid(),
            n_sources: 6,
            diurnal_amplitude: 8.0,
            wind: WindConfig::default(),
            baseline: 12.0,
            noise_std: 4.0,
            plume_drift_s: 900.0,
            start: DEFAULT_START,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.duration_hours == 0 {
            return Err(Error::InvalidArgument("duration_hours must be at least 1".into()));
        }
        if self.start <= 0 {
            return Err(Error::InvalidArgument(format!("start timestamp must be positive, got {}", self.start)));
        }
        let nonneg = [
            self.diurnal_amplitude,
            self.baseline,
            self.noise_std,
            self.plume_drift_s,
            self.wind.mean_speed,
            self.wind.speed_amplitude,
            self.wind.speed_noise,
        ];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) || !self.wind.mean_direction.is_finite() {
            return Err(Error::InvalidArgument("synthetic amplitudes and wind settings must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlumeSource {
    pub lat: f64,
    pub lon: f64,
    /// Peak contribution in µg/m³.
    pub strength: f64,
    /// Plume width in meters.
    pub sigma_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyWeather {
    pub bucket_start: i64,
    pub temperature: f64,
    pub humidity: f64,
    pub pressure: f64,
    pub precipitation: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationReading {
    pub bucket_start: i64,
    pub station_id: usize,
    /// `None` when the station reported nothing for the hour.
    pub pm25: Option<f64>,
}

/// The deterministic pollution field. Within an hour it is constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthField {
    pub grid: GridSpec,
    pub baseline: f64,
    pub diurnal_amplitude: f64,
    pub plume_drift_s: f64,
    pub sources: Vec<PlumeSource>,
    pub weather: Vec<HourlyWeather>,
    /// Slow multi-day emission multiplier per hour, always positive.
    pub activity: Vec<f64>,
    pub stations: Vec<(f64, f64)>,
}

fn wrap(value: f64, min: f64, max: f64) -> f64 {
    min + (value - min).rem_euclid(max - min)
}

fn direction(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn uniform_in(rng: &mut ChaCha8Rng, grid: &GridSpec, margin: f64) -> (f64, f64) {
    let dl = (grid.lat_max - grid.lat_min) * margin;
    let dn = (grid.lon_max - grid.lon_min) * margin;
    (rng.random_range(grid.lat_min + dl..grid.lat_max - dl), rng.random_range(grid.lon_min + dn..grid.lon_max - dn))
}

impl SynthField {
    pub fn new(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        let mut rng = rng_for(config.seed, "synth.sources");
        let sources = (0..config.n_sources)
            .map(|_| {
                let (lat, lon) = uniform_in(&mut rng, &grid, 0.1);
                PlumeSource { lat, lon, strength: rng.random_range(25.0..70.0), sigma_m: rng.random_range(2500.0..6000.0) }
            })
            .collect();

        let mut rng = rng_for(config.seed, "synth.stations");
        let stations = (0..STATION_COUNT).map(|_| uniform_in(&mut rng, &grid, 0.15)).collect();

        let mut rng = rng_for(config.seed, "synth.weather");
        let wind = config.wind;
        let activity_phase = rng.random_range(0.0..2.0 * PI);
        let mut raining = false;
        let mut weather = Vec::with_capacity(config.duration_hours);
        let mut activity = Vec::with_capacity(config.duration_hours);
        for h in 0..config.duration_hours {
            let hf = h as f64;
            let hod = (h % 24) as f64;
            let temperature = 14.0 + 7.0 * (2.0 * PI * (hod - 9.0) / 24.0).sin() + gauss(&mut rng, 1.5);
            let humidity = (65.0 - 1.8 * (temperature - 14.0) + gauss(&mut rng, 6.0)).clamp(5.0, 100.0);
            raining = if raining { rng.random::<f64>() > 0.25 } else { rng.random::<f64>() < 0.04 };
            let precipitation = if raining { 0.2 + gauss(&mut rng, 2.0).abs() } else { 0.0 };
            let wind_speed = (wind.mean_speed
                + wind.speed_amplitude * (2.0 * PI * hf / 30.0).sin()
                + gauss(&mut rng, wind.speed_noise.max(f64::MIN_POSITIVE)))
            .max(0.0);
            let wind_direction = direction(
                wind.mean_direction + wind.direction_swing * (2.0 * PI * hf / 50.0).sin() + gauss(&mut rng, 20.0),
            );
            let pressure = 1013.0 + 4.0 * (2.0 * PI * hf / 120.0).sin() + gauss(&mut rng, 1.0);
            weather.push(HourlyWeather {
                bucket_start: config.start + 3600 * h as i64,
                temperature,
                humidity,
                pressure,
                precipitation,
                wind_speed,
                wind_direction,
            });
            activity.push(1.0 + 0.7 * (2.0 * PI * hf / 96.0 + activity_phase).sin());
        }
        Ok(Self {
            grid,
            baseline: config.baseline,
            diurnal_amplitude: config.diurnal_amplitude,
            plume_drift_s: config.plume_drift_s,
            sources,
            weather,
            activity,
            stations,
        })
    }

    pub fn hours(&self) -> usize {
        self.weather.len()
    }

    /// Plume center for `source` during `hour`, carried downwind and wrapped into the box.
    pub fn plume_center(&self, source: &PlumeSource, hour: usize) -> (f64, f64) {
        let w = &self.weather[hour];
        let travel = w.wind_speed * self.plume_drift_s;
        let (s, c) = w.wind_direction.to_radians().sin_cos();
        let lat = source.lat + travel * c / METERS_PER_DEGREE;
        let lon = source.lon + travel * s / (METERS_PER_DEGREE * source.lat.to_radians().cos());
        (wrap(lat, self.grid.lat_min, self.grid.lat_max), wrap(lon, self.grid.lon_min, self.grid.lon_max))
    }

    /// PM2.5 in µg/m³ at a point during `hour`.
    pub fn pm25(&self, lat: f64, lon: f64, hour: usize) -> f64 {
        let w = &self.weather[hour];
        let hod = (hour % 24) as f64;
        let diurnal = self.diurnal_amplitude * (2.0 * PI * (hod - 8.0) / 24.0).sin();
        let dilution = 3.0 / (3.0 + w.wind_speed);
        let weather_term = 0.15 * (w.humidity - 65.0) - 2.5 * w.precipitation;
        let cos_lat = lat.to_radians().cos();
        let plumes: f64 = self
            .sources
            .iter()
            .map(|src| {
                let (clat, clon) = self.plume_center(src, hour);
                let dy = (lat - clat) * METERS_PER_DEGREE;
                let dx = (lon - clon) * METERS_PER_DEGREE * cos_lat;
                src.strength * (-(dx * dx + dy * dy) / (2.0 * src.sigma_m * src.sigma_m)).exp()
            })
            .sum();
        (self.baseline + diurnal + weather_term + self.activity[hour] * dilution * plumes).max(0.0)
    }

    pub fn station_readings(&self, start: i64) -> Vec<StationReading> {
        let mut out = Vec::with_capacity(self.hours() * self.stations.len());
        for h in 0..self.hours() {
            for (id, &(lat, lon)) in self.stations.iter().enumerate() {
                out.push(StationReading {
                    bucket_start: start + 3600 * h as i64,
                    station_id: id,
                    pm25: Some(self.pm25(lat, lon, h)),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub records: Vec<SensorRecord>,
    pub stations: Vec<StationReading>,
    pub weather: Vec<HourlyWeather>,
}

struct Taxi {
    rng: ChaCha8Rng,
    lat: f64,
    lon: f64,
    heading: f64,
}

impl Taxi {
    /// One minute of driving at 15-35 km/h, bouncing off the box edges.
    fn advance(&mut self, grid: &GridSpec) {
        self.heading += gauss(&mut self.rng, 0.35);
        let dist = self.rng.random_range(250.0..580.0);
        let (s, c) = self.heading.sin_cos();
        let mut lat = self.lat + dist * c / METERS_PER_DEGREE;
        let mut lon = self.lon + dist * s / (METERS_PER_DEGREE * self.lat.to_radians().cos());
        if !(grid.lat_min..=grid.lat_max).contains(&lat) {
            lat = (2.0 * if lat < grid.lat_min { grid.lat_min } else { grid.lat_max } - lat).clamp(grid.lat_min, grid.lat_max);
            self.heading = PI - self.heading;
        }
        if !(grid.lon_min..=grid.lon_max).contains(&lon) {
            lon = (2.0 * if lon < grid.lon_min { grid.lon_min } else { grid.lon_max } - lon).clamp(grid.lon_min, grid.lon_max);
            self.heading = -self.heading;
        }
        self.lat = lat;
        self.lon = lon;
    }
}

/// Generates taxi records (one per taxi per minute, time-major) and hourly
/// station readings.
pub fn synth_dataset(config: &SynthConfig) -> Result<SynthData> {
    let field = SynthField::new(config)?;
    let grid = config.grid;
    let mut taxis: Vec<Taxi> = (0..config.n_taxis)
        .map(|i| {
            let mut rng = rng_for(config.seed, &format!("synth.taxi.{i}"));
            let (lat, lon) = uniform_in(&mut rng, &grid, 0.0);
            let heading = rng.random_range(0.0..2.0 * PI);
            Taxi { rng, lat, lon, heading }
        })
        .collect();

    let mut records = Vec::with_capacity(config.n_taxis * config.duration_hours * 60);
    for (h, w) in field.weather.iter().enumerate() {
        for minute in 0..60 {
            let timestamp = w.bucket_start + 60 * minute;
            for taxi in &mut taxis {
                taxi.advance(&grid);
                let truth = field.pm25(taxi.lat, taxi.lon, h);
                let pm25 = (truth + gauss(&mut taxi.rng, config.noise_std.max(f64::MIN_POSITIVE))).max(0.0);
                let pm10 = (1.6 * pm25 + gauss(&mut taxi.rng, 2.0)).max(0.0);
                records.push(SensorRecord {
                    timestamp,
                    lat: taxi.lat,
                    lon: taxi.lon,
                    pm25,
                    pm10,
                    co: 0.3 + 0.01 * pm25,
                    no2: 0.015 + 4e-4 * pm25,
                    so2: 0.004 + 5e-5 * pm25,
                    temperature: w.temperature,
                    humidity: w.humidity,
                    pressure: w.pressure,
                    precipitation: w.precipitation,
                    wind_speed: w.wind_speed,
                    wind_direction: w.wind_direction,
                });
            }
        }
    }
    Ok(SynthData { records, stations: field.station_readings(config.start), weather: field.weather })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, taxis: usize, hours: usize) -> SynthConfig {
        SynthConfig { seed, n_taxis: taxis, duration_hours: hours, ..SynthConfig::default() }
    }

    #[test]
    fn counts_and_validity() {
        let data = synth_dataset(&small(3, 5, 4)).unwrap();
        assert_eq!(data.records.len(), 5 * 4 * 60);
        assert_eq!(data.stations.len(), 4 * STATION_COUNT);
        let grid = default_grid();
        for r in &data.records {
            assert_eq!(r.validate(), Ok(()), "{r:?}");
            assert!(grid.contains(r.lat, r.lon));
        }
        assert!(data.stations.iter().all(|s| s.pm25.is_some_and(|v| v >= 0.0)));
    }

    #[test]
    fn no_taxis_still_has_stations() {
        let data = synth_dataset(&small(3, 0, 2)).unwrap();
        assert!(data.records.is_empty());
        assert_eq!(data.stations.len(), 2 * STATION_COUNT);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_dataset(&small(11, 3, 3)).unwrap(), synth_dataset(&small(11, 3, 3)).unwrap());
        assert_ne!(synth_dataset(&small(11, 3, 3)).unwrap().records, synth_dataset(&small(12, 3, 3)).unwrap().records);
    }

    #[test]
    fn taxi_streams_do_not_depend_on_fleet_size() {
        let a = synth_dataset(&small(5, 2, 2)).unwrap();
        let b = synth_dataset(&small(5, 4, 2)).unwrap();
        let first_of = |d: &SynthData, n: usize| d.records.iter().step_by(n).cloned().collect::<Vec<_>>();
        assert_eq!(first_of(&a, 2), first_of(&b, 4));
    }

    #[test]
    fn stations_read_the_field_exactly() {
        let config = small(8, 0, 3);
        let field = SynthField::new(&config).unwrap();
        let data = synth_dataset(&config).unwrap();
        for s in &data.stations {
            let h = ((s.bucket_start - config.start) / 3600) as usize;
            let (lat, lon) = field.stations[s.station_id];
            assert_eq!(s.pm25, Some(field.pm25(lat, lon, h)));
        }
    }

    #[test]
    fn stronger_emission_never_lowers_a_station() {
        let field = SynthField::new(&small(21, 0, 48)).unwrap();
        for k in 0..field.sources.len() {
            let mut louder = field.clone();
            louder.sources[k].strength *= 1.5;
            for h in 0..field.hours() {
                for &(lat, lon) in &field.stations {
                    assert!(louder.pm25(lat, lon, h) >= field.pm25(lat, lon, h));
                }
            }
        }
    }

    #[test]
    fn rejects_zero_hours() {
        assert!(synth_dataset(&small(1, 1, 0)).is_err());
    }
}
