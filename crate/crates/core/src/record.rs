use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// One timestamped, geolocated reading from a mobile sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRecord {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    pub pm25: f64,
    pub pm10: f64,
    pub co: f64,
    pub no2: f64,
    pub so2: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub pressure: f64,
    pub precipitation: f64,
    pub wind_speed: f64,
    /// Degrees in `[0, 360)`.
    pub wind_direction: f64,
}

/// Why a record fails validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordViolation {
    NonPositiveTimestamp,
    NonFinite(&'static str),
    NegativePollutant(&'static str),
    HumidityOutOfRange,
    WindDirectionOutOfRange,
    NegativeMagnitude(&'static str),
}

impl fmt::Display for RecordViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordViolation::NonPositiveTimestamp => write!(f, "timestamp must be positive"),
            RecordViolation::NonFinite(field) => write!(f, "{field} is not finite"),
            RecordViolation::NegativePollutant(field) => write!(f, "{field} is negative"),
            RecordViolation::HumidityOutOfRange => write!(f, "humidity outside [0, 100]"),
            RecordViolation::WindDirectionOutOfRange => write!(f, "wind direction outside [0, 360)"),
            RecordViolation::NegativeMagnitude(field) => write!(f, "{field} is negative"),
        }
    }
}

impl SensorRecord {
    pub fn validate(&self) -> Result<(), RecordViolation> {
        if self.timestamp <= 0 {
            return Err(RecordViolation::NonPositiveTimestamp);
        }
        let fields = [
            ("lat", self.lat),
            ("lon", self.lon),
            ("pm25", self.pm25),
            ("pm10", self.pm10),
            ("co", self.co),
            ("no2", self.no2),
            ("so2", self.so2),
            ("temperature", self.temperature),
            ("humidity", self.humidity),
            ("pressure", self.pressure),
            ("precipitation", self.precipitation),
            ("wind_speed", self.wind_speed),
            ("wind_direction", self.wind_direction),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(RecordViolation::NonFinite(name));
        }
        for pollutant in Pollutant::ALL {
            if pollutant.value(self) < 0.0 {
                return Err(RecordViolation::NegativePollutant(pollutant.name()));
            }
        }
        if !(0.0..=100.0).contains(&self.humidity) {
            return Err(RecordViolation::HumidityOutOfRange);
        }
        if !(0.0..360.0).contains(&self.wind_direction) {
            return Err(RecordViolation::WindDirectionOutOfRange);
        }
        if self.precipitation < 0.0 {
            return Err(RecordViolation::NegativeMagnitude("precipitation"));
        }
        if self.wind_speed < 0.0 {
            return Err(RecordViolation::NegativeMagnitude("wind_speed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pollutant {
    Pm25,
    Pm10,
    Co,
    No2,
    So2,
}

impl Pollutant {
    pub const ALL: [Pollutant; 5] = [Pollutant::Pm25, Pollutant::Pm10, Pollutant::Co, Pollutant::No2, Pollutant::So2];

    pub fn value(self, record: &SensorRecord) -> f64 {
        match self {
            Pollutant::Pm25 => record.pm25,
            Pollutant::Pm10 => record.pm10,
            Pollutant::Co => record.co,
            Pollutant::No2 => record.no2,
            Pollutant::So2 => record.so2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pollutant::Pm25 => "pm25",
            Pollutant::Pm10 => "pm10",
            Pollutant::Co => "co",
            Pollutant::No2 => "no2",
            Pollutant::So2 => "so2",
        }
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pollutant::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown pollutant '{s}'")))
    }
}

#[cfg(test)]
pub(crate) fn sample_record() -> SensorRecord {
    SensorRecord {
        timestamp: 1_504_224_000,
        lat: 35.87,
        lon: 128.6,
        pm25: 22.0,
        pm10: 40.0,
        co: 0.4,
        no2: 0.02,
        so2: 0.004,
        temperature: 21.5,
        humidity: 60.0,
        pressure: 1012.0,
        precipitation: 0.0,
        wind_speed: 2.5,
        wind_direction: 270.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        assert_eq!(sample_record().validate(), Ok(()));
        let r = SensorRecord { humidity: 150.0, ..sample_record() };
        assert_eq!(r.validate(), Err(RecordViolation::HumidityOutOfRange));
        let r = SensorRecord { wind_direction: 360.0, ..sample_record() };
        assert_eq!(r.validate(), Err(RecordViolation::WindDirectionOutOfRange));
        let r = SensorRecord { co: -0.1, ..sample_record() };
        assert_eq!(r.validate(), Err(RecordViolation::NegativePollutant("co")));
        let r = SensorRecord { timestamp: 0, ..sample_record() };
        assert_eq!(r.validate(), Err(RecordViolation::NonPositiveTimestamp));
        let r = SensorRecord { pm25: f64::NAN, ..sample_record() };
        assert_eq!(r.validate(), Err(RecordViolation::NonFinite("pm25")));
    }

    #[test]
    fn pollutant_names_round_trip() {
        for p in Pollutant::ALL {
            assert_eq!(p.name().parse::<Pollutant>().unwrap(), p);
        }
        assert!("ozone".parse::<Pollutant>().is_err());
    }
}
