//! PM2.5 air-quality classes and reference-station averaging.

use std::fmt;

use crate::error::{Error, Result};
use crate::fsum::ExactSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AirQualityLabel {
    Good = 0,
    Moderate = 1,
    Unhealthy = 2,
    Hazardous = 3,
}

impl AirQualityLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [AirQualityLabel; 4] =
        [AirQualityLabel::Good, AirQualityLabel::Moderate, AirQualityLabel::Unhealthy, AirQualityLabel::Hazardous];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }
}

impl fmt::Display for AirQualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AirQualityLabel::Good => "good",
            AirQualityLabel::Moderate => "moderate",
            AirQualityLabel::Unhealthy => "unhealthy",
            AirQualityLabel::Hazardous => "hazardous",
        };
        f.write_str(name)
    }
}

/// Upper bounds (inclusive) of Good, Moderate and Unhealthy in µg/m³.
pub const PM25_THRESHOLDS: [f64; 3] = [15.0, 35.0, 75.0];

pub fn classify_pm25(value: f64) -> Result<AirQualityLabel> {
    if value.is_nan() || value < 0.0 {
        return Err(Error::NegativeValue(value));
    }
    let code = PM25_THRESHOLDS.iter().take_while(|&&t| value > t).count();
    Ok(AirQualityLabel::ALL[code])
}

/// Mean of the present readings; missing stations are skipped.
pub fn station_average(values: &[Option<f64>]) -> Result<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let reference = *present.first().ok_or(Error::AllMissing)?;
    // shifted by the first reading so identical readings average to themselves exactly
    let offset: ExactSum = present.iter().map(|v| v - reference).collect();
    Ok(reference + offset.value() / present.len() as f64)
}
