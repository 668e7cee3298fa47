use crate::domain::{Quantity, Unit};

use super::IngestError;

/// One pound-force over one square inch, in MPa (N/mm²):
/// 0.45359237 kg × 9.80665 m/s² / 645.16 mm².
pub const PSI_TO_MPA: f64 = 0.453_592_37 * 9.806_65 / 645.16;
pub const FOOT_TO_M: f64 = 0.3048;
pub const KELVIN_OFFSET: f64 = 273.15;

/// Unit strings accepted on input.
pub const SUPPORTED_UNITS: [&str; 10] = ["degC", "degF", "K", "psi", "MPa", "kPa", "ft", "m", "h", "min"];

/// Physical dimension expected by a payload field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Temperature,
    Stress,
    Length,
    Time,
}

impl Unit {
    pub fn dimension(self) -> Option<Dimension> {
        match self {
            Unit::DegC => Some(Dimension::Temperature),
            Unit::MPa => Some(Dimension::Stress),
            Unit::Meter => Some(Dimension::Length),
            Unit::Hour => Some(Dimension::Time),
            Unit::DegCHour => None,
        }
    }
}

/// Converts a magnitude in any supported unit to its canonical unit.
///
/// Conversions are applied in full double precision; nothing is rounded here.
pub fn normalize_unit(magnitude: f64, unit: &str) -> Result<Quantity, IngestError> {
    if !magnitude.is_finite() {
        return Err(IngestError::ValueOutOfRange {
            field: "magnitude".into(),
            detail: "not a finite number".into(),
        });
    }
    let (value, canonical) = match unit {
        "degC" | "°C" => (magnitude, Unit::DegC),
        "degF" | "°F" => ((magnitude - 32.0) * 5.0 / 9.0, Unit::DegC),
        "K" => (magnitude - KELVIN_OFFSET, Unit::DegC),
        "psi" => (magnitude * PSI_TO_MPA, Unit::MPa),
        "MPa" => (magnitude, Unit::MPa),
        "kPa" => (magnitude / 1000.0, Unit::MPa),
        "ft" => (magnitude * FOOT_TO_M, Unit::Meter),
        "m" => (magnitude, Unit::Meter),
        "h" => (magnitude, Unit::Hour),
        "min" => (magnitude / 60.0, Unit::Hour),
        other => return Err(IngestError::UnknownUnit(other.to_string())),
    };
    Ok(Quantity {
        magnitude: value,
        unit: canonical,
    })
}
