use std::io::Read;

use serde::Deserialize;

use super::{CalibrationPair, MaturityError};
use crate::domain::{ElementId, TemperatureHistory, Timestamp};

#[derive(Deserialize)]
struct TempRow {
    timestamp: Timestamp,
    temp_c: f64,
}

#[derive(Deserialize)]
struct PairRow {
    maturity_degc_h: f64,
    strength_mpa: f64,
}

fn csv_err(e: impl std::fmt::Display) -> MaturityError {
    MaturityError::Csv(e.to_string())
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), MaturityError> {
    let headers = reader.headers().map_err(csv_err)?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(MaturityError::Csv(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Reads `timestamp,temp_c` rows (header required).
pub fn read_temperature_csv(
    input: impl Read,
    element: ElementId,
) -> Result<TemperatureHistory, MaturityError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut reader, &["timestamp", "temp_c"])?;
    let mut samples = Vec::new();
    for row in reader.deserialize::<TempRow>() {
        let row = row.map_err(csv_err)?;
        samples.push((row.timestamp, row.temp_c));
    }
    TemperatureHistory::new(element, samples).map_err(csv_err)
}

/// Reads `maturity_degc_h,strength_mpa` rows (header required).
pub fn read_calibration_csv(input: impl Read) -> Result<Vec<CalibrationPair>, MaturityError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut reader, &["maturity_degc_h", "strength_mpa"])?;
    reader
        .deserialize::<PairRow>()
        .map(|row| row.map(|r| (r.maturity_degc_h, r.strength_mpa)).map_err(csv_err))
        .collect()
}
