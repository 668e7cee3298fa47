//! Maturity-method strength estimation.
//!
//! * Nurse–Saul temperature–time factor, `M = ∫ max(T − T₀, 0) dt` in °C·h.
//! * Arrhenius equivalent age at the reference temperature,
//!   `tₑ = ∫ exp(−Q (1/T − 1/Tₛ)) dt` with absolute temperatures.
//! * Hyperbolic strength–maturity relation
//!   `S(M) = Sᵤ · k(M − M₀) / (1 + k(M − M₀))`, zero for `M ≤ M₀`.
//!
//! Histories are integrated piecewise-linearly between samples. Intervals
//! longer than `max_gap_h` are never bridged silently.

mod calibrate;
mod csvio;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{add_hours, hours_between, Quantity, TemperatureHistory, Timestamp, Unit};

pub use calibrate::{calibrate, CalibrationPair, ModelParams};
pub use csvio::{read_calibration_csv, read_temperature_csv};

const KELVIN: f64 = 273.15;

/// Forecast search step, hours.
pub const FORECAST_STEP_H: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaturityError {
    #[error("at least two temperature samples are required")]
    TooFewSamples,
    #[error("sampling gap of {hours:.2} h between {from} and {to} exceeds the interpolation limit")]
    GapTooLarge {
        from: Timestamp,
        to: Timestamp,
        hours: f64,
    },
    #[error("invalid maturity configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient calibration data: {0}")]
    InsufficientData(String),
    #[error("calibration did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaturityConfig {
    /// Datum temperature T₀, °C.
    pub datum_temp_c: f64,
    /// Activation energy over the gas constant, Q = E/R, in kelvin.
    pub activation_ratio_k: f64,
    /// Reference temperature Tₛ for equivalent age, °C. Also the standard
    /// lab-curing temperature.
    pub ref_temp_c: f64,
    /// Longest sampling interval bridged by interpolation, hours.
    pub max_gap_h: f64,
}

impl Default for MaturityConfig {
    fn default() -> Self {
        Self {
            datum_temp_c: 0.0,
            activation_ratio_k: 5000.0,
            ref_temp_c: 23.0,
            max_gap_h: 2.0,
        }
    }
}

impl MaturityConfig {
    pub fn validate(&self) -> Result<(), MaturityError> {
        if !(self.datum_temp_c < 40.0) {
            return Err(MaturityError::InvalidConfig("datum temperature must be below 40 degC".into()));
        }
        if !(self.activation_ratio_k > 0.0) {
            return Err(MaturityError::InvalidConfig("activation ratio must be positive".into()));
        }
        if !(self.max_gap_h > 0.0) {
            return Err(MaturityError::InvalidConfig("max gap must be positive".into()));
        }
        Ok(())
    }

    /// Maturity of a specimen held at the reference (lab-curing)
    /// temperature for `age_days`.
    pub fn lab_cured_maturity(&self, age_days: f64) -> f64 {
        (self.ref_temp_c - self.datum_temp_c).max(0.0) * age_days * 24.0
    }
}

/// Exact integral over `dt_h` hours of `max(T − datum, 0)` where `T` runs
/// linearly from `t_a` to `t_b`.
fn clamped_segment(t_a: f64, t_b: f64, datum: f64, dt_h: f64) -> f64 {
    let a = t_a - datum;
    let b = t_b - datum;
    if a >= 0.0 && b >= 0.0 {
        0.5 * (a + b) * dt_h
    } else if a <= 0.0 && b <= 0.0 {
        0.0
    } else {
        // one endpoint above datum: triangle above the crossing point
        let pos = a.max(b);
        let frac = pos / (a - b).abs();
        0.5 * pos * frac * dt_h
    }
}

/// A sampling interval longer than the interpolation limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGap {
    pub from: Timestamp,
    pub to: Timestamp,
    pub hours: f64,
}

/// Running Nurse–Saul integral over samples appended in time order.
///
/// Over-long gaps contribute nothing and are recorded, which makes the
/// running value a conservative lower bound whenever data is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityAccumulator {
    datum_temp_c: f64,
    max_gap_h: f64,
    maturity: f64,
    last: Option<(Timestamp, f64)>,
    first: Option<Timestamp>,
    samples: usize,
    gaps: Vec<SamplingGap>,
}

impl MaturityAccumulator {
    pub fn new(cfg: &MaturityConfig) -> Self {
        Self {
            datum_temp_c: cfg.datum_temp_c,
            max_gap_h: cfg.max_gap_h,
            maturity: 0.0,
            last: None,
            first: None,
            samples: 0,
            gaps: Vec::new(),
        }
    }

    /// Returns `false` (and changes nothing) when `t` is not after the last
    /// sample; the caller must then rebuild from a sorted history.
    pub fn push(&mut self, t: Timestamp, temp_c: f64) -> bool {
        if let Some((lt, ltemp)) = self.last {
            if t <= lt {
                return false;
            }
            let dt = hours_between(lt, t);
            if dt > self.max_gap_h {
                self.gaps.push(SamplingGap {
                    from: lt,
                    to: t,
                    hours: dt,
                });
            } else {
                self.maturity += clamped_segment(ltemp, temp_c, self.datum_temp_c, dt);
            }
        } else {
            self.first = Some(t);
        }
        self.last = Some((t, temp_c));
        self.samples += 1;
        true
    }

    pub fn from_history(history: &TemperatureHistory, cfg: &MaturityConfig) -> Self {
        let mut acc = Self::new(cfg);
        for &(t, temp) in history.samples() {
            acc.push(t, temp);
        }
        acc
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn gaps(&self) -> &[SamplingGap] {
        &self.gaps
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn first_time(&self) -> Option<Timestamp> {
        self.first
    }

    pub fn last_sample(&self) -> Option<(Timestamp, f64)> {
        self.last
    }
}

/// Nurse–Saul maturity of a complete history, °C·h.
pub fn nurse_saul_maturity(
    history: &TemperatureHistory,
    cfg: &MaturityConfig,
) -> Result<Quantity, MaturityError> {
    cfg.validate()?;
    if history.len() < 2 {
        return Err(MaturityError::TooFewSamples);
    }
    let acc = MaturityAccumulator::from_history(history, cfg);
    if let Some(g) = acc.gaps().first() {
        return Err(MaturityError::GapTooLarge {
            from: g.from,
            to: g.to,
            hours: g.hours,
        });
    }
    Ok(Quantity {
        magnitude: acc.maturity(),
        unit: Unit::DegCHour,
    })
}

/// Arrhenius age-conversion factor relative to the reference temperature.
pub fn age_factor(temp_c: f64, cfg: &MaturityConfig) -> f64 {
    let t = temp_c + KELVIN;
    let ts = cfg.ref_temp_c + KELVIN;
    (-cfg.activation_ratio_k * (1.0 / t - 1.0 / ts)).exp()
}

/// Equivalent age at the reference temperature, hours.
pub fn equivalent_age(
    history: &TemperatureHistory,
    cfg: &MaturityConfig,
) -> Result<Quantity, MaturityError> {
    cfg.validate()?;
    let samples = history.samples();
    if samples.len() < 2 {
        return Err(MaturityError::TooFewSamples);
    }
    let mut total = 0.0;
    for w in samples.windows(2) {
        let dt = hours_between(w[0].0, w[1].0);
        if dt > cfg.max_gap_h {
            return Err(MaturityError::GapTooLarge {
                from: w[0].0,
                to: w[1].0,
                hours: dt,
            });
        }
        if w[0].1 == w[1].1 {
            total += age_factor(w[0].1, cfg) * dt;
        } else {
            total += 0.5 * (age_factor(w[0].1, cfg) + age_factor(w[1].1, cfg)) * dt;
        }
    }
    Ok(Quantity {
        magnitude: total,
        unit: Unit::Hour,
    })
}

/// Calibrated hyperbolic strength–maturity relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthMaturityModel {
    /// Limiting strength Sᵤ, MPa.
    pub su_mpa: f64,
    /// Rate constant k, 1/(°C·h).
    pub k_rate: f64,
    /// Offset maturity M₀, °C·h.
    pub m0: f64,
    pub residual_se_mpa: f64,
    pub calibrated_at: Timestamp,
    pub n_points: usize,
    /// Incremented on every recalibration; 0 for the initial fit.
    #[serde(default)]
    pub revision: u32,
}

impl StrengthMaturityModel {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            su_mpa: self.su_mpa,
            k_rate: self.k_rate,
            m0: self.m0,
        }
    }

    /// Mean strength at maturity `m`, MPa.
    pub fn strength_at(&self, m: f64) -> f64 {
        self.params().strength_at(m)
    }

    /// Smallest maturity at which the mean strength reaches `target_mpa`,
    /// or `None` if `target_mpa ≥ Sᵤ`.
    pub fn maturity_for(&self, target_mpa: f64) -> Option<f64> {
        if target_mpa <= 0.0 {
            return Some(self.m0);
        }
        if target_mpa >= self.su_mpa {
            return None;
        }
        let r = target_mpa / self.su_mpa;
        Some(self.m0 + r / (1.0 - r) / self.k_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionBasis {
    Predicted,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthPrediction {
    pub mean_mpa: f64,
    pub lower_mpa: f64,
    pub upper_mpa: f64,
    pub maturity_degc_h: f64,
    pub basis: PredictionBasis,
}

impl StrengthPrediction {
    /// Band of ±2 residual standard errors around `mean`, floored at zero.
    pub fn band(mean: f64, se: f64, maturity: f64) -> Self {
        let mean = mean.max(0.0);
        Self {
            mean_mpa: mean,
            lower_mpa: (mean - 2.0 * se).max(0.0),
            upper_mpa: mean + 2.0 * se,
            maturity_degc_h: maturity,
            basis: PredictionBasis::Predicted,
        }
    }
}

/// Strength estimate with a ±2 SE band at the given maturity.
pub fn predict_strength(model: &StrengthMaturityModel, maturity: f64) -> StrengthPrediction {
    let m = maturity.max(0.0);
    StrengthPrediction::band(model.strength_at(m), model.residual_se_mpa, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Forecast {
    Reached {
        at: Timestamp,
        /// Hours from the start of the history (or `start` when empty).
        hours_after_start: f64,
        maturity_degc_h: f64,
    },
    Unreachable,
}

/// Earliest time the predicted mean strength reaches `threshold_mpa` if the
/// element continues at `assumed_temp_c` after its last sample.
///
/// The search runs on a [`FORECAST_STEP_H`] grid from the last sample (or
/// from `start` when the history is empty). Maturity accumulated so far uses
/// the conservative running integral, so sampling gaps do not abort the
/// forecast.
pub fn forecast_readiness(
    model: &StrengthMaturityModel,
    history: &TemperatureHistory,
    start: Timestamp,
    assumed_temp_c: f64,
    threshold_mpa: f64,
    cfg: &MaturityConfig,
) -> Result<Forecast, MaturityError> {
    cfg.validate()?;
    if !(threshold_mpa.is_finite() && threshold_mpa > 0.0) {
        return Err(MaturityError::InvalidInput(format!(
            "threshold must be positive, got {threshold_mpa}"
        )));
    }
    if !assumed_temp_c.is_finite() {
        return Err(MaturityError::InvalidInput("assumed temperature is not finite".into()));
    }
    let acc = MaturityAccumulator::from_history(history, cfg);
    let so_far = acc.maturity();
    let origin = acc.last_sample().map(|s| s.0).unwrap_or(start);
    let first = acc.first_time().unwrap_or(start);
    let rate = (assumed_temp_c - cfg.datum_temp_c).max(0.0);
    let reached = |steps: u64| -> Forecast {
        let hours = steps as f64 * FORECAST_STEP_H;
        let at = add_hours(origin, hours);
        Forecast::Reached {
            at,
            hours_after_start: hours_between(first, at),
            maturity_degc_h: so_far + rate * hours,
        }
    };
    let hits = |steps: u64| {
        model.strength_at(so_far + rate * steps as f64 * FORECAST_STEP_H) >= threshold_mpa
    };

    if hits(0) {
        return Ok(reached(0));
    }
    if rate <= 0.0 {
        return Ok(Forecast::Unreachable);
    }
    let Some(target) = model.maturity_for(threshold_mpa) else {
        return Ok(Forecast::Unreachable);
    };
    let mut steps = ((target - so_far) / (rate * FORECAST_STEP_H)).ceil().max(0.0) as u64;
    while !hits(steps) {
        steps += 1;
    }
    while steps > 0 && hits(steps - 1) {
        steps -= 1;
    }
    Ok(reached(steps))
}
