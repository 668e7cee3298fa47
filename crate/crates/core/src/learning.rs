//! Validation-and-learning loop: residuals between predicted and measured
//! strength, policy-driven recalibration, and per-mix confidence.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Cured, ElementId, Timestamp};
use crate::maturity::{calibrate, CalibrationPair, MaturityError, PredictionBasis, StrengthMaturityModel, StrengthPrediction};
use crate::rules::MeasuredStrength;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearningError {
    #[error("residuals must compare against a predicted value, not a measured one")]
    MeasuredBasis,
    #[error(transparent)]
    Calibration(#[from] MaturityError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub element: ElementId,
    pub mix_id: String,
    pub predicted_mpa: f64,
    pub measured_mpa: f64,
    pub age_days: f64,
    pub at: Timestamp,
    /// Maturity the prediction was made at; used as the abscissa on refit.
    pub maturity_degc_h: f64,
    pub cured: Cured,
}

impl ResidualEntry {
    /// measured − predicted, MPa.
    pub fn error(&self) -> f64 {
        self.measured_mpa - self.predicted_mpa
    }
}

/// Append-only record of prediction errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualLog {
    entries: Vec<ResidualEntry>,
}

impl ResidualLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ResidualEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_mix<'a>(&'a self, mix_id: &'a str) -> impl Iterator<Item = &'a ResidualEntry> + 'a {
        self.entries.iter().filter(move |e| e.mix_id == mix_id)
    }

    /// Appends one entry. The prediction must be the one the model gave at
    /// the moment the measured result arrived.
    pub fn record(
        &mut self,
        element: &ElementId,
        mix_id: &str,
        prediction: &StrengthPrediction,
        measured: &MeasuredStrength,
    ) -> Result<&ResidualEntry, LearningError> {
        if prediction.basis != PredictionBasis::Predicted {
            return Err(LearningError::MeasuredBasis);
        }
        self.entries.push(ResidualEntry {
            element: element.clone(),
            mix_id: mix_id.to_string(),
            predicted_mpa: prediction.mean_mpa,
            measured_mpa: measured.strength_mpa,
            age_days: measured.age_days,
            at: measured.at,
            maturity_degc_h: prediction.maturity_degc_h,
            cured: measured.cured,
        });
        Ok(self.entries.last().unwrap())
    }

    /// CSV with header `element,mix_id,predicted_mpa,measured_mpa,age_days,at`.
    pub fn write_csv(&self, out: impl Write) -> Result<(), LearningError> {
        #[derive(Serialize)]
        struct Row<'a> {
            element: &'a str,
            mix_id: &'a str,
            predicted_mpa: f64,
            measured_mpa: f64,
            age_days: f64,
            at: String,
        }
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(Row {
                element: e.element.as_str(),
                mix_id: &e.mix_id,
                predicted_mpa: e.predicted_mpa,
                measured_mpa: e.measured_mpa,
                age_days: e.age_days,
                at: e.at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            })
            .map_err(|e| LearningError::Csv(e.to_string()))?;
        }
        if self.entries.is_empty() {
            w.write_record(["element", "mix_id", "predicted_mpa", "measured_mpa", "age_days", "at"])
                .map_err(|e| LearningError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| LearningError::Csv(e.to_string()))
    }
}

/// Pure form of [`ResidualLog::record`].
pub fn record_residual(
    log: &ResidualLog,
    element: &ElementId,
    mix_id: &str,
    prediction: &StrengthPrediction,
    measured: &MeasuredStrength,
) -> Result<ResidualLog, LearningError> {
    let mut next = log.clone();
    next.record(element, mix_id, prediction, measured)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecalibrationPolicy {
    pub min_new_entries: usize,
    /// Trigger when |mean error| exceeds this many residual standard errors.
    pub bias_se_multiple: f64,
}

impl Default for RecalibrationPolicy {
    fn default() -> Self {
        Self {
            min_new_entries: 6,
            bias_se_multiple: 1.0,
        }
    }
}

/// Refits `model` on its base pairs plus every logged `(maturity, measured)`
/// point when the policy triggers.
///
/// Only entries for `mix_id` count. "New" entries are those dated after the
/// model's `calibrated_at`. The refit starts from the current parameters;
/// the returned model carries `revision + 1` and is dated at the newest
/// entry used.
pub fn recalibrate(
    model: &StrengthMaturityModel,
    base_pairs: &[CalibrationPair],
    log: &ResidualLog,
    mix_id: &str,
    policy: &RecalibrationPolicy,
) -> Result<(StrengthMaturityModel, bool), LearningError> {
    let fresh: Vec<&ResidualEntry> = log
        .for_mix(mix_id)
        .filter(|e| e.at > model.calibrated_at)
        .collect();
    if fresh.len() < policy.min_new_entries {
        return Ok((model.clone(), false));
    }
    let mean_error = fresh.iter().map(|e| e.error()).sum::<f64>() / fresh.len() as f64;
    if mean_error.abs() <= policy.bias_se_multiple * model.residual_se_mpa {
        return Ok((model.clone(), false));
    }
    let mut pairs: Vec<CalibrationPair> = base_pairs.to_vec();
    pairs.extend(log.for_mix(mix_id).map(|e| (e.maturity_degc_h, e.measured_mpa)));
    let newest = fresh.iter().map(|e| e.at).max().expect("non-empty");
    let mut refit = calibrate(&pairs, Some(model.params()), newest)?;
    refit.revision = model.revision + 1;
    Ok((refit, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasDirection {
    /// The model predicts more strength than is measured.
    Over,
    /// The model predicts less strength than is measured.
    Under,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grade {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub mix_id: String,
    pub n: usize,
    pub mean_error_mpa: f64,
    pub rmse_mpa: f64,
    pub bias_direction: BiasDirection,
    pub grade: Grade,
}

/// Summarizes prediction quality for one mix.
///
/// Bias is `Neutral` while |mean error| stays within one residual standard
/// error of the model.
pub fn confidence(log: &ResidualLog, model: &StrengthMaturityModel, mix_id: &str) -> ConfidenceReport {
    let errors: Vec<f64> = log.for_mix(mix_id).map(ResidualEntry::error).collect();
    let n = errors.len();
    let (mean, rmse) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = errors.iter().sum::<f64>() / n as f64;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
        (mean, rmse)
    };
    let bias_direction = if mean.abs() <= model.residual_se_mpa {
        BiasDirection::Neutral
    } else if mean > 0.0 {
        BiasDirection::Under
    } else {
        BiasDirection::Over
    };
    let grade = if n < 4 || rmse > 0.15 * model.su_mpa {
        Grade::Low
    } else if n >= 10 && rmse <= 0.05 * model.su_mpa {
        Grade::High
    } else {
        Grade::Medium
    };
    ConfidenceReport {
        mix_id: mix_id.to_string(),
        n,
        mean_error_mpa: mean,
        rmse_mpa: rmse,
        bias_direction,
        grade,
    }
}
