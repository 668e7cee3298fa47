//! Least-squares fit of the hyperbolic strength–maturity relation.
//!
//! Levenberg–Marquardt with Marquardt diagonal damping on a Jacobi-scaled
//! 3×3 normal system. Initialization is fixed (no randomness), so equal
//! inputs give bit-equal models.

use serde::{Deserialize, Serialize};

use super::{MaturityError, StrengthMaturityModel};
use crate::domain::Timestamp;

const MAX_ITERATIONS: usize = 500;
const STEP_TOL: f64 = 1e-12;

/// `(maturity °C·h, strength MPa)`.
pub type CalibrationPair = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub su_mpa: f64,
    pub k_rate: f64,
    pub m0: f64,
}

impl ModelParams {
    pub fn strength_at(&self, m: f64) -> f64 {
        let x = self.k_rate * (m - self.m0);
        if x <= 0.0 {
            0.0
        } else {
            self.su_mpa * x / (1.0 + x)
        }
    }

    /// Value and gradient with respect to `(su, k, m0)`. At and beyond the
    /// offset the right-hand derivative is used.
    fn eval_with_grad(&self, m: f64) -> (f64, [f64; 3]) {
        let dm = m - self.m0;
        if dm < 0.0 {
            return (0.0, [0.0; 3]);
        }
        let x = self.k_rate * dm;
        let denom = 1.0 + x;
        let ds_dx = self.su_mpa / (denom * denom);
        (
            self.su_mpa * x / denom,
            [x / denom, ds_dx * dm, -ds_dx * self.k_rate],
        )
    }

    fn as_array(&self) -> [f64; 3] {
        [self.su_mpa, self.k_rate, self.m0]
    }

    fn from_array(p: [f64; 3]) -> Self {
        Self {
            su_mpa: p[0],
            k_rate: p[1],
            m0: p[2],
        }
    }

    fn admissible(&self) -> bool {
        self.su_mpa > 0.0 && self.k_rate > 0.0 && self.m0 >= 0.0 && self.as_array().iter().all(|v| v.is_finite())
    }
}

fn sse(params: &ModelParams, pairs: &[CalibrationPair]) -> f64 {
    pairs
        .iter()
        .map(|&(m, s)| {
            let r = params.strength_at(m) - s;
            r * r
        })
        .sum()
}

/// Fixed starting point: `Sᵤ = 1.2 · max strength`, `M₀ = min maturity`,
/// and `k` solved from the lowest-maturity point that shows strength above
/// that offset.
fn initial_guess(pairs: &[CalibrationPair]) -> ModelParams {
    let max_s = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let min_m = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let su = 1.2 * max_s;
    let mut sorted: Vec<CalibrationPair> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let k = sorted
        .iter()
        .find(|&&(m, s)| m > min_m && s > 0.0 && s < su)
        .map(|&(m, s)| (s / (su - s)) / (m - min_m))
        .unwrap_or_else(|| {
            let max_m = sorted.last().map(|p| p.0).unwrap_or(1.0);
            1.0 / (max_m - min_m).max(1.0)
        });
    ModelParams {
        su_mpa: su,
        k_rate: k,
        m0: min_m.max(0.0),
    }
}

/// Solves the 3×3 system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` if singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for c in row + 1..3 {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Fits `(Sᵤ, k, M₀)` to `(maturity, strength)` pairs.
///
/// Needs at least four pairs over at least three distinct maturities.
/// `residual_se_mpa = √(SSE / (n − 3))`.
pub fn calibrate(
    pairs: &[CalibrationPair],
    initial: Option<ModelParams>,
    calibrated_at: Timestamp,
) -> Result<StrengthMaturityModel, MaturityError> {
    if pairs.len() < 4 {
        return Err(MaturityError::InsufficientData(format!(
            "{} pairs given, at least 4 required",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(m, s)| !m.is_finite() || !s.is_finite() || m < 0.0 || s < 0.0) {
        return Err(MaturityError::InsufficientData(
            "maturities and strengths must be finite and non-negative".into(),
        ));
    }
    let mut distinct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(MaturityError::InsufficientData(
            "at least 3 distinct maturities required".into(),
        ));
    }
    if pairs.iter().all(|p| p.1 == 0.0) {
        return Err(MaturityError::InsufficientData("all strengths are zero".into()));
    }

    let mut params = match initial {
        Some(p) if p.admissible() => p,
        _ => initial_guess(pairs),
    };
    let mut cost = sse(&params, pairs);
    let mut lambda = 1e-3;
    let mut converged = false;
    let scale = pairs.iter().map(|p| p.1 * p.1).sum::<f64>().max(1e-300);

    for _ in 0..MAX_ITERATIONS {
        if cost <= 1e-28 * scale {
            converged = true;
            break;
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for &(m, s) in pairs {
            let (value, g) = params.eval_with_grad(m);
            let r = value - s;
            for i in 0..3 {
                jtr[i] += g[i] * r;
                for j in 0..3 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        // M0 resting on its zero bound with descent pointing below it is
        // held fixed for this iteration (projected step)
        let pinned = params.m0 <= 0.0 && jtr[2] > 0.0;
        if pinned {
            jtr[2] = 0.0;
            for i in 0..3 {
                jtj[i][2] = 0.0;
                jtj[2][i] = 0.0;
            }
            jtj[2][2] = 1.0;
        }
        let d: [f64; 3] = std::array::from_fn(|i| jtj[i][i].sqrt().max(1e-300));
        let grad_norm = (0..3).map(|i| (jtr[i] / d[i]).abs()).fold(0.0, f64::max);
        if grad_norm <= 1e-14 * cost.sqrt().max(1e-300) {
            converged = true;
            break;
        }

        // inner loop: raise damping until the step lowers the cost
        let mut improved = false;
        while lambda < 1e20 {
            let mut a = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = jtj[i][j] / (d[i] * d[j]);
                }
                a[i][i] += lambda * (jtj[i][i] / (d[i] * d[i])).max(1e-12);
            }
            let b: [f64; 3] = std::array::from_fn(|i| -jtr[i] / d[i]);
            let Some(step) = solve3(a, b) else {
                lambda *= 10.0;
                continue;
            };
            let old = params.as_array();
            let mut next = [0.0; 3];
            for i in 0..3 {
                next[i] = old[i] + step[i] / d[i];
            }
            next[2] = next[2].max(0.0);
            let candidate = ModelParams::from_array(next);
            if !candidate.admissible() {
                lambda *= 10.0;
                continue;
            }
            let new_cost = sse(&candidate, pairs);
            if new_cost <= cost {
                let rel_step = (0..3)
                    .map(|i| (next[i] - old[i]).abs() / old[i].abs().max(1e-12))
                    .fold(0.0, f64::max);
                params = candidate;
                let drop = cost - new_cost;
                cost = new_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_step < STEP_TOL || drop <= 1e-12 * cost {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent direction at any damping: stationary point
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(MaturityError::NonConvergence(MAX_ITERATIONS));
    }

    let n = pairs.len();
    Ok(StrengthMaturityModel {
        su_mpa: params.su_mpa,
        k_rate: params.k_rate,
        m0: params.m0,
        residual_se_mpa: (cost / (n - 3) as f64).sqrt(),
        calibrated_at,
        n_points: n,
        revision: 0,
    })
}
