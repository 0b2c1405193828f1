//! Per-segment quality of experience and the cross-client fairness index.
//!
//! A segment's QoE starts from its perceptual quality, smoothed against the
//! previous segment's quality to penalize switching, and is then discounted
//! exponentially by any initial-startup and rebuffering stall time incurred
//! while the segment downloaded. Per-client QoE histories are summarized by
//! a bias-corrected exponential moving average, and fairness across clients
//! is one minus twice the population standard deviation of those averages,
//! which is 1 when everyone is equal and 0 at the maximal 0/1 split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default trade-off between own QoE and fairness in utility and reward.
pub const DEFAULT_ALPHA: f64 = 0.25;

/// Default smoothing factor of the QoE moving average.
pub const DEFAULT_KAPPA: f64 = 0.9;

/// Coefficients of the per-segment QoE formula.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QoeCoefficients {
    /// Weight of the quality-switching smoother.
    pub delta: f64,
    /// Exponential penalty rate per second of initial stall.
    pub lambda_init: f64,
    /// Exponential penalty rate per second of rebuffering stall.
    pub lambda_reb: f64,
}

impl Default for QoeCoefficients {
    fn default() -> Self {
        QoeCoefficients {
            delta: 0.025,
            lambda_init: 1.0,
            lambda_reb: 10.0,
        }
    }
}

/// Everything the QoE of one downloaded segment depends on.
#[derive(Clone, Copy, Debug)]
pub struct QoeInputs {
    /// Step index of the segment (0 for the first segment).
    pub t: u32,
    /// Perceptual quality of the segment, in `[0, 1]`.
    pub quality: f64,
    /// Quality of the previous segment; required for `t > 0`.
    pub prev_quality: Option<f64>,
    /// Initial stall seconds accrued while this segment downloaded.
    pub t_init: f64,
    /// Rebuffering stall seconds accrued while this segment downloaded.
    pub t_reb: f64,
}

/// QoE of one segment. The first segment carries no switching term; later
/// segments blend in a bonus for staying close to the previous quality.
/// Both cases are discounted by `exp(-lambda_init*t_init - lambda_reb*t_reb)`.
pub fn qoe(inputs: &QoeInputs, coeffs: &QoeCoefficients) -> Result<f64> {
    if !(0.0..=1.0).contains(&inputs.quality) {
        return Err(Error::Metric(format!("quality {} outside [0, 1]", inputs.quality)));
    }
    if inputs.t_init < 0.0 || inputs.t_reb < 0.0 {
        return Err(Error::Metric(format!(
            "negative stall time (t_init={}, t_reb={})",
            inputs.t_init, inputs.t_reb
        )));
    }
    let base = if inputs.t == 0 {
        inputs.quality
    } else {
        let prev = inputs.prev_quality.ok_or_else(|| {
            Error::Metric(format!("step {} requires the previous segment's quality", inputs.t))
        })?;
        if !(0.0..=1.0).contains(&prev) {
            return Err(Error::Metric(format!("previous quality {prev} outside [0, 1]")));
        }
        let smooth = 1.0 - (inputs.quality - prev).abs();
        (inputs.quality + coeffs.delta * smooth) / (1.0 + coeffs.delta)
    };
    let stall_factor = (-coeffs.lambda_init * inputs.t_init - coeffs.lambda_reb * inputs.t_reb).exp();
    Ok(base * stall_factor)
}

/// Running state of the bias-corrected exponential moving average.
///
/// The raw average starts at zero, which drags early values toward zero; the
/// correction divides by `1 - kappa^(t+1)` so the very first output equals
/// the first input and the bias decays geometrically afterwards.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct EmaState {
    z: f64,
    steps: u32,
}

impl EmaState {
    pub fn new() -> Self {
        EmaState::default()
    }

    /// Number of values folded in so far.
    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Folds in the next value and returns the bias-corrected average.
    pub fn update(&mut self, value: f64, kappa: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::Metric(format!("kappa {kappa} outside [0, 1)")));
        }
        self.z = kappa * self.z + (1.0 - kappa) * value;
        self.steps += 1;
        Ok(self.z / (1.0 - kappa.powi(self.steps as i32)))
    }
}

/// Population standard deviation. Zero for a single value.
pub fn population_std(values: &[f64]) -> f64 {
    if values.len() <= 1 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Fairness index over per-client values in `[0, 1]`: one minus twice their
/// population standard deviation. 1 means perfectly even, 0 is the extreme
/// half-zeros/half-ones split.
pub fn fairness(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Metric("fairness of an empty client set".into()));
    }
    Ok(1.0 - 2.0 * population_std(values))
}

/// Weighted blend of a client's own QoE and the fairness index.
pub fn utility(qoe: f64, fairness: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Metric(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(alpha * qoe + (1.0 - alpha) * fairness)
}

/// Per-step reward of an acting client: identical to [`utility`] at the
/// session's alpha.
pub fn reward(qoe: f64, fairness: f64, alpha: f64) -> Result<f64> {
    utility(qoe, fairness, alpha)
}
