//! Least-mean-square adaptive filtering: linear tap-delay prediction,
//! Widrow-Hoff updates, and the empirical step-size stability bound.
//!
//! Windows are chronological: `window[0]` is the oldest of the `L`
//! samples preceding the predicted one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear prediction model: `L` tap weights plus the training step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    /// Tap weights, oldest-sample tap first.
    pub weights: Vec<f64>,
    /// Widrow-Hoff step size; must stay within [`alpha_max`] of the
    /// series the model is trained on.
    pub step_size: f64,
}

impl FilterModel {
    /// All-zero model with `tap_len` taps.
    pub fn zeros(tap_len: usize, step_size: f64) -> Self {
        Self {
            weights: vec![0.0; tap_len.max(1)],
            step_size,
        }
    }

    pub fn tap_len(&self) -> usize {
        self.weights.len()
    }

    /// Predicted next sample: dot product of the weights with a window of
    /// the `L` most recent reconstructed samples.
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                got: window.len(),
            });
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "window" });
        }
        Ok(self.weights.iter().zip(window).map(|(w, x)| w * x).sum())
    }

    /// One Widrow-Hoff step toward `target`. Returns the pre-update
    /// prediction error `e = target - prediction`; the weights move by
    /// `step_size * e * window`. A zero error leaves the model untouched.
    pub fn lms_step(&mut self, window: &[f64], target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::NonFinite { context: "target" });
        }
        let err = target - self.predict(window)?;
        if err == 0.0 {
            return Ok(0.0);
        }
        let gain = self.step_size * err;
        for (w, x) in self.weights.iter_mut().zip(window) {
            *w += gain * x;
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence);
        }
        Ok(err)
    }
}

/// One device's scalar time series (a column of the global matrix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub device_id: usize,
    pub values: Vec<f64>,
    /// Sampling period in seconds.
    pub period_s: f64,
}

pub const DEFAULT_PERIOD_S: f64 = 30.0;

impl SampleSeries {
    pub fn new(device_id: usize, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "series" });
        }
        Ok(Self {
            device_id,
            values,
            period_s: DEFAULT_PERIOD_S,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean of `0.5 * e^2` over the final pass.
    pub final_mse: f64,
    /// One entry per epoch.
    pub epoch_mse: Vec<f64>,
    pub epochs: usize,
}

/// Step-size policy applied whenever a model is (re)trained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaPolicy {
    /// `fraction * alpha_max(series)`, recomputed from each training series.
    FractionOfMax(f64),
    /// Fixed step size regardless of the data.
    Fixed(f64),
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        // 0.5 * alpha_max is mean-square unstable on strongly correlated
        // series with L > 1 taps; 0.1 keeps a wide stability margin.
        AlphaPolicy::FractionOfMax(0.1)
    }
}

impl AlphaPolicy {
    /// Resolve the policy against a concrete training slice.
    pub fn step_size(&self, values: &[f64]) -> Result<f64> {
        match *self {
            AlphaPolicy::Fixed(a) => {
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::NegativeInput {
                        context: "step size",
                    });
                }
                Ok(a)
            }
            AlphaPolicy::FractionOfMax(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::Config(format!("alpha fraction {f} outside [0, 1]")));
                }
                Ok(f * alpha_max_slice(values, values.len())?)
            }
        }
    }
}

/// Empirical step-size stability bound `1 / P_Y` where `P_Y` is the mean
/// squared magnitude over the first `m` samples.
pub fn alpha_max(series: &SampleSeries, m: usize) -> Result<f64> {
    alpha_max_slice(&series.values, m)
}

pub(crate) fn alpha_max_slice(values: &[f64], m: usize) -> Result<f64> {
    if m == 0 || m > values.len() {
        return Err(Error::Config(format!(
            "alpha_max window {m} outside series length {}",
            values.len()
        )));
    }
    let power = values[..m].iter().map(|v| v * v).sum::<f64>() / m as f64;
    if power == 0.0 {
        return Err(Error::UnboundedStep);
    }
    Ok(1.0 / power)
}

/// Train `model` over `series` for `epochs` full passes, sliding a
/// tap-length window one sample at a time. Returns the trained model and
/// the per-epoch error record.
pub fn train(
    series: &SampleSeries,
    model: FilterModel,
    epochs: usize,
) -> Result<(FilterModel, TrainReport)> {
    train_slice(&series.values, model, epochs)
}

pub(crate) fn train_slice(
    values: &[f64],
    mut model: FilterModel,
    epochs: usize,
) -> Result<(FilterModel, TrainReport)> {
    let tap_len = model.tap_len();
    if values.len() < tap_len + 1 {
        return Err(Error::WarmupTooShort {
            need: tap_len + 1,
            got: values.len(),
        });
    }
    let mut epoch_mse = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut sq = 0.0;
        let mut count = 0usize;
        for t in tap_len..values.len() {
            let err = model.lms_step(&values[t - tap_len..t], values[t])?;
            sq += 0.5 * err * err;
            count += 1;
        }
        epoch_mse.push(sq / count as f64);
    }
    let report = TrainReport {
        final_mse: epoch_mse.last().copied().unwrap_or(0.0),
        epochs,
        epoch_mse,
    };
    Ok((model, report))
}
