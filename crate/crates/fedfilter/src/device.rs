//! Device-side dead-band protocol: track the deviation of the shared
//! predictor against the live sample, retrain and transmit only when the
//! deviation leaves the `[-delta, delta]` band, and advance a
//! reconstruction window that stays bit-identical with the fog's copy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lms::{train_slice, AlphaPolicy, FilterModel, SampleSeries};

pub const DEFAULT_RETRAIN_WINDOW: usize = 64;
pub const DEFAULT_RETRAIN_EPOCHS: usize = 5;
pub const DEFAULT_INIT_EPOCHS: usize = 8;

/// Model update sent to the fog server: the retrained weights plus the
/// last `L` real samples that re-synchronize the reconstruction window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMsg {
    pub device_id: usize,
    pub model: FilterModel,
    /// Chronological real samples ending at `timestamp`.
    pub sync_samples: Vec<f64>,
    /// Number of samples the model was trained on (the averaging weight).
    pub sample_count: usize,
    /// Stream tick of the newest sync sample; -1 for the warmup upload.
    pub timestamp: i64,
}

/// Per-device protocol state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub device_id: usize,
    pub model: FilterModel,
    /// Dead-band half-width.
    pub delta: f64,
    /// Last `L` reconstructed values, oldest first. Mirrors the fog.
    recon_window: VecDeque<f64>,
    /// Recent real samples kept for retraining.
    real_history: VecDeque<f64>,
    retrain_window: usize,
    retrain_epochs: usize,
    alpha_policy: AlphaPolicy,
    /// Stream tick of the next incoming sample.
    tick: i64,
    /// All samples consumed so far, warmup included.
    pub samples_seen: u64,
    pub transmissions: u64,
    summon_pending: bool,
}

/// Outcome of one device step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Deviation `sample - prediction` measured before any retrain.
    pub deviation: f64,
    /// Message to forward to the fog, when the band was violated.
    pub message: Option<UpdateMsg>,
}

/// Train the initial model on the warmup slice and emit the first update
/// so the fog starts synchronized.
pub fn init_device(
    device_id: usize,
    warmup: &SampleSeries,
    tap_len: usize,
    delta: f64,
    alpha_policy: AlphaPolicy,
) -> Result<(DeviceState, UpdateMsg)> {
    init_device_with(
        device_id,
        warmup,
        tap_len,
        delta,
        alpha_policy,
        DEFAULT_RETRAIN_WINDOW,
        DEFAULT_RETRAIN_EPOCHS,
        DEFAULT_INIT_EPOCHS,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn init_device_with(
    device_id: usize,
    warmup: &SampleSeries,
    tap_len: usize,
    delta: f64,
    alpha_policy: AlphaPolicy,
    retrain_window: usize,
    retrain_epochs: usize,
    init_epochs: usize,
) -> Result<(DeviceState, UpdateMsg)> {
    if delta < 0.0 {
        return Err(Error::NegativeInput { context: "delta" });
    }
    if warmup.len() < tap_len + 1 {
        return Err(Error::WarmupTooShort {
            need: tap_len + 1,
            got: warmup.len(),
        });
    }
    let step = alpha_policy.step_size(&warmup.values)?;
    let (model, _) = train_slice(
        &warmup.values,
        FilterModel::zeros(tap_len, step),
        init_epochs,
    )?;

    let retrain_window = retrain_window.max(tap_len + 1);
    let hist_start = warmup.len().saturating_sub(retrain_window);
    let real_history: VecDeque<f64> = warmup.values[hist_start..].iter().copied().collect();
    let recon_window: VecDeque<f64> = warmup.values[warmup.len() - tap_len..]
        .iter()
        .copied()
        .collect();

    let msg = UpdateMsg {
        device_id,
        model: model.clone(),
        sync_samples: recon_window.iter().copied().collect(),
        sample_count: warmup.len(),
        timestamp: -1,
    };
    let state = DeviceState {
        device_id,
        model,
        delta,
        recon_window,
        real_history,
        retrain_window,
        retrain_epochs,
        alpha_policy,
        tick: 0,
        samples_seen: warmup.len() as u64,
        transmissions: 1,
        summon_pending: false,
    };
    Ok((state, msg))
}

impl DeviceState {
    pub fn recon_window(&self) -> &VecDeque<f64> {
        &self.recon_window
    }

    /// Install a new dead-band; everything else is untouched.
    pub fn apply_filter_param(&mut self, delta_new: f64) -> Result<()> {
        if delta_new < 0.0 {
            return Err(Error::NegativeInput { context: "delta" });
        }
        self.delta = delta_new;
        Ok(())
    }

    /// Force a retrain-and-transmit on the next sample regardless of the
    /// deviation (the fog's "summon" broadcast).
    pub fn summon(&mut self) {
        self.summon_pending = true;
    }

    /// Consume one live sample. Within the dead band the prediction is kept
    /// and nothing is sent; outside it the model is retrained on recent real
    /// history and an update carrying the weights plus `L` sync samples goes
    /// out. On retrain failure the state is left exactly as before the call.
    pub fn device_step(&mut self, sample: f64) -> Result<StepOutcome> {
        if !sample.is_finite() {
            return Err(Error::NonFinite { context: "sample" });
        }
        let window: Vec<f64> = self.recon_window.iter().copied().collect();
        let predicted = self.model.predict(&window)?;
        let deviation = sample - predicted;

        let violated = self.summon_pending || deviation.abs() > self.delta;
        if !violated {
            self.push_history(sample);
            self.recon_window.pop_front();
            self.recon_window.push_back(predicted);
            self.tick += 1;
            self.samples_seen += 1;
            return Ok(StepOutcome {
                deviation,
                message: None,
            });
        }

        // Retrain into a scratch model first so divergence cannot corrupt
        // the live state.
        let mut hist: Vec<f64> = self.real_history.iter().copied().collect();
        hist.push(sample);
        if hist.len() > self.retrain_window {
            let cut = hist.len() - self.retrain_window;
            hist.drain(..cut);
        }
        let step = self.alpha_policy.step_size(&hist)?;
        let mut warm = self.model.clone();
        warm.step_size = step;
        let (retrained, _) = train_slice(&hist, warm, self.retrain_epochs)?;

        self.push_history(sample);
        self.model = retrained;
        let tap_len = self.model.tap_len();
        let sync: Vec<f64> = self
            .real_history
            .iter()
            .rev()
            .take(tap_len)
            .rev()
            .copied()
            .collect();
        self.recon_window = sync.iter().copied().collect();

        let msg = UpdateMsg {
            device_id: self.device_id,
            model: self.model.clone(),
            sync_samples: sync,
            sample_count: hist.len(),
            timestamp: self.tick,
        };
        self.tick += 1;
        self.samples_seen += 1;
        self.transmissions += 1;
        self.summon_pending = false;
        Ok(StepOutcome {
            deviation,
            message: Some(msg),
        })
    }

    fn push_history(&mut self, sample: f64) {
        self.real_history.push_back(sample);
        if self.real_history.len() > self.retrain_window {
            self.real_history.pop_front();
        }
    }
}
