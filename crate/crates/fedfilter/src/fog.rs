//! Fog-side protocol: consume device model updates, keep a per-device
//! synchronized reconstruction of the data matrix, average the shared
//! models into a single predictor, watch the perturbation budget, and
//! re-issue the dead-band when the budget is exhausted.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::device::UpdateMsg;
use crate::error::{Error, Result};
use crate::lms::FilterModel;
use crate::perturbation::{solve_delta, tol_f, DataMatrix};

pub const DEFAULT_MONITOR_WINDOW: usize = 256;

#[derive(Debug, Clone)]
struct DeviceSlot {
    model: FilterModel,
    /// Chronological reconstruction window, mirroring the device.
    window: Vec<f64>,
    /// Training-sample count carried by the latest update (the averaging weight).
    sample_count: usize,
    last_timestamp: i64,
}

/// Fog server state for one simulation run.
#[derive(Debug, Clone)]
pub struct FogState {
    devices: BTreeMap<usize, DeviceSlot>,
    tap_len: usize,
    /// Reconstructed matrix, one row per completed tick.
    recon_rows: Vec<Vec<f64>>,
    /// True where the entry holds a transmitted real value.
    real_mask: Vec<Vec<bool>>,
    /// Sum of squared entries per reconstructed row (trailing-trace bookkeeping).
    row_sq_sums: Vec<f64>,
    /// Real values received for the tick currently being assembled.
    staged: BTreeMap<usize, f64>,
    avg_model: Option<FilterModel>,
    /// Perturbation budget the monitor compares against.
    pub tol_f: f64,
    /// Homogeneous dead-band currently in force.
    pub delta: f64,
    fraction_k: f64,
    renormalize_weights: bool,
    rng: ChaCha8Rng,
    monitor_window: usize,
    /// Rows required in the trailing window before the monitor is trusted;
    /// keeps the estimate scale-consistent with the budget reference.
    monitor_min_rows: usize,
    /// First row of the current monitoring window (reset on rebalance).
    window_start: usize,
    pending_summons: BTreeSet<usize>,
    pub rebalance_count: u64,
}

impl FogState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tap_len: usize,
        tol_budget: f64,
        delta: f64,
        fraction_k: f64,
        renormalize_weights: bool,
        seed: u64,
        monitor_window: usize,
        monitor_min_rows: usize,
    ) -> Result<Self> {
        if !(fraction_k > 0.0 && fraction_k <= 1.0) {
            return Err(Error::Config(format!(
                "fraction_k {fraction_k} outside (0, 1]"
            )));
        }
        if delta < 0.0 {
            return Err(Error::NegativeInput { context: "delta" });
        }
        Ok(Self {
            devices: BTreeMap::new(),
            tap_len,
            recon_rows: Vec::new(),
            real_mask: Vec::new(),
            row_sq_sums: Vec::new(),
            staged: BTreeMap::new(),
            avg_model: None,
            tol_f: tol_budget,
            delta,
            fraction_k,
            renormalize_weights,
            rng: ChaCha8Rng::seed_from_u64(seed),
            monitor_window: monitor_window.max(1),
            monitor_min_rows: monitor_min_rows.max(1),
            window_start: 0,
            pending_summons: BTreeSet::new(),
            rebalance_count: 0,
        })
    }

    /// Consume a device's warmup upload, creating its slot.
    pub fn register(&mut self, msg: &UpdateMsg) -> Result<()> {
        if msg.model.tap_len() != self.tap_len || msg.sync_samples.len() != self.tap_len {
            return Err(Error::LengthMismatch {
                expected: self.tap_len,
                got: msg.sync_samples.len(),
            });
        }
        self.devices.insert(
            msg.device_id,
            DeviceSlot {
                model: msg.model.clone(),
                window: msg.sync_samples.clone(),
                sample_count: msg.sample_count,
                last_timestamp: msg.timestamp,
            },
        );
        Ok(())
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn rows(&self) -> usize {
        self.recon_rows.len()
    }

    pub fn device_window(&self, id: usize) -> Option<&[f64]> {
        self.devices.get(&id).map(|s| s.window.as_slice())
    }

    pub fn device_model(&self, id: usize) -> Option<&FilterModel> {
        self.devices.get(&id).map(|s| &s.model)
    }

    pub fn avg_model(&self) -> Option<&FilterModel> {
        self.avg_model.as_ref()
    }

    /// True while a summon broadcast is still waiting on device updates;
    /// monitoring and averaging stay quiet until the round completes.
    pub fn awaiting_summons(&self) -> bool {
        !self.pending_summons.is_empty()
    }

    /// Store a model update: replace the device's model, re-synchronize its
    /// reconstruction window from the carried real samples, and write those
    /// values into the matrix at their timestamps (the newest is staged for
    /// the in-flight row).
    pub fn handle_update(&mut self, msg: &UpdateMsg) -> Result<()> {
        let column: usize;
        {
            let slot = self
                .devices
                .get(&msg.device_id)
                .ok_or(Error::UnknownDevice(msg.device_id))?;
            if msg.timestamp <= slot.last_timestamp {
                return Err(Error::StaleTimestamp {
                    got: msg.timestamp,
                    last: slot.last_timestamp,
                });
            }
            if msg.model.tap_len() != self.tap_len || msg.sync_samples.len() != self.tap_len {
                return Err(Error::LengthMismatch {
                    expected: self.tap_len,
                    got: msg.sync_samples.len(),
                });
            }
            column = self.column_of(msg.device_id)?;
        }

        // Backfill transmitted values into already-completed rows and stage
        // the newest one for the row under assembly.
        for (k, &value) in msg.sync_samples.iter().enumerate() {
            let t = msg.timestamp - (self.tap_len as i64 - 1) + k as i64;
            if t < 0 {
                continue;
            }
            let t = t as usize;
            if t < self.recon_rows.len() {
                let old = self.recon_rows[t][column];
                self.row_sq_sums[t] += value * value - old * old;
                self.recon_rows[t][column] = value;
                self.real_mask[t][column] = true;
            } else {
                self.staged.insert(msg.device_id, value);
            }
        }

        let slot = self.devices.get_mut(&msg.device_id).expect("checked above");
        slot.model = msg.model.clone();
        slot.window = msg.sync_samples.clone();
        slot.sample_count = msg.sample_count;
        slot.last_timestamp = msg.timestamp;
        self.pending_summons.remove(&msg.device_id);
        Ok(())
    }

    fn column_of(&self, device_id: usize) -> Result<usize> {
        self.devices
            .keys()
            .position(|id| *id == device_id)
            .ok_or(Error::UnknownDevice(device_id))
    }

    /// Complete row `t` of the reconstruction: devices that transmitted get
    /// their staged real value; every silent device gets its own model's
    /// prediction, which also advances that device's window.
    pub fn fog_advance(&mut self, t: usize) -> Result<()> {
        if t != self.recon_rows.len() {
            return Err(Error::Config(format!(
                "fog_advance tick {t} out of order; next row is {}",
                self.recon_rows.len()
            )));
        }
        let ids: Vec<usize> = self.devices.keys().copied().collect();
        let mut row = Vec::with_capacity(ids.len());
        let mut mask = Vec::with_capacity(ids.len());
        for id in ids {
            if let Some(real) = self.staged.remove(&id) {
                // Window was already re-synchronized by handle_update.
                row.push(real);
                mask.push(true);
            } else {
                let slot = self.devices.get_mut(&id).expect("known id");
                let predicted = slot.model.predict(&slot.window)?;
                slot.window.rotate_left(1);
                *slot.window.last_mut().expect("non-empty window") = predicted;
                row.push(predicted);
                mask.push(false);
            }
        }
        self.row_sq_sums.push(row.iter().map(|v| v * v).sum());
        self.recon_rows.push(row);
        self.real_mask.push(mask);
        Ok(())
    }

    /// Weighted tap-wise model average over a freshly drawn fraction-K subset.
    pub fn average_models(&mut self) -> Result<FilterModel> {
        if self.devices.is_empty() {
            return Err(Error::Config("no device models to average".into()));
        }
        let ids: Vec<usize> = self.devices.keys().copied().collect();
        let take = ((self.fraction_k * ids.len() as f64).round() as usize).clamp(1, ids.len());
        let mut selected: Vec<usize> = ids.choose_multiple(&mut self.rng, take).copied().collect();
        selected.sort_unstable();

        let total: usize = self.devices.values().map(|s| s.sample_count).sum();
        if total == 0 {
            return Err(Error::Config("all sample counts are zero".into()));
        }
        let selected_total: usize = selected
            .iter()
            .map(|id| self.devices[id].sample_count)
            .sum();
        let denom = if self.renormalize_weights {
            selected_total as f64
        } else {
            total as f64
        };

        let mut eta = vec![0.0; self.tap_len];
        let mut step_sum = 0.0;
        for id in &selected {
            let slot = &self.devices[id];
            if slot.model.tap_len() != self.tap_len {
                return Err(Error::LengthMismatch {
                    expected: self.tap_len,
                    got: slot.model.tap_len(),
                });
            }
            let weight = slot.sample_count as f64 / denom;
            for (e, w) in eta.iter_mut().zip(&slot.model.weights) {
                *e += weight * w;
            }
            step_sum += weight * slot.model.step_size;
        }
        let model = FilterModel {
            weights: eta,
            step_size: step_sum,
        };
        self.avg_model = Some(model.clone());
        Ok(model)
    }

    /// One predicted value per device: the averaged model applied to each
    /// device's current reconstruction window.
    pub fn averaged_prediction(&self) -> Result<Vec<f64>> {
        let eta = self
            .avg_model
            .as_ref()
            .ok_or_else(|| Error::Config("no averaged model yet".into()))?;
        self.devices
            .values()
            .map(|slot| eta.predict(&slot.window))
            .collect()
    }

    fn trailing_window(&self) -> (f64, usize) {
        let end = self.recon_rows.len();
        let start = self
            .window_start
            .max(end.saturating_sub(self.monitor_window));
        let trace: f64 = self.row_sq_sums[start..end].iter().sum();
        (trace, end - start)
    }

    /// Plug-in estimate of the expected perturbation over the trailing
    /// window, with the reconstructed trace standing in for the real one
    /// and `sigma^2 = delta^2/3`. `exceeded` fires only once the window is
    /// mature and no summon round is in flight.
    pub fn monitor_perturbation(&self) -> Result<(f64, bool)> {
        let n = self.devices.len();
        let (trace, rows) = self.trailing_window();
        if n == 0 || rows == 0 {
            return Ok((0.0, false));
        }
        let sigma = vec![self.delta * self.delta / 3.0; n];
        let estimate = tol_f(trace, &sigma, rows, n)?;
        let active = rows >= self.monitor_min_rows && self.pending_summons.is_empty();
        Ok((estimate, active && estimate > self.tol_f))
    }

    /// Exhausted budget: solve the dead-band that restores the budget at the
    /// current trace, broadcast it, summon every device, and restart the
    /// monitoring window.
    pub fn rebalance(&mut self) -> Result<(f64, Vec<usize>)> {
        let n = self.devices.len().max(1);
        let (trace, rows) = self.trailing_window();
        let delta_new = solve_delta(trace, rows.max(1), n, self.tol_f)?;
        self.delta = delta_new;
        self.window_start = self.recon_rows.len();
        self.pending_summons = self.devices.keys().copied().collect();
        self.rebalance_count += 1;
        Ok((delta_new, self.devices.keys().copied().collect()))
    }

    pub fn recon_matrix(&self) -> Result<DataMatrix> {
        DataMatrix::from_rows(&self.recon_rows)
    }

    pub fn real_mask(&self) -> &[Vec<bool>] {
        &self.real_mask
    }
}
