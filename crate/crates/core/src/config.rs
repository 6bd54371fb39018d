//! Physical and learning constants of the multiuser MEC system.
//!
//! A [`SystemConfig`] is loaded from JSON. Every field has a default so a
//! document only needs to list what it overrides; unknown fields are
//! rejected so a typo can never silently fall back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral efficiency ceiling (bits/s/Hz) a single worst-case offload may need.
pub const MAX_OFFLOAD_SPECTRAL_EFFICIENCY: f64 = 30.0;

/// How the WD queue accounts for the residual shipped to the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueMode {
    /// The offloaded residual is not removed from the WD queue (verbatim WD recursion).
    NonDraining,
    /// The offloaded residual leaves the WD queue, so total workload is conserved.
    Conserving,
}

/// Diminishing step schedule `alpha_t = initial / (1 + t / decay_blocks)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSchedule {
    pub initial: f64,
    pub decay_blocks: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            initial: 0.01,
            decay_blocks: 1000.0,
        }
    }
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Self {
        StepSchedule {
            initial: alpha,
            decay_blocks: f64::INFINITY,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        self.initial / (1.0 + t as f64 / self.decay_blocks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Number of wireless devices K.
    pub num_wds: usize,
    /// Compute slots per decision block n.
    pub slots_per_block: usize,
    /// Slot duration tau in seconds.
    pub slot_seconds: f64,
    /// CPU cycles per DNN task W.
    pub task_cycles: f64,
    /// Per-slot Bernoulli arrival probability b (shared by every WD).
    pub arrival_prob: f64,
    /// Offload bandwidth per WD in Hz.
    pub bandwidth_hz: f64,
    /// SNR gap of the modulation and coding scheme.
    pub snr_gap: f64,
    /// Effective switched capacitance of a WD CPU.
    pub cap_wd: f64,
    /// Effective switched capacitance of the server CPU.
    pub cap_ser: f64,
    /// Intermediate-output bits per remaining CPU cycle.
    pub bits_per_cycle: f64,
    pub f_max_wd: f64,
    pub f_max_ser: f64,
    /// Cost weights (w1, w2, w3, w4): server queue, server energy, WD queue, WD energy.
    pub weights: [f64; 4],
    pub discount: f64,
    /// Number of sigmoid features M in every Q-function.
    pub feature_dim: usize,
    pub cell_radius_m: f64,
    /// Path loss `a + b log10(d)` in dB, as `[a, b]`.
    pub pathloss: [f64; 2],
    pub shadow_std_db: f64,
    pub noise_dbm_per_hz: f64,
    pub queue_mode: QueueMode,
    pub seed: u64,

    pub step_size: StepSchedule,
    /// Relative parameter-change tolerance of the stopping rule.
    pub tolerance: f64,
    /// Freeze a learner once its stopping rule fires.
    pub freeze_on_convergence: bool,
    /// Power used before the first WD update, in watts.
    pub initial_power_w: f64,
    /// Normalisation scale of the power coordinate, in watts.
    pub power_ref_w: f64,
    /// Standard deviation (W) of optional Gaussian jitter on proposed power.
    pub power_jitter_std: f64,
    /// Transmit power cap used by the binary-offloading baseline.
    pub max_power_w: f64,
    /// Head-of-line fraction offloaded by the even-allocation baseline.
    pub even_fraction: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_wds: 4,
            slots_per_block: 5,
            slot_seconds: 0.1,
            task_cycles: 1e10,
            arrival_prob: 0.4,
            bandwidth_hz: 1e6,
            snr_gap: 1.5,
            cap_wd: 1e-28,
            cap_ser: 1e-29,
            bits_per_cycle: 1e-5,
            f_max_wd: 1e9,
            f_max_ser: 1e10,
            weights: [1.0; 4],
            discount: 0.9,
            feature_dim: 30,
            cell_radius_m: 200.0,
            pathloss: [30.6, 37.6],
            shadow_std_db: 10.0,
            noise_dbm_per_hz: -174.0,
            queue_mode: QueueMode::Conserving,
            seed: 1,
            step_size: StepSchedule::default(),
            tolerance: 1e-3,
            freeze_on_convergence: true,
            initial_power_w: 1.0,
            power_ref_w: 1.0,
            power_jitter_std: 0.0,
            max_power_w: 1.0,
            even_fraction: 0.5,
        }
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl SystemConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SystemConfig = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.slots_per_block >= 1, || "slots_per_block must be >= 1".into())?;
        require(self.feature_dim >= 1, || "feature_dim must be >= 1".into())?;
        require(self.discount > 0.0 && self.discount < 1.0, || {
            format!("discount must lie in (0, 1), got {}", self.discount)
        })?;
        require(self.snr_gap >= 1.0, || format!("snr_gap must be >= 1, got {}", self.snr_gap))?;
        // b = 0 is admitted as the degenerate empty system.
        require((0.0..1.0).contains(&self.arrival_prob), || {
            format!("arrival_prob must lie in [0, 1), got {}", self.arrival_prob)
        })?;
        let positive = [
            ("slot_seconds", self.slot_seconds),
            ("task_cycles", self.task_cycles),
            ("bandwidth_hz", self.bandwidth_hz),
            ("cap_wd", self.cap_wd),
            ("cap_ser", self.cap_ser),
            ("bits_per_cycle", self.bits_per_cycle),
            ("f_max_wd", self.f_max_wd),
            ("f_max_ser", self.f_max_ser),
            ("cell_radius_m", self.cell_radius_m),
            ("tolerance", self.tolerance),
            ("power_ref_w", self.power_ref_w),
            ("max_power_w", self.max_power_w),
        ];
        for (name, v) in positive {
            require(v.is_finite() && v > 0.0, || format!("{name} must be finite and > 0, got {v}"))?;
        }
        require(self.shadow_std_db >= 0.0, || "shadow_std_db must be >= 0".into())?;
        require(self.noise_dbm_per_hz.is_finite(), || "noise_dbm_per_hz must be finite".into())?;
        require(self.pathloss.iter().all(|v| v.is_finite()), || "pathloss must be finite".into())?;
        require(self.weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            format!("weights must be nonnegative, got {:?}", self.weights)
        })?;
        require(self.initial_power_w >= 0.0, || "initial_power_w must be >= 0".into())?;
        require(self.power_jitter_std >= 0.0, || "power_jitter_std must be >= 0".into())?;
        require((0.0..=1.0).contains(&self.even_fraction), || {
            format!("even_fraction must lie in [0, 1], got {}", self.even_fraction)
        })?;
        require(
            self.step_size.initial >= 0.0 && self.step_size.decay_blocks > 0.0,
            || "step_size must have initial >= 0 and decay_blocks > 0".into(),
        )?;
        let worst_bits = self.bits_per_cycle * self.task_cycles;
        let slot_capacity = self.slot_seconds * self.bandwidth_hz * MAX_OFFLOAD_SPECTRAL_EFFICIENCY;
        require(worst_bits <= slot_capacity, || {
            format!(
                "bits_per_cycle * task_cycles = {worst_bits:e} bits exceeds the one-slot cap of {slot_capacity:e} bits"
            )
        })?;
        Ok(())
    }

    pub fn slots(&self) -> f64 {
        self.slots_per_block as f64
    }

    /// Most cycles a WD can execute locally in one block.
    pub fn local_cycle_cap(&self) -> f64 {
        self.slots() * self.slot_seconds * self.f_max_wd
    }

    /// Receiver noise power over one WD's band, in watts.
    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.noise_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    pub fn w1(&self) -> f64 {
        self.weights[0]
    }
    pub fn w2(&self) -> f64 {
        self.weights[1]
    }
    pub fn w3(&self) -> f64 {
        self.weights[2]
    }
    pub fn w4(&self) -> f64 {
        self.weights[3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_field_is_rejected_by_name() {
        let err = SystemConfig::from_json_str(r#"{"num_wds": 3, "nm_wds": 4}"#).unwrap_err();
        assert!(err.to_string().contains("nm_wds"), "{err}");
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let cfg = SystemConfig::from_json_str(r#"{"num_wds": 7, "queue_mode": "non_draining"}"#).unwrap();
        assert_eq!(cfg.num_wds, 7);
        assert_eq!(cfg.queue_mode, QueueMode::NonDraining);
        assert_eq!(cfg.slots_per_block, 5);
    }

    #[test]
    fn rejects_oversized_intermediate_output() {
        let cfg = SystemConfig {
            bits_per_cycle: 1e-3,
            ..SystemConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_discount_and_gap() {
        for cfg in [
            SystemConfig { discount: 1.0, ..Default::default() },
            SystemConfig { discount: 0.0, ..Default::default() },
            SystemConfig { snr_gap: 0.5, ..Default::default() },
            SystemConfig { arrival_prob: 1.0, ..Default::default() },
            SystemConfig { slots_per_block: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn step_schedule_decays() {
        let s = StepSchedule::default();
        assert_eq!(s.at(0), 0.01);
        assert!((s.at(1000) - 0.005).abs() < 1e-15);
        assert_eq!(StepSchedule::constant(0.3).at(123456), 0.3);
    }
}
