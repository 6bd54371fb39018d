//! Comparison offloading policies sharing the learners' environment interface.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::env::{self, WdState};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::wd_agent::{project_residual, WdAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Proposed,
    Binary,
    Even,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Proposed, PolicyKind::Binary, PolicyKind::Even, PolicyKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::Binary => "binary",
            PolicyKind::Even => "even",
            PolicyKind::Random => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}` (expected proposed, binary, even or random)")))
    }
}

/// Estimated costs the binary rule compares for the head-of-line task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryCosts {
    pub local: f64,
    pub offload: f64,
    pub offload_power: f64,
}

/// Local: finish the task at full rate, paying cubic energy and the queue
/// delay of the blocks it takes. Offload: one slot of power for `zeta * hol`
/// bits, paying one block of delay.
pub fn binary_costs(state: &WdState, cfg: &SystemConfig) -> Result<BinaryCosts> {
    let hol = env::head_of_line_cycles(state.queue_cycles, cfg);
    let w = cfg.task_cycles;
    let local_energy = cfg.cap_wd * cfg.f_max_wd * cfg.f_max_wd * hol;
    let blocks = hol / cfg.local_cycle_cap();
    let local = cfg.w4() * local_energy + cfg.w3() * (hol / w) * blocks;
    let offload_power = env::required_power(cfg.bits_per_cycle * hol, state.channel_gain, cfg)?;
    let offload = cfg.w4() * cfg.slot_seconds * offload_power + cfg.w3() * hol / w;
    Ok(BinaryCosts {
        local,
        offload,
        offload_power,
    })
}

/// Offloads the whole head-of-line task or computes locally at full rate.
///
/// An offloaded task is shipped from its first cycle, so `residual` is the
/// entire task and no local computing happens that block.
pub fn binary_offload_decide(state: &WdState, cfg: &SystemConfig) -> Result<WdAction> {
    let n = cfg.slots_per_block;
    if state.queue_cycles <= 0.0 {
        return Ok(WdAction::idle(n));
    }
    let costs = binary_costs(state, cfg)?;
    if costs.offload_power <= cfg.max_power_w && costs.offload < costs.local {
        let hol = env::head_of_line_cycles(state.queue_cycles, cfg);
        return Ok(WdAction {
            power: costs.offload_power,
            cpu_rates: vec![0.0; n],
            residual: hol,
        });
    }
    let local = env::head_of_line_cycles(state.queue_cycles, cfg).min(cfg.local_cycle_cap());
    let rate = (local / (cfg.slots() * cfg.slot_seconds)).min(cfg.f_max_wd);
    Ok(WdAction {
        power: 0.0,
        cpu_rates: vec![rate; n],
        residual: 0.0,
    })
}

/// Offloads the configured fraction of the head-of-line residual.
pub fn even_allocation_decide(state: &WdState, cfg: &SystemConfig) -> Result<WdAction> {
    if state.queue_cycles <= 0.0 {
        return Ok(WdAction::idle(cfg.slots_per_block));
    }
    let hol = env::head_of_line_cycles(state.queue_cycles, cfg);
    project_residual(cfg.even_fraction * hol, state, cfg)
}

/// Offloads a Uniform(0, 1) fraction of the head-of-line residual.
pub fn random_offload_decide(state: &WdState, cfg: &SystemConfig, rng: &mut Stream) -> Result<WdAction> {
    let fraction: f64 = rng.random();
    if state.queue_cycles <= 0.0 {
        return Ok(WdAction::idle(cfg.slots_per_block));
    }
    let hol = env::head_of_line_cycles(state.queue_cycles, cfg);
    project_residual(fraction * hol, state, cfg)
}
