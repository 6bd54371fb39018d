//! Physical and queueing dynamics of the multiuser MEC system.
//!
//! Everything here is a pure function of its explicit inputs plus, where
//! randomness is involved, an explicitly passed stream.

mod channel;
mod cost;
mod energy;
mod queue;
mod rate;

pub use channel::{pathloss_db, sample_channel, ChannelProfile, MIN_DISTANCE_M};
pub use cost::{server_cost, stage_costs, wd_cost, BlockEnergies, StageCosts};
pub use energy::{local_energy, offload_energy, server_energy};
pub use queue::{
    head_of_line_cycles, intermediate_output_size, positive_part, residual_after, residual_cycles,
    sample_arrivals, server_queue_step, total_cycles, wd_queue_step, wd_queue_step_explicit,
};
pub use rate::{achievable_bits, required_power};

use serde::{Deserialize, Serialize};

/// Local state of one WD at the start of a block, plus the action it executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdState {
    pub queue_cycles: f64,
    pub channel_gain: f64,
    /// Task arrival indicator per slot of this block.
    pub arrivals: Vec<bool>,
    pub power: f64,
    pub cpu_rates: Vec<f64>,
}

impl WdState {
    pub fn idle(queue_cycles: f64, channel_gain: f64, arrivals: Vec<bool>) -> Self {
        let n = arrivals.len();
        WdState {
            queue_cycles,
            channel_gain,
            arrivals,
            power: 0.0,
            cpu_rates: vec![0.0; n],
        }
    }

    pub fn arrival_count(&self) -> usize {
        self.arrivals.iter().filter(|&&b| b).count()
    }
}

/// What the server learner observes: its own backlog, every WD backlog, and its rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub queue_cycles: f64,
    pub wd_queues: Vec<f64>,
    pub cpu_rates: Vec<f64>,
}
