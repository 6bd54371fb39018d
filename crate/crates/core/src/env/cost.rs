use serde::{Deserialize, Serialize};

use super::{ServerState, WdState};
use crate::config::SystemConfig;

/// Energy spent in one block: the server's, and `E_wd + E_off` for each WD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEnergies {
    pub server: f64,
    pub wds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub centralized: f64,
    pub server: f64,
    pub wds: Vec<f64>,
}

/// `w1 q_ser / W + w2 E_ser`.
pub fn server_cost(queue_cycles: f64, energy: f64, cfg: &SystemConfig) -> f64 {
    cfg.w1() * queue_cycles / cfg.task_cycles + cfg.w2() * energy
}

/// `w3 q_wd / W + w4 E_k`.
pub fn wd_cost(queue_cycles: f64, energy: f64, cfg: &SystemConfig) -> f64 {
    cfg.w3() * queue_cycles / cfg.task_cycles + cfg.w4() * energy
}

/// Per-entity stage costs and their sum, accumulated server first then WD 1..K.
pub fn stage_costs(
    server: &ServerState,
    wds: &[WdState],
    energies: &BlockEnergies,
    cfg: &SystemConfig,
) -> StageCosts {
    assert_eq!(wds.len(), energies.wds.len(), "one energy per WD");
    let server_part = server_cost(server.queue_cycles, energies.server, cfg);
    let wd_parts: Vec<f64> = wds
        .iter()
        .zip(&energies.wds)
        .map(|(wd, &e)| wd_cost(wd.queue_cycles, e, cfg))
        .collect();
    let centralized = wd_parts.iter().fold(server_part, |acc, c| acc + c);
    StageCosts {
        centralized,
        server: server_part,
        wds: wd_parts,
    }
}
