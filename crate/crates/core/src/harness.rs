//! Episode loop, discounted objective and seeded sweeps.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, PolicyKind};
use crate::config::SystemConfig;
use crate::env::{self, BlockEnergies, ChannelProfile, ServerState, WdState};
use crate::error::{Error, Result};
use crate::rng::{self, SeedLedger, Stream, StreamKind};
use crate::server_agent::ServerLearner;
use crate::wd_agent::{UpdateStats, WdAction, WdLearner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerMode {
    /// The server runs its parametric learner (all policies).
    Learner,
    /// Every slot runs at `fixed_server_fraction * f_max_ser`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[serde(rename = "b")]
    ArrivalProb,
    #[serde(rename = "K")]
    NumWds,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::ArrivalProb => "b",
            SweepAxis::NumWds => "K",
        }
    }

    /// Copy of `base` with the axis set to `value`.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::ArrivalProb => cfg.arrival_prob = value,
            SweepAxis::NumWds => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("K must be a nonnegative integer, got {value}")));
                }
                cfg.num_wds = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub policy: PolicyKind,
    pub horizon_blocks: usize,
    pub server_mode: ServerMode,
    pub fixed_server_fraction: f64,
    /// Policies compared by a sweep.
    pub policies: Vec<PolicyKind>,
    /// Replicates per sweep cell.
    pub seeds: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig::default(),
            policy: PolicyKind::Proposed,
            horizon_blocks: 2000,
            server_mode: ServerMode::Learner,
            fixed_server_fraction: 0.5,
            policies: PolicyKind::ALL.to_vec(),
            seeds: 5,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.horizon_blocks == 0 {
            return Err(Error::Config("horizon_blocks must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fixed_server_fraction) {
            return Err(Error::Config("fixed_server_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdMetrics {
    pub cost: f64,
    pub e_wd: f64,
    pub e_off: f64,
    pub q_wd: f64,
    pub power: f64,
    pub residual: f64,
    pub td_err: Option<f64>,
    pub grad_norm: Option<f64>,
    pub theta_rel_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMetrics {
    pub block: usize,
    pub wds: Vec<WdMetrics>,
    pub cost_ser: f64,
    pub e_ser: f64,
    pub q_ser: f64,
    pub rho: Option<f64>,
    pub grad_norm_ser: Option<f64>,
    pub eta_rel_change: Option<f64>,
    /// Centralized stage cost, accumulated server first then WD 1..K.
    pub cost_total: f64,
    pub discounted_cum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpisodeStatus {
    Completed,
    Diverged { learner: String, block: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub config: ExperimentConfig,
    pub seeds: SeedLedger,
    pub topology: Vec<ChannelProfile>,
    pub blocks: Vec<BlockMetrics>,
    pub status: EpisodeStatus,
    pub wd_converged_at: Vec<Option<usize>>,
    pub server_converged_at: Option<usize>,
}

impl EpisodeTrace {
    pub fn costs(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.cost_total).collect()
    }

    pub fn discounted_sum(&self) -> f64 {
        self.blocks.last().map_or(0.0, |b| b.discounted_cum)
    }

    /// `gamma^T c_max / (1 - gamma)` with `c_max` the largest observed stage cost.
    pub fn tail_bound(&self) -> f64 {
        let c_max = self.costs().into_iter().fold(0.0, f64::max);
        tail_bound(self.config.system.discount, self.blocks.len(), c_max)
    }
}

/// `sum_t gamma^t c_t`.
pub fn discounted_sum(costs: &[f64], discount: f64) -> f64 {
    let mut weight = 1.0;
    let mut acc = 0.0;
    for c in costs {
        acc += weight * c;
        weight *= discount;
    }
    acc
}

pub fn tail_bound(discount: f64, horizon: usize, c_max: f64) -> f64 {
    discount.powi(horizon as i32) * c_max / (1.0 - discount)
}

enum WdController {
    Learner(Box<WdLearner>),
    Baseline(PolicyKind),
}

struct WdEntity {
    profile: ChannelProfile,
    channel: Stream,
    arrivals: Stream,
    policy: Stream,
    controller: WdController,
}

impl WdEntity {
    fn exogenous(&mut self, cfg: &SystemConfig) -> (f64, Vec<bool>) {
        let h = env::sample_channel(&mut self.channel, &self.profile);
        let beta = env::sample_arrivals(&mut self.arrivals, cfg.arrival_prob, cfg.slots_per_block);
        (h, beta)
    }

    fn decide(&mut self, state: &WdState, cfg: &SystemConfig) -> Result<WdAction> {
        match &mut self.controller {
            WdController::Learner(l) => l.act(state, cfg, &mut self.policy),
            WdController::Baseline(PolicyKind::Binary) => baselines::binary_offload_decide(state, cfg),
            WdController::Baseline(PolicyKind::Even) => baselines::even_allocation_decide(state, cfg),
            WdController::Baseline(PolicyKind::Random) => baselines::random_offload_decide(state, cfg, &mut self.policy),
            WdController::Baseline(PolicyKind::Proposed) => unreachable!("proposed policy always has a learner"),
        }
    }
}

fn diverged(e: Error) -> Result<EpisodeStatus> {
    match e {
        Error::Divergence { learner, block, reason } => Ok(EpisodeStatus::Diverged { learner, block, reason }),
        other => Err(other),
    }
}

/// Runs one episode of `horizon_blocks` blocks from empty queues.
///
/// A learner divergence ends the episode early; the trace then holds every
/// completed block and the status names the learner.
pub fn run_episode(exp: &ExperimentConfig) -> Result<EpisodeTrace> {
    exp.validate()?;
    let cfg = &exp.system;
    let k = cfg.num_wds;
    let mut ledger = SeedLedger::new(cfg.seed);

    let mut wds = Vec::with_capacity(k);
    for i in 0..k as u64 {
        let mut topo = ledger.open(StreamKind::Topology, i);
        let profile = ChannelProfile::draw(&mut topo, cfg);
        let channel = ledger.open(StreamKind::Channel, i);
        let arrivals = ledger.open(StreamKind::Arrivals, i);
        let policy = ledger.open(StreamKind::Policy, i);
        let controller = match exp.policy {
            PolicyKind::Proposed => {
                let seed = ledger.record_seed(StreamKind::WdFeatures, i);
                WdController::Learner(Box::new(WdLearner::with_seed(seed, profile.mean_gain, cfg, format!("wd{i}"))))
            }
            other => WdController::Baseline(other),
        };
        wds.push(WdEntity {
            profile,
            channel,
            arrivals,
            policy,
            controller,
        });
    }
    let mut server = match exp.server_mode {
        ServerMode::Learner => Some(ServerLearner::with_seed(ledger.record_seed(StreamKind::ServerFeatures, 0), cfg)),
        ServerMode::Fixed => None,
    };
    let fixed_rates = vec![exp.fixed_server_fraction * cfg.f_max_ser; cfg.slots_per_block];

    let mut states: Vec<WdState> = wds
        .iter_mut()
        .map(|e| {
            let (h, beta) = e.exogenous(cfg);
            WdState::idle(0.0, h, beta)
        })
        .collect();
    let mut server_state = ServerState {
        queue_cycles: 0.0,
        wd_queues: vec![0.0; k],
        cpu_rates: vec![0.0; cfg.slots_per_block],
    };

    let topology = wds.iter().map(|e| e.profile.clone()).collect();
    let mut blocks = Vec::with_capacity(exp.horizon_blocks);
    let mut status = EpisodeStatus::Completed;
    let mut weight = 1.0;
    let mut discounted = 0.0;

    'blocks: for t in 0..exp.horizon_blocks {
        let mut actions = Vec::with_capacity(k);
        for (e, s) in wds.iter_mut().zip(&states) {
            actions.push(e.decide(s, cfg)?);
        }
        for (s, a) in states.iter_mut().zip(&actions) {
            s.power = a.power;
            s.cpu_rates = a.cpu_rates.clone();
        }
        let e_wd: Vec<f64> = actions.iter().map(|a| env::local_energy(&a.cpu_rates, cfg)).collect();
        let e_off: Vec<f64> = actions.iter().map(|a| env::offload_energy(a.power, cfg)).collect();

        let ser_rates = server.as_ref().map_or_else(|| fixed_rates.clone(), |l| l.act());
        server_state.cpu_rates = ser_rates.clone();
        let e_ser = env::server_energy(&ser_rates, cfg);

        let energies = BlockEnergies {
            server: e_ser,
            wds: e_wd.iter().zip(&e_off).map(|(a, b)| a + b).collect(),
        };
        let costs = env::stage_costs(&server_state, &states, &energies, cfg);

        let residuals: Vec<f64> = actions.iter().map(|a| a.residual).collect();
        let mut next_states = Vec::with_capacity(k);
        for ((e, s), a) in wds.iter_mut().zip(&states).zip(&actions) {
            let local = env::total_cycles(&a.cpu_rates, cfg);
            let q = env::wd_queue_step_explicit(s.queue_cycles, local, a.residual, &s.arrivals, cfg);
            let (h, beta) = e.exogenous(cfg);
            next_states.push(WdState::idle(q, h, beta));
        }
        let next_server = ServerState {
            queue_cycles: env::server_queue_step(server_state.queue_cycles, &ser_rates, &residuals, cfg),
            wd_queues: next_states.iter().map(|s| s.queue_cycles).collect(),
            cpu_rates: ser_rates.clone(),
        };

        let mut wd_stats: Vec<Option<UpdateStats>> = Vec::with_capacity(k);
        for (idx, e) in wds.iter_mut().enumerate() {
            let stats = match &mut e.controller {
                WdController::Learner(l) => match l.update(&states[idx], &actions[idx], &next_states[idx], cfg, t) {
                    Ok(s) => Some(s),
                    Err(err) => {
                        status = diverged(err)?;
                        break 'blocks;
                    }
                },
                WdController::Baseline(_) => None,
            };
            wd_stats.push(stats);
        }
        let ser_stats = match server.as_mut() {
            Some(l) => match l.update(&server_state, &ser_rates, &next_server, cfg, t) {
                Ok(s) => Some(s),
                Err(err) => {
                    status = diverged(err)?;
                    break 'blocks;
                }
            },
            None => None,
        };

        discounted += weight * costs.centralized;
        weight *= cfg.discount;
        let wd_rows = (0..k)
            .map(|i| WdMetrics {
                cost: costs.wds[i],
                e_wd: e_wd[i],
                e_off: e_off[i],
                q_wd: states[i].queue_cycles,
                power: actions[i].power,
                residual: actions[i].residual,
                td_err: wd_stats[i].map(|s| s.td_error),
                grad_norm: wd_stats[i].map(|s| s.grad_norm),
                theta_rel_change: wd_stats[i].map(|s| s.rel_change),
            })
            .collect();
        blocks.push(BlockMetrics {
            block: t,
            wds: wd_rows,
            cost_ser: costs.server,
            e_ser,
            q_ser: server_state.queue_cycles,
            rho: ser_stats.map(|s| s.td_error),
            grad_norm_ser: ser_stats.map(|s| s.grad_norm),
            eta_rel_change: ser_stats.map(|s| s.rel_change),
            cost_total: costs.centralized,
            discounted_cum: discounted,
        });

        states = next_states;
        server_state = next_server;
    }

    let wd_converged_at = wds
        .iter()
        .map(|e| match &e.controller {
            WdController::Learner(l) => l.converged_at,
            WdController::Baseline(_) => None,
        })
        .collect();
    Ok(EpisodeTrace {
        config: exp.clone(),
        seeds: ledger,
        topology,
        blocks,
        status,
        wd_converged_at,
        server_converged_at: server.as_ref().and_then(|l| l.converged_at),
    })
}

/// Master seed of replicate `r` of a sweep rooted at `master`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    rng::derive_seed(master, StreamKind::Replicate, r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis_value: f64,
    pub policy: PolicyKind,
    pub replicate: usize,
    pub seed: u64,
    pub discounted_sum: f64,
    pub tail_bound: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub policy: PolicyKind,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    /// Half width of a normal 95% interval of the mean.
    pub ci95: f64,
    pub tail_bound: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn row(&self, axis_value: f64, policy: PolicyKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis_value == axis_value && r.policy == policy)
    }
}

/// Runs every (axis value, policy, replicate) cell on a pool of `jobs` threads.
///
/// Replicate `r` uses the same master seed for every policy and axis value.
/// Results do not depend on `jobs`.
pub fn sweep(exp: &ExperimentConfig, axis: SweepAxis, values: &[f64], jobs: usize) -> Result<SweepTable> {
    if values.len() < 2 {
        return Err(Error::Config("a sweep needs at least 2 axis values".into()));
    }
    if exp.seeds < 3 {
        return Err(Error::Config("a sweep needs at least 3 seeds per cell".into()));
    }
    if exp.policies.is_empty() {
        return Err(Error::Config("a sweep needs at least one policy".into()));
    }
    let mut specs = Vec::new();
    for &v in values {
        let system = axis.apply(&exp.system, v)?;
        for &policy in &exp.policies {
            for r in 0..exp.seeds {
                let mut cell = exp.clone();
                cell.system = system.clone();
                cell.system.seed = replicate_seed(exp.system.seed, r);
                cell.policy = policy;
                specs.push((v, policy, r, cell));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<SweepCell>> = pool.install(|| {
        specs
            .par_iter()
            .map(|(v, policy, r, cell)| {
                let trace = run_episode(cell)?;
                Ok(SweepCell {
                    axis_value: *v,
                    policy: *policy,
                    replicate: *r,
                    seed: cell.system.seed,
                    discounted_sum: trace.discounted_sum(),
                    tail_bound: trace.tail_bound(),
                    diverged: trace.status != EpisodeStatus::Completed,
                })
            })
            .collect()
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &v in values {
        for &policy in &exp.policies {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.axis_value == v && c.policy == policy).collect();
            let n = group.len() as f64;
            let mean = group.iter().map(|c| c.discounted_sum).sum::<f64>() / n;
            let var = group.iter().map(|c| (c.discounted_sum - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let std = var.sqrt();
            rows.push(SweepRow {
                axis_value: v,
                policy,
                seeds: group.len(),
                mean,
                std,
                ci95: 1.96 * std / n.sqrt(),
                tail_bound: group.iter().map(|c| c.tail_bound).fold(0.0, f64::max),
                diverged: group.iter().filter(|c| c.diverged).count(),
            });
        }
    }
    Ok(SweepTable { axis, rows, cells })
}
