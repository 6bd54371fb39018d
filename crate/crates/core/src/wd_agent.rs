//! Per-WD parametric online Q-learner.
//!
//! The learner owns a transmit power iterate and the weights `theta` of its
//! Q-function over the action-state `[p, q, h, beta_1..beta_n]`. Each block it
//! descends the squared TD error in both, then maps the power to local CPU
//! rates through [`project_action`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{StepSchedule, SystemConfig};
use crate::env::{self, WdState};
use crate::error::{Error, Result};
use crate::qfunc::{self, FeatureBank, FeatureBankSpec, ParamVector};
use crate::rng::Stream;

/// Index of the power coordinate in the action-state vector.
pub const POWER_COORD: usize = 0;

/// Executed action of one WD for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdAction {
    pub power: f64,
    pub cpu_rates: Vec<f64>,
    /// Cycles of the head-of-line task shipped to the server.
    pub residual: f64,
}

impl WdAction {
    pub fn idle(n: usize) -> Self {
        WdAction {
            power: 0.0,
            cpu_rates: vec![0.0; n],
            residual: 0.0,
        }
    }
}

/// Statistics of one learner update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub td_error: f64,
    /// Euclidean norm of the full gradient of the squared TD error.
    pub grad_norm: f64,
    /// `||theta_{t+1} - theta_t|| / ||theta_t||`; infinite while `theta_t = 0`.
    pub rel_change: f64,
    pub converged: bool,
}

/// Normalisation scales of `[p, q, h, beta_1..beta_n]`.
pub fn wd_scales(mean_gain: f64, cfg: &SystemConfig) -> Vec<f64> {
    let mut s = vec![cfg.power_ref_w, cfg.task_cycles, mean_gain];
    s.extend(std::iter::repeat_n(1.0, cfg.slots_per_block));
    s
}

pub fn action_state(power: f64, state: &WdState) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 + state.arrivals.len());
    v.push(power);
    v.push(state.queue_cycles);
    v.push(state.channel_gain);
    v.extend(state.arrivals.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    v
}

/// `w3 q / W + w4 (E_wd + tau p)`.
pub fn wd_reward(queue_cycles: f64, cpu_rates: &[f64], power: f64, cfg: &SystemConfig) -> f64 {
    let energy = env::local_energy(cpu_rates, cfg) + env::offload_energy(power, cfg);
    env::wd_cost(queue_cycles, energy, cfg)
}

pub fn td_error_wd(reward: f64, theta: &ParamVector, phi_now: &[f64], phi_next: &[f64], discount: f64) -> f64 {
    qfunc::td_error(reward, theta, phi_now, phi_next, discount)
}

/// Half the derivative of delta^2 in the shared power coordinate.
pub fn grad_power(
    delta: f64,
    theta: &ParamVector,
    bank: &FeatureBank,
    phi_now: &[f64],
    phi_next: &[f64],
    cfg: &SystemConfig,
) -> f64 {
    let immediate = cfg.w4() * cfg.slot_seconds;
    qfunc::td_action_gradient(delta, immediate, theta, bank, POWER_COORD, phi_now, phi_next, cfg.discount)
}

/// Half the gradient of delta^2 in `theta`.
pub fn grad_theta(delta: f64, phi_now: &[f64], phi_next: &[f64], discount: f64) -> Vec<f64> {
    qfunc::td_param_gradient(delta, phi_now, phi_next, discount)
}

/// Brings a target residual into a feasible `(p, f)` pair for `state`.
///
/// The local workload `C` is the smallest-`m` solution of
/// `C = q - (r + m W)` inside `[0, n tau f_max]`, spread evenly over the slots.
/// The returned power delivers exactly the resulting intermediate output.
pub fn project_residual(target: f64, state: &WdState, cfg: &SystemConfig) -> Result<WdAction> {
    let n = cfg.slots_per_block;
    let q = state.queue_cycles;
    if q <= 0.0 {
        return Ok(WdAction::idle(n));
    }
    let w = cfg.task_cycles;
    let cap = cfg.local_cycle_cap();
    let r = target.clamp(0.0, w - 1.0);
    let m0 = ((q - r - cap) / w).ceil().max(0.0);
    let mut local = q - r - m0 * w;
    if local < 0.0 {
        let x = env::residual_after(q, 0.0, cfg);
        let extra = if x >= r { x - r } else { 0.0 };
        local = (q - x + extra).min(cap);
    }
    let local = local.clamp(0.0, cap);
    let rate = (local / (cfg.slots() * cfg.slot_seconds)).min(cfg.f_max_wd);
    let cpu_rates = vec![rate; n];
    let residual = env::residual_cycles(q, &cpu_rates, cfg);
    let power = env::required_power(cfg.bits_per_cycle * residual, state.channel_gain, cfg)?;
    Ok(WdAction {
        power,
        cpu_rates,
        residual,
    })
}

/// Recovers local CPU rates from a proposed transmit power.
pub fn project_action(proposed_power: f64, state: &WdState, cfg: &SystemConfig) -> Result<WdAction> {
    let bits = env::achievable_bits(proposed_power.max(0.0), state.channel_gain, cfg);
    project_residual(bits / cfg.bits_per_cycle, state, cfg)
}

/// Replayable learner state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdCheckpoint {
    pub bank: FeatureBankSpec,
    pub theta: ParamVector,
    pub power: f64,
    pub steps: usize,
    pub converged_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct WdLearner {
    pub bank: FeatureBank,
    pub theta: ParamVector,
    /// Power iterate, watts; never negative.
    pub power: f64,
    /// Power entered into the action-state of the last executed block.
    pub proposed: f64,
    pub schedule: StepSchedule,
    /// Number of gradient steps applied so far.
    pub steps: usize,
    pub tolerance: f64,
    pub last_rel_change: f64,
    pub converged_at: Option<usize>,
    pub freeze_on_convergence: bool,
    pub jitter_std: f64,
    /// Label used in divergence reports.
    pub label: String,
}

impl WdLearner {
    pub fn new(bank: FeatureBank, cfg: &SystemConfig, label: impl Into<String>) -> Self {
        let m = bank.len();
        WdLearner {
            bank,
            theta: ParamVector::zeros(m),
            power: cfg.initial_power_w,
            proposed: cfg.initial_power_w,
            schedule: cfg.step_size,
            steps: 0,
            tolerance: cfg.tolerance,
            last_rel_change: f64::INFINITY,
            converged_at: None,
            freeze_on_convergence: cfg.freeze_on_convergence,
            jitter_std: cfg.power_jitter_std,
            label: label.into(),
        }
    }

    /// Learner with a freshly drawn feature bank for a WD of mean gain `mean_gain`.
    pub fn with_seed(seed: u64, mean_gain: f64, cfg: &SystemConfig, label: impl Into<String>) -> Self {
        let bank = FeatureBank::random(seed, cfg.feature_dim, wd_scales(mean_gain, cfg));
        Self::new(bank, cfg, label)
    }

    pub fn is_frozen(&self) -> bool {
        self.freeze_on_convergence && self.converged_at.is_some()
    }

    /// Power entered into this block's action-state: the iterate, plus jitter
    /// when enabled.
    pub fn propose(&mut self, rng: &mut Stream) -> Result<f64> {
        let mut proposed = self.power;
        if self.jitter_std > 0.0 && !self.is_frozen() {
            let noise = Normal::new(0.0, self.jitter_std).map_err(|e| Error::Config(e.to_string()))?;
            proposed = (proposed + noise.sample(rng)).max(0.0);
        } else {
            // keep the policy stream position independent of the jitter setting
            let _: f64 = rng.random();
        }
        self.proposed = proposed;
        Ok(proposed)
    }

    /// Executes the current power iterate on `state`. The iterate itself is
    /// left alone; only the environment sees the projected power.
    pub fn act(&mut self, state: &WdState, cfg: &SystemConfig, rng: &mut Stream) -> Result<WdAction> {
        let p = self.propose(rng)?;
        project_action(p, state, cfg)
    }

    /// One update on the transition `state --action--> next`.
    pub fn update(
        &mut self,
        state: &WdState,
        action: &WdAction,
        next: &WdState,
        cfg: &SystemConfig,
        block: usize,
    ) -> Result<UpdateStats> {
        let p = self.proposed;
        let phi_now = self.bank.features(&action_state(p, state));
        let phi_next = self.bank.features(&action_state(p, next));
        let reward = wd_reward(state.queue_cycles, &action.cpu_rates, p, cfg);
        let delta = td_error_wd(reward, &self.theta, &phi_now, &phi_next, cfg.discount);
        let gp = grad_power(delta, &self.theta, &self.bank, &phi_now, &phi_next, cfg);
        let gt = grad_theta(delta, &phi_now, &phi_next, cfg.discount);
        let grad_norm = 2.0 * (gp * gp + gt.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if self.is_frozen() {
            return Ok(UpdateStats {
                td_error: delta,
                grad_norm,
                rel_change: self.last_rel_change,
                converged: true,
            });
        }
        let alpha = self.schedule.at(self.steps);
        let rel_change = self.gd_step(gp, &gt, alpha, block)?;
        if rel_change <= self.tolerance && self.converged_at.is_none() {
            self.converged_at = Some(block);
        }
        Ok(UpdateStats {
            td_error: delta,
            grad_norm,
            rel_change,
            converged: self.converged_at.is_some(),
        })
    }

    /// Projected step on the power (in units of `power_ref`) and plain step on `theta`.
    /// Returns the relative parameter change.
    pub fn gd_step(&mut self, grad_p: f64, grad_t: &[f64], alpha: f64, block: usize) -> Result<f64> {
        if !grad_p.is_finite() || grad_t.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                learner: self.label.clone(),
                block,
                reason: format!("non-finite gradient (power gradient {grad_p})"),
            });
        }
        let p_ref = self.bank.scales()[POWER_COORD];
        self.power = (self.power - alpha * p_ref * p_ref * grad_p).max(0.0);
        let old_norm = self.theta.norm();
        let mut diff = 0.0;
        for (t, g) in self.theta.0.iter_mut().zip(grad_t) {
            let step = alpha * g;
            *t -= step;
            diff += step * step;
        }
        if !self.theta.is_finite() {
            return Err(Error::Divergence {
                learner: self.label.clone(),
                block,
                reason: "theta is no longer finite".into(),
            });
        }
        self.steps += 1;
        let rel = if old_norm > 0.0 {
            diff.sqrt() / old_norm
        } else {
            f64::INFINITY
        };
        self.last_rel_change = rel;
        Ok(rel)
    }

    pub fn checkpoint(&self) -> Option<WdCheckpoint> {
        self.bank.spec().map(|bank| WdCheckpoint {
            bank,
            theta: self.theta.clone(),
            power: self.power,
            steps: self.steps,
            converged_at: self.converged_at,
        })
    }

    pub fn restore(cp: &WdCheckpoint, cfg: &SystemConfig, label: impl Into<String>) -> Self {
        let mut l = Self::new(FeatureBank::from_spec(&cp.bank), cfg, label);
        l.theta = cp.theta.clone();
        l.power = cp.power;
        l.proposed = cp.power;
        l.steps = cp.steps;
        l.converged_at = cp.converged_at;
        if cp.converged_at.is_some() {
            l.last_rel_change = 0.0;
        }
        l
    }
}

/// Result of one full learner iteration.
#[derive(Debug, Clone)]
pub struct WdBlockOutcome {
    pub action: WdAction,
    pub stats: UpdateStats,
}

/// Acts on `state`, advances the queue to `next` (whose exogenous part is
/// supplied by the caller) and applies one update.
pub fn wd_learning_block(
    learner: &mut WdLearner,
    state: &WdState,
    next_channel: f64,
    next_arrivals: Vec<bool>,
    cfg: &SystemConfig,
    rng: &mut Stream,
    block: usize,
) -> Result<(WdBlockOutcome, WdState)> {
    let action = learner.act(state, cfg, rng)?;
    let local = env::total_cycles(&action.cpu_rates, cfg);
    let q_next = env::wd_queue_step_explicit(state.queue_cycles, local, action.residual, &state.arrivals, cfg);
    let next = WdState::idle(q_next, next_channel, next_arrivals);
    let stats = learner.update(state, &action, &next, cfg, block)?;
    Ok((WdBlockOutcome { action, stats }, next))
}
