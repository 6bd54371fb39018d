//! Parametric online Q-learner of the MEC server.
//!
//! The action-state is `[f_1..f_n, q_ser, q_wd_1..q_wd_K]`. The learner sees
//! queue lengths and its own rates only, never channel gains or arrival
//! statistics: its whole input is a [`ServerState`].

use serde::{Deserialize, Serialize};

use crate::config::{StepSchedule, SystemConfig};
use crate::env::{self, ServerState};
use crate::error::{Error, Result};
use crate::qfunc::{self, FeatureBank, FeatureBankSpec, ParamVector};
use crate::wd_agent::UpdateStats;

/// Normalisation scales of `[f_1..f_n, q_ser, q_wd_1..q_wd_K]`.
pub fn server_scales(cfg: &SystemConfig) -> Vec<f64> {
    let mut s = vec![cfg.f_max_ser; cfg.slots_per_block];
    s.extend(std::iter::repeat_n(cfg.task_cycles, cfg.num_wds + 1));
    s
}

pub fn action_state(rates: &[f64], state: &ServerState) -> Vec<f64> {
    let mut v = Vec::with_capacity(rates.len() + 1 + state.wd_queues.len());
    v.extend_from_slice(rates);
    v.push(state.queue_cycles);
    v.extend_from_slice(&state.wd_queues);
    v
}

/// `w1 q_ser / W + w2 E_ser`.
pub fn server_reward(queue_cycles: f64, rates: &[f64], cfg: &SystemConfig) -> f64 {
    env::server_cost(queue_cycles, env::server_energy(rates, cfg), cfg)
}

pub fn td_error_ser(reward: f64, eta: &ParamVector, phi_now: &[f64], phi_next: &[f64], discount: f64) -> f64 {
    qfunc::td_error(reward, eta, phi_now, phi_next, discount)
}

/// Half the derivative of rho^2 in the slot-`slot` CPU rate (0-based).
pub fn grad_rate(
    rho: f64,
    eta: &ParamVector,
    bank: &FeatureBank,
    phi_now: &[f64],
    phi_next: &[f64],
    rate: f64,
    slot: usize,
    cfg: &SystemConfig,
) -> f64 {
    let immediate = 3.0 * cfg.w2() * cfg.slot_seconds * cfg.cap_ser * rate * rate;
    qfunc::td_action_gradient(rho, immediate, eta, bank, slot, phi_now, phi_next, cfg.discount)
}

/// Half the gradient of rho^2 in `eta`.
pub fn grad_eta(rho: f64, phi_now: &[f64], phi_next: &[f64], discount: f64) -> Vec<f64> {
    qfunc::td_param_gradient(rho, phi_now, phi_next, discount)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerCheckpoint {
    pub bank: FeatureBankSpec,
    pub eta: ParamVector,
    pub rates: Vec<f64>,
    pub steps: usize,
    pub converged_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ServerLearner {
    pub bank: FeatureBank,
    pub eta: ParamVector,
    /// Rate iterate per slot, always inside `[0, f_max_ser]`.
    pub rates: Vec<f64>,
    pub f_max: f64,
    pub schedule: StepSchedule,
    pub steps: usize,
    pub tolerance: f64,
    pub last_rel_change: f64,
    pub converged_at: Option<usize>,
    pub freeze_on_convergence: bool,
}

impl ServerLearner {
    pub fn new(bank: FeatureBank, cfg: &SystemConfig) -> Self {
        let m = bank.len();
        ServerLearner {
            bank,
            eta: ParamVector::zeros(m),
            rates: vec![cfg.f_max_ser / 2.0; cfg.slots_per_block],
            f_max: cfg.f_max_ser,
            schedule: cfg.step_size,
            steps: 0,
            tolerance: cfg.tolerance,
            last_rel_change: f64::INFINITY,
            converged_at: None,
            freeze_on_convergence: cfg.freeze_on_convergence,
        }
    }

    pub fn with_seed(seed: u64, cfg: &SystemConfig) -> Self {
        Self::new(FeatureBank::random(seed, cfg.feature_dim, server_scales(cfg)), cfg)
    }

    pub fn is_frozen(&self) -> bool {
        self.freeze_on_convergence && self.converged_at.is_some()
    }

    pub fn act(&self) -> Vec<f64> {
        self.rates.clone()
    }

    /// One update on the transition `state --rates--> next`.
    pub fn update(
        &mut self,
        state: &ServerState,
        rates: &[f64],
        next: &ServerState,
        cfg: &SystemConfig,
        block: usize,
    ) -> Result<UpdateStats> {
        let phi_now = self.bank.features(&action_state(rates, state));
        let phi_next = self.bank.features(&action_state(rates, next));
        let reward = server_reward(state.queue_cycles, rates, cfg);
        let rho = td_error_ser(reward, &self.eta, &phi_now, &phi_next, cfg.discount);
        let gf: Vec<f64> = rates
            .iter()
            .enumerate()
            .map(|(i, &f)| grad_rate(rho, &self.eta, &self.bank, &phi_now, &phi_next, f, i, cfg))
            .collect();
        let ge = grad_eta(rho, &phi_now, &phi_next, cfg.discount);
        let grad_norm = 2.0 * gf.iter().chain(&ge).map(|g| g * g).sum::<f64>().sqrt();
        if self.is_frozen() {
            return Ok(UpdateStats {
                td_error: rho,
                grad_norm,
                rel_change: self.last_rel_change,
                converged: true,
            });
        }
        let alpha = self.schedule.at(self.steps);
        let rel_change = self.gd_step(&gf, &ge, alpha, block)?;
        if rel_change <= self.tolerance && self.converged_at.is_none() {
            self.converged_at = Some(block);
        }
        Ok(UpdateStats {
            td_error: rho,
            grad_norm,
            rel_change,
            converged: self.converged_at.is_some(),
        })
    }

    /// Clamped step on the rates (in units of `f_max`) and plain step on `eta`.
    pub fn gd_step(&mut self, grad_f: &[f64], grad_e: &[f64], alpha: f64, block: usize) -> Result<f64> {
        if grad_f.iter().chain(grad_e).any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                learner: "server".into(),
                block,
                reason: "non-finite gradient".into(),
            });
        }
        let scale2 = self.f_max * self.f_max;
        for (f, g) in self.rates.iter_mut().zip(grad_f) {
            *f = (*f - alpha * scale2 * g).clamp(0.0, self.f_max);
        }
        let old_norm = self.eta.norm();
        let mut diff = 0.0;
        for (e, g) in self.eta.0.iter_mut().zip(grad_e) {
            let step = alpha * g;
            *e -= step;
            diff += step * step;
        }
        if !self.eta.is_finite() {
            return Err(Error::Divergence {
                learner: "server".into(),
                block,
                reason: "eta is no longer finite".into(),
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

    pub fn checkpoint(&self) -> Option<ServerCheckpoint> {
        self.bank.spec().map(|bank| ServerCheckpoint {
            bank,
            eta: self.eta.clone(),
            rates: self.rates.clone(),
            steps: self.steps,
            converged_at: self.converged_at,
        })
    }

    pub fn restore(cp: &ServerCheckpoint, cfg: &SystemConfig) -> Self {
        let mut l = Self::new(FeatureBank::from_spec(&cp.bank), cfg);
        l.eta = cp.eta.clone();
        l.rates = cp.rates.clone();
        l.steps = cp.steps;
        l.converged_at = cp.converged_at;
        if cp.converged_at.is_some() {
            l.last_rel_change = 0.0;
        }
        l
    }
}

/// Acts, steps the server queue with this block's WD residuals, and updates.
///
/// `next_wd_queues` are the WD backlogs at the start of the next block.
pub fn server_learning_block(
    learner: &mut ServerLearner,
    state: &ServerState,
    residuals: &[f64],
    next_wd_queues: Vec<f64>,
    cfg: &SystemConfig,
    block: usize,
) -> Result<(Vec<f64>, UpdateStats, ServerState)> {
    let rates = learner.act();
    let q_next = env::server_queue_step(state.queue_cycles, &rates, residuals, cfg);
    let next = ServerState {
        queue_cycles: q_next,
        wd_queues: next_wd_queues,
        cpu_rates: rates.clone(),
    };
    let stats = learner.update(state, &rates, &next, cfg, block)?;
    Ok((rates, stats, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(q: f64, k: usize) -> ServerState {
        ServerState {
            queue_cycles: q,
            wd_queues: vec![0.0; k],
            cpu_rates: vec![0.0; 5],
        }
    }

    #[test]
    fn reward_examples() {
        let c = SystemConfig::default();
        assert_eq!(server_reward(0.0, &[0.0; 5], &c), 0.0);
        assert_eq!(server_reward(c.task_cycles, &[0.0; 5], &c), 1.0);
        let rates = [1e9, 2e9, 0.0, 4e9, 5e9];
        let expected = env::server_cost(3e9, env::server_energy(&rates, &c), &c);
        assert_eq!(server_reward(3e9, &rates, &c), expected);
    }

    #[test]
    fn td_error_examples() {
        assert_eq!(td_error_ser(2.0, &ParamVector::zeros(1), &[0.3], &[0.7], 0.5), 2.0);
        let eta = ParamVector(vec![2.0]);
        // eta^T phi_next = 1, eta^T phi_now = 1
        let rho = td_error_ser(2.0, &eta, &[0.5], &[0.5], 0.5);
        assert!((rho - 1.5).abs() < 1e-15);
        assert_eq!(td_error_ser(1.0, &eta, &[0.5], &[0.1], 0.0), 0.0);
    }

    #[test]
    fn gradient_degenerate_cases() {
        let c = SystemConfig::default();
        let bank = FeatureBank::random(9, 3, server_scales(&c));
        let x = action_state(&[5e9; 5], &state(1e10, 4));
        let phi = bank.features(&x);
        let g = grad_rate(1.5, &ParamVector::zeros(3), &bank, &phi, &phi, 4e9, 2, &c);
        let expected = 1.5 * 3.0 * c.w2() * c.slot_seconds * c.cap_ser * 4e9 * 4e9;
        assert!((g - expected).abs() <= 1e-15 * expected);
        assert_eq!(grad_rate(0.0, &ParamVector(vec![1.0; 3]), &bank, &phi, &phi, 4e9, 2, &c), 0.0);
        assert!(grad_eta(0.0, &phi, &phi, 0.9).iter().all(|&v| v == 0.0));
        for (a, b) in grad_eta(2.0, &phi, &phi, 0.0).iter().zip(&phi) {
            assert_eq!(*a, -2.0 * b);
        }
    }

    #[test]
    fn rate_clamps() {
        let c = SystemConfig::default();
        let mut l = ServerLearner::with_seed(1, &c);
        let m = c.feature_dim;
        l.rates = vec![0.9 * c.f_max_ser; 5];
        l.gd_step(&[-1.0; 5], &vec![0.0; m], 1.0, 0).unwrap();
        assert!(l.rates.iter().all(|&f| f == c.f_max_ser));
        l.gd_step(&[1.0; 5], &vec![0.0; m], 1.0, 0).unwrap();
        assert!(l.rates.iter().all(|&f| f == 0.0));
        let before = l.rates.clone();
        l.gd_step(&[0.0; 5], &vec![0.0; m], 1.0, 0).unwrap();
        assert_eq!(l.rates, before);
    }

    #[test]
    fn initial_rates_are_half_cap_and_divergence_is_flagged() {
        let c = SystemConfig::default();
        let mut l = ServerLearner::with_seed(1, &c);
        assert!(l.rates.iter().all(|&f| f == c.f_max_ser / 2.0));
        let err = l.gd_step(&[f64::INFINITY; 5], &vec![0.0; c.feature_dim], 0.1, 3).unwrap_err();
        assert!(matches!(err, Error::Divergence { block: 3, .. }));
    }

    #[test]
    fn server_learning_block_updates() {
        let c = SystemConfig::default();
        let mut l = ServerLearner::with_seed(2, &c);
        let s = state(2e10, 4);
        let (rates, stats, next) = server_learning_block(&mut l, &s, &[1e9, 0.0, 0.0, 2e9], vec![1e10; 4], &c, 0).unwrap();
        assert_eq!(rates, vec![5e9; 5]);
        let expected = env::server_queue_step(2e10, &rates, &[1e9, 0.0, 0.0, 2e9], &c);
        assert_eq!(next.queue_cycles, expected);
        assert!(stats.rel_change.is_infinite());
        assert!(l.rates.iter().all(|&f| (0.0..=c.f_max_ser).contains(&f)));
    }

    #[test]
    fn learner_input_excludes_channel_state() {
        // the update signature only admits queue-and-rate state
        fn _takes_only_server_state(l: &mut ServerLearner, s: &ServerState, c: &SystemConfig) {
            let _ = l.update(s, &[0.0; 5], s, c, 0);
        }
        let c = SystemConfig::default();
        assert_eq!(server_scales(&c).len(), c.slots_per_block + c.num_wds + 1);
    }
}
