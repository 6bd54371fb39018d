use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::qfunc::{FeatureBank, ParamVector};
use crate::rng::{self, Stream, StreamKind};
use crate::{server_agent, wd_agent};

/// Largest relative step of the extrapolated central differences over action
/// coordinates, in units of each coordinate's scale.
pub const FD_STEP: f64 = 1e-3;
/// Relative step over parameter coordinates. The TD error is affine in
/// the parameters, so a single central difference of its square carries no
/// truncation error.
pub const PARAM_FD_STEP: f64 = 1e-2;
pub const MAX_REL_ERR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    Power,
    Theta,
    Rate,
    Eta,
}

impl GradTarget {
    pub const ALL: [GradTarget; 4] = [GradTarget::Power, GradTarget::Theta, GradTarget::Rate, GradTarget::Eta];

    pub fn fd_step(self) -> f64 {
        match self {
            GradTarget::Power | GradTarget::Rate => FD_STEP,
            GradTarget::Theta | GradTarget::Eta => PARAM_FD_STEP,
        }
    }

    fn is_wd(self) -> bool {
        matches!(self, GradTarget::Power | GradTarget::Theta)
    }
}

/// One transition of a WD or server learner, with both action-states sharing
/// the action coordinates.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub target: GradTarget,
    pub cfg: SystemConfig,
    pub bank: FeatureBank,
    pub params: ParamVector,
    pub x_now: Vec<f64>,
    pub x_next: Vec<f64>,
    /// Local CPU rates entering the WD reward.
    pub wd_rates: Vec<f64>,
}

impl GradInstance {
    pub fn random(target: GradTarget, cfg: &SystemConfig, rng: &mut Stream) -> Self {
        let m = cfg.feature_dim;
        let n = cfg.slots_per_block;
        let w = cfg.task_cycles;
        let params = ParamVector(
            (0..m)
                .map(|_| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect(),
        );
        let bank_seed: u64 = rng.random();
        if target.is_wd() {
            let mean_gain = 10f64.powf(rng.random_range(2.0..5.0));
            let bank = FeatureBank::random(bank_seed, m, wd_agent::wd_scales(mean_gain, cfg));
            let p = rng.random_range(0.0..2.0);
            let state = |rng: &mut Stream| {
                let mut v = vec![p, rng.random_range(0.0..5.0) * w];
                let e: f64 = Exp1.sample(rng);
                v.push(mean_gain * e);
                v.extend((0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }));
                v
            };
            let x_now = state(rng);
            let x_next = state(rng);
            let wd_rates = (0..n).map(|_| rng.random_range(0.0..cfg.f_max_wd)).collect();
            GradInstance {
                target,
                cfg: cfg.clone(),
                bank,
                params,
                x_now,
                x_next,
                wd_rates,
            }
        } else {
            let bank = FeatureBank::random(bank_seed, m, server_agent::server_scales(cfg));
            let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..cfg.f_max_ser)).collect();
            let state = |rng: &mut Stream| {
                let mut v = rates.clone();
                v.push(rng.random_range(0.0..10.0) * w);
                v.extend((0..cfg.num_wds).map(|_| rng.random_range(0.0..5.0) * w));
                v
            };
            let x_now = state(rng);
            let x_next = state(rng);
            GradInstance {
                target,
                cfg: cfg.clone(),
                bank,
                params,
                x_now,
                x_next,
                wd_rates: Vec::new(),
            }
        }
    }

    fn reward(&self, x_now: &[f64]) -> f64 {
        if self.target.is_wd() {
            wd_agent::wd_reward(x_now[1], &self.wd_rates, x_now[0], &self.cfg)
        } else {
            let n = self.cfg.slots_per_block;
            server_agent::server_reward(x_now[n], &x_now[..n], &self.cfg)
        }
    }

    /// TD error of the instance with the given action-states and parameters.
    pub fn td_error(&self, x_now: &[f64], x_next: &[f64], params: &ParamVector) -> f64 {
        let phi_now = self.bank.features(x_now);
        let phi_next = self.bank.features(x_next);
        crate::qfunc::td_error(self.reward(x_now), params, &phi_now, &phi_next, self.cfg.discount)
    }

    /// Analytic half-gradient over the coordinates of the target.
    pub fn analytic(&self) -> Vec<f64> {
        let phi_now = self.bank.features(&self.x_now);
        let phi_next = self.bank.features(&self.x_next);
        let d = self.td_error(&self.x_now, &self.x_next, &self.params);
        let g = self.cfg.discount;
        match self.target {
            GradTarget::Power => vec![wd_agent::grad_power(d, &self.params, &self.bank, &phi_now, &phi_next, &self.cfg)],
            GradTarget::Theta => wd_agent::grad_theta(d, &phi_now, &phi_next, g),
            GradTarget::Rate => (0..self.cfg.slots_per_block)
                .map(|i| {
                    server_agent::grad_rate(d, &self.params, &self.bank, &phi_now, &phi_next, self.x_now[i], i, &self.cfg)
                })
                .collect(),
            GradTarget::Eta => server_agent::grad_eta(d, &phi_now, &phi_next, g),
        }
    }

    /// Central differences of `delta^2`, halved. Action coordinates add two
    /// Richardson levels over the steps `h`, `h / 2` and `h / 4`.
    pub fn numeric(&self, rel_step: f64) -> Vec<f64> {
        let coords: Vec<(bool, usize, f64)> = match self.target {
            GradTarget::Power => vec![(true, wd_agent::POWER_COORD, self.bank.scales()[wd_agent::POWER_COORD])],
            GradTarget::Rate => (0..self.cfg.slots_per_block).map(|c| (true, c, self.bank.scales()[c])).collect(),
            GradTarget::Theta | GradTarget::Eta => {
                (0..self.params.len()).map(|i| (false, i, self.params.0[i].abs().max(1.0))).collect()
            }
        };
        coords
            .into_iter()
            .map(|(action, c, scale)| {
                let td = |s: f64| {
                    if action {
                        let mut a = self.x_now.clone();
                        let mut b = self.x_next.clone();
                        a[c] += s;
                        b[c] += s;
                        self.td_error(&a, &b, &self.params)
                    } else {
                        let mut p = self.params.clone();
                        p.0[c] += s;
                        self.td_error(&self.x_now, &self.x_next, &p)
                    }
                };
                let central = |h: f64| {
                    let (dp, dm) = (td(h), td(-h));
                    (dp - dm) * (dp + dm) / (2.0 * h) / 2.0
                };
                let h = rel_step * scale;
                if !action {
                    return central(h);
                }
                let d = [central(h), central(h / 2.0), central(h / 4.0)];
                let r1 = (4.0 * d[1] - d[0]) / 3.0;
                let r2 = (4.0 * d[2] - d[1]) / 3.0;
                (16.0 * r2 - r1) / 15.0
            })
            .collect()
    }
}

/// Worst error over the coordinates: relative, or absolute when both sides vanish.
pub fn finite_diff_check(instance: &GradInstance, rel_step: f64) -> f64 {
    instance
        .analytic()
        .iter()
        .zip(instance.numeric(rel_step))
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                (a - b).abs() / scale
            } else {
                (a - b).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub target: GradTarget,
    pub trials: usize,
    pub rel_step: f64,
    pub max_rel_err: f64,
    pub worst_trial: usize,
    pub threshold: f64,
    pub passed: bool,
}

/// Runs `trials` random instances of every target on `cfg`.
pub fn gradcheck_suite(cfg: &SystemConfig, trials: usize, seed: u64) -> Vec<GradCheckReport> {
    GradTarget::ALL
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            let mut s = rng::stream(seed, StreamKind::Diagnostics, k as u64);
            let mut worst = (0.0, 0);
            for t in 0..trials {
                let inst = GradInstance::random(target, cfg, &mut s);
                let e = finite_diff_check(&inst, target.fd_step());
                if e > worst.0 || e.is_nan() {
                    worst = (e, t);
                }
            }
            GradCheckReport {
                target,
                trials,
                rel_step: target.fd_step(),
                max_rel_err: worst.0,
                worst_trial: worst.1,
                threshold: MAX_REL_ERR,
                passed: worst.0 <= MAX_REL_ERR,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_theta_error_is_only_rounding() {
        let cfg = SystemConfig::default();
        let mut s = rng::seeded(4);
        let mut inst = GradInstance::random(GradTarget::Theta, &cfg, &mut s);
        inst.params = ParamVector::zeros(cfg.feature_dim);
        let e = finite_diff_check(&inst, PARAM_FD_STEP);
        assert!(e <= 1e-8, "{e}");
    }

    #[test]
    fn small_suite_passes() {
        for r in gradcheck_suite(&SystemConfig::default(), 10, 7) {
            assert!(r.passed, "{r:?}");
        }
    }
}
