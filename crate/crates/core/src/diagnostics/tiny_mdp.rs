//! A single-WD, single-slot instance small enough to solve exactly.
//!
//! The queue holds 0..=`max_level` quanta of `W / quanta_per_task` cycles, the
//! channel is `mean_gain / 2` or `2 mean_gain` with equal probability, and a
//! whole task arrives with probability `b` per block. A transmit power sends as
//! many whole quanta as it can carry; the energy charged is the power those
//! quanta actually need. There is no local computing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::env::{self, WdState};
use crate::error::{Error, Result};
use crate::qfunc::ParamVector;
use crate::rng::{self, Stream, StreamKind};
use crate::wd_agent::{self, WdAction, WdLearner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TinyInstance {
    /// Physical constants, learner step sizes and tolerance.
    pub system: SystemConfig,
    pub max_level: usize,
    pub quanta_per_task: usize,
    pub mean_gain: f64,
    pub power_grid: Vec<f64>,
    /// Discount of the oracle; may be 0 for the myopic check.
    pub discount: f64,
}

impl Default for TinyInstance {
    fn default() -> Self {
        TinyInstance {
            system: SystemConfig {
                num_wds: 1,
                slots_per_block: 1,
                arrival_prob: 0.3,
                ..SystemConfig::default()
            },
            max_level: 8,
            quanta_per_task: 4,
            // one task per block at 2x the mean gain costs about half a joule
            mean_gain: 0.15,
            power_grid: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            discount: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TinyState {
    pub level: usize,
    /// 0 for the weak channel, 1 for the strong one.
    pub channel: usize,
    pub arrival: bool,
}

impl TinyInstance {
    pub fn num_states(&self) -> usize {
        (self.max_level + 1) * 4
    }

    pub fn num_actions(&self) -> usize {
        self.power_grid.len()
    }

    pub fn index(&self, s: TinyState) -> usize {
        (s.level * 2 + s.channel) * 2 + usize::from(s.arrival)
    }

    pub fn state(&self, index: usize) -> TinyState {
        TinyState {
            level: index / 4,
            channel: (index / 2) % 2,
            arrival: index % 2 == 1,
        }
    }

    pub fn gain(&self, channel: usize) -> f64 {
        if channel == 0 {
            self.mean_gain / 2.0
        } else {
            2.0 * self.mean_gain
        }
    }

    pub fn quantum_cycles(&self) -> f64 {
        self.system.task_cycles / self.quanta_per_task as f64
    }

    fn quantum_bits(&self) -> f64 {
        self.system.bits_per_cycle * self.quantum_cycles()
    }

    /// Whole quanta a power of `power` delivers from state `s`.
    pub fn sent(&self, s: TinyState, power: f64) -> usize {
        let bits = env::achievable_bits(power, self.gain(s.channel), &self.system);
        let q = (bits / self.quantum_bits() * (1.0 + 1e-12)).floor() as usize;
        q.min(s.level)
    }

    pub fn executed_power(&self, s: TinyState, quanta: usize) -> Result<f64> {
        env::required_power(quanta as f64 * self.quantum_bits(), self.gain(s.channel), &self.system)
    }

    /// Stage cost of sending `quanta` from `s`.
    pub fn cost(&self, s: TinyState, quanta: usize) -> Result<f64> {
        let q = s.level as f64 * self.quantum_cycles();
        Ok(wd_agent::wd_reward(q, &[], self.executed_power(s, quanta)?, &self.system))
    }

    pub fn next_level(&self, s: TinyState, quanta: usize) -> usize {
        let arrived = if s.arrival { self.quanta_per_task } else { 0 };
        (s.level - quanta + arrived).min(self.max_level)
    }

    /// `(probability, next state)` pairs.
    pub fn successors(&self, s: TinyState, quanta: usize) -> Vec<(f64, TinyState)> {
        let b = self.system.arrival_prob;
        let level = self.next_level(s, quanta);
        let mut out = Vec::with_capacity(4);
        for channel in 0..2 {
            for (arrival, pa) in [(false, 1.0 - b), (true, b)] {
                if pa > 0.0 {
                    out.push((0.5 * pa, TinyState { level, channel, arrival }));
                }
            }
        }
        out
    }

    pub fn sample_exogenous(&self, rng: &mut Stream) -> (usize, bool) {
        let channel = usize::from(rng.random_bool(0.5));
        let arrival = rng.random_bool(self.system.arrival_prob);
        (channel, arrival)
    }

    pub fn wd_state(&self, s: TinyState) -> WdState {
        WdState::idle(s.level as f64 * self.quantum_cycles(), self.gain(s.channel), vec![s.arrival])
    }

    /// Stage costs `c[s][a]` and successor lists `next[s][a]` over the power grid.
    fn tables(&self) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<(f64, usize)>>>)> {
        let mut costs = Vec::with_capacity(self.num_states());
        let mut nexts = Vec::with_capacity(self.num_states());
        for i in 0..self.num_states() {
            let s = self.state(i);
            let mut c = Vec::with_capacity(self.num_actions());
            let mut n = Vec::with_capacity(self.num_actions());
            for &p in &self.power_grid {
                let j = self.sent(s, p);
                c.push(self.cost(s, j)?);
                n.push(self.successors(s, j).into_iter().map(|(pr, t)| (pr, self.index(t))).collect());
            }
            costs.push(c);
            nexts.push(n);
        }
        Ok((costs, nexts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    /// `q[s][a]`, states in [`TinyInstance::index`] order, actions in grid order.
    pub q: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub sweeps: usize,
    /// Sup-norm change of the final sweep.
    pub last_change: f64,
}

fn argmin(row: &[f64]) -> (usize, f64) {
    row.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best })
}

/// Q-value iteration until successive sweeps differ by at most `tol` in sup-norm.
pub fn value_iteration_oracle(inst: &TinyInstance, tol: f64, max_sweeps: usize) -> Result<Oracle> {
    let (costs, nexts) = inst.tables()?;
    let ns = inst.num_states();
    let mut q = costs.clone();
    let mut v: Vec<f64> = q.iter().map(|r| argmin(r).1).collect();
    let mut change = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        change = 0.0;
        let mut next_q = vec![vec![0.0; inst.num_actions()]; ns];
        for s in 0..ns {
            for a in 0..inst.num_actions() {
                let cont: f64 = nexts[s][a].iter().map(|&(p, t)| p * v[t]).sum();
                let val = costs[s][a] + inst.discount * cont;
                change = change.max((val - q[s][a]).abs());
                next_q[s][a] = val;
            }
        }
        q = next_q;
        v = q.iter().map(|r| argmin(r).1).collect();
        if change <= tol {
            let policy = q.iter().map(|r| argmin(r).0).collect();
            return Ok(Oracle {
                q,
                values: v,
                policy,
                sweeps: sweep,
                last_change: change,
            });
        }
    }
    Err(Error::NoConvergence {
        sweeps: max_sweeps,
        residual: change,
    })
}

/// Sup-norm of `T Q - Q` for a tabular `q`.
pub fn tabular_bellman_residual(inst: &TinyInstance, q: &[Vec<f64>]) -> Result<f64> {
    let (costs, nexts) = inst.tables()?;
    let v: Vec<f64> = q.iter().map(|r| argmin(r).1).collect();
    let mut worst: f64 = 0.0;
    for s in 0..inst.num_states() {
        for a in 0..inst.num_actions() {
            let cont: f64 = nexts[s][a].iter().map(|&(p, t)| p * v[t]).sum();
            worst = worst.max((costs[s][a] + inst.discount * cont - q[s][a]).abs());
        }
    }
    Ok(worst)
}

/// Monte Carlo mean of `(c + gamma min_a' Q(s', a') - Q(s, a))^2` over
/// uniformly drawn grid pairs, with `s'` drawn from the kernel.
pub fn bellman_residual<F>(inst: &TinyInstance, mut q: F, samples: usize, rng: &mut Stream) -> Result<f64>
where
    F: FnMut(TinyState, usize) -> f64,
{
    let mut acc = 0.0;
    for _ in 0..samples {
        let s = inst.state(rng.random_range(0..inst.num_states()));
        let a = rng.random_range(0..inst.num_actions());
        let j = inst.sent(s, inst.power_grid[a]);
        let (channel, arrival) = inst.sample_exogenous(rng);
        let next = TinyState {
            level: inst.next_level(s, j),
            channel,
            arrival,
        };
        let best = (0..inst.num_actions()).map(|b| q(next, b)).fold(f64::INFINITY, f64::min);
        let r = inst.cost(s, j)? + inst.discount * best - q(s, a);
        acc += r * r;
    }
    Ok(acc / samples as f64)
}

/// Discounted cost of `blocks` blocks from an empty queue under `power_of`.
pub fn rollout<F>(inst: &TinyInstance, mut power_of: F, blocks: usize, rng: &mut Stream) -> Result<f64>
where
    F: FnMut(TinyState) -> f64,
{
    let (channel, arrival) = inst.sample_exogenous(rng);
    let mut s = TinyState { level: 0, channel, arrival };
    let mut weight = 1.0;
    let mut total = 0.0;
    for _ in 0..blocks {
        let j = inst.sent(s, power_of(s));
        total += weight * inst.cost(s, j)?;
        weight *= inst.discount;
        let (channel, arrival) = inst.sample_exogenous(rng);
        s = TinyState {
            level: inst.next_level(s, j),
            channel,
            arrival,
        };
    }
    Ok(total)
}

/// Trains a WD learner online for `blocks` blocks from an empty queue.
pub fn train_learner(inst: &TinyInstance, learner: &mut WdLearner, blocks: usize, rng: &mut Stream) -> Result<()> {
    let cfg = &inst.system;
    let (channel, arrival) = inst.sample_exogenous(rng);
    let mut s = TinyState { level: 0, channel, arrival };
    for t in 0..blocks {
        let p = learner.propose(rng)?;
        let j = inst.sent(s, p);
        let action = WdAction {
            power: inst.executed_power(s, j)?,
            cpu_rates: vec![0.0],
            residual: j as f64 * inst.quantum_cycles(),
        };
        let (channel, arrival) = inst.sample_exogenous(rng);
        let next = TinyState {
            level: inst.next_level(s, j),
            channel,
            arrival,
        };
        learner.update(&inst.wd_state(s), &action, &inst.wd_state(next), cfg, t)?;
        s = next;
    }
    Ok(())
}

fn parametric_q(learner: &WdLearner, theta: &ParamVector, inst: &TinyInstance, s: TinyState, a: usize) -> f64 {
    let x = wd_agent::action_state(inst.power_grid[a], &inst.wd_state(s));
    crate::qfunc::q_value(theta, &learner.bank.features(&x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinySeedResult {
    pub seed: u64,
    pub oracle_cost: f64,
    /// The learner's output power held fixed.
    pub learned_cost: f64,
    /// Greedy action of the learned Q over the grid.
    pub greedy_cost: f64,
    pub learned_power: f64,
    pub converged_at: Option<usize>,
    pub residual_trained: f64,
    pub residual_untrained: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyReport {
    pub oracle_sweeps: usize,
    pub oracle_last_change: f64,
    pub oracle_bellman_residual: f64,
    pub seeds: Vec<TinySeedResult>,
    pub mean_oracle_cost: f64,
    pub mean_learned_cost: f64,
    /// `(learned - oracle) / oracle` of the seed means.
    pub relative_gap: f64,
    pub residual_improved: usize,
}

pub struct TinyRun {
    pub train_blocks: usize,
    pub eval_blocks: usize,
    pub residual_samples: usize,
}

impl Default for TinyRun {
    fn default() -> Self {
        TinyRun {
            train_blocks: 2000,
            eval_blocks: 10_000,
            residual_samples: 10_000,
        }
    }
}

/// Oracle vs learner comparison over `seeds` seeds rooted at `master`.
pub fn oracle_compare(inst: &TinyInstance, run: &TinyRun, seeds: usize, master: u64) -> Result<TinyReport> {
    let oracle = value_iteration_oracle(inst, 1e-9, 100_000)?;
    let oracle_residual = tabular_bellman_residual(inst, &oracle.q)?;
    let mut results = Vec::with_capacity(seeds);
    for r in 0..seeds as u64 {
        let seed = rng::derive_seed(master, StreamKind::Replicate, r);
        let bank_seed = rng::derive_seed(seed, StreamKind::WdFeatures, 0);
        let mut learner = WdLearner::with_seed(bank_seed, inst.mean_gain, &inst.system, "tiny");
        let untrained = learner.theta.clone();
        train_learner(inst, &mut learner, run.train_blocks, &mut rng::stream(seed, StreamKind::Policy, 0))?;

        let eval = || rng::stream(seed, StreamKind::Arrivals, 0);
        let oracle_cost = rollout(inst, |s| inst.power_grid[oracle.policy[inst.index(s)]], run.eval_blocks, &mut eval())?;
        let fixed = learner.power;
        let learned_cost = rollout(inst, |_| fixed, run.eval_blocks, &mut eval())?;
        let theta = learner.theta.clone();
        let greedy_cost = rollout(
            inst,
            |s| {
                let a = (0..inst.num_actions())
                    .map(|a| (a, parametric_q(&learner, &theta, inst, s, a)))
                    .fold((0, f64::INFINITY), |b, (a, v)| if v < b.1 { (a, v) } else { b })
                    .0;
                inst.power_grid[a]
            },
            run.eval_blocks,
            &mut eval(),
        )?;
        let probe = || rng::stream(seed, StreamKind::Diagnostics, 0);
        let residual_trained = bellman_residual(
            inst,
            |s, a| parametric_q(&learner, &theta, inst, s, a),
            run.residual_samples,
            &mut probe(),
        )?;
        let residual_untrained = bellman_residual(
            inst,
            |s, a| parametric_q(&learner, &untrained, inst, s, a),
            run.residual_samples,
            &mut probe(),
        )?;
        results.push(TinySeedResult {
            seed,
            oracle_cost,
            learned_cost,
            greedy_cost,
            learned_power: fixed,
            converged_at: learner.converged_at,
            residual_trained,
            residual_untrained,
        });
    }
    let n = results.len().max(1) as f64;
    let mean_oracle_cost = results.iter().map(|r| r.oracle_cost).sum::<f64>() / n;
    let mean_learned_cost = results.iter().map(|r| r.learned_cost).sum::<f64>() / n;
    Ok(TinyReport {
        oracle_sweeps: oracle.sweeps,
        oracle_last_change: oracle.last_change,
        oracle_bellman_residual: oracle_residual,
        residual_improved: results.iter().filter(|r| r.residual_trained < r.residual_untrained).count(),
        seeds: results,
        mean_oracle_cost,
        mean_learned_cost,
        relative_gap: (mean_learned_cost - mean_oracle_cost) / mean_oracle_cost,
    })
}
