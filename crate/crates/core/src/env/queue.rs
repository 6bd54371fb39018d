use rand::Rng;

use crate::config::{QueueMode, SystemConfig};
use crate::rng::Stream;

/// Relative distance below one task at which a remainder is treated as a whole task.
const MOD_SNAP: f64 = 1e-12;

/// I.i.d. Bernoulli(b) arrival indicators for the n slots of one block.
pub fn sample_arrivals(rng: &mut Stream, b: f64, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(b)).collect()
}

pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Cycles executed over one block at the given per-slot rates.
pub fn total_cycles(rates: &[f64], cfg: &SystemConfig) -> f64 {
    rates.iter().map(|f| f * cfg.slot_seconds).sum()
}

/// `([q - local]^+) mod W`: the unfinished part of the head-of-line task.
pub fn residual_after(queue_cycles: f64, local_cycles: f64, cfg: &SystemConfig) -> f64 {
    let w = cfg.task_cycles;
    let r = positive_part(queue_cycles - local_cycles).rem_euclid(w);
    if r >= w * (1.0 - MOD_SNAP) {
        0.0
    } else {
        r
    }
}

pub fn residual_cycles(queue_cycles: f64, rates: &[f64], cfg: &SystemConfig) -> f64 {
    residual_after(queue_cycles, total_cycles(rates, cfg), cfg)
}

/// Intermediate output in bits after one block of local computing.
pub fn intermediate_output_size(queue_cycles: f64, rates: &[f64], cfg: &SystemConfig) -> f64 {
    cfg.bits_per_cycle * residual_cycles(queue_cycles, rates, cfg)
}

/// Remaining cycles of the task currently at the head of the queue.
pub fn head_of_line_cycles(queue_cycles: f64, cfg: &SystemConfig) -> f64 {
    let partial = residual_after(queue_cycles, 0.0, cfg);
    if partial > 0.0 {
        partial
    } else {
        queue_cycles.min(cfg.task_cycles).max(0.0)
    }
}

/// WD queue recursion where the residual follows from the local rates.
pub fn wd_queue_step(queue_cycles: f64, rates: &[f64], arrivals: &[bool], cfg: &SystemConfig) -> f64 {
    let local = total_cycles(rates, cfg);
    let offloaded = residual_after(queue_cycles, local, cfg);
    wd_queue_step_explicit(queue_cycles, local, offloaded, arrivals, cfg)
}

/// WD queue recursion with the offloaded amount given explicitly.
///
/// Sequential offloading always ships `residual_after(q, local)`; the binary
/// baseline ships a whole task instead.
pub fn wd_queue_step_explicit(
    queue_cycles: f64,
    local_cycles: f64,
    offloaded_cycles: f64,
    arrivals: &[bool],
    cfg: &SystemConfig,
) -> f64 {
    let after_local = positive_part(queue_cycles - local_cycles);
    let arrived = arrivals.iter().filter(|&&b| b).count() as f64 * cfg.task_cycles;
    match cfg.queue_mode {
        QueueMode::NonDraining => after_local + arrived,
        QueueMode::Conserving => positive_part(after_local - offloaded_cycles) + arrived,
    }
}

/// Server queue recursion; `residuals` are the cycles offloaded by each WD this block.
pub fn server_queue_step(queue_cycles: f64, rates: &[f64], residuals: &[f64], cfg: &SystemConfig) -> f64 {
    positive_part(queue_cycles - total_cycles(rates, cfg)) + residuals.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn cfg(mode: QueueMode) -> SystemConfig {
        SystemConfig {
            queue_mode: mode,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn intermediate_output_examples() {
        let c = cfg(QueueMode::Conserving);
        let w = c.task_cycles;
        let zero = vec![0.0; 5];
        assert!((intermediate_output_size(1.5 * w, &zero, &c) - 5.0e4).abs() < 1e-6);
        assert_eq!(intermediate_output_size(w, &zero, &c), 0.0);
        assert_eq!(intermediate_output_size(0.0, &zero, &c), 0.0);
    }

    #[test]
    fn wd_step_examples() {
        let w = 1e10;
        // 5 slots * 0.1 s * 5e9 cycles/s = 0.25 W
        let rates = vec![5e9; 5];
        let arrivals = [true, false, true, false, false];
        let pf = cfg(QueueMode::NonDraining);
        let cons = cfg(QueueMode::Conserving);
        assert_eq!(wd_queue_step(1.5 * w, &rates, &arrivals, &pf), 3.25 * w);
        assert_eq!(wd_queue_step(1.5 * w, &rates, &arrivals, &cons), 3.0 * w);
        let one = [false, false, true, false, false];
        for c in [&pf, &cons] {
            assert_eq!(wd_queue_step(0.0, &[0.0; 5], &one, c), w);
        }
    }

    #[test]
    fn server_step_examples() {
        let c = cfg(QueueMode::Conserving);
        // sum f * tau = 5e8
        let rates = vec![1e9; 5];
        assert!((server_queue_step(1e9, &rates, &[1e8, 2e8], &c) - 8e8).abs() < 1e-3);
        assert_eq!(server_queue_step(0.0, &[0.0; 5], &[], &c), 0.0);
        assert_eq!(server_queue_step(1e8, &rates, &[0.0], &c), 0.0);
    }

    #[test]
    fn head_of_line() {
        let c = cfg(QueueMode::Conserving);
        let w = c.task_cycles;
        assert_eq!(head_of_line_cycles(0.0, &c), 0.0);
        assert_eq!(head_of_line_cycles(3.0 * w, &c), w);
        assert!((head_of_line_cycles(2.25 * w, &c) - 0.25 * w).abs() < 1.0);
        assert_eq!(head_of_line_cycles(0.5 * w, &c), 0.5 * w);
    }

    #[test]
    fn arrivals_match_probability() {
        let mut s = rng::seeded(11);
        let n = 1_000_000;
        let ones = sample_arrivals(&mut s, 0.4, n).into_iter().filter(|&b| b).count();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.4).abs() < 0.002, "{mean}");

        let mut a = rng::seeded(5);
        let mut b = rng::seeded(5);
        assert_eq!(sample_arrivals(&mut a, 0.4, 5), sample_arrivals(&mut b, 0.4, 5));
        assert!(sample_arrivals(&mut a, 0.0, 1000).iter().all(|&x| !x));
    }
}
