use serde::{Deserialize, Serialize};

use super::expint::exp_integral_e1;
use crate::error::{Error, Result};

/// `estimate / E1(ln(1 / gamma))`: the neighbourhood radius of the squared
/// gradient norm guaranteed under Robbins-Monro steps.
pub fn gradient_bound(first_sq_td_error: f64, discount: f64) -> Result<f64> {
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::Domain(format!("discount must lie in (0, 1), got {discount}")));
    }
    if !(first_sq_td_error >= 0.0) {
        return Err(Error::Domain(format!("squared TD error estimate must be >= 0, got {first_sq_td_error}")));
    }
    Ok(first_sq_td_error / exp_integral_e1((1.0 / discount).ln())?)
}

/// Seed-averaged check of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradBoundReport {
    pub learner: String,
    pub discount: f64,
    pub seeds: usize,
    pub first_sq_td_error: f64,
    pub bound: f64,
    /// Running minimum over blocks of the seed-mean squared gradient norm.
    pub running_min: Vec<f64>,
    pub final_running_min: f64,
    /// First block at which the running minimum is at or below the bound.
    pub entered_at: Option<usize>,
    /// The end-of-horizon running minimum is at or below the bound.
    pub within_bound: bool,
    /// The running minimum is at or below the bound at every block.
    pub never_exceeded: bool,
}

/// `sq_grad[s][t]` is the squared gradient norm of seed `s` at block `t`;
/// `first_sq_td[s]` the squared TD error of seed `s` in its first updated block.
///
/// The liminf in the guarantee is read as the end-of-horizon running minimum.
pub fn gradient_bound_monitor(
    learner: &str,
    sq_grad: &[Vec<f64>],
    first_sq_td: &[f64],
    discount: f64,
) -> Result<GradBoundReport> {
    if sq_grad.is_empty() || sq_grad.len() != first_sq_td.len() {
        return Err(Error::Domain("need one gradient series and one TD error per seed".into()));
    }
    let horizon = sq_grad.iter().map(Vec::len).min().unwrap_or(0);
    if horizon == 0 {
        return Err(Error::Domain("empty gradient series".into()));
    }
    let n = sq_grad.len() as f64;
    let estimate = first_sq_td.iter().sum::<f64>() / n;
    let bound = gradient_bound(estimate, discount)?;
    let mut running_min = Vec::with_capacity(horizon);
    let mut m = f64::INFINITY;
    let mut entered_at = None;
    for t in 0..horizon {
        let mean = sq_grad.iter().map(|s| s[t]).sum::<f64>() / n;
        m = m.min(mean);
        if entered_at.is_none() && m <= bound {
            entered_at = Some(t);
        }
        running_min.push(m);
    }
    Ok(GradBoundReport {
        learner: learner.to_string(),
        discount,
        seeds: sq_grad.len(),
        first_sq_td_error: estimate,
        bound,
        running_min,
        final_running_min: m,
        entered_at,
        within_bound: m <= bound,
        never_exceeded: entered_at == Some(0),
    })
}
