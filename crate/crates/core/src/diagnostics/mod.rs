//! Verification instruments: finite-difference gradient checks, the
//! exponential integral, the squared-gradient neighbourhood monitor and a
//! tiny discretized MDP solved exactly by value iteration.

mod expint;
mod gradcheck;
mod grad_bound;
pub mod tiny_mdp;

pub use expint::exp_integral_e1;
pub use gradcheck::{finite_diff_check, gradcheck_suite, GradCheckReport, GradInstance, GradTarget, FD_STEP, MAX_REL_ERR, PARAM_FD_STEP};
pub use grad_bound::{gradient_bound, gradient_bound_monitor, GradBoundReport};
