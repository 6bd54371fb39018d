//! Block-level simulator of a multiuser mobile edge computing system with
//! sequential DNN task offloading, decentralized parametric Q-learners for the
//! wireless devices and the MEC server, comparison baselines, an experiment
//! harness and numerical verification tools.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod harness;
pub mod output;
pub mod qfunc;
pub mod rng;
pub mod server_agent;
pub mod wd_agent;

pub use config::{QueueMode, StepSchedule, SystemConfig};
pub use error::{Error, Result};
