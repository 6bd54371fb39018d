use std::f64::consts::LN_2;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Power needed to push `bits` through one offload slot at gain `h`:
/// `(Gamma / h) (2^(D / (tau B)) - 1)`.
pub fn required_power(bits: f64, gain: f64, cfg: &SystemConfig) -> Result<f64> {
    if bits <= 0.0 {
        return Ok(0.0);
    }
    let exponent = bits / (cfg.slot_seconds * cfg.bandwidth_hz);
    let p = cfg.snr_gap / gain * (exponent * LN_2).exp_m1();
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::InfeasibleOffload { bits, gain })
    }
}

/// Bits deliverable in one offload slot: `tau B log2(1 + h p / Gamma)`.
pub fn achievable_bits(power: f64, gain: f64, cfg: &SystemConfig) -> f64 {
    if power <= 0.0 {
        return 0.0;
    }
    cfg.slot_seconds * cfg.bandwidth_hz * (gain * power / cfg.snr_gap).ln_1p() / LN_2
}
