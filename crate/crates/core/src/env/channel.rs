use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// WDs are never placed closer than this to the base station.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub fn pathloss_db(distance_m: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(distance_m > 0.0 && distance_m.is_finite()) {
        return Err(Error::Config(format!("distance must be positive, got {distance_m}")));
    }
    Ok(cfg.pathloss[0] + cfg.pathloss[1] * distance_m.log10())
}

/// Large-scale channel of one WD: fixed for an episode.
///
/// The mean gain already divides by the receiver noise power, so the rate
/// formula can be used with unit-variance noise.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelProfile {
    pub distance_m: f64,
    pub shadow_db: f64,
    pub mean_gain: f64,
}

impl ChannelProfile {
    pub fn new(distance_m: f64, shadow_db: f64, cfg: &SystemConfig) -> Result<Self> {
        let pl = pathloss_db(distance_m, cfg)?;
        let mean_gain = 10f64.powf((shadow_db - pl) / 10.0) / cfg.noise_power_w();
        Ok(ChannelProfile {
            distance_m,
            shadow_db,
            mean_gain,
        })
    }

    /// Uniform placement over the cell disk plus one log-normal shadow draw.
    pub fn draw(rng: &mut Stream, cfg: &SystemConfig) -> Self {
        let u: f64 = rng.random();
        let distance = (cfg.cell_radius_m * u.sqrt()).max(MIN_DISTANCE_M);
        let shadow = if cfg.shadow_std_db > 0.0 {
            Normal::new(0.0, cfg.shadow_std_db)
                .expect("validated shadow std")
                .sample(rng)
        } else {
            0.0
        };
        ChannelProfile::new(distance, shadow, cfg).expect("distance is at least MIN_DISTANCE_M")
    }

    /// Gain for a given unit-mean exponential draw.
    pub fn gain_for(&self, unit_draw: f64) -> f64 {
        self.mean_gain * unit_draw
    }
}

/// Block-fading power gain `h = mean_gain * X`, `X ~ Exp(1)`.
pub fn sample_channel(rng: &mut Stream, profile: &ChannelProfile) -> f64 {
    let x: f64 = Exp1.sample(rng);
    // Exp1 can return exactly 0 with vanishing probability; the gain must stay positive.
    profile.gain_for(x.max(f64::MIN_POSITIVE))
}
