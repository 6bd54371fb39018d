use crate::config::SystemConfig;

fn cubic_energy(rates: &[f64], capacitance: f64, cfg: &SystemConfig) -> f64 {
    rates.iter().map(|f| cfg.slot_seconds * capacitance * f * f * f).sum()
}

/// Joules spent on local computing over one block.
pub fn local_energy(rates: &[f64], cfg: &SystemConfig) -> f64 {
    cubic_energy(rates, cfg.cap_wd, cfg)
}

/// Joules spent transmitting over the one-slot offload window.
pub fn offload_energy(power: f64, cfg: &SystemConfig) -> f64 {
    cfg.slot_seconds * power
}

/// Joules spent by the server CPU over one block.
pub fn server_energy(rates: &[f64], cfg: &SystemConfig) -> f64 {
    cubic_energy(rates, cfg.cap_ser, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let cfg = SystemConfig::default();
        let rates = vec![1e9; 5];
        assert!((local_energy(&rates, &cfg) - 0.05).abs() < 1e-15);
        assert!((server_energy(&rates, &cfg) - 5e-3).abs() < 1e-16);
        assert_eq!(local_energy(&[0.0; 5], &cfg), 0.0);
        assert_eq!(server_energy(&[0.0; 5], &cfg), 0.0);
        assert!((offload_energy(1.0, &cfg) - 0.1).abs() < 1e-16);
        assert_eq!(offload_energy(0.0, &cfg), 0.0);
    }

    #[test]
    fn homogeneity() {
        let cfg = SystemConfig::default();
        let rates = [3e8, 7e8, 1e8, 0.0, 9e8];
        let doubled: Vec<f64> = rates.iter().map(|f| 2.0 * f).collect();
        let ratio = local_energy(&doubled, &cfg) / local_energy(&rates, &cfg);
        assert!((ratio - 8.0).abs() < 1e-12);
        let ratio = server_energy(&doubled, &cfg) / server_energy(&rates, &cfg);
        assert!((ratio - 8.0).abs() < 1e-12);
        assert_eq!(offload_energy(0.8, &cfg), 2.0 * offload_energy(0.4, &cfg));
    }
}
