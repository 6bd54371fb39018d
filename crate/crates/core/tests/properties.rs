use mec_offload::env::{self, BlockEnergies, ServerState, WdState};
use mec_offload::qfunc::{q_value, FeatureBank, ParamVector};
use mec_offload::wd_agent;
use mec_offload::{QueueMode, SystemConfig};
use proptest::prelude::*;

fn any_mode() -> impl Strategy<Value = QueueMode> {
    prop_oneof![Just(QueueMode::Conserving), Just(QueueMode::NonDraining)]
}

fn cfg_with(mode: QueueMode) -> SystemConfig {
    SystemConfig {
        queue_mode: mode,
        ..SystemConfig::default()
    }
}

proptest! {
    #[test]
    fn q_value_is_linear_in_params(
        seed in any::<u64>(),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
        x in prop::collection::vec(-3.0..3.0f64, 4),
        t1 in prop::collection::vec(-2.0..2.0f64, 8),
        t2 in prop::collection::vec(-2.0..2.0f64, 8),
    ) {
        let bank = FeatureBank::random(seed, 8, vec![1.0; 4]);
        let phi = bank.features(&x);
        let mix = ParamVector(t1.iter().zip(&t2).map(|(u, v)| a * u + b * v).collect());
        let lhs = q_value(&mix, &phi);
        let rhs = a * q_value(&ParamVector(t1), &phi) + b * q_value(&ParamVector(t2), &phi);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn zero_params_give_zero_q(seed in any::<u64>(), x in prop::collection::vec(-3.0..3.0f64, 3)) {
        let bank = FeatureBank::random(seed, 5, vec![1.0; 3]);
        prop_assert_eq!(q_value(&ParamVector::zeros(5), &bank.features(&x)), 0.0);
    }

    #[test]
    fn stage_cost_splits_into_entity_parts(
        q_ser in 0.0..50.0f64,
        e_ser in 0.0..5.0f64,
        wds in prop::collection::vec((0.0..20.0f64, 0.0..3.0f64), 0..8),
        weights in prop::array::uniform4(0.0..3.0f64),
    ) {
        let cfg = SystemConfig { num_wds: wds.len(), weights, ..SystemConfig::default() };
        let w = cfg.task_cycles;
        let server = ServerState { queue_cycles: q_ser * w, wd_queues: wds.iter().map(|p| p.0 * w).collect(), cpu_rates: vec![0.0; 5] };
        let states: Vec<WdState> = wds.iter().map(|p| WdState::idle(p.0 * w, 1.0, vec![false; 5])).collect();
        let energies = BlockEnergies { server: e_ser, wds: wds.iter().map(|p| p.1).collect() };
        let c = env::stage_costs(&server, &states, &energies, &cfg);
        let mut total = env::server_cost(server.queue_cycles, e_ser, &cfg);
        prop_assert_eq!(c.server, total);
        for (s, e) in states.iter().zip(&energies.wds) {
            total += env::wd_cost(s.queue_cycles, *e, &cfg);
        }
        prop_assert_eq!(c.centralized, total);
    }

    #[test]
    fn queues_stay_nonnegative(
        mode in any_mode(),
        q in 0.0..10.0f64,
        rates in prop::collection::vec(0.0..2e10f64, 5),
        offload in 0.0..3.0f64,
        arrivals in prop::collection::vec(any::<bool>(), 5),
        q_ser in 0.0..10.0f64,
        ser_rates in prop::collection::vec(0.0..1e11f64, 5),
    ) {
        let cfg = cfg_with(mode);
        let w = cfg.task_cycles;
        let local = env::total_cycles(&rates, &cfg);
        prop_assert!(env::wd_queue_step(q * w, &rates, &arrivals, &cfg) >= 0.0);
        prop_assert!(env::wd_queue_step_explicit(q * w, local, offload * w, &arrivals, &cfg) >= 0.0);
        let r = env::residual_cycles(q * w, &rates, &cfg);
        prop_assert!((0.0..w).contains(&r));
        prop_assert!(env::server_queue_step(q_ser * w, &ser_rates, &[r], &cfg) >= 0.0);
    }

    #[test]
    fn idle_wd_accumulates_exactly(q in 0u32..1000, arrivals in prop::collection::vec(any::<bool>(), 5)) {
        let cfg = SystemConfig::default();
        let w = cfg.task_cycles;
        let next = env::wd_queue_step(f64::from(q) * w, &[0.0; 5], &arrivals, &cfg);
        let count = arrivals.iter().filter(|&&a| a).count() as f64;
        prop_assert_eq!(next, f64::from(q) * w + count * w);
    }

    #[test]
    fn required_power_inverts_achievable_bits(lp in -4.0..1.5f64, lh in -14.0..-5.0f64) {
        let cfg = SystemConfig::default();
        let (p, h) = (10f64.powf(lp), 10f64.powf(lh));
        let back = env::required_power(env::achievable_bits(p, h, &cfg), h, &cfg).unwrap();
        prop_assert!((back - p).abs() <= 1e-12 * p, "{} vs {}", back, p);
    }

    #[test]
    fn projection_respects_constraints(
        q in 0.0..6.0f64,
        lp in -4.0..1.0f64,
        lh in -12.0..-6.0f64,
        f_max_wd in 1e8..5e10f64,
    ) {
        let cfg = SystemConfig { f_max_wd, ..SystemConfig::default() };
        let w = cfg.task_cycles;
        let state = WdState::idle(q * w, 10f64.powf(lh), vec![false; 5]);
        let a = wd_agent::project_action(10f64.powf(lp), &state, &cfg).unwrap();
        prop_assert_eq!(a.cpu_rates.len(), 5);
        for &f in &a.cpu_rates {
            prop_assert!((0.0..=f_max_wd).contains(&f));
        }
        prop_assert!(a.residual >= 0.0 && a.residual < w);
        prop_assert_eq!(a.residual, env::residual_cycles(state.queue_cycles, &a.cpu_rates, &cfg));
        let p = env::required_power(cfg.bits_per_cycle * a.residual, state.channel_gain, &cfg).unwrap();
        prop_assert_eq!(a.power, p);
        prop_assert!(env::total_cycles(&a.cpu_rates, &cfg) <= state.queue_cycles * (1.0 + 1e-12));
    }
}
