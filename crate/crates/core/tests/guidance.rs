use lunar_descent_core::guidance::*;
use lunar_descent_core::{LanderState, PhysicalParams, Result, SiState, ThrustCommand};
use proptest::prelude::*;

/// Full thrust against the velocity vector: a crude braking law.
struct Retro;

impl GuidancePolicy for Retro {
    fn command(&self, x: &LanderState, _previous_u: f64) -> Result<ThrustCommand> {
        let tangential = x.omega * x.r;
        Ok(ThrustCommand::new(1.0, (-x.v).atan2(tangential)))
    }
}

struct Coast;

impl GuidancePolicy for Coast {
    fn command(&self, _x: &LanderState, _previous_u: f64) -> Result<ThrustCommand> {
        Ok(ThrustCommand::new(0.0, 0.0))
    }

    fn time_to_go(&self, _x: &LanderState) -> Option<Result<f64>> {
        Some(Ok(0.2))
    }
}

fn start() -> SiState {
    SiState {
        r_m: 1_740_000.0,
        v_mps: -5.0,
        theta_rad: 0.01,
        omega_radps: 2e-5,
        m_kg: 500.0,
    }
}

fn record(index: usize, vf: f64, success: bool) -> RunRecord {
    let phys = PhysicalParams::default();
    let mut report = simulate(&start(), &Coast, &phys, &SimConfig::default()).unwrap();
    report.vf_mps = vf;
    report.success = success;
    report.trace.clear();
    RunRecord {
        index,
        x0: start(),
        in_distribution: true,
        report,
        oracle: None,
    }
}

#[test]
fn simulation_is_bit_reproducible() {
    let phys = PhysicalParams::default();
    let a = simulate(&start(), &Retro, &phys, &SimConfig::default()).unwrap();
    let b = simulate(&start(), &Retro, &phys, &SimConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(trace_bits(&a), trace_bits(&b));
}

fn trace_bits(r: &LandingReport) -> Vec<u64> {
    r.trace
        .iter()
        .flat_map(|t| [t.t_s, t.state.r_m, t.state.v_mps, t.state.m_kg, t.u, t.psi_rad])
        .map(f64::to_bits)
        .collect()
}

#[test]
fn commands_are_held_for_the_period() {
    let phys = PhysicalParams::default();
    let r = simulate(&start(), &Retro, &phys, &SimConfig::default()).unwrap();
    assert!(r.trace.len() > 3);
    for w in r.trace[..r.trace.len() - 1].windows(2) {
        assert!((w[1].t_s - w[0].t_s - 0.2).abs() < 1e-9);
    }
    assert_ne!(r.outcome, Outcome::GuidanceFault);
}

#[test]
fn horizon_from_time_to_go() {
    let phys = PhysicalParams::default();
    // far above the surface so the coasting flight outlasts twice the prediction
    let mut x0 = start();
    x0.r_m = 1_900_000.0;
    x0.v_mps = 0.0;
    x0.omega_radps = (phys.mu / x0.r_m.powi(3)).sqrt();
    let r = simulate(&x0, &Coast, &phys, &SimConfig::default()).unwrap();
    assert_eq!(r.outcome, Outcome::Horizon);
    let t = 2.0 * r.predicted_flight_time_s.unwrap();
    assert!((r.flight_time_s - t).abs() < 1e-6, "{} vs {t}", r.flight_time_s);
    assert!(!r.success);
}

#[test]
fn single_run_aggregate_matches_the_run() {
    let run = record(0, 1.5, true);
    let agg = aggregate(vec![run.clone()]);
    assert_eq!(agg.n, 1);
    assert_eq!(agg.max_vf_mps, Some(run.report.vf_mps));
    assert_eq!(agg.max_e_p_m, Some(run.report.e_p_m));
    assert_eq!(agg.total_fuel_kg, run.report.fuel_kg);
    assert_eq!(agg.success_rate, 1.0);
    assert_eq!(agg.vf_histogram.total(), 1);
    assert_eq!(agg.vf_histogram.counts.len(), HISTOGRAM_BINS);
    assert_eq!(agg.runs, vec![run]);
}

#[test]
fn fuel_penalty_needs_both_results() {
    let mut run = record(0, 1.0, true);
    assert_eq!(run.fuel_penalty_kg(), None);
    run.oracle = Some(OracleCase {
        converged: true,
        fuel_kg: Some(run.report.fuel_kg - 2.0),
        flight_time_s: Some(500.0),
        residual: 1e-10,
        max_abs_hamiltonian: Some(1e-12),
        final_p_m: Some(0.0),
    });
    assert!((run.fuel_penalty_kg().unwrap() - 2.0).abs() < 1e-9);
    run.report.success = false;
    assert_eq!(run.fuel_penalty_kg(), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn position_error_identity(theta in -10.0f64..10.0) {
        let r0 = PhysicalParams::default().r0;
        let e = position_error(theta, r0);
        prop_assert!((e - 2.0 * std::f64::consts::PI * r0 * theta.abs() / 360.0).abs() <= 1e-9 * e.max(1.0));
        prop_assert!(e >= 0.0);
    }

    #[test]
    fn terminal_speed_is_a_norm(v in -50.0f64..50.0, w in -1e-4f64..1e-4) {
        let r = 1.738e6;
        let s = terminal_speed(v, w, r);
        prop_assert!(s >= v.abs() - 1e-12 && s >= (w * r).abs() - 1e-12);
        prop_assert!((s * s - v * v - (w * r) * (w * r)).abs() < 1e-6 * (1.0 + s * s));
    }

    #[test]
    fn histogram_counts_every_finite_value(values in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
        let h = Histogram::from_values(&values, HISTOGRAM_BINS);
        prop_assert_eq!(h.total() as usize, values.len());
        prop_assert_eq!(h.counts.len(), HISTOGRAM_BINS);
        prop_assert!(h.lo < h.hi);
    }

    #[test]
    fn aggregate_ignores_input_order(vf in proptest::collection::vec(0.0f64..10.0, 1..12), rot in 0usize..12) {
        let runs: Vec<RunRecord> = vf.iter().enumerate().map(|(i, v)| record(i, *v, *v < 5.0)).collect();
        let mut shuffled = runs.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(aggregate(runs), aggregate(shuffled));
    }

    #[test]
    fn throttle_is_bang_bang_without_deadband(pred in -2.0f64..2.0, prev in 0.0f64..1.0) {
        let u = throttle_from_prediction(pred, prev, 0.0);
        prop_assert_eq!(u, if pred < 0.0 { 1.0 } else { 0.0 });
    }
}
