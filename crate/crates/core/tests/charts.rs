use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use tdcis::actionangle::{
    action_integral, angle_difference, build_initial_data_chart, chart_csv, chart_dynamics,
    check_canonicity, hamiltonian_in_chart, period_with, pulled_back, shift_chart, transform_ww26,
    AaError, ActionFn, ActionFunction, ActionProfile, ChartKind, LoopOptions,
};
use tdcis::expr::CompiledExpr;
use tdcis::flow::{integrate, StepControl};
use tdcis::systems::{default_region, make_system, SystemSpec};
use tdcis::verify::SampleRegion;
use tdcis::PhasePoint;

fn ctl() -> StepControl {
    StepControl::precise(1e-12)
}

fn harmonic(omega: f64) -> tdcis::TDSystem {
    make_system(&SystemSpec::harmonic(omega)).unwrap()
}

fn small_region(sys: &tdcis::TDSystem, count: usize) -> SampleRegion {
    default_region(sys).with_count(count)
}

#[test]
fn harmonic_initial_data_chart_is_constant_along_a_trajectory() {
    let sys = harmonic(1.0);
    let chart = build_initial_data_chart(&sys, &small_region(&sys, 10), &ctl()).unwrap();
    let x0 = PhasePoint::new_1d(0.0, 1.0, 0.0).unwrap();
    let dyn_ = chart_dynamics(&chart, &x0, &[0.0, 1.0, 2.0]).unwrap();
    for cp in &dyn_.points {
        assert!((cp.actions[0] - 0.5).abs() < 1e-9, "{cp:?}");
    }
    // (1, 0) is the reference point itself.
    assert!(angle_difference(dyn_.points[0].angles[0], 0.0).abs() < 1e-12);
    assert!(dyn_.max_angle_drift < 1e-6);
}

#[test]
fn t_zero_chart_matches_the_slice_chart() {
    // At t = 0 the oscillator chart is the textbook one: I = E, and the
    // flow rotates clockwise from (sqrt(2I), 0).
    let sys = harmonic(1.0);
    let chart = build_initial_data_chart(&sys, &small_region(&sys, 5), &ctl()).unwrap();
    let (r, phi) = (1.3f64, 2.2f64);
    let x = PhasePoint::new_1d(0.0, r * phi.cos(), -r * phi.sin()).unwrap();
    let cp = chart.forward(&x).unwrap();
    assert!((cp.actions[0] - r * r / 2.0).abs() < 1e-10);
    assert!(angle_difference(cp.angles[0], phi).abs() < 1e-10);
}

#[test]
fn free_particle_chart_is_rejected() {
    let sys = make_system(&SystemSpec::free_particle(1)).unwrap();
    let err = build_initial_data_chart(&sys, &default_region(&sys), &ctl()).unwrap_err();
    assert!(matches!(err, AaError::NonCompact(_)));
    assert!(err.to_string().contains("non-compact"));
}

#[test]
fn round_trip_on_every_compact_builtin() {
    for spec in [
        SystemSpec::harmonic(1.0),
        SystemSpec::harmonic(2.0),
        SystemSpec::new("pendulum"),
        SystemSpec::separable_2dof(1.0, 2.0),
        SystemSpec::td_oscillator(1.0, 0.1, 1.0),
    ] {
        let sys = make_system(&spec).unwrap();
        let region = small_region(&sys, 20);
        let chart = build_initial_data_chart(&sys, &region, &ctl()).unwrap();
        let shifted = shift_chart(&chart, Arc::new(ActionFn::linear(vec![0.7; sys.m()])));
        for c in [&chart, &shifted] {
            for x in region.samples(Some(&sys)).unwrap() {
                let cp = c.forward(&x).unwrap();
                let back = c.inverse(&cp).unwrap();
                assert!(back.distance(&x) < 1e-7, "{}: {x} -> {back}", sys.label());
            }
        }
    }
}

#[test]
fn canonicity_holds_and_planted_defect_fails() {
    let sys = harmonic(1.0);
    let region = small_region(&sys, 50).with_t_range([0.0, 0.0]);
    let chart = build_initial_data_chart(&sys, &region, &ctl()).unwrap();
    let rep = check_canonicity(&chart, &region, 1e-6).unwrap();
    assert!(rep.pass, "{}", rep.to_text_block());

    let broken = chart.clone().with_angle_scale(2.0);
    let rep = check_canonicity(&broken, &region.clone().with_count(5), 1e-5).unwrap();
    assert!(!rep.pass);
    let pairing: f64 = rep
        .details
        .iter()
        .find(|(k, _)| k == "I1_phi1_at_worst")
        .map(|(_, v)| v.parse().unwrap())
        .unwrap();
    assert!((pairing - 2.0).abs() < 1e-5, "{pairing}");
}

#[test]
fn shift_and_ww26_agree_exactly() {
    let sys = harmonic(1.0);
    let region = small_region(&sys, 10);
    let chart = build_initial_data_chart(&sys, &region, &ctl()).unwrap();
    let h: Arc<dyn ActionFunction> = Arc::new(CompiledExpr::actions("I1^2", 1).unwrap());
    let a = shift_chart(&chart, h.clone());
    let b = transform_ww26(&chart, h);
    assert!(matches!(a.kind(), ChartKind::Shifted(_)));
    assert!(matches!(b.kind(), ChartKind::Ww26(_)));
    for x in region.samples(Some(&sys)).unwrap() {
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }
}

#[test]
fn zero_shift_is_the_identity() {
    let sys = harmonic(2.0);
    let region = small_region(&sys, 10);
    let chart = build_initial_data_chart(&sys, &region, &ctl()).unwrap();
    let zero = shift_chart(&chart, Arc::new(CompiledExpr::actions("0", 1).unwrap()));
    for x in region.samples(Some(&sys)).unwrap() {
        assert_eq!(chart.forward(&x).unwrap(), zero.forward(&x).unwrap());
    }
}

#[test]
fn shifted_chart_angle_rates() {
    for (omega, h) in [(1.0, "I1"), (2.0, "2*I1")] {
        let sys = harmonic(omega);
        let chart = build_initial_data_chart(&sys, &small_region(&sys, 5), &ctl()).unwrap();
        let shifted = shift_chart(&chart, Arc::new(CompiledExpr::actions(h, 1).unwrap()));
        let x0 = PhasePoint::new_1d(0.0, 0.8, 0.3).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
        let d = chart_dynamics(&shifted, &x0, &times).unwrap();
        assert!((d.fitted_slopes[0] - omega).abs() < 1e-5, "{d:?}");
        assert!(d.max_action_drift < 1e-5);
    }
}

#[test]
fn quadratic_ww26_keeps_actions_fixed() {
    let sys = harmonic(1.0);
    let chart = build_initial_data_chart(&sys, &small_region(&sys, 5), &ctl()).unwrap();
    let t = transform_ww26(&chart, Arc::new(CompiledExpr::actions("I1^2", 1).unwrap()));
    let x0 = PhasePoint::new_1d(0.0, 0.5, -0.5).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| 0.3 * i as f64).collect();
    let d = chart_dynamics(&t, &x0, &times).unwrap();
    let i0 = d.points[0].actions[0];
    assert!(d.max_action_drift < 1e-5);
    assert!((d.fitted_slopes[0] - 2.0 * i0).abs() < 1e-5);
}

#[test]
fn separable_pullback_is_linear_in_actions() {
    let sys = make_system(&SystemSpec::separable_2dof(1.0, 2.0)).unwrap();
    let region = small_region(&sys, 10);
    let chart = build_initial_data_chart(&sys, &region, &ctl()).unwrap();
    for x in region.samples(Some(&sys)).unwrap() {
        let cp = chart.forward(&x).unwrap();
        let h = pulled_back(&chart, sys.hamiltonian(), &cp).unwrap();
        assert!((h - (cp.actions[0] + 2.0 * cp.actions[1])).abs() < 1e-9);
    }
}

#[test]
fn hamiltonian_in_chart_passes_for_harmonic_and_pendulum() {
    for spec in [SystemSpec::harmonic(1.0), SystemSpec::new("pendulum")] {
        let sys = make_system(&spec).unwrap();
        let region = small_region(&sys, 10);
        let chart = build_initial_data_chart(&sys, &region, &ctl()).unwrap();
        let rep = hamiltonian_in_chart(&sys, &chart, &region).unwrap();
        assert!(rep.pass, "{}", rep.to_text_block());
        let shifted = shift_chart(&chart, Arc::new(ActionFn::linear(vec![1.0])));
        let rep = hamiltonian_in_chart(&sys, &shifted, &region.clone().with_count(3)).unwrap();
        assert!(rep.pass, "{}", rep.to_text_block());
    }
}

#[test]
fn pendulum_deep_well_and_separatrix() {
    let sys = make_system(&SystemSpec::new("pendulum")).unwrap();
    let f = &sys.integrals()[0];
    let i = action_integral(f, 0.0, -0.99, 1e-10).unwrap();
    assert!((i - 0.01).abs() < 0.02 * 0.01, "{i}");
    let opts = LoopOptions::default().with_param_cap(100.0);
    assert!(matches!(period_with(f, 0.0, 0.9999, &opts), Err(AaError::PeriodNotFound(_))));
    let levels = [-0.9, -0.6, -0.3, 0.0, 0.4, 0.8];
    let prof = ActionProfile::compute(f, 0.0, &levels, &LoopOptions::default()).unwrap();
    assert!(prof.is_strictly_increasing());
}

#[test]
fn ermakov_chart_action_is_constant() {
    let sys = make_system(&SystemSpec::td_oscillator(1.0, 0.1, 1.0)).unwrap();
    let chart = build_initial_data_chart(&sys, &small_region(&sys, 5), &ctl()).unwrap();
    let x0 = PhasePoint::new_1d(0.0, 0.9, 0.2).unwrap();
    let times: Vec<f64> = (0..=10).map(f64::from).collect();
    let d = chart_dynamics(&chart, &x0, &times).unwrap();
    assert!(d.max_action_drift < 1e-5 && d.max_angle_drift < 1e-5, "{d:?}");
    // At t = 0 with rho = 1 the invariant is the oscillator energy.
    assert!((d.points[0].actions[0] - 0.5 * (0.81 + 0.04)).abs() < 1e-9);
}

#[test]
fn chart_csv_is_aligned_with_trajectory_rows() {
    let sys = harmonic(1.0);
    let chart = build_initial_data_chart(&sys, &small_region(&sys, 5), &ctl()).unwrap();
    let traj = integrate(&sys, &PhasePoint::new_1d(0.0, 1.0, 0.0).unwrap(), PI, &ctl()).unwrap();
    let pts: Vec<_> = traj.points.iter().map(|x| chart.forward(x).unwrap()).collect();
    let csv = chart_csv(&pts);
    assert!(csv.starts_with("t,I1,phi1\n"));
    assert_eq!(csv.lines().count(), traj.to_csv().lines().count());
    assert!(pts.iter().all(|cp| (0.0..TAU).contains(&cp.angles[0])));
}
