use std::f64::consts::TAU;

use tdcis::flow::{integrate, StepControl};
use tdcis::systems::{default_region, ermakov_lewis, make_system, SystemSpec};
use tdcis::verify::{
    check_conservation, check_first_integrals, check_independence, check_involution,
    check_involution_lifted, check_projection, check_projection_at, VerifyReport,
};
use tdcis::PhasePoint;

fn cis_specs() -> Vec<SystemSpec> {
    vec![
        SystemSpec::free_particle(2),
        SystemSpec::harmonic(1.0),
        SystemSpec::harmonic(2.0),
        SystemSpec::new("pendulum"),
        SystemSpec::td_oscillator(1.0, 0.1, 1.0),
        SystemSpec::separable_2dof(1.0, 2.0),
    ]
}

fn suite(spec: &SystemSpec) -> Vec<VerifyReport> {
    let sys = make_system(spec).unwrap();
    let region = default_region(&sys);
    assert_eq!((region.count, region.seed), (200, 42));
    vec![
        check_involution(&sys, &region, 1e-9).unwrap(),
        check_involution_lifted(&sys, &region, 1e-9).unwrap(),
        check_first_integrals(&sys, &region, 1e-8).unwrap(),
        check_independence(&sys, &region, 1e-3).unwrap(),
        check_projection(&sys, &region, 1e-14).unwrap(),
    ]
}

#[test]
fn every_builtin_cis_passes() {
    for spec in cis_specs() {
        for rep in suite(&spec) {
            assert!(rep.pass, "{}: {}", spec.name, rep.to_text_block());
        }
    }
}

#[test]
fn reports_are_deterministic() {
    for spec in cis_specs() {
        let a: String = suite(&spec).iter().map(VerifyReport::to_text_block).collect();
        let b: String = suite(&spec).iter().map(VerifyReport::to_text_block).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn adversarial_system_is_caught() {
    let sys = make_system(&SystemSpec::new("adversarial")).unwrap();
    let rep = check_involution(&sys, &default_region(&sys), 1e-9).unwrap();
    assert!(!rep.pass);
    assert!(rep.summary_line().starts_with("CHECK involution FAIL"));
}

#[test]
fn projection_does_not_depend_on_the_section() {
    let sys = make_system(&SystemSpec::td_oscillator(1.0, 0.1, 1.0)).unwrap();
    let region = default_region(&sys);
    let a = check_projection_at(&sys, &region, 0.0, 1e-14).unwrap();
    let b = check_projection_at(&sys, &region, 0.3, 1e-14).unwrap();
    assert_eq!(a.max_residual, b.max_residual);
}

#[test]
fn harmonic_energy_is_conserved_over_a_period() {
    let sys = make_system(&SystemSpec::harmonic(1.0)).unwrap();
    let x0 = PhasePoint::new_1d(0.0, 1.0, 0.0).unwrap();
    let traj = integrate(&sys, &x0, TAU, &StepControl::rk45(1e-10, 1e-10, 1_000_000).unwrap()).unwrap();
    let rep = check_conservation(&traj, sys.hamiltonian(), 1e-8);
    assert!(rep.pass, "{}", rep.to_text_block());
}

#[test]
fn ermakov_lewis_invariant_is_conserved() {
    let sys = make_system(&SystemSpec::td_oscillator(1.0, 0.1, 1.0)).unwrap();
    let x0 = PhasePoint::new_1d(0.0, 1.0, 0.5).unwrap();
    let ctl = StepControl::rk45(1e-10, 1e-10, 1_000_000).unwrap();
    let traj = integrate(&sys, &x0, 10.0, &ctl).unwrap();
    let rep = check_conservation(&traj, &sys.integrals()[0], 1e-6);
    assert!(rep.pass, "{}", rep.to_text_block());
    // Same invariant from the co-integrated (rho, rho').
    let f0 = ermakov_lewis(1.0, 0.5, traj.aux[0][0], traj.aux[0][1]);
    for (x, aux) in traj.points.iter().zip(&traj.aux) {
        let f = ermakov_lewis(x.q()[0], x.p()[0], aux[0], aux[1]);
        assert!((f - f0).abs() < 1e-6);
    }
}
