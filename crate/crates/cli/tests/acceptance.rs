//! End-to-end acceptance run.
//!
//! Prints one `ACCEPT <criterion> PASS|FAIL measured=<x> tol=<y>` line per
//! criterion and exits non-zero if any criterion fails. Runs without the test
//! harness so the lines always appear: `cargo test -p tdcis-cli --test acceptance`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdcis::actionangle::{
    action_integral, build_initial_data_chart, chart_dynamics, check_canonicity, hamiltonian_in_chart,
    pulled_back, shift_chart, ActionAngleChart, ActionFn, ActionFunction,
};
use tdcis::expr::CompiledExpr;
use tdcis::flow::{integrate, StepControl};
use tdcis::mechanics::{poisson_t, poisson_v};
use tdcis::poly::Polynomial;
use tdcis::systems::{default_region, make_system, SystemSpec};
use tdcis::verify::{
    check_conservation, check_first_integrals, check_involution, check_involution_lifted, check_projection,
    SampleRegion,
};
use tdcis::{Arity, ExtendedPoint, PhasePoint, TDSystem};

struct Outcome {
    name: &'static str,
    measured: f64,
    tol: f64,
    pass: bool,
    note: String,
}

impl Outcome {
    /// Passes when `measured < tol` (NaN fails).
    fn below(name: &'static str, measured: f64, tol: f64) -> Self {
        Self {
            name,
            measured,
            tol,
            pass: measured < tol,
            note: String::new(),
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn and(mut self, ok: bool, why: &str) -> Self {
        if !ok {
            self.pass = false;
            self.note = format!("{} {why}", self.note).trim().to_string();
        }
        self
    }

    fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!(
            "ACCEPT {} {status} measured={:.3e} tol={:.1e}",
            self.name, self.measured, self.tol
        );
        if !self.note.is_empty() {
            s.push_str(" (");
            s.push_str(&self.note);
            s.push(')');
        }
        s
    }
}

fn precise() -> StepControl {
    StepControl::precise(1e-12)
}

fn rk45() -> StepControl {
    StepControl::rk45(1e-10, 1e-10, 1_000_000).unwrap()
}

fn system(spec: &SystemSpec) -> TDSystem {
    make_system(spec).unwrap()
}

/// Systems with compact level sets, for which charts exist.
fn chartable() -> Vec<SystemSpec> {
    vec![
        SystemSpec::harmonic(1.0),
        SystemSpec::harmonic(2.0),
        SystemSpec::new("pendulum"),
        SystemSpec::separable_2dof(1.0, 2.0),
        SystemSpec::td_oscillator(1.0, 0.1, 1.0),
    ]
}

/// Nonlinear action function used for shifted charts.
fn shift_for(m: usize) -> Arc<dyn ActionFunction> {
    let src = if m == 1 { "I1 + 0.5*I1^2" } else { "I1 + 0.5*I1^2 + 2*I2" };
    Arc::new(CompiledExpr::actions(src, m).unwrap())
}

// ---------------------------------------------------------------------------
// Bracket laws.

fn numeric_bracket(arity: Arity, m: usize, f: &Polynomial, g: &Polynomial, x: &[f64]) -> f64 {
    let (ff, gf) = (f.to_field(arity, m), g.to_field(arity, m));
    match arity {
        Arity::Vertical => poisson_v(&ff, &gf, &PhasePoint::from_flat(x).unwrap()).unwrap(),
        Arity::Extended => {
            let pt = ExtendedPoint::new(x[0], x[1..=m].to_vec(), x[2 * m + 1], x[1 + m..=2 * m].to_vec()).unwrap();
            poisson_t(&ff, &gf, &pt).unwrap()
        }
    }
}

/// Largest scaled residual of antisymmetry, Leibniz and Jacobi.
fn law_residual(arity: Arity, m: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = arity.len(m);
    let pairs = match arity {
        Arity::Vertical => Polynomial::vertical_pairs(m),
        Arity::Extended => Polynomial::extended_pairs(m),
    };
    let [f, g, h]: [Polynomial; 3] = std::array::from_fn(|_| Polynomial::random(n, 3, 0.5, rng));
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let b = |a: &Polynomial, c: &Polynomial| numeric_bracket(arity, m, a, c, &x);
    let scaled = |terms: &[f64]| {
        let scale = terms.iter().map(|t| t.abs()).fold(1.0, f64::max);
        terms.iter().sum::<f64>().abs() / scale
    };
    let fg = b(&f, &g);
    let anti = scaled(&[fg, b(&g, &f)]);
    let leibniz = scaled(&[b(&f, &g.mul(&h)), -fg * h.eval(&x), -g.eval(&x) * b(&f, &h)]);
    let jacobi = scaled(&[
        b(&f, &g.bracket(&h, &pairs)),
        b(&g, &h.bracket(&f, &pairs)),
        b(&h, &f.bracket(&g, &pairs)),
    ]);
    anti.max(leibniz).max(jacobi)
}

fn bracket_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        worst = worst.max(law_residual(Arity::Vertical, 2, &mut rng));
        worst = worst.max(law_residual(Arity::Extended, 2, &mut rng));
    }
    Outcome::below("bracket_laws", worst, 1e-9).note("100 points, vertical and homogeneous, degree <= 3")
}

// ---------------------------------------------------------------------------
// Integrability of the built-in systems on the homogeneous phase space.

fn lifted_integrability() -> Outcome {
    let mut specs = vec![SystemSpec::free_particle(2)];
    specs.extend(chartable());
    let mut worst: f64 = 0.0;
    let mut all = true;
    for spec in &specs {
        let sys = system(spec);
        let region = default_region(&sys);
        assert_eq!(region.count, 200);
        for rep in [
            check_involution(&sys, &region, 1e-9).unwrap(),
            check_involution_lifted(&sys, &region, 1e-9).unwrap(),
            check_first_integrals(&sys, &region, 1e-9).unwrap(),
            check_projection(&sys, &region, 1e-9).unwrap(),
        ] {
            worst = worst.max(rep.max_residual);
            all &= rep.pass;
        }
    }
    Outcome::below("lifted_integrability", worst, 1e-9)
        .note(format!("{} systems x 200 samples", specs.len()))
        .and(all, "a report failed")
}

// ---------------------------------------------------------------------------
// Conservation along trajectories.

fn conservation() -> Outcome {
    let td = system(&SystemSpec::td_oscillator(1.0, 0.1, 1.0));
    let mut el: f64 = 0.0;
    for (q, p) in [(1.0, 0.5), (0.3, -1.1), (-0.8, 0.0)] {
        let traj = integrate(&td, &PhasePoint::new_1d(0.0, q, p).unwrap(), 10.0, &rk45()).unwrap();
        el = el.max(check_conservation(&traj, &td.integrals()[0], 1e-6).max_residual);
    }
    let osc = system(&SystemSpec::harmonic(1.0));
    let traj = integrate(&osc, &PhasePoint::new_1d(0.0, 1.0, 0.0).unwrap(), TAU, &rk45()).unwrap();
    let energy = check_conservation(&traj, osc.hamiltonian(), 1e-8).max_residual;
    // Each drift is reported against its own tolerance; the line shows the
    // invariant's drift relative to 1e-6.
    Outcome::below("conservation", el, 1e-6)
        .note(format!("ermakov_lewis over [0,10]; harmonic energy drift {energy:.3e} < 1e-8"))
        .and(energy < 1e-8, "harmonic energy drift too large")
}

// ---------------------------------------------------------------------------
// Action quadrature against closed forms.

fn action_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for omega in [1.0, 2.0] {
        let sys = system(&SystemSpec::harmonic(omega));
        for e in [0.1, 0.4, 0.8, 1.2, 1.8] {
            let i = action_integral(&sys.integrals()[0], 0.0, e, 1e-10).unwrap();
            worst = worst.max((i - e / omega).abs());
        }
    }
    // Small oscillations of H = p^2/2 - cos q near the bottom: I = (E + 1) / 1.
    let pend = system(&SystemSpec::new("pendulum"));
    let i = action_integral(&pend.integrals()[0], 0.0, -0.99, 1e-10).unwrap();
    let rel = (i - 0.01).abs() / 0.01;
    Outcome::below("action_oracle", worst, 1e-8)
        .note(format!("pendulum deep well relative error {rel:.3e} < 2e-2"))
        .and(rel < 0.02, "pendulum deep-well action off")
}

// ---------------------------------------------------------------------------
// Charts.

fn charts(spec: &SystemSpec, count: usize) -> (TDSystem, SampleRegion, ActionAngleChart, ActionAngleChart) {
    let sys = system(spec);
    let region = default_region(&sys).with_count(count);
    let chart = build_initial_data_chart(&sys, &region, &precise()).unwrap();
    let shifted = shift_chart(&chart, shift_for(sys.m()));
    (sys, region, chart, shifted)
}

fn canonicity() -> Outcome {
    let specs = [
        SystemSpec::harmonic(1.0),
        SystemSpec::harmonic(2.0),
        SystemSpec::new("pendulum"),
        SystemSpec::separable_2dof(1.0, 2.0),
    ];
    let mut worst: f64 = 0.0;
    let mut all = true;
    for spec in &specs {
        let (_, region, chart, shifted) = charts(spec, 50);
        for c in [&chart, &shifted] {
            let rep = check_canonicity(c, &region, 1e-5).unwrap();
            worst = worst.max(rep.max_residual);
            all &= rep.pass;
        }
    }
    Outcome::below("chart_canonicity", worst, 1e-5)
        .note("4 systems, initial-data and shifted, 50 points")
        .and(all, "a report failed")
}

fn initial_data_constancy() -> Outcome {
    let times: Vec<f64> = (0..=20).map(|i| 0.5 * f64::from(i)).collect();
    let mut worst: f64 = 0.0;
    for spec in chartable() {
        let (sys, region, chart, _) = charts(&spec, 3);
        for x in region.samples(Some(&sys)).unwrap() {
            let d = chart_dynamics(&chart, &x, &times).unwrap();
            worst = worst.max(d.max_action_drift).max(d.max_angle_drift);
        }
    }
    Outcome::below("initial_data_constancy", worst, 1e-5).note("5 systems x 3 starts over [0,10]")
}

fn hamiltonian_realization() -> Outcome {
    let sys = system(&SystemSpec::harmonic(1.0));
    let region = default_region(&sys).with_count(3);
    let chart = build_initial_data_chart(&sys, &region, &precise()).unwrap();
    let shifted = shift_chart(&chart, Arc::new(ActionFn::linear(vec![1.0])));
    let times: Vec<f64> = (0..=20).map(|i| 0.5 * f64::from(i)).collect();
    let mut worst: f64 = 0.0;
    for x in region.samples(Some(&sys)).unwrap() {
        let d = chart_dynamics(&shifted, &x, &times).unwrap();
        worst = worst.max((d.fitted_slopes[0] - 1.0).abs()).max(d.max_action_drift);
    }
    let two = system(&SystemSpec::separable_2dof(1.0, 2.0));
    let region = default_region(&two).with_count(20);
    let chart = build_initial_data_chart(&two, &region, &precise()).unwrap();
    let mut pullback: f64 = 0.0;
    for x in region.samples(Some(&two)).unwrap() {
        let cp = chart.forward(&x).unwrap();
        let h = pulled_back(&chart, two.hamiltonian(), &cp).unwrap();
        pullback = pullback.max((h - (cp.actions[0] + 2.0 * cp.actions[1])).abs());
    }
    Outcome::below("hamiltonian_realization", worst.max(pullback), 1e-5)
        .note(format!("slope/drift {worst:.3e}, 2-dof pullback {pullback:.3e}"))
}

fn action_only_dependence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut all = true;
    for spec in chartable() {
        let (sys, region, chart, shifted) = charts(&spec, 10);
        for (c, r) in [(&chart, region.clone()), (&shifted, region.clone().with_count(3))] {
            let rep = hamiltonian_in_chart(&sys, c, &r).unwrap();
            worst = worst.max(rep.max_residual);
            all &= rep.pass;
        }
    }
    Outcome::below("action_only_dependence", worst, 1e-5)
        .note("5 systems, initial-data and shifted")
        .and(all, "a report failed")
}

// ---------------------------------------------------------------------------
// Binary-level checks.

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: &str, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdcis"))
        .arg(cmd)
        .arg("--config")
        .arg(configs_dir().join(config))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn failure_modes() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let free = run("chart", "free_particle.toml", tmp.path());
    if free.status.code() != Some(3) || !String::from_utf8_lossy(&free.stderr).contains("non-compact") {
        failures.push("free particle");
    }
    let sep = run("chart", "pendulum_separatrix.toml", tmp.path());
    if sep.status.code() != Some(3) || !String::from_utf8_lossy(&sep.stderr).contains("separatrix") {
        failures.push("separatrix");
    }
    let adv = run("verify", "adversarial.toml", tmp.path());
    if adv.status.code() != Some(2) || !String::from_utf8_lossy(&adv.stdout).contains("CHECK involution FAIL") {
        failures.push("adversarial");
    }
    let sys = system(&SystemSpec::new("adversarial"));
    let rep = check_involution(&sys, &default_region(&sys), 1e-9).unwrap();
    if rep.pass {
        failures.push("check_involution");
    }
    let n = failures.len() as f64;
    Outcome::below("failure_modes", n, 0.5).note(if failures.is_empty() {
        "exit 3 non-compact, exit 3 separatrix, involution FAIL".to_string()
    } else {
        format!("wrong outcome: {}", failures.join(", "))
    })
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (config, cmds) in [
        ("harmonic.toml", &["simulate", "verify", "chart", "transform"][..]),
        ("td_oscillator.toml", &["verify", "chart"][..]),
    ] {
        for cmd in cmds {
            let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
            let (ra, rb) = (run(cmd, config, a.path()), run(cmd, config, b.path()));
            let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
            compared += fa.len();
            if ra.status.code() != Some(0) || ra.stdout != rb.stdout || fa.is_empty() || fa != fb {
                mismatches.push(format!("{config}:{cmd}"));
            }
        }
    }
    Outcome::below("determinism", mismatches.len() as f64, 0.5).note(if mismatches.is_empty() {
        format!("{compared} files byte-identical across two runs")
    } else {
        format!("differs: {}", mismatches.join(", "))
    })
}

fn main() {
    let outcomes = [
        bracket_laws(),
        lifted_integrability(),
        conservation(),
        action_oracle(),
        canonicity(),
        initial_data_constancy(),
        hamiltonian_realization(),
        action_only_dependence(),
        failure_modes(),
        determinism(),
    ];
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    if failed.is_empty() {
        println!("ACCEPTANCE PASS ({} criteria)", outcomes.len());
    } else {
        println!("ACCEPTANCE FAIL: {}", failed.join(", "));
        std::process::exit(1);
    }
}
