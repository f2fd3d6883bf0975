//! Canonicity and dynamics checks for charts.

use super::chart::{ActionAngleChart, ChartKind, ChartPoint};
use super::{angle_difference, AaError};
use crate::field::ScalarField;
use crate::flow::flow_to;
use crate::point::PhasePoint;
use crate::verify::{Comparison, SampleRegion, VerifyReport};

/// Finite-difference step of the chart Jacobian.
pub const CANONICITY_STEP: f64 = 1e-6;

/// Pass threshold of [`hamiltonian_in_chart`].
pub const IN_CHART_TOL: f64 = 1e-5;

/// Angle step of the `d/dphi` estimates.
const ANGLE_STEP: f64 = 1e-3;

fn domain(x: &PhasePoint, e: AaError) -> AaError {
    match e {
        AaError::Domain(_) => e,
        other => AaError::Domain(format!("chart evaluation failed at {x}: {other}")),
    }
}

/// Jacobian rows `[I_1..I_m, phi_1..phi_m]`, columns `[q_1..q_m, p_1..p_m]`,
/// by central differences with step `h`.
fn jacobian(chart: &ActionAngleChart, x: &PhasePoint, h: f64) -> Result<Vec<Vec<f64>>, AaError> {
    let m = chart.m();
    let mut jac = vec![vec![0.0; 2 * m]; 2 * m];
    let state = x.state();
    for v in 0..2 * m {
        let eval = |delta: f64| {
            let mut y = state.clone();
            y[v] += delta;
            let xp = PhasePoint::from_state(x.t(), &y)?;
            chart.forward(&xp).map_err(|e| domain(&xp, e))
        };
        let plus = eval(h)?;
        let minus = eval(-h)?;
        for k in 0..m {
            jac[k][v] = (plus.actions[k] - minus.actions[k]) / (2.0 * h);
            jac[m + k][v] = angle_difference(plus.angles[k], minus.angles[k]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `{A, B}_V` from gradient rows over `[q.., p..]`.
fn bracket(a: &[f64], b: &[f64], m: usize) -> f64 {
    (0..m).map(|k| a[m + k] * b[k] - a[k] * b[m + k]).sum()
}

/// Checks `{I_i, phi_j} = delta_ij`, `{I_i, I_j} = 0`, `{phi_i, phi_j} = 0`
/// from Jacobians of `forward` (central differences at `h` and `h/2`
/// combined by one Richardson step).
pub fn check_canonicity(
    chart: &ActionAngleChart,
    region: &SampleRegion,
    tol: f64,
) -> Result<VerifyReport, AaError> {
    let m = chart.m();
    let samples = region.samples(Some(chart.system()))?;
    let mut worst = (f64::NEG_INFINITY, 0usize);
    let (mut max_pair, mut max_ii, mut max_pp) = (0.0f64, 0.0f64, 0.0f64);
    let mut pairing_at_worst = 0.0;
    for (idx, x) in samples.iter().enumerate() {
        let coarse = jacobian(chart, x, CANONICITY_STEP)?;
        let fine = jacobian(chart, x, 0.5 * CANONICITY_STEP)?;
        let jac: Vec<Vec<f64>> = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| c.iter().zip(f).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
            .collect();
        let (mut pair, mut ii, mut pp) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..m {
            for j in 0..m {
                let delta = if i == j { 1.0 } else { 0.0 };
                pair = pair.max((bracket(&jac[i], &jac[m + j], m) - delta).abs());
                if j > i {
                    ii = ii.max(bracket(&jac[i], &jac[j], m).abs());
                    pp = pp.max(bracket(&jac[m + i], &jac[m + j], m).abs());
                }
            }
        }
        let r = pair.max(ii).max(pp);
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if r > worst.0 {
            worst = (r, idx);
            pairing_at_worst = bracket(&jac[0], &jac[m], m);
        }
        max_pair = max_pair.max(pair);
        max_ii = max_ii.max(ii);
        max_pp = max_pp.max(pp);
    }
    Ok(VerifyReport::new(
        format!("canonicity[{}]", chart.kind()),
        worst.0.max(0.0),
        Some(samples[worst.1].clone()),
        tol,
        Comparison::AtMost,
    )
    .with_detail("samples", samples.len())
    .with_detail("pairing", "{I_i, phi_j} = delta_ij")
    .with_detail("max_pairing_deviation", format!("{max_pair:.16e}"))
    .with_detail("max_action_bracket", format!("{max_ii:.16e}"))
    .with_detail("max_angle_bracket", format!("{max_pp:.16e}"))
    .with_detail("I1_phi1_at_worst", format!("{pairing_at_worst:.16e}")))
}

/// Value of `field` at the phase-space point with chart coordinates `cp`.
pub fn pulled_back(chart: &ActionAngleChart, field: &ScalarField, cp: &ChartPoint) -> Result<f64, AaError> {
    let x = chart.inverse(cp)?;
    Ok(field.eval(&x)?)
}

/// Angle behaviour of a chart along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDynamics {
    pub points: Vec<ChartPoint>,
    pub max_action_drift: f64,
    /// Largest deviation of the unwrapped angles from
    /// `phi(t0) + (t - t0) grad S(I(t0))`.
    pub max_angle_drift: f64,
    /// Least-squares slopes of the unwrapped angles.
    pub fitted_slopes: Vec<f64>,
    pub expected_slopes: Vec<f64>,
    pub max_slope_error: f64,
}

/// Evaluates the chart along the trajectory through `x0` at `times`
/// (increasing, starting at or after `x0.t()`).
pub fn chart_dynamics(chart: &ActionAngleChart, x0: &PhasePoint, times: &[f64]) -> Result<ChartDynamics, AaError> {
    let m = chart.m();
    let mut x = x0.clone();
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        x = flow_to(chart.system(), &x, t, chart.step_control())?;
        points.push(chart.forward(&x)?);
    }
    let Some(first) = points.first().cloned() else {
        return Err(AaError::Domain("no sample times".into()));
    };
    let expected = chart.frequencies(&first.actions);
    let mut unwrapped: Vec<Vec<f64>> = vec![vec![first.angles[0]; 0]; m];
    for k in 0..m {
        let mut acc = first.angles[k];
        let mut prev = first.angles[k];
        for cp in &points {
            acc += angle_difference(cp.angles[k], prev);
            prev = cp.angles[k];
            unwrapped[k].push(acc);
        }
    }
    let mut max_action_drift: f64 = 0.0;
    let mut max_angle_drift: f64 = 0.0;
    for (i, cp) in points.iter().enumerate() {
        for k in 0..m {
            max_action_drift = max_action_drift.max((cp.actions[k] - first.actions[k]).abs());
            let line = unwrapped[k][0] + (cp.t - first.t) * expected[k];
            max_angle_drift = max_angle_drift.max((unwrapped[k][i] - line).abs());
        }
    }
    let ts: Vec<f64> = points.iter().map(|cp| cp.t).collect();
    let fitted_slopes: Vec<f64> = (0..m).map(|k| least_squares_slope(&ts, &unwrapped[k])).collect();
    let max_slope_error = fitted_slopes
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ChartDynamics {
        points,
        max_action_drift,
        max_angle_drift,
        fitted_slopes,
        expected_slopes: expected,
        max_slope_error,
    })
}

fn least_squares_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    if t.len() < 2 {
        return 0.0;
    }
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Estimates `d/dphi_j` of every pulled-back integral (and of the
/// Hamiltonian when it is time independent) at the samples; passes iff all
/// stay below [`IN_CHART_TOL`]. Shifted charts are additionally followed
/// along trajectories from the first few samples to confirm constant
/// actions and angle rates `grad S(I)`.
pub fn hamiltonian_in_chart(
    sys: &crate::system::TDSystem,
    chart: &ActionAngleChart,
    region: &SampleRegion,
) -> Result<VerifyReport, AaError> {
    let m = chart.m();
    let samples = region.samples(Some(sys))?;
    let mut fields: Vec<&ScalarField> = sys.integrals().iter().collect();
    if sys.is_autonomous() {
        fields.push(sys.hamiltonian());
    }
    let mut worst = (f64::NEG_INFINITY, 0usize);
    let mut max_dphi: f64 = 0.0;
    for (idx, x) in samples.iter().enumerate() {
        let cp = chart.forward(x).map_err(|e| domain(x, e))?;
        let mut r: f64 = 0.0;
        for j in 0..m {
            let shifted = |delta: f64| -> Result<PhasePoint, AaError> {
                let mut c = cp.clone();
                c.angles[j] = super::wrap_angle(c.angles[j] + delta);
                chart.inverse(&c).map_err(|e| domain(x, e))
            };
            let plus = shifted(ANGLE_STEP)?;
            let minus = shifted(-ANGLE_STEP)?;
            for f in &fields {
                let d = (f.eval(&plus)? - f.eval(&minus)?) / (2.0 * ANGLE_STEP);
                r = r.max(d.abs());
            }
        }
        let r = if r.is_nan() { f64::INFINITY } else { r };
        max_dphi = max_dphi.max(r);
        if r > worst.0 {
            worst = (r, idx);
        }
    }
    let mut metric = worst.0.max(0.0);
    let mut details: Vec<(String, String)> = vec![
        ("samples".into(), samples.len().to_string()),
        ("max_dphi".into(), format!("{max_dphi:.16e}")),
    ];
    if !matches!(chart.kind(), ChartKind::InitialData) {
        let times: Vec<f64> = (0..=10).map(|i| 0.2 * i as f64).collect();
        let (mut drift, mut slope): (f64, f64) = (0.0, 0.0);
        for x in samples.iter().take(3) {
            let ts: Vec<f64> = times.iter().map(|dt| x.t() + dt).collect();
            let dynamics = chart_dynamics(chart, x, &ts).map_err(|e| domain(x, e))?;
            drift = drift.max(dynamics.max_action_drift);
            slope = slope.max(dynamics.max_slope_error);
        }
        details.push(("max_action_drift".into(), format!("{drift:.16e}")));
        details.push(("max_slope_error".into(), format!("{slope:.16e}")));
        metric = metric.max(drift).max(slope);
    }
    let mut report = VerifyReport::new(
        format!("hamiltonian_in_chart[{}]", chart.kind()),
        metric,
        Some(samples[worst.1].clone()),
        IN_CHART_TOL,
        Comparison::AtMost,
    );
    report.details = details;
    Ok(report)
}
