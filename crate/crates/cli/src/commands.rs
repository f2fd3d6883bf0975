use std::fmt::Write as _;
use std::sync::Arc;

use tdcis::actionangle::{
    build_initial_data_chart, chart_csv, chart_dynamics, check_canonicity, hamiltonian_in_chart,
    shift_chart, transform_ww26, AaError, ActionAngleChart, ActionFunction, ActionProfile,
};
use tdcis::expr::CompiledExpr;
use tdcis::flow::{integrate, FlowError, StepControl, Trajectory};
use tdcis::verify::{
    check_conservation, check_first_integrals, check_independence, check_involution,
    check_involution_lifted, check_projection, Comparison, SampleRegion, VerifyError, VerifyReport,
};
use tdcis::TDSystem;

use crate::config::{RunConfig, TransformKind};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    Chart,
    Transform,
}

/// Files to write (name relative to the output directory) and stdout
/// lines of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit: i32,
    pub files: Vec<(String, String)>,
    pub stdout: Vec<String>,
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::InvalidControl(m) => CliError::Config(format!("[step] {m}")),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Region(m) => CliError::Config(format!("[region] {m}")),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<AaError> for CliError {
    fn from(e: AaError) -> Self {
        match e {
            AaError::NonCompact(_)
            | AaError::Separatrix { .. }
            | AaError::NotSeparable(_)
            | AaError::PeriodNotFound(_) => CliError::Ineligible(e.to_string()),
            AaError::Verify(v) => v.into(),
            AaError::Flow(f) => f.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub fn run_command(cmd: Command, cfg: &RunConfig, seed: Option<u64>) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate => simulate(cfg),
        Command::Verify => verify(cfg, seed),
        Command::Chart => chart(cfg, seed),
        Command::Transform => transform(cfg, seed),
    }
}

fn header(sys: &TDSystem, region: Option<&SampleRegion>) -> String {
    let mut s = format!("system: {}\nm: {}\n", sys.label(), sys.m());
    if let Some(r) = region {
        let _ = writeln!(s, "seed: {}\nsamples: {}", r.seed, r.count);
    }
    s.push('\n');
    s
}

fn all_pass(reports: &[VerifyReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sys = cfg.build_system()?;
    let ctl = cfg.step_control()?;
    let Some((x0, t_target)) = cfg.initial_point(&sys)? else {
        return Err(CliError::Config("simulate needs a [simulate] section".into()));
    };
    let traj = integrate(&sys, &x0, t_target, &ctl)?;
    Ok(Outcome {
        exit: 0,
        files: vec![("trajectory.csv".into(), traj.to_csv())],
        stdout: vec![format!(
            "SIMULATE {} rows={} t_end={:.16e}",
            sys.label(),
            traj.points.len(),
            traj.last().t()
        )],
    })
}

/// Worst conservation report of each integral over trajectories from the
/// first samples of the region.
fn conservation_reports(
    sys: &TDSystem,
    region: &SampleRegion,
    ctl: &StepControl,
    cfg: &RunConfig,
) -> Result<Vec<VerifyReport>, CliError> {
    let v = &cfg.verify;
    let starts = region.samples(Some(sys))?;
    let trajectories: Vec<Trajectory> = starts
        .iter()
        .take(v.conservation_starts.max(1))
        .map(|x| integrate(sys, x, x.t() + v.conservation_time, ctl))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for f in sys.integrals() {
        let mut worst: Option<VerifyReport> = None;
        for traj in &trajectories {
            let rep = check_conservation(traj, f, v.conservation_tol);
            if worst.as_ref().is_none_or(|w| rep.max_residual > w.max_residual) {
                worst = Some(rep);
            }
        }
        out.extend(worst);
    }
    Ok(out)
}

fn verify(cfg: &RunConfig, seed: Option<u64>) -> Result<Outcome, CliError> {
    let sys = cfg.build_system()?;
    let region = cfg.region(&sys, seed)?;
    let ctl = cfg.step_control()?;
    let v = &cfg.verify;
    let mut reports = vec![
        check_involution(&sys, &region, v.involution_tol)?,
        check_first_integrals(&sys, &region, v.first_integral_tol)?,
        check_independence(&sys, &region, v.independence_tol)?,
        check_projection(&sys, &region, v.projection_tol)?,
    ];
    reports.extend(conservation_reports(&sys, &region, &ctl, cfg)?);
    reports.push(check_involution_lifted(&sys, &region, v.lifted_tol)?);
    let pass = all_pass(&reports);
    let mut text = header(&sys, Some(&region));
    let mut stdout = Vec::new();
    for r in &reports {
        text.push_str(&r.to_text_block());
        stdout.push(r.summary_line());
    }
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(text, "overall: {verdict}");
    stdout.push(format!("VERIFY {verdict}"));
    Ok(Outcome {
        exit: if pass { 0 } else { 2 },
        files: vec![("verify_report.txt".into(), text)],
        stdout,
    })
}

fn chart_setup(cfg: &RunConfig, seed: Option<u64>) -> Result<(TDSystem, SampleRegion, ActionAngleChart), CliError> {
    let sys = cfg.build_system()?;
    let region = cfg.region(&sys, seed)?;
    let ctl = StepControl::rk45(cfg.chart.tol, cfg.chart.tol, 10_000_000)
        .map_err(|e| CliError::Config(format!("[chart] tol: {e}")))?;
    let chart = build_initial_data_chart(&sys, &region, &ctl)?;
    Ok((sys, region, chart))
}

fn profile_lines(chart: &ActionAngleChart, levels: &[f64]) -> Result<String, CliError> {
    let mut s = String::new();
    for k in 0..chart.m() {
        let prof = ActionProfile::compute(chart.slice_field(k), 0.0, levels, chart.loop_options(k))?;
        for i in 0..levels.len() {
            let _ = writeln!(
                s,
                "profile: degree={} level={:.16e} action={:.16e} period={:.16e}",
                k + 1,
                prof.levels[i],
                prof.actions[i],
                prof.periods[i]
            );
        }
        let _ = writeln!(s, "profile_monotone: degree={} {}", k + 1, prof.is_strictly_increasing());
    }
    if !s.is_empty() {
        s.push('\n');
    }
    Ok(s)
}

fn chart(cfg: &RunConfig, seed: Option<u64>) -> Result<Outcome, CliError> {
    let (sys, region, chart) = chart_setup(cfg, seed)?;
    let profile = profile_lines(&chart, &cfg.chart.levels)?;
    let check_region = region.clone().with_count(cfg.chart.samples.max(1));
    let reports = vec![
        check_canonicity(&chart, &check_region, cfg.chart.canonicity_tol)?,
        hamiltonian_in_chart(&sys, &chart, &check_region)?,
    ];

    let ctl = cfg.step_control()?;
    let (x0, t_target) = match cfg.initial_point(&sys)? {
        Some(start) => start,
        None => {
            let x = region.samples(Some(&sys))?.remove(0);
            let t = x.t() + cfg.chart.duration;
            (x, t)
        }
    };
    let traj = integrate(&sys, &x0, t_target, &ctl)?;
    let points = traj
        .points
        .iter()
        .map(|x| chart.forward(x))
        .collect::<Result<Vec<_>, _>>()?;

    let pass = all_pass(&reports);
    let mut text = header(&sys, Some(&check_region));
    let _ = writeln!(text, "chart: {}\n", chart.kind());
    text.push_str(&profile);
    let mut stdout = Vec::new();
    for r in &reports {
        text.push_str(&r.to_text_block());
        stdout.push(r.summary_line());
    }
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(text, "overall: {verdict}");
    stdout.push(format!("CHART {verdict} rows={}", points.len()));
    Ok(Outcome {
        exit: if pass { 0 } else { 2 },
        files: vec![
            ("chart_report.txt".into(), text),
            ("chart.csv".into(), chart_csv(&points)),
            ("trajectory.csv".into(), traj.to_csv()),
        ],
        stdout,
    })
}

fn transform(cfg: &RunConfig, seed: Option<u64>) -> Result<Outcome, CliError> {
    let Some(t) = &cfg.transform else {
        return Err(CliError::Config("transform needs a [transform] section".into()));
    };
    if t.points < 2 || !(t.duration > 0.0) {
        return Err(CliError::Config("[transform] needs points >= 2 and duration > 0".into()));
    }
    // Parse before any numerical work so a bad expression fails fast.
    let m = cfg.build_system()?.m();
    let h: Arc<dyn ActionFunction> =
        Arc::new(CompiledExpr::actions(&t.h_of_i, m).map_err(|e| CliError::Parse(format!("h_of_i: {e}")))?);
    let (sys, region, base) = chart_setup(cfg, seed)?;
    let chart = match t.kind {
        TransformKind::Shift => shift_chart(&base, h),
        TransformKind::Ww26 => transform_ww26(&base, h),
    };

    let starts = region.samples(Some(&sys))?;
    let mut text = header(&sys, Some(&region));
    let _ = writeln!(text, "chart: {}", chart.kind());
    let _ = writeln!(text, "h_of_i: {}\n", t.h_of_i);
    let (mut drift, mut slope_err): (f64, f64) = (0.0, 0.0);
    for (i, x) in starts.iter().take(t.starts.max(1)).enumerate() {
        let times: Vec<f64> = (0..t.points)
            .map(|j| x.t() + t.duration * j as f64 / (t.points - 1) as f64)
            .collect();
        let d = chart_dynamics(&chart, x, &times)?;
        drift = drift.max(d.max_action_drift);
        slope_err = slope_err.max(d.max_slope_error);
        let _ = writeln!(text, "start: {}", i + 1);
        let _ = writeln!(text, "point: {x}");
        for k in 0..chart.m() {
            let _ = writeln!(
                text,
                "degree: {} action={:.16e} fitted_slope={:.16e} expected_slope={:.16e}",
                k + 1,
                d.points[0].actions[k],
                d.fitted_slopes[k],
                d.expected_slopes[k]
            );
        }
        let _ = writeln!(text, "action_drift: {:.16e}", d.max_action_drift);
        let _ = writeln!(text, "angle_drift: {:.16e}\n", d.max_angle_drift);
    }
    let first = starts.first().cloned();
    let reports = vec![
        VerifyReport::new("transform_action_drift", drift, first.clone(), t.tol, Comparison::AtMost),
        VerifyReport::new("transform_slope", slope_err, first, t.tol, Comparison::AtMost),
        check_canonicity(&chart, &region.clone().with_count(cfg.chart.samples.max(1)), cfg.chart.canonicity_tol)?,
    ];
    let pass = all_pass(&reports);
    let mut stdout = Vec::new();
    for r in &reports {
        text.push_str(&r.to_text_block());
        stdout.push(r.summary_line());
    }
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(text, "overall: {verdict}");
    stdout.push(format!("TRANSFORM {verdict}"));
    Ok(Outcome {
        exit: if pass { 0 } else { 2 },
        files: vec![("transform_report.txt".into(), text)],
        stdout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn simulate_zero_span_is_one_row() {
        let c = cfg("[system]\nname = \"harmonic\"\n[simulate]\nq = [1.0]\np = [0.0]\nt_target = 0.0\n");
        let out = run_command(Command::Simulate, &c, None).unwrap();
        assert_eq!(out.files[0].1.lines().count(), 2);
    }

    #[test]
    fn simulate_without_section_is_a_config_error() {
        let c = cfg("[system]\nname = \"harmonic\"\n");
        assert_eq!(run_command(Command::Simulate, &c, None).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn malformed_expression_is_a_parse_error() {
        let c = cfg("[system]\nname = \"harmonic\"\n[transform]\nh_of_i = \"I1+\"\n");
        let err = run_command(Command::Transform, &c, None).unwrap_err();
        assert!(matches!(err, CliError::Parse(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn free_particle_chart_is_ineligible() {
        let c = cfg("[system]\nname = \"free_particle\"\n");
        let err = run_command(Command::Chart, &c, None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("non-compact"));
    }
}
