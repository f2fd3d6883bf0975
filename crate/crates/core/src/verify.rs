//! Sampling-based certification of integrability.
//!
//! Every check evaluates a residual at the points of a [`SampleRegion`] and
//! reports the worst one. Sampling is deterministic in the seed, and the
//! worst point is the lowest-index sample attaining the extreme value, so
//! reports are reproducible byte for byte.

use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::ScalarField;
use crate::flow::Trajectory;
use crate::mechanics::{
    first_integral_residual, gamma_h, gamma_t, lift_hamiltonian, poisson_t, poisson_v, section_h_r,
};
use crate::point::{CoreError, PhasePoint};
use crate::system::TDSystem;

/// Singular values below this mark a sample as near-critical.
pub const NEAR_CRITICAL: f64 = 1e-3;

/// Rejection sampling gives up after this many candidates per sample.
const MAX_ATTEMPTS_PER_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("invalid sample region: {0}")]
    Region(String),
    #[error("only {found} of {wanted} samples satisfy the level range")]
    Exhausted { wanted: usize, found: usize },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Axis-aligned box of phase-space points plus a sampling recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRegion {
    /// `[lo, hi]`; `lo == hi` pins all samples to one time slice.
    pub t_range: [f64; 2],
    pub q_box: Vec<[f64; 2]>,
    pub p_box: Vec<[f64; 2]>,
    pub count: usize,
    pub seed: u64,
    /// When set, samples are kept only if every integral of the system
    /// takes a value in `[lo, hi]`.
    pub level_range: Option<[f64; 2]>,
}

impl SampleRegion {
    /// The same interval for every degree, 200 samples, seed 42.
    pub fn boxed(m: usize, t: [f64; 2], q: [f64; 2], p: [f64; 2]) -> Self {
        Self {
            t_range: t,
            q_box: vec![q; m],
            p_box: vec![p; m],
            count: 200,
            seed: 42,
            level_range: None,
        }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_t_range(mut self, t: [f64; 2]) -> Self {
        self.t_range = t;
        self
    }

    pub fn with_level_range(mut self, range: Option<[f64; 2]>) -> Self {
        self.level_range = range;
        self
    }

    pub fn m(&self) -> usize {
        self.q_box.len()
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |what: &str| Err(VerifyError::Region(what.to_string()));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if self.q_box.is_empty() || self.q_box.len() != self.p_box.len() {
            return bad("q_box and p_box need one interval per degree of freedom");
        }
        let [t0, t1] = self.t_range;
        if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
            return bad("t_range must be finite with lo <= hi");
        }
        for [lo, hi] in self.q_box.iter().chain(&self.p_box) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad("q_box/p_box intervals must be finite with lo < hi");
            }
        }
        if let Some([lo, hi]) = self.level_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad("level_range must be finite with lo <= hi");
            }
        }
        Ok(())
    }

    /// Draws `count` points. The level filter needs `sys`; without it the
    /// filter is ignored.
    pub fn samples(&self, sys: Option<&TDSystem>) -> Result<Vec<PhasePoint>, VerifyError> {
        self.validate()?;
        let m = self.m();
        if let Some(sys) = sys {
            if sys.m() != m {
                return Err(CoreError::Dimension {
                    expected: sys.m(),
                    found: m,
                }
                .into());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let mut out = Vec::with_capacity(self.count);
        let mut attempts = 0;
        while out.len() < self.count {
            attempts += 1;
            if attempts > MAX_ATTEMPTS_PER_SAMPLE * self.count {
                return Err(VerifyError::Exhausted {
                    wanted: self.count,
                    found: out.len(),
                });
            }
            let t = draw(&mut rng, self.t_range);
            let q: Vec<f64> = self.q_box.iter().map(|&r| draw(&mut rng, r)).collect();
            let p: Vec<f64> = self.p_box.iter().map(|&r| draw(&mut rng, r)).collect();
            let x = PhasePoint::new(t, q, p)?;
            if let (Some([lo, hi]), Some(sys)) = (self.level_range, sys) {
                let mut inside = true;
                for f in sys.integrals() {
                    let v = f.eval(&x)?;
                    inside &= v >= lo && v <= hi;
                }
                if !inside {
                    continue;
                }
            }
            out.push(x);
        }
        Ok(out)
    }
}

/// Direction of the pass criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// Pass iff `max_residual <= tolerance`.
    AtMost,
    /// Pass iff the reported metric `>= tolerance` (independence margin).
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub check_name: String,
    /// The reported metric: largest residual, or smallest margin for
    /// [`Comparison::AtLeast`] checks.
    pub max_residual: f64,
    pub worst_point: Option<PhasePoint>,
    pub pass: bool,
    pub tolerance: f64,
    pub comparison: Comparison,
    /// Extra `key: value` lines for the text report.
    pub details: Vec<(String, String)>,
}

impl VerifyReport {
    pub fn new(
        check_name: impl Into<String>,
        metric: f64,
        worst_point: Option<PhasePoint>,
        tolerance: f64,
        comparison: Comparison,
    ) -> Self {
        let pass = match comparison {
            Comparison::AtMost => metric <= tolerance,
            Comparison::AtLeast => metric >= tolerance,
        };
        Self {
            check_name: check_name.into(),
            max_residual: metric,
            worst_point,
            pass,
            tolerance,
            comparison,
            details: Vec::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.details.push((key.to_string(), value.to_string()));
        self
    }

    /// `CHECK name PASS|FAIL max_residual tol`.
    pub fn summary_line(&self) -> String {
        format!(
            "CHECK {} {} {:.6e} {:.1e}",
            self.check_name,
            if self.pass { "PASS" } else { "FAIL" },
            self.max_residual,
            self.tolerance
        )
    }

    /// `key: value` block terminated by a blank line.
    pub fn to_text_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "check: {}", self.check_name);
        let _ = writeln!(s, "status: {}", if self.pass { "PASS" } else { "FAIL" });
        let metric = match self.comparison {
            Comparison::AtMost => "max_residual",
            Comparison::AtLeast => "min_margin",
        };
        let _ = writeln!(s, "{metric}: {:.16e}", self.max_residual);
        let _ = writeln!(s, "tolerance: {:.16e}", self.tolerance);
        match &self.worst_point {
            Some(x) => {
                let _ = writeln!(s, "worst_point: {x}");
            }
            None => {
                let _ = writeln!(s, "worst_point: none");
            }
        }
        for (k, v) in &self.details {
            let _ = writeln!(s, "{k}: {v}");
        }
        s.push('\n');
        s
    }
}

/// Tracks the extreme value and the lowest index attaining it. NaN counts
/// as the worst possible value.
struct Extreme {
    best: f64,
    index: Option<usize>,
    maximize: bool,
}

impl Extreme {
    fn max() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            index: None,
            maximize: true,
        }
    }

    fn min() -> Self {
        Self {
            best: f64::INFINITY,
            index: None,
            maximize: false,
        }
    }

    fn offer(&mut self, i: usize, v: f64) {
        let v = if v.is_nan() {
            if self.maximize {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            v
        };
        let better = if self.maximize { v > self.best } else { v < self.best };
        if better || self.index.is_none() {
            self.best = v;
            self.index = Some(i);
        }
    }
}

fn residual_report(
    name: &str,
    samples: &[PhasePoint],
    tol: f64,
    mut residual: impl FnMut(&PhasePoint) -> Result<f64, CoreError>,
) -> VerifyReport {
    let mut ext = Extreme::max();
    let mut errors = 0usize;
    for (i, x) in samples.iter().enumerate() {
        let r = residual(x).unwrap_or_else(|_| {
            errors += 1;
            f64::NAN
        });
        ext.offer(i, r);
    }
    let worst = ext.index.map(|i| samples[i].clone());
    let mut report = VerifyReport::new(name, ext.best.max(0.0), worst, tol, Comparison::AtMost)
        .with_detail("samples", samples.len());
    if errors > 0 {
        report = report.with_detail("evaluation_errors", errors);
    }
    report
}

/// `max |{F_j, F_k}_V|` over samples and pairs `j < k`.
pub fn check_involution(
    sys: &TDSystem,
    region: &SampleRegion,
    tol: f64,
) -> Result<VerifyReport, VerifyError> {
    let samples = region.samples(Some(sys))?;
    let fs = sys.integrals();
    Ok(residual_report("involution", &samples, tol, |x| {
        let mut worst: f64 = 0.0;
        for j in 0..fs.len() {
            for k in j + 1..fs.len() {
                worst = worst.max(poisson_v(&fs[j], &fs[k], x)?.abs());
            }
        }
        Ok(worst)
    }))
}

/// Involution of the lifted family `(H*, pullbacks of F_k)` on the
/// homogeneous phase space, evaluated on the section `p0 = -H`.
pub fn check_involution_lifted(
    sys: &TDSystem,
    region: &SampleRegion,
    tol: f64,
) -> Result<VerifyReport, VerifyError> {
    let samples = region.samples(Some(sys))?;
    let lifted: Vec<ScalarField> = sys
        .integrals()
        .iter()
        .map(|f| f.pullback())
        .collect::<Result<_, _>>()?;
    let h_star = lift_hamiltonian(sys);
    Ok(residual_report("lifted_involution", &samples, tol, |x| {
        let y = section_h_r(sys, 0.0, x)?;
        let mut worst: f64 = 0.0;
        for j in 0..lifted.len() {
            worst = worst.max(poisson_t(&h_star, &lifted[j], &y)?.abs());
            for k in j + 1..lifted.len() {
                worst = worst.max(poisson_t(&lifted[j], &lifted[k], &y)?.abs());
            }
        }
        Ok(worst)
    }))
}

/// `max |d_t F_k + {H, F_k}_V|` over samples and `k`.
pub fn check_first_integrals(
    sys: &TDSystem,
    region: &SampleRegion,
    tol: f64,
) -> Result<VerifyReport, VerifyError> {
    let samples = region.samples(Some(sys))?;
    Ok(residual_report("first_integrals", &samples, tol, |x| {
        let mut worst: f64 = 0.0;
        for f in sys.integrals() {
            worst = worst.max(first_integral_residual(sys, f, x)?.abs());
        }
        Ok(worst)
    }))
}

/// Smallest singular value of the `m x (2m+1)` Jacobian of the integrals.
pub fn min_singular_value(sys: &TDSystem, x: &PhasePoint) -> Result<f64, CoreError> {
    let m = sys.m();
    let mut jac = DMatrix::<f64>::zeros(m, 2 * m + 1);
    for (k, f) in sys.integrals().iter().enumerate() {
        let g = f.grad(x)?;
        for (c, v) in g.as_slice().iter().enumerate() {
            jac[(k, c)] = *v;
        }
    }
    let sv = jac.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Passes iff the smallest singular value over all samples is at least
/// `tol`. Also reports the fraction of samples below [`NEAR_CRITICAL`].
pub fn check_independence(
    sys: &TDSystem,
    region: &SampleRegion,
    tol: f64,
) -> Result<VerifyReport, VerifyError> {
    let samples = region.samples(Some(sys))?;
    let mut ext = Extreme::min();
    let mut near = 0usize;
    for (i, x) in samples.iter().enumerate() {
        let s = min_singular_value(sys, x).unwrap_or(f64::NAN);
        if !(s >= NEAR_CRITICAL) {
            near += 1;
        }
        ext.offer(i, s);
    }
    let worst = ext.index.map(|i| samples[i].clone());
    let fraction = near as f64 / samples.len() as f64;
    Ok(
        VerifyReport::new("independence", ext.best, worst, tol, Comparison::AtLeast)
            .with_detail("samples", samples.len())
            .with_detail("near_critical_threshold", format!("{NEAR_CRITICAL:.1e}"))
            .with_detail("near_critical_fraction", format!("{fraction:.6}")),
    )
}

/// Componentwise distance between the vertical part of the lifted field at
/// `section_h_r(sys, r, x)` and the evolution field at `x`.
pub fn check_projection_at(
    sys: &TDSystem,
    region: &SampleRegion,
    r: f64,
    tol: f64,
) -> Result<VerifyReport, VerifyError> {
    let samples = region.samples(Some(sys))?;
    let report = residual_report("projection", &samples, tol, |x| {
        let lifted = gamma_t(sys, &section_h_r(sys, r, x)?)?;
        let direct = gamma_h(sys, x)?;
        Ok(lifted.max_vertical_difference(&direct))
    });
    Ok(report.with_detail("section_r", r))
}

pub fn check_projection(
    sys: &TDSystem,
    region: &SampleRegion,
    tol: f64,
) -> Result<VerifyReport, VerifyError> {
    check_projection_at(sys, region, 0.0, tol)
}

/// `max |F(x_i) - F(x_0)|` along a trajectory.
pub fn check_conservation(traj: &Trajectory, f: &ScalarField, tol: f64) -> VerifyReport {
    let name = format!("conservation[{}]", f.label());
    let Ok(f0) = f.eval(traj.first()) else {
        return VerifyReport::new(name, f64::INFINITY, Some(traj.first().clone()), tol, Comparison::AtMost);
    };
    residual_report(&name, &traj.points, tol, |x| Ok((f.eval(x)? - f0).abs()))
        .with_detail("t_end", format!("{:.16e}", traj.last().t()))
}
