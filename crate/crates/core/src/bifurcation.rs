//! The curve `lambda(theta)`: sweep, branch points and comparison with the
//! oscillation law `lambda_n - lambda* ~ C theta^{(1-sigma)/alpha} sin(f log theta + c)`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_damped_log_sinusoid, fit_line, fit_log_sinusoid, fit_power, DampedSinFit, PowerFit, SinFit};
use crate::error::{Error, Result};
use crate::integrator::Profile;
use crate::io::{atomic_write, fmt17};
use crate::params::{DerivedConstants, ProblemParams};
use crate::profiles::{default_bracket, shoot_lambda, ShootResult, ShootSettings, ShootSummary};

/// Largest tolerated share of failed sweep points.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Each bracket is seeded from the previous converged value.
    WarmStart,
    /// Independent points, each with a full pre-scan.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub shoot: ShootSettings,
    pub bracket: Option<(f64, f64)>,
    pub lambda_tol: f64,
    pub mode: SweepMode,
    /// Worker threads in parallel mode; rayon's default when absent.
    pub threads: Option<usize>,
    /// Smallest half-width of a warm-start bracket.
    pub warm_width: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            shoot: ShootSettings::default(),
            bracket: None,
            lambda_tol: 1e-10,
            mode: SweepMode::WarmStart,
            threads: None,
            warm_width: 2e-3,
        }
    }
}

/// `n` log-spaced heights on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && lo < hi && n >= 2) {
        return Err(Error::domain(format!("invalid theta grid [{lo}, {hi}] with {n} points")));
    }
    Ok((0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub theta: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub n: usize,
    pub theta: f64,
    pub lambda: f64,
    /// Local maximum of `lambda(theta)` (a minimum otherwise).
    pub maximum: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub params: ProblemParams,
    pub mode: SweepMode,
    pub lambda_tol: f64,
    pub samples: Vec<ShootSummary>,
    pub failures: Vec<SweepFailure>,
    pub lambda_star_ref: Option<f64>,
    pub branch_points: Vec<BranchPoint>,
    /// Sinusoid in `log theta` of `(lambda - lambda*) theta^{-e}` with `e` the fitted envelope exponent.
    pub period_fit: Option<SinFit>,
    pub envelope_fit: Option<PowerFit>,
    pub damped_fit: Option<DampedSinFit>,
}

impl BifurcationCurve {
    pub fn thetas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.theta.unwrap_or(f64::NAN)).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.lambda).collect()
    }

    /// Largest bisection width over the converged samples.
    pub fn max_achieved_tol(&self) -> f64 {
        self.samples.iter().map(|s| s.achieved_tol).fold(0.0, f64::max)
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("theta,lambda,iterations,achieved_tol\n");
        for p in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt17(p.theta.unwrap_or(f64::NAN)),
                fmt17(p.lambda),
                p.iterations,
                fmt17(p.achieved_tol)
            );
        }
        s
    }

    pub fn branch_csv(&self) -> String {
        let mut s = String::from("n,theta_n,lambda_n\n");
        for b in &self.branch_points {
            let _ = writeln!(s, "{},{},{}", b.n, fmt17(b.theta), fmt17(b.lambda));
        }
        s
    }

    /// Writes `<stem>_curve.csv` and `<stem>_branches.csv`.
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let a = dir.join(format!("{stem}_curve.csv"));
        let b = dir.join(format!("{stem}_branches.csv"));
        atomic_write(&a, self.curve_csv().as_bytes())?;
        atomic_write(&b, self.branch_csv().as_bytes())?;
        Ok(vec![a, b])
    }
}

fn shoot_point(
    theta: f64,
    bracket: (f64, f64),
    params: &ProblemParams,
    s: &SweepSettings,
    hint: Option<f64>,
) -> Result<ShootResult> {
    let settings = ShootSettings { lambda_hint: hint.or(s.shoot.lambda_hint), ..s.shoot };
    shoot_lambda(theta, bracket, s.lambda_tol, params, &settings)
}

/// Warm start: a narrow bracket around the extrapolated value, widened on failure,
/// then the full bracket with the previous value as hint.
fn shoot_warm(
    theta: f64,
    guess: f64,
    spread: f64,
    full: (f64, f64),
    params: &ProblemParams,
    s: &SweepSettings,
) -> Result<ShootResult> {
    let mut w = spread.max(s.warm_width);
    for _ in 0..4 {
        let lo = (guess - w).max(full.0);
        let hi = (guess + w).min(full.1);
        let narrow = SweepSettings { shoot: ShootSettings { prescan_points: 8, ..s.shoot }, ..*s };
        match shoot_point(theta, (lo, hi), params, &narrow, Some(guess)) {
            Ok(r) => return Ok(r),
            Err(Error::NoSignChange { .. }) => w *= 4.0,
            Err(e) => return Err(e),
        }
    }
    shoot_point(theta, full, params, s, Some(guess))
}

/// One shoot per height. Failures are collected; more than 10% of them is fatal.
pub fn sweep(
    thetas: &[f64],
    params: &ProblemParams,
    lambda_star: Option<f64>,
    s: &SweepSettings,
) -> Result<BifurcationCurve> {
    if thetas.len() < 2 || thetas.windows(2).any(|w| !(w[0] < w[1])) && thetas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::domain("theta grid must be strictly monotone with at least two points"));
    }
    let full = s.bracket.unwrap_or_else(|| default_bracket(params));
    let hint = lambda_star.or(s.shoot.lambda_hint);
    let outcomes: Vec<(f64, Result<ShootResult>)> = match s.mode {
        SweepMode::Parallel => {
            let run = || -> Vec<(f64, Result<ShootResult>)> {
                thetas.par_iter().map(|&t| (t, shoot_point(t, full, params, s, hint))).collect()
            };
            match s.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::domain(format!("thread pool: {e}")))?
                    .install(run),
                None => run(),
            }
        }
        SweepMode::WarmStart => {
            let mut out = Vec::with_capacity(thetas.len());
            let mut last: Vec<(f64, f64)> = Vec::new();
            for &t in thetas {
                let res = match last.as_slice() {
                    [] => shoot_point(t, full, params, s, hint),
                    [.., (_, l)] if last.len() == 1 => shoot_warm(t, *l, 0.0, full, params, s),
                    [.., (x0, l0), (x1, l1)] => {
                        let slope = (l1 - l0) / (x1.ln() - x0.ln());
                        let guess = l1 + slope * (t.ln() - x1.ln());
                        shoot_warm(t, guess, 4.0 * (l1 - l0).abs(), full, params, s)
                    }
                    _ => unreachable!(),
                };
                if let Ok(r) = &res {
                    last.push((t, r.lambda));
                }
                out.push((t, res));
            }
            out
        }
    };
    let total = outcomes.len();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in outcomes {
        match r {
            Ok(r) => samples.push(r.summary()),
            Err(e) => {
                log::warn!("sweep point theta = {t} failed: {e}");
                failures.push(SweepFailure { theta: t, error: e.to_string() });
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let diagnostics = failures.iter().map(|f| format!("theta = {}: {}", f.theta, f.error)).collect();
        return Err(Error::SweepDegenerate { failed: failures.len(), total, diagnostics });
    }
    samples.sort_by(|a, b| a.theta.unwrap_or(0.0).total_cmp(&b.theta.unwrap_or(0.0)));
    Ok(BifurcationCurve {
        params: params.clone(),
        mode: s.mode,
        lambda_tol: s.lambda_tol,
        samples,
        failures,
        lambda_star_ref: lambda_star,
        branch_points: Vec::new(),
        period_fit: None,
        envelope_fit: None,
        damped_fit: None,
    })
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a == 0.0 {
        return (x[1], y[1]);
    }
    let b = d1 - a * (x[0] + x[1]);
    let xv = (-b / (2.0 * a)).clamp(x[0], x[2]);
    let yv = y[0] + d1 * (xv - x[0]) + a * (xv - x[0]) * (xv - x[1]);
    (xv, yv)
}

/// Local extrema of `lambda(theta) - lambda*` as `(maximum, log theta, excess)`,
/// each refined by a parabola in `log theta`.
fn raw_extrema(curve: &BifurcationCurve, lambda_star: f64) -> Vec<(bool, f64, f64)> {
    let x: Vec<f64> = curve.thetas().iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = curve.lambdas().iter().map(|l| l - lambda_star).collect();
    let mut ext = Vec::new();
    for k in 1..y.len().saturating_sub(1) {
        let is_max = y[k] > y[k - 1] && y[k] >= y[k + 1];
        let is_min = y[k] < y[k - 1] && y[k] <= y[k + 1];
        if is_max || is_min {
            let (xv, yv) = parabola_vertex([x[k - 1], x[k], x[k + 1]], [y[k - 1], y[k], y[k + 1]]);
            ext.push((is_max, xv, yv));
        }
    }
    ext
}

/// Branch points at the extrema of `lambda(theta) - lambda*`. Consecutive
/// extrema on the same side of `lambda*` are merged into the larger one.
pub fn extract_branch_points(curve: &BifurcationCurve, lambda_star: f64) -> Result<Vec<BranchPoint>> {
    let mut merged: Vec<(bool, f64, f64)> = Vec::new();
    for e in raw_extrema(curve, lambda_star) {
        match merged.last_mut() {
            Some(prev) if (prev.2 > 0.0) == (e.2 > 0.0) => {
                if e.2.abs() > prev.2.abs() {
                    *prev = e;
                }
            }
            _ => merged.push(e),
        }
    }
    if merged.is_empty() {
        return Err(Error::CurveMonotone);
    }
    Ok(merged
        .iter()
        .enumerate()
        .map(|(i, &(maximum, xv, yv))| BranchPoint { n: i + 1, theta: xv.exp(), lambda: lambda_star + yv, maximum })
        .collect())
}

/// Candidate values of the slope of `log theta_n` against `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeCandidates {
    /// `pi / (alpha omega)`: extrema spaced by half a period of the stated frequency.
    pub half_period: f64,
    /// `pi (p-1) / omega`: the phase condition advancing by `2 pi` per unit `n`.
    pub phase_condition: f64,
    /// `(p-1)/omega`: the exponent of `theta_n = C exp((p-1) n / omega)` read literally.
    pub literal: f64,
    /// `pi alpha / nu`: extrema spaced by half a period of the modal frequency.
    pub modal: f64,
}

impl SlopeCandidates {
    pub fn new(d: &DerivedConstants, p: f64) -> Self {
        let pi = std::f64::consts::PI;
        Self {
            half_period: pi / d.stated_theta_frequency(),
            phase_condition: pi * (p - 1.0) / d.omega,
            literal: (p - 1.0) / d.omega,
            modal: pi / d.modal_theta_frequency(),
        }
    }

    fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("half_period", self.half_period),
            ("phase_condition", self.phase_condition),
            ("literal", self.literal),
            ("modal", self.modal),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryTolerances {
    pub frequency_tol: f64,
    pub envelope_tol: f64,
    pub center_tol: f64,
    pub slope_residual_tol: f64,
}

impl Default for TheoryTolerances {
    fn default() -> Self {
        Self { frequency_tol: 0.05, envelope_tol: 0.1, center_tol: 1e-3, slope_residual_tol: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPass {
    pub frequency: bool,
    pub envelope: bool,
    pub center: bool,
    pub alternation: bool,
    pub affine_n: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryReport {
    pub frequency_fit: f64,
    /// `alpha omega`.
    pub frequency_theory: f64,
    /// `nu / alpha`, from the Euler modes of the linearisation at the singular solution.
    pub frequency_modal: f64,
    /// Frequency implied by the mean spacing of the branch points.
    pub frequency_from_spacing: f64,
    pub envelope_exponent_fit: f64,
    pub envelope_exponent_theory: f64,
    pub envelope_points: usize,
    pub center: f64,
    pub lambda_star: f64,
    pub slope_n_fit: f64,
    pub slope_n_max_residual: f64,
    pub slope_candidates: SlopeCandidates,
    /// Candidates within 2% of the fitted slope.
    pub slope_match: Vec<String>,
    pub branch_points: usize,
    /// Raw extrema removed by same-side merging.
    pub merged_extrema: usize,
    pub tolerances: TheoryTolerances,
    pub pass: TheoryPass,
}

/// Names of the candidates within 2% of the fitted slope.
fn slope_match(slope: f64, c: &SlopeCandidates) -> Vec<String> {
    c.named().iter().filter(|(_, v)| ((v - slope) / v).abs() < 0.02).map(|(n, _)| n.to_string()).collect()
}

/// Extracts branch points, fits the oscillation law and compares with theory.
/// Fills `curve.branch_points`, `period_fit`, `envelope_fit` and `damped_fit`.
pub fn compare_theory(
    curve: &mut BifurcationCurve,
    derived: &DerivedConstants,
    lambda_star: f64,
    tols: &TheoryTolerances,
) -> Result<TheoryReport> {
    let bps = extract_branch_points(curve, lambda_star)?;
    curve.branch_points = bps.clone();
    if bps.len() < 4 {
        return Err(Error::InsufficientBranchPoints { found: bps.len(), required: 4 });
    }

    let floor = 1e3 * curve.max_achieved_tol();
    let env_pts: Vec<(f64, f64)> =
        bps.iter().map(|b| (b.theta, (b.lambda - lambda_star).abs())).filter(|p| p.1 > floor).collect();
    let envelope = fit_power(&env_pts)?;

    // maxima above lambda*, minima below, kinds alternating, nothing merged away
    let raw = raw_extrema(curve, lambda_star).len();
    let alternation = raw == bps.len()
        && bps.iter().all(|b| b.maximum == (b.lambda > lambda_star))
        && bps.windows(2).all(|w| w[0].maximum != w[1].maximum);

    let ns: Vec<f64> = bps.iter().map(|b| b.n as f64).collect();
    let lt: Vec<f64> = bps.iter().map(|b| b.theta.ln()).collect();
    let (slope, _, max_res) = fit_line(&ns, &lt)?;
    let f_spacing = std::f64::consts::PI / slope;

    let series: Vec<(f64, f64)> = curve.samples.iter().map(|s| (s.theta.unwrap_or(f64::NAN), s.lambda)).collect();
    let damped = fit_damped_log_sinusoid(&series, envelope.exponent, f_spacing)?;
    let normalized: Vec<(f64, f64)> =
        series.iter().map(|&(t, l)| (t, (l - damped.center) * t.powf(-damped.exponent))).collect();
    let period_fit = fit_log_sinusoid(&normalized, None).ok();

    let p = curve.params.p;
    let cands = SlopeCandidates::new(derived, p);
    let frequency_theory = derived.stated_theta_frequency();
    let envelope_theory = derived.envelope_exponent();
    let pass = TheoryPass {
        frequency: ((damped.frequency - frequency_theory) / frequency_theory).abs() < tols.frequency_tol,
        envelope: (envelope.exponent - envelope_theory).abs() < tols.envelope_tol,
        center: (damped.center - lambda_star).abs() < tols.center_tol,
        alternation,
        affine_n: max_res < tols.slope_residual_tol * slope.abs(),
    };
    curve.period_fit = period_fit;
    curve.envelope_fit = Some(envelope);
    curve.damped_fit = Some(damped);
    Ok(TheoryReport {
        frequency_fit: damped.frequency,
        frequency_theory,
        frequency_modal: derived.modal_theta_frequency(),
        frequency_from_spacing: f_spacing,
        envelope_exponent_fit: envelope.exponent,
        envelope_exponent_theory: envelope_theory,
        envelope_points: env_pts.len(),
        center: damped.center,
        lambda_star,
        slope_n_fit: slope,
        slope_n_max_residual: max_res,
        slope_match: slope_match(slope, &cands),
        slope_candidates: cands,
        branch_points: bps.len(),
        merged_extrema: raw - bps.len(),
        tolerances: *tols,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingPoint {
    pub n: usize,
    pub theta: f64,
    pub lambda: f64,
    pub distance: f64,
}

/// `D_n = max |u(.; theta_n, lambda_n) - Phi|` over `[r_star, r_hi]`, sampled on the
/// union of both grids. Each branch point is re-shot at its interpolated height.
pub fn matching_residual(
    branch_points: &[BranchPoint],
    phi: &Profile,
    r_star: f64,
    r_hi: f64,
    lambda_tol: f64,
    settings: &ShootSettings,
) -> Result<Vec<MatchingPoint>> {
    if !(r_star >= phi.r_min() && r_hi <= phi.r_max() && r_star < r_hi) {
        return Err(Error::Extrapolation { r: r_hi, lo: phi.r_min(), hi: phi.r_max() });
    }
    let params = &phi.params;
    branch_points
        .iter()
        .map(|b| {
            let w = 1e-2;
            let bracket = (b.lambda - w, b.lambda + w);
            let s = ShootSettings { lambda_hint: Some(b.lambda), ..*settings };
            let shot = shoot_lambda(b.theta, bracket, lambda_tol, params, &s)
                .or_else(|_| shoot_lambda(b.theta, default_bracket(params), lambda_tol, params, &s))?;
            let u = &shot.profile;
            if u.r_max() < r_hi {
                return Err(Error::Extrapolation { r: r_hi, lo: u.r_min(), hi: u.r_max() });
            }
            let mut distance: f64 = 0.0;
            let pts = u.grid().iter().chain(phi.grid()).copied().filter(|&r| r >= r_star && r <= r_hi);
            for r in pts.chain([r_star, r_hi]) {
                distance = distance.max((u.u(r)? - phi.u(r)?).abs());
            }
            Ok(MatchingPoint { n: b.n, theta: b.theta, lambda: shot.lambda, distance })
        })
        .collect()
}
