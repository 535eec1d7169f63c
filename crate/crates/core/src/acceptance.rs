//! Acceptance checks. Each check carries its measured value, its target and a
//! verdict; the tolerances below are fixed by the acceptance contract.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    euler_mode_profiles, exterior_transform_residual_with, far_field_diagnostics, fit_log_sinusoid, fit_power,
    kernel_psi1, lambda_q_residual, log_series, second_kernel_solution, wronskian, ExteriorVariant,
};
use crate::bifurcation::{
    compare_theory, log_grid, matching_residual, sweep, BifurcationCurve, MatchingPoint, SweepMode, SweepSettings,
    TheoryReport, TheoryTolerances,
};
use crate::cache::LambdaStarCache;
use crate::error::Result;
use crate::integrator::{Profile, SingularOrder, Tolerances};
use crate::params::{derive_constants, joseph_lundgren, DerivedConstants, ProblemParams};
use crate::profiles::{
    default_bracket, find_lambda_star, shoot_lambda, solve_emden_fowler, LambdaStar, ShootSettings, DEFAULT_SINGULAR_R0,
};

pub const CONSTANTS_REL: f64 = 1e-12;
pub const P_JL_ABS: f64 = 1e-4;
pub const LINEAR_LAMBDA_ABS: f64 = 1e-9;
pub const LINEAR_K_ABS: f64 = 1e-6;
pub const EMDEN_FREQUENCY_REL: f64 = 0.01;
pub const ORIGIN_EXPONENT_ABS: f64 = 0.25;
pub const PLATEAU1_ABS: f64 = 1e-3;
pub const PLATEAU2_ABS: f64 = 1e-2;
pub const LAMBDA_Q_REL: f64 = 1e-6;
pub const PSI1_FREQUENCY_REL: f64 = 0.02;
pub const EULER_WRONSKIAN_REL: f64 = 1e-10;
pub const KERNEL_WRONSKIAN_REL: f64 = 1e-4;
pub const TRANSFORM_REL: f64 = 1e-8;

pub const EMDEN_WINDOW: (f64, f64) = (1e2, 1e4);
pub const PSI1_WINDOW: (f64, f64) = (1e-4, 1e-2);
pub const LAMBDA_Q_WINDOW: (f64, f64) = (0.1, 10.0);
pub const KERNEL_WRONSKIAN_WINDOW: (f64, f64) = (0.01, 1.0);
/// Heights of the converged shoots used by the transform check.
pub const TRANSFORM_THETAS: [f64; 3] = [1e2, 1e3, 1e4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: String,
    pub check: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(criterion: &str, check: &str, measured: f64, target: impl Into<String>, pass: bool) -> Self {
        Self { criterion: criterion.into(), check: check.into(), measured, target: target.into(), pass, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A check whose computation itself failed.
    pub fn errored(criterion: &str, check: &str, err: &crate::Error) -> Self {
        Self::new(criterion, check, f64::NAN, "computation succeeds", false).with_note(err.to_string())
    }

    fn within(criterion: &str, check: &str, measured: f64, target: f64, abs_tol: f64) -> Self {
        let pass = (measured - target).abs() < abs_tol;
        Self::new(criterion, check, measured, format!("{target:.8} ± {abs_tol:e}"), pass)
    }

    fn within_rel(criterion: &str, check: &str, measured: f64, target: f64, rel_tol: f64) -> Self {
        let pass = ((measured - target) / target).abs() < rel_tol;
        Self::new(criterion, check, measured, format!("{target:.8} ± {}%", rel_tol * 100.0), pass)
    }

    fn below(criterion: &str, check: &str, measured: f64, bound: f64) -> Self {
        Self::new(criterion, check, measured, format!("< {bound:e}"), measured < bound)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: measured {:.6e}, target {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.check,
            self.measured,
            self.target
        )?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSettings {
    pub theta_min: f64,
    pub theta_max: f64,
    pub points: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Bisection width of the sweep shoots.
    pub lambda_tol: f64,
    /// Bisection width of the singular shoot.
    pub lambda_star_tol: f64,
    pub r0: f64,
    pub r_star: f64,
    /// Outer radius of the convergence window `[r_star, r_max]`.
    pub r_max: f64,
    pub emden_r_max: f64,
    pub mode: SweepMode,
    pub threads: Option<usize>,
    pub theory: TheoryTolerances,
}

impl Default for AcceptanceSettings {
    fn default() -> Self {
        Self {
            theta_min: 10.0,
            theta_max: 1e4,
            points: 400,
            rtol: 1e-12,
            atol: 1e-14,
            lambda_tol: 1e-10,
            lambda_star_tol: 1e-11,
            r0: DEFAULT_SINGULAR_R0,
            r_star: 0.3,
            r_max: 3.0,
            emden_r_max: 1e6,
            mode: SweepMode::WarmStart,
            threads: None,
            theory: TheoryTolerances::default(),
        }
    }
}

impl AcceptanceSettings {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }

    pub fn shoot(&self) -> ShootSettings {
        ShootSettings { rtol: self.rtol, atol: self.atol, ..Default::default() }
    }

    fn sweep(&self) -> SweepSettings {
        SweepSettings {
            shoot: self.shoot(),
            lambda_tol: self.lambda_tol,
            mode: self.mode,
            threads: self.threads,
            ..Default::default()
        }
    }
}

/// `constants`: closed forms at `(d, p) = (5, 3)` and `p_JL(11)`.
pub fn check_constants() -> Vec<Check> {
    const C: &str = "constants";
    let c = match derive_constants(&ProblemParams::canonical()) {
        Ok(c) => c,
        Err(e) => return vec![Check::errored(C, "derive", &e.into())],
    };
    let mut out = vec![
        Check::within_rel(C, "A", c.a, 2f64.sqrt(), CONSTANTS_REL),
        Check::within_rel(C, "omega", c.omega, 15f64.sqrt(), CONSTANTS_REL),
        Check::within_rel(C, "sigma", c.sigma, 1.5, CONSTANTS_REL),
        Check::within_rel(C, "beta", c.beta, 2.0, CONSTANTS_REL),
        Check::within_rel(C, "m", c.m, 0.5f64.sqrt(), CONSTANTS_REL),
        Check::within_rel(C, "lambda1", c.lambda1, 5.0, CONSTANTS_REL),
    ];
    match joseph_lundgren(11) {
        Ok(v) => out.push(Check::within(C, "p_JL(11)", v, 6.92203, P_JL_ABS)),
        Err(e) => out.push(Check::errored(C, "p_JL(11)", &e.into())),
    }
    out
}

/// `linear_oracle`: Hermite ground state `lambda = d`, `K = 1`.
pub fn check_linear_oracle(s: &AcceptanceSettings) -> Vec<Check> {
    const C: &str = "linear_oracle";
    let params = ProblemParams::linear(5);
    let shot = match shoot_lambda(1.0, (4.0, 6.0), 1e-10, &params, &s.shoot()) {
        Ok(r) => r,
        Err(e) => return vec![Check::errored(C, "lambda", &e)],
    };
    let mut out = vec![Check::within(C, "lambda", shot.lambda, 5.0, LINEAR_LAMBDA_ABS)];
    match far_field_diagnostics(&shot.profile, shot.lambda, &Default::default()) {
        Ok(ff) => out.push(Check::within(C, "K", ff.k.value, 1.0, LINEAR_K_ABS)),
        Err(e) => out.push(Check::errored(C, "K", &e)),
    }
    out
}

fn label(base: &str, params: &ProblemParams) -> String {
    if params.q.is_none() {
        format!("pure_p/{base}")
    } else {
        base.to_string()
    }
}

/// `emden_tail`: log-frequency of `r^{(d-2)/2}(Q - A r^{-alpha})` on `[1e2, 1e4]`.
pub fn check_emden_tail(params: &ProblemParams, q: &Profile) -> Vec<Check> {
    let c = label("emden_tail", params);
    let k = match derive_constants(params) {
        Ok(k) => k,
        Err(e) => return vec![Check::errored(&c, "frequency", &e.into())],
    };
    let h = (params.dim() - 2.0) / 2.0;
    let (lo, hi) = EMDEN_WINDOW;
    let fit = log_series(lo, hi, 2000, |r| Ok(r.powf(h) * (q.u(r)? - k.a * r.powf(-k.alpha))))
        .and_then(|ser| fit_log_sinusoid(&ser, None));
    match fit {
        Ok(f) => vec![Check::within_rel(&c, "frequency", f.frequency, k.omega, EMDEN_FREQUENCY_REL)
            .with_note(format!("modal nu = {:.6}, periods {:.2}", k.log_frequency, f.periods))],
        Err(e) => vec![Check::errored(&c, "frequency", &e)],
    }
}

/// `singular`: `lambda*` in `(0, d)`, origin law exponent and far-field plateaus.
pub fn check_singular(params: &ProblemParams, ls: &LambdaStar) -> Vec<Check> {
    let c = label("singular", params);
    let d = params.dim();
    let l = ls.lambda_star;
    let mut out = vec![Check::new(&c, "lambda_star", l, format!("in (0, {d})"), l > 0.0 && l < d)];
    match derive_constants(params) {
        Ok(k) => {
            let pts: Vec<(f64, f64)> = ls
                .phi
                .grid()
                .iter()
                .zip(ls.phi.values())
                .filter(|(r, _)| **r < 1e-2)
                .map(|(&r, &u)| (r, (u * r.powf(k.alpha) / k.a - 1.0).abs()))
                .filter(|p| p.1 > 0.0)
                .collect();
            match fit_power(&pts) {
                Ok(f) => out.push(
                    Check::within(&c, "origin_exponent", f.exponent, k.origin_correction_exponent, ORIGIN_EXPONENT_ABS)
                        .with_note(format!("R^2 = {:.6}", f.r_squared)),
                ),
                Err(e) => out.push(Check::errored(&c, "origin_exponent", &e)),
            }
        }
        Err(e) => out.push(Check::errored(&c, "origin_exponent", &e.into())),
    }
    match far_field_diagnostics(&ls.phi, l, &Default::default()) {
        Ok(ff) => {
            out.push(Check::within(&c, "plateau1", ff.plateau1.value, (l - d) / 2.0, PLATEAU1_ABS));
            out.push(Check::within(&c, "plateau2", ff.plateau2.value, (l - d) * (l + d - 4.0) / 8.0, PLATEAU2_ABS));
        }
        Err(e) => {
            out.push(Check::errored(&c, "plateau1", &e));
            out.push(Check::errored(&c, "plateau2", &e));
        }
    }
    out
}

/// `kernel`: `H(Lambda Q) = 0`, near-origin frequency of `psi_1` and Wronskian constancy.
pub fn check_kernel(params: &ProblemParams, q: &Profile, ls: &LambdaStar, s: &AcceptanceSettings) -> Vec<Check> {
    let c = label("kernel", params);
    let mut out = Vec::new();
    match lambda_q_residual(q, params) {
        Ok(r) => out.push(Check::below(&c, "H(LambdaQ)", r.max_relative_residual, LAMBDA_Q_REL)),
        Err(e) => out.push(Check::errored(&c, "H(LambdaQ)", &e)),
    }
    let k = match derive_constants(params) {
        Ok(k) => k,
        Err(e) => {
            out.push(Check::errored(&c, "constants", &e.into()));
            return out;
        }
    };
    let l = ls.lambda_star;
    let tol = s.tolerances();
    let psi = kernel_psi1(l, &ls.phi, l.sqrt() + 2.0, Tolerances::new(tol.rtol, 0.0));
    match &psi {
        Ok(psi) => {
            let h = (params.dim() - 2.0) / 2.0;
            let (lo, hi) = PSI1_WINDOW;
            match log_series(lo.max(psi.r_min()), hi, 1000, |r| Ok(r.powf(h) * psi.u(r)?))
                .and_then(|ser| fit_log_sinusoid(&ser, None))
            {
                Ok(f) => out.push(
                    Check::within_rel(&c, "psi1_frequency", f.frequency, k.omega, PSI1_FREQUENCY_REL)
                        .with_note(format!("modal nu = {:.6}", k.log_frequency)),
                ),
                Err(e) => out.push(Check::errored(&c, "psi1_frequency", &e)),
            }
        }
        Err(e) => out.push(Check::errored(&c, "psi1_frequency", e)),
    }
    match euler_mode_profiles(params, 0.01, 10.0, 500).and_then(|(f, g)| wronskian(&f, &g, None)) {
        Ok(w) => out.push(
            Check::below(&c, "euler_wronskian", w.max_rel_deviation, EULER_WRONSKIAN_REL)
                .with_note(format!("W r^(d-1) = {:.8}", w.median)),
        ),
        Err(e) => out.push(Check::errored(&c, "euler_wronskian", &e)),
    }
    let pair = psi.and_then(|psi| {
        let psi2 = second_kernel_solution(l, &ls.phi, 1.0, l.sqrt() + 2.0, Tolerances::new(tol.rtol, 0.0))?;
        wronskian(&psi, &psi2, Some(KERNEL_WRONSKIAN_WINDOW))
    });
    match pair {
        Ok(w) => out.push(Check::below(&c, "kernel_wronskian", w.max_rel_deviation, KERNEL_WRONSKIAN_REL)),
        Err(e) => out.push(Check::errored(&c, "kernel_wronskian", &e)),
    }
    out
}

/// Sweep plus theory comparison feeding the `headline` checks.
pub fn headline_curve(
    params: &ProblemParams,
    ls: &LambdaStar,
    s: &AcceptanceSettings,
) -> Result<(BifurcationCurve, TheoryReport)> {
    let grid = log_grid(s.theta_min, s.theta_max, s.points)?;
    let mut curve = sweep(&grid, params, Some(ls.lambda_star), &s.sweep())?;
    let k = derive_constants(params)?;
    let rep = compare_theory(&mut curve, &k, ls.lambda_star, &s.theory)?;
    Ok((curve, rep))
}

/// `headline`: criteria (i)-(v) of the oscillation law.
pub fn check_headline(params: &ProblemParams, rep: &TheoryReport) -> Vec<Check> {
    let c = label("headline", params);
    let t = &rep.tolerances;
    vec![
        Check::new(
            &c,
            "frequency",
            rep.frequency_fit,
            format!("{:.6} ± {}%", rep.frequency_theory, t.frequency_tol * 100.0),
            rep.pass.frequency,
        )
        .with_note(format!("modal nu/alpha = {:.6}", rep.frequency_modal)),
        Check::new(
            &c,
            "envelope_exponent",
            rep.envelope_exponent_fit,
            format!("{:.6} ± {}", rep.envelope_exponent_theory, t.envelope_tol),
            rep.pass.envelope,
        ),
        Check::new(&c, "center", rep.center, format!("{:.10} ± {:e}", rep.lambda_star, t.center_tol), rep.pass.center),
        Check::new(
            &c,
            "alternation",
            rep.branch_points as f64,
            "extrema alternate in sign".to_string(),
            rep.pass.alternation,
        )
        .with_note(format!("{} merged", rep.merged_extrema)),
        Check::new(
            &c,
            "affine_n",
            rep.slope_n_max_residual / rep.slope_n_fit.abs(),
            format!("< {}", t.slope_residual_tol),
            rep.pass.affine_n,
        )
        .with_note(format!("slope {:.6}, near {:?}", rep.slope_n_fit, rep.slope_match)),
    ]
}

/// `D_n` for the branch points of `curve`.
pub fn convergence_series(
    curve: &BifurcationCurve,
    ls: &LambdaStar,
    s: &AcceptanceSettings,
) -> Result<Vec<MatchingPoint>> {
    matching_residual(&curve.branch_points, &ls.phi, s.r_star, s.r_max, s.lambda_tol, &s.shoot())
}

/// `convergence`: `D_n` decreasing for `n >= 3`.
pub fn check_convergence(params: &ProblemParams, d: &[MatchingPoint]) -> Vec<Check> {
    let c = label("convergence", params);
    let tail: Vec<&MatchingPoint> = d.iter().filter(|m| m.n >= 3).collect();
    let pairs = tail.len().saturating_sub(1);
    let decreasing = pairs > 0 && tail.windows(2).all(|w| w[1].distance < w[0].distance);
    let last = d.last().map_or(f64::NAN, |m| m.distance);
    let series: Vec<String> = d.iter().map(|m| format!("{:.3e}", m.distance)).collect();
    vec![Check::new(&c, "D_n_decreasing", last, "D_{n+1} < D_n for n >= 3".to_string(), decreasing)
        .with_note(format!("D_n = [{}]", series.join(", ")))]
}

/// `transform`: exterior change of variables on converged shoots, and its negative control.
pub fn check_transform(params: &ProblemParams, ls: &LambdaStar, s: &AcceptanceSettings) -> Vec<Check> {
    let c = label("transform", params);
    let settings = ShootSettings { lambda_hint: Some(ls.lambda_star), ..s.shoot() };
    let mut worst: f64 = 0.0;
    let mut control = f64::INFINITY;
    for &theta in &TRANSFORM_THETAS {
        let res = shoot_lambda(theta, default_bracket(params), s.lambda_tol, params, &settings).and_then(|shot| {
            let eps = shot.lambda - ls.lambda_star;
            let exact = exterior_transform_residual_with(&shot.profile, eps, s.r_star, ExteriorVariant::Exact)?;
            let flip = exterior_transform_residual_with(&shot.profile, eps, s.r_star, ExteriorVariant::FlippedPower)?;
            Ok((exact.max_relative, flip.max_relative))
        });
        match res {
            Ok((e, f)) => {
                worst = worst.max(e);
                control = control.min(f);
            }
            Err(e) => return vec![Check::errored(&c, "residual", &e)],
        }
    }
    vec![
        Check::below(&c, "residual", worst, TRANSFORM_REL),
        Check::new(
            &c,
            "flipped_control",
            control,
            format!(">= {TRANSFORM_REL:e} (must fail)"),
            control >= TRANSFORM_REL,
        ),
    ]
}

/// Shared inputs of the per-case checks.
pub struct CaseInputs {
    pub q: Profile,
    pub lambda_star: LambdaStar,
}

pub fn case_inputs(
    params: &ProblemParams,
    s: &AcceptanceSettings,
    cache: Option<&LambdaStarCache>,
) -> Result<CaseInputs> {
    let q = solve_emden_fowler(s.emden_r_max, s.tolerances(), params)?;
    let lambda_star = find_lambda_star(
        default_bracket(params),
        s.lambda_star_tol,
        s.r0,
        SingularOrder::Corrected,
        params,
        &s.shoot(),
        cache,
    )?;
    Ok(CaseInputs { q, lambda_star })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseReport {
    pub params: ProblemParams,
    pub constants: Option<DerivedConstants>,
    pub lambda_star: Option<f64>,
    pub lambda_star_cache_hit: bool,
    pub theory: Option<TheoryReport>,
    pub convergence: Vec<MatchingPoint>,
    pub checks: Vec<Check>,
    pub seconds: f64,
    #[serde(skip)]
    pub curve: Option<BifurcationCurve>,
}

/// Every check that depends on `(d, p, q)`.
pub fn run_case(params: &ProblemParams, s: &AcceptanceSettings, cache: Option<&LambdaStarCache>) -> CaseReport {
    let t0 = Instant::now();
    let mut rep = CaseReport {
        params: params.clone(),
        constants: derive_constants(params).ok(),
        lambda_star: None,
        lambda_star_cache_hit: false,
        theory: None,
        convergence: Vec::new(),
        checks: Vec::new(),
        seconds: 0.0,
        curve: None,
    };
    let inputs = match case_inputs(params, s, cache) {
        Ok(i) => i,
        Err(e) => {
            rep.checks.push(Check::errored(&label("singular", params), "inputs", &e));
            rep.seconds = t0.elapsed().as_secs_f64();
            return rep;
        }
    };
    let ls = &inputs.lambda_star;
    rep.lambda_star = Some(ls.lambda_star);
    rep.lambda_star_cache_hit = ls.cache_hit;
    rep.checks.extend(check_emden_tail(params, &inputs.q));
    rep.checks.extend(check_singular(params, ls));
    rep.checks.extend(check_kernel(params, &inputs.q, ls, s));
    match headline_curve(params, ls, s) {
        Ok((curve, theory)) => {
            rep.checks.extend(check_headline(params, &theory));
            match convergence_series(&curve, ls, s) {
                Ok(d) => {
                    rep.checks.extend(check_convergence(params, &d));
                    rep.convergence = d;
                }
                Err(e) => rep.checks.push(Check::errored(&label("convergence", params), "D_n_decreasing", &e)),
            }
            rep.theory = Some(theory);
            rep.curve = Some(curve);
        }
        Err(e) => rep.checks.push(Check::errored(&label("headline", params), "sweep", &e)),
    }
    rep.checks.extend(check_transform(params, ls, s));
    rep.seconds = t0.elapsed().as_secs_f64();
    rep
}

/// `pure_p` constants: the law's targets do not involve `q`.
pub fn check_pure_p_targets() -> Vec<Check> {
    const C: &str = "pure_p/targets";
    match (derive_constants(&ProblemParams::canonical()), derive_constants(&ProblemParams::pure_p(5, 3.0))) {
        (Ok(a), Ok(b)) => vec![
            Check::within_rel(
                C,
                "frequency_theory",
                b.stated_theta_frequency(),
                a.stated_theta_frequency(),
                CONSTANTS_REL,
            ),
            Check::within_rel(C, "envelope_theory", b.envelope_exponent(), a.envelope_exponent(), CONSTANTS_REL),
        ],
        (Err(e), _) | (_, Err(e)) => vec![Check::errored(C, "derive", &e.into())],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_pass() {
        assert!(check_constants().iter().all(|c| c.pass));
        assert!(check_pure_p_targets().iter().all(|c| c.pass));
    }

    #[test]
    fn display_carries_value_and_target() {
        let c = Check::within("x", "y", 1.0, 1.5, 0.1);
        let s = c.to_string();
        assert!(s.starts_with("FAIL x/y") && s.contains("1.5"));
    }
}
