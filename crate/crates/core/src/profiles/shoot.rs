use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{
    classify_tail, default_smooth_r0, integrate_shot, origin_init_smooth, Classification, ClassifierSettings, EventSet,
    Profile, ProfileKind, TailClass, Tolerances,
};
use crate::params::ProblemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketRecord {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub class_lo: TailClass,
    pub class_hi: TailClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Points of the coarse pre-scan; values below 2 disable it.
    pub prescan_points: usize,
    pub max_iterations: usize,
    /// Outer radius; `min(sqrt(lambda) + 4, 8)`, extended to 8 if undecided, when absent.
    pub r_end: Option<f64>,
    /// Inner radius; scaled with `theta` when absent.
    pub r0: Option<f64>,
    /// Sign-change interval closest to this value wins when several exist.
    pub lambda_hint: Option<f64>,
    /// Absolute tolerance of the decay floor.
    pub decay_atol: f64,
}

impl Default for ShootSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            prescan_points: 64,
            max_iterations: 200,
            r_end: None,
            r0: None,
            lambda_hint: None,
            decay_atol: 1e-12,
        }
    }
}

impl ShootSettings {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }
}

/// Converged eigenvalue of one shoot.
#[derive(Debug, Clone)]
pub struct ShootResult {
    pub theta: Option<f64>,
    pub lambda: f64,
    pub bracket_history: Vec<BracketRecord>,
    pub iterations: usize,
    pub achieved_tol: f64,
    /// Sign-change intervals seen by the pre-scan (0 when skipped).
    pub sign_changes: usize,
    pub profile: Profile,
}

/// Serializable part of a [`ShootResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub achieved_tol: f64,
    pub sign_changes: usize,
    pub bracket_history: Vec<BracketRecord>,
}

impl ShootResult {
    pub fn summary(&self) -> ShootSummary {
        ShootSummary {
            theta: self.theta,
            lambda: self.lambda,
            iterations: self.iterations,
            achieved_tol: self.achieved_tol,
            sign_changes: self.sign_changes,
            bracket_history: self.bracket_history.clone(),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Bisection {
    pub lambda: f64,
    pub history: Vec<BracketRecord>,
    pub iterations: usize,
    pub achieved_tol: f64,
    pub sign_changes: usize,
}

fn differ(a: TailClass, b: TailClass) -> bool {
    a.is_determined() && b.is_determined() && a != b
}

/// Bisection on the tail classification of `launch(lambda)`.
pub(crate) fn bisect<F>(launch: F, bracket: (f64, f64), tol: f64, settings: &ShootSettings) -> Result<Bisection>
where
    F: Fn(f64) -> Result<Classification>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("bisection tolerance {tol} must be positive")));
    }
    let mut sign_changes = 0;
    let (c_lo, mut c_hi);
    if settings.prescan_points >= 2 {
        let n = settings.prescan_points;
        let mut pts: Vec<(f64, TailClass)> = Vec::with_capacity(n);
        for i in 0..n {
            let l = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let c = launch(l)?.class;
            if c == TailClass::Decaying {
                return Ok(Bisection {
                    lambda: l,
                    history: Vec::new(),
                    iterations: 0,
                    achieved_tol: 0.0,
                    sign_changes: 1,
                });
            }
            if c.is_determined() {
                pts.push((l, c));
            }
        }
        let changes: Vec<(f64, f64, TailClass, TailClass)> =
            pts.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| (w[0].0, w[1].0, w[0].1, w[1].1)).collect();
        sign_changes = changes.len();
        let pick = match settings.lambda_hint {
            Some(h) => changes.iter().min_by(|a, b| {
                let da = (0.5 * (a.0 + a.1) - h).abs();
                let db = (0.5 * (b.0 + b.1) - h).abs();
                da.total_cmp(&db)
            }),
            None => changes.first(),
        };
        let Some(&(a, b, ca, cb)) = pick else {
            let class = pts.first().map_or("Undetermined".to_string(), |p| p.1.to_string());
            return Err(Error::NoSignChange { lo, hi, class });
        };
        lo = a;
        hi = b;
        c_lo = ca;
        c_hi = cb;
    } else {
        c_lo = launch(lo)?.class;
        c_hi = launch(hi)?.class;
        if !differ(c_lo, c_hi) {
            return Err(Error::NoSignChange { lo, hi, class: format!("{c_lo}/{c_hi}") });
        }
    }

    let mut history = vec![BracketRecord { lambda_lo: lo, lambda_hi: hi, class_lo: c_lo, class_hi: c_hi }];
    let mut iterations = 0;
    while hi - lo > tol {
        if iterations >= settings.max_iterations {
            return Err(Error::ConvergenceFailure { reason: "iteration limit reached".into(), lo, hi, iterations });
        }
        iterations += 1;
        let mut mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mut c = launch(mid)?.class;
        let mut attempts: usize = 0;
        while !c.is_determined() {
            attempts += 1;
            if attempts > 3 {
                return Err(Error::ConvergenceFailure {
                    reason: format!("classification undetermined near lambda = {mid}"),
                    lo,
                    hi,
                    iterations,
                });
            }
            let shift = if attempts % 2 == 1 { 0.125 } else { -0.125 } * attempts.div_ceil(2) as f64;
            mid = lo + (hi - lo) * (0.5 + shift);
            c = launch(mid)?.class;
        }
        if c == TailClass::Decaying {
            lo = mid;
            hi = mid;
            break;
        }
        if c == c_lo {
            lo = mid;
        } else if c == c_hi {
            hi = mid;
        } else {
            // a third determined class; keep the side that still differs
            hi = mid;
            c_hi = c;
        }
        history.push(BracketRecord { lambda_lo: lo, lambda_hi: hi, class_lo: c_lo, class_hi: c_hi });
    }
    Ok(Bisection { lambda: 0.5 * (lo + hi), history, iterations, achieved_tol: hi - lo, sign_changes })
}

/// Radii and events of a smooth shoot at `(theta, lambda)`.
pub(crate) fn smooth_profile(
    theta: f64,
    lambda: f64,
    params: &ProblemParams,
    settings: &ShootSettings,
) -> Result<Profile> {
    let r0 = settings.r0.unwrap_or_else(|| default_smooth_r0(theta, params));
    let init = origin_init_smooth(theta, r0, params, lambda)?;
    // the exterior magnitude does not grow with theta, so neither does the floor
    let events = EventSet::shooting(lambda, 1.0, theta.max(init.u.abs()), settings.decay_atol);
    integrate_shot(params, lambda, ProfileKind::Smooth, init, settings.r_end, settings.tolerances(), &events)
}

pub(crate) fn classifier(settings: &ShootSettings) -> ClassifierSettings {
    ClassifierSettings { atol: settings.decay_atol, cap: None }
}

/// Eigenvalue `lambda(theta)` of the decaying solution with `u(0) = theta`.
pub fn shoot_lambda(
    theta: f64,
    bracket: (f64, f64),
    tol: f64,
    params: &ProblemParams,
    settings: &ShootSettings,
) -> Result<ShootResult> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("theta = {theta} must be positive")));
    }
    let cs = classifier(settings);
    let launch = |l: f64| -> Result<Classification> {
        let prof = smooth_profile(theta, l, params, settings)?;
        Ok(classify_tail(&prof, l, &cs))
    };
    let b = bisect(launch, bracket, tol, settings)?;
    let mut profile = smooth_profile(theta, b.lambda, params, settings)?;
    profile.truncate_to_positive();
    Ok(ShootResult {
        theta: Some(theta),
        lambda: b.lambda,
        bracket_history: b.history,
        iterations: b.iterations,
        achieved_tol: b.achieved_tol,
        sign_changes: b.sign_changes,
        profile,
    })
}

/// Default bracket `(0.05, d - 0.05)`.
pub fn default_bracket(params: &ProblemParams) -> (f64, f64) {
    (0.05, params.dim() - 0.05)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_at(x: f64) -> impl Fn(f64) -> Result<Classification> {
        move |l: f64| {
            let class = if l < x { TailClass::BlowsUpPositive } else { TailClass::CrossesZero };
            Ok(Classification { class, r: 1.0, overflow: false })
        }
    }

    #[test]
    fn bisection_halves_to_the_step() {
        let s = ShootSettings { prescan_points: 0, ..Default::default() };
        let b = bisect(step_at(0.3), (0.0, 1.0), 1e-12, &s).unwrap();
        assert!((b.lambda - 0.3).abs() < 1e-12);
        assert!(b.achieved_tol <= 1e-12);
        for w in b.history.windows(2) {
            let (w0, w1) = (w[0].lambda_hi - w[0].lambda_lo, w[1].lambda_hi - w[1].lambda_lo);
            assert!((w1 - 0.5 * w0).abs() <= 4.0 * f64::EPSILON);
        }
        assert_eq!(b.iterations, b.history.len() - 1);
    }

    #[test]
    fn prescan_prefers_the_interval_nearest_the_hint() {
        // two separatrices at 0.25 and 0.75
        let launch = |l: f64| {
            let class = if (0.25..0.75).contains(&l) { TailClass::CrossesZero } else { TailClass::BlowsUpPositive };
            Ok(Classification { class, r: 1.0, overflow: false })
        };
        let s = ShootSettings { prescan_points: 64, lambda_hint: Some(0.8), ..Default::default() };
        let b = bisect(launch, (0.0, 1.0), 1e-10, &s).unwrap();
        assert_eq!(b.sign_changes, 2);
        assert!((b.lambda - 0.75).abs() < 1e-9);
        let first = bisect(launch, (0.0, 1.0), 1e-10, &ShootSettings::default()).unwrap();
        assert!((first.lambda - 0.25).abs() < 1e-9);
    }

    #[test]
    fn uniform_bracket_has_no_sign_change() {
        let e = bisect(step_at(2.0), (0.0, 1.0), 1e-10, &ShootSettings::default()).unwrap_err();
        assert!(matches!(e, Error::NoSignChange { .. }));
        let s = ShootSettings { prescan_points: 0, ..Default::default() };
        assert!(matches!(bisect(step_at(2.0), (0.0, 1.0), 1e-10, &s), Err(Error::NoSignChange { .. })));
        assert!(bisect(step_at(0.5), (1.0, 0.0), 1e-10, &s).is_err());
        assert!(bisect(step_at(0.5), (0.0, 1.0), 0.0, &s).is_err());
    }

    #[test]
    fn persistent_undetermined_is_a_convergence_failure() {
        let launch = |l: f64| {
            let class = if l <= 0.0 {
                TailClass::BlowsUpPositive
            } else if l >= 1.0 {
                TailClass::CrossesZero
            } else {
                TailClass::Undetermined
            };
            Ok(Classification { class, r: 1.0, overflow: false })
        };
        let s = ShootSettings { prescan_points: 0, ..Default::default() };
        assert!(matches!(bisect(launch, (0.0, 1.0), 1e-10, &s), Err(Error::ConvergenceFailure { .. })));
    }

    #[test]
    fn iteration_limit_is_reported() {
        let s = ShootSettings { prescan_points: 0, max_iterations: 5, ..Default::default() };
        assert!(matches!(bisect(step_at(0.3), (0.0, 1.0), 1e-12, &s), Err(Error::ConvergenceFailure { .. })));
    }
}
