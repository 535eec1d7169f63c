//! Radial ODE right-hand side, origin initialisation, event-driven
//! integration and tail classification.

pub mod dopri;
mod profile;

use serde::{Deserialize, Serialize};

pub use dopri::{DenseSegment, DriverOptions, Termination, Tolerances, Trajectory};
pub use profile::{EventKind, Profile, ProfileKind, ProfileMeta, TerminalEvent};

use crate::error::{Error, Result};
use crate::params::{derive_constants, ProblemParams};
use dopri::Control;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialState {
    pub r: f64,
    pub u: f64,
    pub du: f64,
}

/// `|u|^{e-1} u` with fast paths for common exponents.
#[inline]
pub fn signed_pow(u: f64, e: f64) -> f64 {
    if e == 3.0 {
        u * u * u
    } else if e == 2.0 {
        u * u.abs()
    } else if e == 1.5 {
        u * u.abs().sqrt()
    } else if u == 0.0 {
        0.0
    } else {
        u.abs().powf(e - 1.0) * u
    }
}

/// Source terms `|u|^{q-1}u + |u|^{p-1}u`, resolved once per integration.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Nonlinearity {
    p: Option<f64>,
    q: Option<f64>,
}

impl Nonlinearity {
    pub(crate) fn of(params: &ProblemParams) -> Self {
        if params.linear_mode {
            Self { p: None, q: None }
        } else {
            Self { p: Some(params.p), q: params.q }
        }
    }

    #[inline]
    pub(crate) fn eval(&self, u: f64) -> f64 {
        let mut s = 0.0;
        if let Some(p) = self.p {
            s += signed_pow(u, p);
        }
        if let Some(q) = self.q {
            s += signed_pow(u, q);
        }
        s
    }
}

#[inline]
pub(crate) fn radial_ddu(r: f64, u: f64, du: f64, dm1: f64, lambda: f64, nl: Nonlinearity) -> f64 {
    -(dm1 / r) * du + (r * r - lambda) * u - nl.eval(u)
}

/// `(u', u'')` from the radial equation at `r > 0`.
pub fn rhs(r: f64, s: &RadialState, params: &ProblemParams, lambda: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("rhs evaluated at r = {r}; use an origin series")));
    }
    let nl = Nonlinearity::of(params);
    Ok((s.du, radial_ddu(r, s.u, s.du, params.dim() - 1.0, lambda, nl)))
}

/// Second-order Taylor start of the regular solution with `u(0) = theta`.
pub fn origin_init_smooth(theta: f64, r0: f64, params: &ProblemParams, lambda: f64) -> Result<RadialState> {
    if !(r0 > 0.0) {
        return Err(Error::domain(format!("origin radius r0 = {r0} must be positive")));
    }
    if r0 > 1e-2 {
        return Err(Error::domain(format!("origin radius r0 = {r0} exceeds 1e-2")));
    }
    if theta < 0.0 {
        return Err(Error::domain(format!("initial height theta = {theta} must be non-negative")));
    }
    let d = params.dim();
    let g0 = -lambda * theta - Nonlinearity::of(params).eval(theta);
    Ok(RadialState { r: r0, u: theta + g0 * r0 * r0 / (2.0 * d), du: g0 * r0 / d })
}

/// Default inner radius of a smooth shoot of height `theta`: a small fraction
/// of the Emden-Fowler length scale `theta^{-(p-1)/2}`.
pub fn default_smooth_r0(theta: f64, params: &ProblemParams) -> f64 {
    if params.linear_mode || theta <= 0.0 {
        return 1e-3;
    }
    (1e-3 * theta.powf(-(params.p - 1.0) / 2.0)).clamp(1e-6, 1e-2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularOrder {
    Leading,
    Corrected,
}

/// Start of the singular solution `A r^{-alpha}(1 + eta)` near the origin.
///
/// The corrected order adds one Picard step at `eta = 0`, which produces
/// `c_q r^gamma + c_l r^2 + c_4 r^4` with `gamma = 2(p-q)/(p-1)`.
pub fn origin_init_singular(r0: f64, params: &ProblemParams, lambda: f64, order: SingularOrder) -> Result<RadialState> {
    if params.linear_mode {
        return Err(Error::domain("the singular solution needs the nonlinear terms"));
    }
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(Error::domain(format!("singular start r0 = {r0} must lie in (0, 1)")));
    }
    let c = derive_constants(params)?;
    let alpha = c.alpha;
    let a = c.a;
    let lead = a * r0.powf(-alpha);
    let lead_d = -alpha * lead / r0;
    if order == SingularOrder::Leading {
        return Ok(RadialState { r: r0, u: lead, du: lead_d });
    }
    let (eta, deta) = singular_correction(r0, params, lambda)?;
    Ok(RadialState { r: r0, u: lead * (1.0 + eta), du: lead_d * (1.0 + eta - r0 * deta / alpha) })
}

/// `(eta, eta')` of the one-step Picard correction.
pub fn singular_correction(r: f64, params: &ProblemParams, lambda: f64) -> Result<(f64, f64)> {
    let c = derive_constants(params)?;
    let d = params.dim();
    let alpha = c.alpha;
    let ap = c.a.powf(params.p - 1.0);
    let poly = |k: f64| k * k + (d - 2.0 - 2.0 * alpha) * k + (params.p - 1.0) * ap;
    let mut eta = 0.0;
    let mut deta = 0.0;
    if let Some(q) = params.q {
        let gamma = 2.0 * (params.p - q) / (params.p - 1.0);
        let cq = -c.a.powf(q - 1.0) / poly(gamma);
        eta += cq * r.powf(gamma);
        deta += cq * gamma * r.powf(gamma - 1.0);
    }
    let cl = -lambda / poly(2.0);
    let c4 = 1.0 / poly(4.0);
    eta += cl * r * r + c4 * r.powi(4);
    deta += 2.0 * cl * r + 4.0 * c4 * r.powi(3);
    Ok((eta, deta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFloor {
    pub floor: f64,
    pub r_min: f64,
}

/// Terminal events monitored during a radial integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub zero_crossing: bool,
    pub magnitude_cap: Option<f64>,
    /// Stop at a local minimum of a positive solution beyond this radius.
    pub upturn_after: Option<f64>,
    pub decay_floor: Option<DecayFloor>,
}

impl EventSet {
    pub const NONE: EventSet =
        EventSet { zero_crossing: false, magnitude_cap: None, upturn_after: None, decay_floor: None };

    /// Events used for shooting on the decay condition.
    pub fn shooting(lambda: f64, height: f64, cap_scale: f64, atol: f64) -> Self {
        let turn = lambda.max(0.0).sqrt();
        EventSet {
            zero_crossing: true,
            magnitude_cap: Some(1e3 * cap_scale),
            upturn_after: Some(turn),
            decay_floor: Some(DecayFloor { floor: atol * height.max(1.0), r_min: turn + 1.0 }),
        }
    }
}

/// Default outer radius `min(sqrt(lambda) + 4, 8)`.
pub fn default_r_end(lambda: f64) -> f64 {
    (lambda.max(0.0).sqrt() + 4.0).min(8.0)
}

/// Outer radius of the second attempt when a shoot ends undecided at the default radius.
pub const EXTENDED_R_END: f64 = 8.0;

/// [`integrate`] to `r_end`, or to [`default_r_end`] when absent. A trajectory
/// that reaches the default radius without any event is rerun to
/// [`EXTENDED_R_END`], where the growing mode or the decay floor decides it.
pub fn integrate_shot(
    params: &ProblemParams,
    lambda: f64,
    kind: ProfileKind,
    init: RadialState,
    r_end: Option<f64>,
    tol: Tolerances,
    events: &EventSet,
) -> Result<Profile> {
    if let Some(r) = r_end {
        return integrate(params, lambda, kind, init, r, tol, events);
    }
    let first = integrate(params, lambda, kind, init, default_r_end(lambda), tol, events)?;
    if first.event.is_some() || first.r_max() >= EXTENDED_R_END {
        return Ok(first);
    }
    integrate(params, lambda, kind, init, EXTENDED_R_END, tol, events)
}

/// Root of `g` on `[a, b]` where `g(a)` and `g(b)` differ in sign.
pub(crate) fn polish_root(mut a: f64, mut b: f64, g: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn locate_events(seg: &DenseSegment<2>, y_new: &[f64; 2], ev: &EventSet, root_tol: f64) -> Option<(EventKind, f64)> {
    let x0 = seg.x_old;
    let x1 = seg.x_new();
    let y0 = seg.eval(x0);
    let mut best: Option<(EventKind, f64)> = None;
    let mut consider = |k: EventKind, x: f64| {
        if best.is_none_or(|(_, b)| x < b) {
            best = Some((k, x));
        }
    };
    if ev.zero_crossing && ((y0[0] > 0.0 && y_new[0] <= 0.0) || (y0[0] < 0.0 && y_new[0] >= 0.0)) {
        let x = polish_root(x0, x1, |x| seg.eval(x)[0], root_tol);
        consider(EventKind::ZeroCrossing, x);
    }
    if let Some(cap) = ev.magnitude_cap {
        if y_new[0].abs() > cap && y0[0].abs() <= cap {
            let x = polish_root(x0, x1, |x| seg.eval(x)[0].abs() - cap, root_tol);
            consider(EventKind::MagnitudeCap, x);
        } else if y0[0].abs() > cap {
            consider(EventKind::MagnitudeCap, x0);
        }
    }
    if let Some(r_turn) = ev.upturn_after {
        if x1 > r_turn && y_new[0] > 0.0 && y_new[1] >= 0.0 {
            if y0[1] < 0.0 {
                let x = polish_root(x0, x1, |x| seg.eval(x)[1], root_tol);
                if x > r_turn {
                    consider(EventKind::Upturn, x);
                } else {
                    consider(EventKind::Upturn, x1);
                }
            } else if y0[0] > 0.0 {
                consider(EventKind::Upturn, x0.max(r_turn).min(x1));
            }
        }
    }
    if let Some(df) = ev.decay_floor {
        if x1 >= df.r_min && y_new[0] >= 0.0 && y_new[0] < df.floor {
            consider(EventKind::DecayFloor, x1);
        }
    }
    best
}

/// Integrates the radial equation forward from `init` to `r_end`, stopping at
/// the first event in `events`.
pub fn integrate(
    params: &ProblemParams,
    lambda: f64,
    kind: ProfileKind,
    init: RadialState,
    r_end: f64,
    tol: Tolerances,
    events: &EventSet,
) -> Result<Profile> {
    if !(init.r > 0.0 && init.r < r_end) {
        return Err(Error::domain(format!("need 0 < r0 = {} < r_end = {r_end}", init.r)));
    }
    if !(tol.rtol >= 1e-13) {
        return Err(Error::domain(format!("rtol = {} below 1e-13", tol.rtol)));
    }
    let nl = Nonlinearity::of(params);
    let dm1 = params.dim() - 1.0;
    let f = move |r: f64, y: &[f64; 2]| [y[1], radial_ddu(r, y[0], y[1], dm1, lambda, nl)];
    let root_tol = 1e-13;
    let mut fired: Option<TerminalEvent> = None;
    let traj = dopri::integrate(f, init.r, [init.u, init.du], r_end, tol, DriverOptions::default(), |seg, y_new| {
        match locate_events(seg, y_new, events, root_tol) {
            Some((kind, r)) => {
                fired = Some(TerminalEvent { kind, r });
                Control::StopAt(r)
            }
            None => Control::Continue,
        }
    });
    let event = match traj.termination {
        Termination::Stopped => fired,
        Termination::Reached => None,
        Termination::NonFinite => {
            Some(TerminalEvent { kind: EventKind::Overflow, r: *traj.x.last().expect("non-empty") })
        }
        Termination::StepUnderflow => {
            Some(TerminalEvent { kind: EventKind::StepUnderflow, r: *traj.x.last().expect("non-empty") })
        }
        Termination::MaxSteps => {
            Some(TerminalEvent { kind: EventKind::MaxSteps, r: *traj.x.last().expect("non-empty") })
        }
    };
    if traj.x.len() < 2 {
        return Err(Error::domain(format!(
            "integration produced no step from r = {} ({:?})",
            init.r, traj.termination
        )));
    }
    Profile::from_trajectory(params.clone(), lambda, kind, traj, event)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TailClass {
    Decaying,
    CrossesZero,
    BlowsUpPositive,
    Undetermined,
}

impl TailClass {
    pub fn is_determined(self) -> bool {
        !matches!(self, TailClass::Undetermined)
    }
}

impl std::fmt::Display for TailClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: TailClass,
    pub r: f64,
    pub overflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSettings {
    pub atol: f64,
    /// Overrides the blow-up cap `1e3 * max(theta, |u(r_min)|)`.
    pub cap: Option<f64>,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self { atol: 1e-12, cap: None }
    }
}

/// Tail classification of a profile: from its terminal event when present,
/// otherwise by scanning the nodes.
pub fn classify_tail(profile: &Profile, lambda: f64, settings: &ClassifierSettings) -> Classification {
    let det = |class, r| Classification { class, r, overflow: false };
    if let Some(ev) = profile.event {
        return match ev.kind {
            EventKind::ZeroCrossing => det(TailClass::CrossesZero, ev.r),
            EventKind::MagnitudeCap | EventKind::Upturn => det(TailClass::BlowsUpPositive, ev.r),
            EventKind::Overflow => Classification { class: TailClass::BlowsUpPositive, r: ev.r, overflow: true },
            EventKind::DecayFloor => det(TailClass::Decaying, ev.r),
            EventKind::StepUnderflow | EventKind::MaxSteps => det(TailClass::Undetermined, ev.r),
        };
    }
    let grid = profile.grid();
    let u = profile.values();
    let du = profile.derivatives();
    let turn = lambda.max(0.0).sqrt();
    let height = u[0].abs();
    let cap = settings.cap.unwrap_or(1e3 * height.max(1.0));
    for i in 1..grid.len() {
        if (u[i - 1] > 0.0 && u[i] <= 0.0) || (u[i - 1] < 0.0 && u[i] >= 0.0) {
            return det(TailClass::CrossesZero, grid[i]);
        }
        if !u[i].is_finite() || !du[i].is_finite() {
            return Classification { class: TailClass::BlowsUpPositive, r: grid[i], overflow: true };
        }
        if grid[i] > turn && u[i] > 0.0 && (du[i] > 0.0 || u[i] > cap) {
            return det(TailClass::BlowsUpPositive, grid[i]);
        }
    }
    let last = grid.len() - 1;
    if grid[last] > turn + 1.0 && u[last] >= 0.0 && u[last] < settings.atol && u.iter().all(|&v| v >= 0.0) {
        return det(TailClass::Decaying, grid[last]);
    }
    det(TailClass::Undetermined, grid[last])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hermite_shot(lambda: f64) -> Profile {
        let params = ProblemParams::linear(5);
        let init = origin_init_smooth(1.0, 1e-3, &params, lambda).unwrap();
        let tol = Tolerances::new(1e-12, 1e-14);
        let ev = EventSet::shooting(lambda, 1.0, 1.0, 1e-12);
        integrate(&params, lambda, ProfileKind::Smooth, init, default_r_end(lambda), tol, &ev).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let c = ProblemParams::canonical();
        let (du, ddu) = rhs(1.0, &RadialState { r: 1.0, u: 1.0, du: 0.0 }, &c, 4.0).unwrap();
        assert_eq!(du, 0.0);
        assert!((ddu + 5.0).abs() < 1e-15);
        let (_, ddu) = rhs(2.0, &RadialState { r: 2.0, u: 0.0, du: 0.3 }, &c, 4.0).unwrap();
        assert!((ddu + 4.0 / 2.0 * 0.3).abs() < 1e-15);
        assert!(rhs(0.0, &RadialState { r: 0.0, u: 1.0, du: 0.0 }, &c, 4.0).is_err());
        // Gaussian is an exact solution at lambda = d
        let lin = ProblemParams::linear(5);
        let r = 1.0f64;
        let u = (-0.5f64).exp();
        let (_, ddu) = rhs(r, &RadialState { r, u, du: -u }, &lin, 5.0).unwrap();
        let exact = (r * r - 1.0) * u;
        assert!((ddu - exact).abs() < 1e-15);
    }

    #[test]
    fn smooth_init_examples() {
        let c = ProblemParams::canonical();
        let s = origin_init_smooth(1.0, 0.01, &c, 4.0).unwrap();
        assert!((s.u - 0.99994).abs() < 1e-12);
        assert!((s.du + 0.012).abs() < 1e-12);
        let z = origin_init_smooth(0.0, 0.01, &c, 4.0).unwrap();
        assert_eq!((z.u, z.du), (0.0, 0.0));
        assert!(origin_init_smooth(1.0, 0.0, &c, 4.0).is_err());
        let lin = origin_init_smooth(2.0, 1e-2, &ProblemParams::linear(5), 5.0).unwrap();
        assert!((lin.u - 2.0 * (1.0 - 0.5e-4)).abs() < 1e-12);
    }

    #[test]
    fn singular_init_leading() {
        let s = origin_init_singular(1e-3, &ProblemParams::canonical(), 3.0, SingularOrder::Leading).unwrap();
        assert!((s.u - 1414.213562373095).abs() < 1e-9);
        assert!((s.du + 1.4142135623730951e6).abs() < 1e-5);
        assert!(origin_init_singular(1.0, &ProblemParams::canonical(), 3.0, SingularOrder::Leading).is_err());
    }

    #[test]
    fn singular_correction_coefficient() {
        // d=5, p=3, q=1.5: c_q = -2^{1/4} / 7.75
        let p = ProblemParams::canonical();
        let (eta, _) = singular_correction(1e-6, &p, 0.0).unwrap();
        let cq = -(2f64.powf(0.25)) / 7.75;
        assert!((eta / 1e-9 - cq).abs() < 1e-6);
    }

    #[test]
    fn hermite_oracle_integration() {
        let prof = hermite_shot(5.0);
        for (&r, &u) in prof.grid().iter().zip(prof.values()) {
            if r <= 4.0 {
                let exact = (-r * r / 2.0).exp();
                assert!((u - exact).abs() <= 1e-9 * exact.max(1e-3), "r={r} u={u} exact={exact}");
            }
        }
        assert!((prof.u(1.0).unwrap() - 0.60653066).abs() < 1e-8);
    }

    #[test]
    fn below_and_above_eigenvalue() {
        for lambda in [4.9, 4.99, 5.01, 5.1] {
            let prof = hermite_shot(lambda);
            let c = classify_tail(&prof, lambda, &ClassifierSettings::default());
            let expect = if lambda < 5.0 { TailClass::BlowsUpPositive } else { TailClass::CrossesZero };
            assert_eq!(c.class, expect, "lambda = {lambda}");
            assert!(c.r < 8.0);
        }
    }

    #[test]
    fn zero_init_is_decaying() {
        let params = ProblemParams::canonical();
        let init = RadialState { r: 1e-3, u: 0.0, du: 0.0 };
        let ev = EventSet::shooting(3.0, 0.0, 1.0, 1e-12);
        let prof = integrate(&params, 3.0, ProfileKind::Smooth, init, 7.0, Tolerances::default(), &ev).unwrap();
        assert!(prof.values().iter().all(|&u| u == 0.0));
        let c = classify_tail(&prof, 3.0, &ClassifierSettings::default());
        assert_eq!(c.class, TailClass::Decaying);
    }

    #[test]
    fn zero_crossing_polished() {
        let prof = hermite_shot(5.2);
        let ev = prof.event.unwrap();
        assert_eq!(ev.kind, EventKind::ZeroCrossing);
        assert!(prof.u(ev.r).unwrap().abs() < 1e-12);
    }

    #[test]
    fn analytic_hermite_profile_is_decaying() {
        let grid: Vec<f64> = (1..=800).map(|i| i as f64 * 0.01).collect();
        let u: Vec<f64> = grid.iter().map(|r| (-r * r / 2.0).exp()).collect();
        let du: Vec<f64> = grid.iter().zip(&u).map(|(r, u)| -r * u).collect();
        let p = Profile::from_samples(ProblemParams::linear(5), 5.0, ProfileKind::Smooth, grid, u, du).unwrap();
        assert_eq!(classify_tail(&p, 5.0, &ClassifierSettings::default()).class, TailClass::Decaying);
    }

    #[test]
    fn rejects_tiny_rtol() {
        let params = ProblemParams::linear(5);
        let init = origin_init_smooth(1.0, 1e-3, &params, 5.0).unwrap();
        let r = integrate(&params, 5.0, ProfileKind::Smooth, init, 4.0, Tolerances::new(1e-14, 1e-16), &EventSet::NONE);
        assert!(r.is_err());
    }
}
