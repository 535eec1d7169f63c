use crate::error::{Error, Result};
use crate::integrator::dopri::{self, Control, DriverOptions};
use crate::integrator::{signed_pow, EventKind, Profile, ProfileKind, TerminalEvent, Tolerances};
use crate::params::ProblemParams;

pub const EMDEN_R0: f64 = 1e-3;

/// Fourth-order series of `Q` at the origin: `1 - r^2/(2d) + p r^4 / (8d(d+2))`.
pub fn emden_series(r: f64, params: &ProblemParams) -> (f64, f64) {
    let d = params.dim();
    let c2 = -1.0 / (2.0 * d);
    let c4 = params.p / (8.0 * d * (d + 2.0));
    let r2 = r * r;
    (1.0 + c2 * r2 + c4 * r2 * r2, 2.0 * c2 * r + 4.0 * c4 * r2 * r)
}

/// Solution of `Q'' + (d-1)/r Q' + Q^p = 0`, `Q(0) = 1`, on `[1e-3, r_max]`.
pub fn solve_emden_fowler(r_max: f64, tol: Tolerances, params: &ProblemParams) -> Result<Profile> {
    if !(r_max > EMDEN_R0) {
        return Err(Error::domain(format!("r_max = {r_max} must exceed {EMDEN_R0}")));
    }
    let p = params.p;
    let dm1 = params.dim() - 1.0;
    let (q0, dq0) = emden_series(EMDEN_R0, params);
    let f = move |r: f64, y: &[f64; 2]| [y[1], -(dm1 / r) * y[1] - signed_pow(y[0], p)];
    let mut crossing = None;
    let traj = dopri::integrate(
        f,
        EMDEN_R0,
        [q0, dq0],
        r_max,
        tol,
        DriverOptions { max_steps: 10_000_000, ..Default::default() },
        |seg, y| {
            if y[0] <= 0.0 {
                let r = crate::integrator::polish_root(seg.x_old, seg.x_new(), |x| seg.eval(x)[0], 1e-13);
                crossing = Some(r);
                Control::StopAt(r)
            } else {
                Control::Continue
            }
        },
    );
    if let Some(r) = crossing {
        return Err(Error::SubcriticalOscillation { r });
    }
    let event = match traj.termination {
        dopri::Termination::Reached => None,
        other => Some(TerminalEvent {
            kind: match other {
                dopri::Termination::NonFinite => EventKind::Overflow,
                dopri::Termination::MaxSteps => EventKind::MaxSteps,
                _ => EventKind::StepUnderflow,
            },
            r: *traj.x.last().expect("non-empty"),
        }),
    };
    if let Some(ev) = event {
        return Err(Error::domain(format!("Emden-Fowler integration stopped at r = {} ({:?})", ev.r, ev.kind)));
    }
    let mut params = params.clone();
    params.lambda = None;
    Profile::from_trajectory(params, 0.0, ProfileKind::EmdenFowler, traj, None)
}

/// `(Q, Q')` at `tau >= 0`; the origin series covers `tau` below the grid.
pub fn emden_eval(q: &Profile, tau: f64) -> Result<(f64, f64)> {
    if tau < q.r_min() {
        if tau < 0.0 {
            return Err(Error::Extrapolation { r: tau, lo: 0.0, hi: q.r_max() });
        }
        return Ok(emden_series(tau, &q.params));
    }
    q.eval(tau)
}

/// The scaled family `u(r) = theta Q(theta^{(p-1)/2} r)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledEmden<'a> {
    pub theta: f64,
    pub scale: f64,
    q: &'a Profile,
}

pub fn scale_emden(theta: f64, q: &Profile) -> Result<ScaledEmden<'_>> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("theta = {theta} must be positive")));
    }
    Ok(ScaledEmden { theta, scale: theta.powf((q.params.p - 1.0) / 2.0), q })
}

impl ScaledEmden<'_> {
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        let (v, dv) = emden_eval(self.q, self.scale * r)?;
        Ok((self.theta * v, self.theta * self.scale * dv))
    }

    pub fn u(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)?.0)
    }

    /// Largest radius covered by the underlying profile.
    pub fn r_max(&self) -> f64 {
        self.q.r_max() / self.scale
    }

    /// `u''` from the interpolated derivative of `Q'`.
    pub fn second_derivative(&self, r: f64) -> Result<f64> {
        let tau = self.scale * r;
        let qpp = if tau < self.q.r_min() {
            let d = self.q.params.dim();
            -1.0 / d + 3.0 * self.q.params.p * tau * tau / (2.0 * d * (d + 2.0))
        } else {
            self.q.second_derivative(tau)?
        };
        Ok(self.theta * self.scale * self.scale * qpp)
    }
}
