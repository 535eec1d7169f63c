use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{default_smooth_r0, integrate, origin_init_smooth, EventSet, Profile, ProfileKind, Tolerances};
use crate::params::ProblemParams;

use super::emden::emden_eval;

/// Remainder `T` of the interior decomposition `u = theta (Q + theta^{1-p} T)(theta^{(p-1)/2} r)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteriorRemainder {
    pub theta: f64,
    pub lambda: f64,
    pub r_star: f64,
    pub tau1: f64,
    pub tau: Vec<f64>,
    pub t: Vec<f64>,
    pub dt: Vec<f64>,
    /// `max (1+tau)^{alpha-2} (|T| + tau |T'|)` over the grid.
    pub norm: f64,
    /// `theta^{q-1} (1+tau1)^{-2(q-1)/(p-1)}`, absent without `q`.
    pub q_scale: Option<f64>,
}

impl InteriorRemainder {
    pub fn profile(&self, params: &ProblemParams) -> Result<Profile> {
        Profile::from_samples(
            params.clone(),
            self.lambda,
            ProfileKind::Smooth,
            self.tau.clone(),
            self.t.clone(),
            self.dt.clone(),
        )
    }
}

pub fn interior_remainder(
    theta: f64,
    r_star: f64,
    lambda: f64,
    params: &ProblemParams,
    q: &Profile,
    tol: Tolerances,
) -> Result<InteriorRemainder> {
    let p = params.p;
    let alpha = 2.0 / (p - 1.0);
    if !(r_star > 0.0) || !(theta > r_star.powf(-alpha)) {
        return Err(Error::Hypothesis(format!(
            "theta = {theta} must exceed r_star^(-2/(p-1)) = {}",
            r_star.powf(-alpha)
        )));
    }
    let s = theta.powf((p - 1.0) / 2.0);
    let tau1 = s * r_star;
    if tau1 > q.r_max() {
        return Err(Error::Extrapolation { r: tau1, lo: q.r_min(), hi: q.r_max() });
    }
    let r0 = default_smooth_r0(theta, params);
    let init = origin_init_smooth(theta, r0, params, lambda)?;
    let u = integrate(params, lambda, ProfileKind::Smooth, init, r_star, tol, &EventSet::NONE)?;

    let amp = theta.powf(p - 1.0);
    let mut tau = vec![0.0];
    let mut t = vec![0.0];
    let mut dt = vec![0.0];
    for ((&r, &ur), &dur) in u.grid().iter().zip(u.values()).zip(u.derivatives()) {
        let x = s * r;
        let (qv, dq) = emden_eval(q, x)?;
        tau.push(x);
        t.push(amp * (ur / theta - qv));
        dt.push(amp * (dur / (theta * s) - dq));
    }
    let norm = tau
        .iter()
        .zip(&t)
        .zip(&dt)
        .map(|((&x, &tv), &dv)| (1.0 + x).powf(alpha - 2.0) * (tv.abs() + x * dv.abs()))
        .fold(0.0, f64::max);
    let q_scale = params.q.map(|qe| theta.powf(qe - 1.0) * (1.0 + tau1).powf(-2.0 * (qe - 1.0) / (p - 1.0)));
    Ok(InteriorRemainder { theta, lambda, r_star, tau1, tau, t, dt, norm, q_scale })
}
