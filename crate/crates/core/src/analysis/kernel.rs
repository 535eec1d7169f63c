//! Kernel of the linearisation `L = -Delta + r^2 - lambda* - p Phi^{p-1} - q Phi^{q-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::dopri::{self, Control, DriverOptions, Termination};
use crate::integrator::{Profile, ProfileKind, Tolerances};
use crate::params::{derive_constants, ProblemParams};

const RESCALE_AT: f64 = 1e100;

/// Potential `p Phi^{p-1} + q Phi^{q-1}` (zero in linear mode).
fn potential(phi: &Profile) -> impl Fn(f64) -> f64 + '_ {
    let params = &phi.params;
    let linear = params.linear_mode;
    let p = params.p;
    let q = params.q;
    move |r: f64| {
        if linear {
            return 0.0;
        }
        let v = phi.u(r).unwrap_or(f64::NAN).max(0.0);
        let mut s = p * v.powf(p - 1.0);
        if let Some(q) = q {
            s += q * v.powf(q - 1.0);
        }
        s
    }
}

/// Integrates `L psi = 0` from `(r_from, psi, psi')` to `r_to`, rescaling on growth.
fn solve_linearised(
    phi: &Profile,
    lambda: f64,
    r_from: f64,
    y0: [f64; 2],
    r_to: f64,
    tol: Tolerances,
) -> Result<Profile> {
    let d = phi.params.dim();
    let pot = potential(phi);
    let tol = Tolerances::new(tol.rtol, tol.atol.max(1e-15 * y0[0].abs().max(y0[1].abs())));
    let f = |r: f64, y: &[f64; 2]| [y[1], -((d - 1.0) / r) * y[1] + (r * r - lambda - pot(r)) * y[0]];
    let mut start = (r_from, y0);
    let mut pieces: Vec<Profile> = Vec::new();
    let mut notes = Vec::new();
    loop {
        let traj = dopri::integrate(f, start.0, start.1, r_to, tol, DriverOptions::default(), |_, y| {
            if y[0].abs().max(y[1].abs()) > RESCALE_AT {
                Control::StopAfter
            } else {
                Control::Continue
            }
        });
        if !matches!(traj.termination, Termination::Stopped | Termination::Reached) {
            return Err(Error::domain(format!("kernel integration failed: {:?}", traj.termination)));
        }
        let stopped = traj.termination == Termination::Stopped;
        let last_x = *traj.x.last().expect("node");
        let last_y = *traj.y.last().expect("node");
        let piece = Profile::from_trajectory(phi.params.clone(), lambda, ProfileKind::Kernel, traj, None)?;
        pieces.push(piece);
        if !stopped {
            break;
        }
        let factor = 1.0 / RESCALE_AT;
        for p in pieces.iter_mut() {
            p.scale(factor);
        }
        notes.push(format!("rescaled by {factor:e} at r = {last_x}"));
        start = (last_x, [last_y[0] * factor, last_y[1] * factor]);
    }
    let backward = r_to < r_from;
    if backward {
        pieces.reverse();
    }
    let mut it = pieces.into_iter();
    let mut out = it.next().expect("at least one piece");
    for p in it {
        out = Profile::join(out, p)?;
    }
    out.notes = notes;
    Ok(out)
}

/// Decaying kernel element `psi_1`, launched at `r_start` with
/// `psi = exp(-R^2/2) R^{(lambda*-d)/2}` and integrated inward to `Phi`'s first node.
pub fn kernel_psi1(lambda_star: f64, phi: &Profile, r_start: f64, tol: Tolerances) -> Result<Profile> {
    if r_start < lambda_star.max(0.0).sqrt() + 2.0 - 1e-12 {
        return Err(Error::domain(format!("R_start = {r_start} must be at least sqrt(lambda*) + 2")));
    }
    if r_start > phi.r_max() {
        return Err(Error::Extrapolation { r: r_start, lo: phi.r_min(), hi: phi.r_max() });
    }
    let k = (lambda_star - phi.params.dim()) / 2.0;
    let psi = (-0.5 * r_start * r_start).exp() * r_start.powf(k);
    let dpsi = psi * (-r_start + k / r_start);
    solve_linearised(phi, lambda_star, r_start, [psi, dpsi], phi.r_min(), tol)
}

/// Second solution of `L psi = 0` with `(psi, psi')(r_launch) = (0, 1)`, on `[Phi.r_min, r_hi]`.
pub fn second_kernel_solution(
    lambda_star: f64,
    phi: &Profile,
    r_launch: f64,
    r_hi: f64,
    tol: Tolerances,
) -> Result<Profile> {
    if !(r_launch > phi.r_min() && r_launch < r_hi && r_hi <= phi.r_max()) {
        return Err(Error::domain("second kernel launch outside the profile range"));
    }
    let inner = solve_linearised(phi, lambda_star, r_launch, [0.0, 1.0], phi.r_min(), tol)?;
    let outer = solve_linearised(phi, lambda_star, r_launch, [0.0, 1.0], r_hi, tol)?;
    Profile::join(inner, outer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerModes {
    pub phi1: f64,
    pub phi2: f64,
    pub dphi1: f64,
    pub dphi2: f64,
}

/// `r^{-(d-2)/2} sin(nu log r)` and `r^{-(d-2)/2} cos(nu log r)` with their derivatives.
pub fn euler_modes(r: f64, params: &ProblemParams) -> Result<EulerModes> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("Euler modes need r > 0, got {r}")));
    }
    let c = derive_constants(params)?;
    let nu = c.log_frequency;
    let h = (params.dim() - 2.0) / 2.0;
    let rho = r.powf(-h);
    let (s, co) = (nu * r.ln()).sin_cos();
    let phi1 = rho * s;
    let phi2 = rho * co;
    Ok(EulerModes { phi1, phi2, dphi1: (-h * phi1 + nu * phi2) / r, dphi2: (-h * phi2 - nu * phi1) / r })
}

/// Euler modes tabulated as two profiles on a log-spaced grid.
pub fn euler_mode_profiles(params: &ProblemParams, lo: f64, hi: f64, n: usize) -> Result<(Profile, Profile)> {
    let grid: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let modes: Vec<EulerModes> = grid.iter().map(|&r| euler_modes(r, params)).collect::<Result<_>>()?;
    let mk = |v: Vec<f64>, dv: Vec<f64>| {
        Profile::from_samples(params.clone(), 0.0, ProfileKind::Kernel, grid.clone(), v, dv)
    };
    Ok((
        mk(modes.iter().map(|m| m.phi1).collect(), modes.iter().map(|m| m.dphi1).collect())?,
        mk(modes.iter().map(|m| m.phi2).collect(), modes.iter().map(|m| m.dphi2).collect())?,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WronskianReport {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    /// `W r^{d-1}`.
    pub scaled: Vec<f64>,
    pub median: f64,
    pub max_rel_deviation: f64,
}

/// `W = f' g - g' f` on `f`'s nodes inside the common range (optionally clipped to `window`).
pub fn wronskian(f: &Profile, g: &Profile, window: Option<(f64, f64)>) -> Result<WronskianReport> {
    let mut lo = f.r_min().max(g.r_min());
    let mut hi = f.r_max().min(g.r_max());
    if let Some((a, b)) = window {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if !(lo < hi) {
        return Err(Error::domain("Wronskian: profiles have no common range"));
    }
    let dm1 = f.params.dim() - 1.0;
    let mut r = Vec::new();
    let mut w = Vec::new();
    let mut scaled = Vec::new();
    for ((&x, &fv), &df) in f.grid().iter().zip(f.values()).zip(f.derivatives()) {
        if x < lo || x > hi {
            continue;
        }
        let (gv, dg) = g.eval(x)?;
        let wv = df * gv - dg * fv;
        r.push(x);
        w.push(wv);
        scaled.push(wv * x.powf(dm1));
    }
    if scaled.is_empty() {
        return Err(Error::domain("Wronskian: no nodes in the common range"));
    }
    let mut sorted = scaled.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    let max_dev = scaled.iter().map(|v| (v - median).abs()).fold(0.0, f64::max);
    let max_rel_deviation = if max_dev == 0.0 { 0.0 } else { max_dev / median.abs().max(1e-300) };
    Ok(WronskianReport { r, w, scaled, median, max_rel_deviation })
}
