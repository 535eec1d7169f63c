//! Pointwise residuals of exact identities: the scaling generator of the
//! Emden-Fowler family and the exterior change of variables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{signed_pow, Profile, Tolerances};
use crate::params::ProblemParams;
use crate::profiles::emden_eval;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaQResidual {
    pub tau: Vec<f64>,
    pub lambda_q: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_relative_residual: f64,
}

/// `Lambda Q = c Q + tau Q'` with `c = 2/(p-1)` for the true generator.
pub fn lambda_q_value(q: &Profile, tau: f64, coefficient: f64) -> Result<(f64, f64)> {
    let (v, dv) = emden_eval(q, tau)?;
    let ddv = q.second_derivative(tau)?;
    Ok((coefficient * v + tau * dv, (coefficient + 1.0) * dv + tau * ddv))
}

/// Relative residual of `H(Lambda Q) = -(Lambda Q)'' - (d-1)/tau (Lambda Q)' - p Q^{p-1} Lambda Q`
/// on `n` log-spaced points of `window`.
pub fn lambda_q_residual_with(
    q: &Profile,
    params: &ProblemParams,
    coefficient: f64,
    window: (f64, f64),
    n: usize,
) -> Result<LambdaQResidual> {
    let (lo, hi) = window;
    if !(lo >= q.r_min() && hi <= q.r_max() && lo < hi) || n < 2 {
        return Err(Error::Extrapolation { r: hi, lo: q.r_min(), hi: q.r_max() });
    }
    let p = params.p;
    let dm1 = params.dim() - 1.0;
    let mut out = LambdaQResidual { tau: vec![], lambda_q: vec![], residual: vec![], max_relative_residual: 0.0 };
    for i in 0..n {
        let t = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
        let h = 1e-3 * t;
        let g1 = |x: f64| lambda_q_value(q, x, coefficient).map(|v| v.1);
        let g2 = (-g1(t + 2.0 * h)? + 8.0 * g1(t + h)? - 8.0 * g1(t - h)? + g1(t - 2.0 * h)?) / (12.0 * h);
        let (g, dg) = lambda_q_value(q, t, coefficient)?;
        let qv = emden_eval(q, t)?.0;
        let pot = p * qv.abs().powf(p - 1.0);
        let res = -g2 - dm1 / t * dg - pot * g;
        let scale = g2.abs() + (dm1 / t * dg).abs() + (pot * g).abs();
        let rel = res.abs() / scale.max(1e-300);
        out.max_relative_residual = out.max_relative_residual.max(rel);
        out.tau.push(t);
        out.lambda_q.push(g);
        out.residual.push(rel);
    }
    Ok(out)
}

/// Residual of `H(Lambda Q) = 0` on `tau in [0.1, 10]`.
pub fn lambda_q_residual(q: &Profile, params: &ProblemParams) -> Result<LambdaQResidual> {
    lambda_q_residual_with(q, params, 2.0 / (params.p - 1.0), (0.1, 10.0), 400)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExteriorVariant {
    /// `v = r^{-eps/2} u` with right-hand side `-(eps/2)(eps/2 + d - 2) v / r^2`.
    Exact,
    /// Same substitution, right-hand side with the opposite sign.
    FlippedRhs,
    /// `v = r^{+eps/2} u`.
    FlippedPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorResidual {
    pub epsilon: f64,
    pub max_relative: f64,
    pub samples: usize,
}

fn exterior_point(
    u: &Profile,
    params: &ProblemParams,
    lambda: f64,
    eps: f64,
    variant: ExteriorVariant,
    r: f64,
) -> Result<f64> {
    let (uv, du) = u.eval(r)?;
    let ddu = u.second_derivative(r)?;
    let s = match variant {
        ExteriorVariant::FlippedPower => eps / 2.0,
        _ => -eps / 2.0,
    };
    let rs = r.powf(s);
    let v = rs * uv;
    let dv = rs * (du + s * uv / r);
    let ddv = rs * (ddu + 2.0 * s * du / r + s * (s - 1.0) * uv / (r * r));
    let dt = params.dim() + eps;
    let e = eps / 2.0;
    let mut nl = 0.0;
    if !params.linear_mode {
        nl += r.powf(eps * (params.p - 1.0) / 2.0) * signed_pow(v, params.p);
        if let Some(q) = params.q {
            nl += r.powf(eps * (q - 1.0) / 2.0) * signed_pow(v, q);
        }
    }
    let shift = e * (e + params.dim() - 2.0) * v / (r * r);
    let rhs = match variant {
        ExteriorVariant::FlippedRhs => shift,
        _ => -shift,
    };
    let terms = [ddv, (dt - 1.0) / r * dv, -(r * r - lambda) * v, nl];
    let lhs: f64 = terms.iter().sum();
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>() + rhs.abs();
    Ok((lhs - rhs).abs() / scale.max(1e-300))
}

/// Max relative residual of the transformed equation for `v` built from `u`
/// at `u`'s grid nodes inside `[r_lo, r_max]` where `u > 0`.
pub fn exterior_transform_residual_with(
    u: &Profile,
    epsilon: f64,
    r_lo: f64,
    variant: ExteriorVariant,
) -> Result<ExteriorResidual> {
    let params = &u.params;
    let mut max_rel: f64 = 0.0;
    let mut count = 0;
    for (&r, &v) in u.grid().iter().zip(u.values()) {
        if r < r_lo || v <= 0.0 {
            continue;
        }
        max_rel = max_rel.max(exterior_point(u, params, u.lambda, epsilon, variant, r)?);
        count += 1;
    }
    if count == 0 {
        return Err(Error::domain("exterior residual: no positive samples above r_lo"));
    }
    Ok(ExteriorResidual { epsilon, max_relative: max_rel, samples: count })
}

pub fn exterior_transform_residual(u: &Profile, epsilon: f64, r_lo: f64) -> Result<ExteriorResidual> {
    exterior_transform_residual_with(u, epsilon, r_lo, ExteriorVariant::Exact)
}

/// Worst residual of the radial equation at `n` random points of a dense
/// profile, in units of `rtol` times the local scale
/// `sum |terms| + (atol/rtol + |u'|)/h` with `h` the containing step.
/// Seeded unless `seed` is `None`.
pub fn ode_residual_sample(u: &Profile, n: usize, seed: Option<u64>, tol: Tolerances) -> Result<f64> {
    let mut rng = match seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_entropy(),
    };
    let g = u.grid();
    let (lo, hi) = (u.r_min(), u.r_max());
    let params = &u.params;
    let d = params.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let r = rng.gen_range(lo..hi);
        let i = g.partition_point(|&x| x <= r).clamp(1, g.len() - 1);
        let h = g[i] - g[i - 1];
        let (v, dv) = u.eval(r)?;
        let ddv = u.second_derivative(r)?;
        let mut nl = 0.0;
        if !params.linear_mode {
            nl += signed_pow(v, params.p);
            if let Some(q) = params.q {
                nl += signed_pow(v, q);
            }
        }
        let terms = [ddv, (d - 1.0) / r * dv, -(r * r - u.lambda) * v, nl];
        let res: f64 = terms.iter().sum();
        let scale = terms.iter().map(|t| t.abs()).sum::<f64>() + (tol.atol / tol.rtol + dv.abs()) / h;
        worst = worst.max(res.abs() / (tol.rtol * scale));
    }
    Ok(worst)
}
