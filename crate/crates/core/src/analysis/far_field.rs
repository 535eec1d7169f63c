//! Far-field behaviour of decaying solutions.
//!
//! The profile itself is unusable far beyond the turning point because the
//! growing mode dominates round-off. The tail is therefore continued inward
//! from a large radius in the variables `w = log u`, `Y = u'/u + r`, where
//! the decaying branch is the stable direction, and matched to the profile
//! at a moderate radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::dopri::{self, Control, DriverOptions};
use crate::integrator::{Profile, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldSettings {
    pub r_far: f64,
    /// Matching radius; `min(sqrt(lambda) + 1, r_max - 1.5)` when absent.
    pub r_match: Option<f64>,
    pub rtol: f64,
    /// Relative drift above which a plateau is flagged.
    pub drift_limit: f64,
}

impl Default for FarFieldSettings {
    fn default() -> Self {
        Self { r_far: 100.0, r_match: None, rtol: 1e-12, drift_limit: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub value: f64,
    pub drift: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FarFieldWarning {
    NoPlateau { curve: String, drift: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FarField {
    pub lambda: f64,
    pub r_match: f64,
    pub r: Vec<f64>,
    /// `E / Psi = r (u'/u + r)`.
    pub e_over_psi: Vec<f64>,
    /// `r^2 (E/Psi - (lambda - d)/2)`.
    pub r2_excess: Vec<f64>,
    /// `log u + r^2/2 - ((lambda - d)/2) log r`.
    pub log_k: Vec<f64>,
    pub plateau1: Plateau,
    pub plateau2: Plateau,
    /// Plateau of `K = exp(log_k)`.
    pub k: Plateau,
    pub warnings: Vec<FarFieldWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k: f64,
    pub drift: f64,
    pub no_plateau: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scale below which a plateau's drift is measured absolutely.
const PLATEAU_SCALE_FLOOR: f64 = 1e-6;

/// Median and relative drift of `values` over `r in [lo, hi]`; a plateau at
/// zero is judged by its spread.
pub fn plateau(r: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<Plateau> {
    let mut sel: Vec<f64> = r.iter().zip(values).filter(|(&x, _)| x >= lo && x <= hi).map(|(_, &v)| v).collect();
    if sel.is_empty() {
        return None;
    }
    let max = sel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sel.iter().copied().fold(f64::INFINITY, f64::min);
    let n = sel.len();
    let med = median(&mut sel);
    let drift = if max == min { 0.0 } else { (max - min) / med.abs().max(PLATEAU_SCALE_FLOOR) };
    Some(Plateau { value: med, drift, window: (lo, hi), samples: n })
}

struct Continuation {
    r: Vec<f64>,
    w: Vec<f64>,
    y: Vec<f64>,
}

fn continue_inward(profile: &Profile, lambda: f64, r_m: f64, w_r: f64, s: &FarFieldSettings) -> Result<Continuation> {
    let params = &profile.params;
    let d = params.dim();
    let dm1 = d - 1.0;
    let exps: Vec<f64> = if params.linear_mode {
        vec![]
    } else {
        let mut e = vec![params.p - 1.0];
        if let Some(q) = params.q {
            e.push(q - 1.0);
        }
        e
    };
    let f = move |r: f64, st: &[f64; 2]| {
        let (w, y) = (st[0], st[1]);
        let nl: f64 = exps.iter().map(|e| (e * w).exp()).sum();
        [y - r, -y * y + 2.0 * r * y - dm1 * y / r + d - lambda - nl]
    };
    let traj = dopri::integrate(
        f,
        s.r_far,
        [w_r, 0.0],
        r_m,
        Tolerances::new(s.rtol, 1e-14),
        DriverOptions { h_max: Some(0.05), ..Default::default() },
        |_, _| Control::Continue,
    );
    if traj.termination != dopri::Termination::Reached {
        return Err(Error::domain(format!("far-field continuation stopped: {:?}", traj.termination)));
    }
    let mut r = traj.x;
    let mut w: Vec<f64> = traj.y.iter().map(|v| v[0]).collect();
    let mut y: Vec<f64> = traj.y.iter().map(|v| v[1]).collect();
    r.reverse();
    w.reverse();
    y.reverse();
    Ok(Continuation { r, w, y })
}

/// Log-variable continuation of a decaying profile and its far-field diagnostics.
pub fn far_field_diagnostics(profile: &Profile, lambda: f64, s: &FarFieldSettings) -> Result<FarField> {
    let turn = lambda.max(0.0).sqrt();
    let r_m = s.r_match.unwrap_or_else(|| (turn + 1.0).min(profile.r_max() - 1.5));
    if !(r_m > turn && r_m <= profile.r_max() && r_m >= profile.r_min()) {
        return Err(Error::domain(format!(
            "profile on [{}, {}] does not extend far enough beyond the turning point {turn}",
            profile.r_min(),
            profile.r_max()
        )));
    }
    let (u_m, du_m) = profile.eval(r_m)?;
    if !(u_m > 0.0 && du_m < 0.0) {
        return Err(Error::domain(format!("profile not positive and decreasing at r = {r_m}")));
    }
    let target = u_m.ln();
    let k_exp = (lambda - profile.params.dim()) / 2.0;
    // secant on the far value of log u
    let mut a = target - 0.5 * (s.r_far * s.r_far - r_m * r_m) + k_exp * (s.r_far / r_m).ln();
    let mismatch = |w_r: f64| -> Result<(f64, Continuation)> {
        let c = continue_inward(profile, lambda, r_m, w_r, s)?;
        Ok((c.w[0] - target, c))
    };
    let (mut fa, mut cont) = mismatch(a)?;
    let mut b = a - fa;
    for _ in 0..50 {
        if fa.abs() < 1e-13 {
            break;
        }
        let (fb, cb) = mismatch(b)?;
        cont = cb;
        if fb.abs() < 1e-13 || fb == fa {
            break;
        }
        let next = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = next;
    }

    // profile segment between the turning point and the matching radius
    let mut r = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for ((&x, &u), &du) in profile.grid().iter().zip(profile.values()).zip(profile.derivatives()) {
        if x >= turn && x < r_m && u > 0.0 {
            r.push(x);
            y.push(du / u + x);
            w.push(u.ln());
        }
    }
    r.extend_from_slice(&cont.r);
    y.extend_from_slice(&cont.y);
    w.extend_from_slice(&cont.w);

    let e_over_psi: Vec<f64> = r.iter().zip(&y).map(|(x, yy)| x * yy).collect();
    let r2_excess: Vec<f64> = r.iter().zip(&e_over_psi).map(|(x, e)| x * x * (e - k_exp)).collect();
    let log_k: Vec<f64> = r.iter().zip(&w).map(|(x, wv)| wv + 0.5 * x * x - k_exp * x.ln()).collect();

    let hi = s.r_far - 1.0;
    let lo = hi / 10f64.sqrt();
    let p1 = plateau(&r, &e_over_psi, lo, hi).ok_or_else(|| Error::domain("empty plateau window"))?;
    let p2 = plateau(&r, &r2_excess, lo, hi).ok_or_else(|| Error::domain("empty plateau window"))?;
    let k_values: Vec<f64> = log_k.iter().map(|v| v.exp()).collect();
    let pk = plateau(&r, &k_values, lo, hi).ok_or_else(|| Error::domain("empty plateau window"))?;
    let mut warnings = Vec::new();
    for (name, p) in [("E/Psi", &p1), ("r^2 excess", &p2), ("K", &pk)] {
        if p.drift > s.drift_limit {
            log::warn!("no plateau in {name}: drift {:.3e}", p.drift);
            warnings.push(FarFieldWarning::NoPlateau { curve: name.to_string(), drift: p.drift });
        }
    }
    Ok(FarField { lambda, r_match: r_m, r, e_over_psi, r2_excess, log_k, plateau1: p1, plateau2: p2, k: pk, warnings })
}

/// Far-field constant `K` in `u ~ K exp(-r^2/2) r^{(lambda-d)/2}`.
pub fn extract_k(profile: &Profile, lambda: f64, s: &FarFieldSettings) -> Result<KEstimate> {
    let ff = far_field_diagnostics(profile, lambda, s)?;
    Ok(KEstimate { k: ff.k.value, drift: ff.k.drift, no_plateau: ff.k.drift > s.drift_limit })
}
