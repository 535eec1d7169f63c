use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SIN_SAMPLES: usize = 32;
/// Periods required at the hinted frequency.
pub const MIN_PERIODS_HINTED: f64 = 3.0;
/// Periods required at the fitted frequency when no hint is given.
pub const MIN_PERIODS_FREE: f64 = 1.0;

/// `y = amplitude sin(frequency log r + phase) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinFit {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
    pub periods: f64,
    pub samples: usize,
}

impl SinFit {
    pub fn eval(&self, r: f64) -> f64 {
        self.amplitude * (self.frequency * r.ln() + self.phase).sin() + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub residual_rms: f64,
    pub points: usize,
    pub r_squared: f64,
}

/// Linear least squares of `y` on `(sin fx, cos fx, 1)`; returns coefficients and RSS.
fn linear_sin(x: &[f64], y: &[f64], f: f64) -> (Vector3<f64>, f64) {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let row = Vector3::new((f * xi).sin(), (f * xi).cos(), 1.0);
        ata += row * row.transpose();
        aty += row * yi;
    }
    let coef = ata
        .cholesky()
        .map(|c| c.solve(&aty))
        .or_else(|| ata.try_inverse().map(|inv| inv * aty))
        .unwrap_or_else(Vector3::zeros);
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let m = coef[0] * (f * xi).sin() + coef[1] * (f * xi).cos() + coef[2];
            (yi - m).powi(2)
        })
        .sum();
    (coef, rss)
}

/// Levenberg-Marquardt on residuals `y_i - model(x_i; beta)`.
pub(crate) fn levenberg_marquardt<M, J>(
    x: &[f64],
    y: &[f64],
    beta0: DVector<f64>,
    model: M,
    jac: J,
    max_iter: usize,
) -> (DVector<f64>, f64)
where
    M: Fn(f64, &DVector<f64>) -> f64,
    J: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let k = beta0.len();
    let rss = |b: &DVector<f64>| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (yi - model(xi, b)).powi(2)).sum() };
    let mut beta = beta0;
    let mut cur = rss(&beta);
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        let mut jm = DMatrix::zeros(n, k);
        let mut res = DVector::zeros(n);
        for i in 0..n {
            let g = jac(x[i], &beta);
            for j in 0..k {
                jm[(i, j)] = g[j];
            }
            res[i] = y[i] - model(x[i], &beta);
        }
        let jtj = jm.transpose() * &jm;
        let jtr = jm.transpose() * &res;
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for j in 0..k {
                a[(j, j)] += mu * jtj[(j, j)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial = &beta + &step;
            let t = rss(&trial);
            if t.is_finite() && t <= cur {
                let rel = (cur - t) / cur.max(1e-300);
                beta = trial;
                cur = t;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-15 || step.norm() <= 1e-15 * (1.0 + beta.norm()) {
                    return (beta, cur);
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (beta, cur)
}

/// Least-squares fit of a sinusoid in `log r`.
///
/// A coarse frequency scan with linear amplitudes seeds a nonlinear refinement
/// of all four parameters.
pub fn fit_log_sinusoid(series: &[(f64, f64)], frequency_hint: Option<f64>) -> Result<SinFit> {
    let n = series.len();
    if n < MIN_SIN_SAMPLES {
        return Err(Error::InsufficientData { found: n, required: MIN_SIN_SAMPLES });
    }
    if series.iter().any(|&(r, y)| !(r > 0.0) || !y.is_finite()) {
        return Err(Error::domain("sinusoid fit needs r > 0 and finite samples"));
    }
    let mut pts: Vec<(f64, f64)> = series.iter().map(|&(r, y)| (r.ln(), y)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x0 = 0.5 * (pts[0].0 + pts[n - 1].0);
    let x: Vec<f64> = pts.iter().map(|p| p.0 - x0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let span = x[n - 1] - x[0];
    if !(span > 0.0) {
        return Err(Error::domain("sinusoid fit needs distinct radii"));
    }
    let window = (pts[0].0.exp(), pts[n - 1].0.exp());
    if let Some(h) = frequency_hint {
        let periods = span * h / (2.0 * std::f64::consts::PI);
        if periods < MIN_PERIODS_HINTED {
            return Err(Error::WindowTooShort { periods, required: MIN_PERIODS_HINTED });
        }
    }

    let base = 2.0 * std::f64::consts::PI / span;
    let (f_lo, f_hi) = match frequency_hint {
        Some(h) => (0.25 * h, 4.0 * h),
        None => {
            let mut dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
            dx.sort_by(f64::total_cmp);
            let nyq = std::f64::consts::PI / dx.get(dx.len() / 2).copied().unwrap_or(span / n as f64);
            (0.5 * base, nyq.min(200.0 * base))
        }
    };
    let df = base / 20.0;
    let steps = (((f_hi - f_lo) / df).ceil() as usize).clamp(16, 20_000);
    let mut best = (f_lo, f64::INFINITY, Vector3::zeros());
    for i in 0..=steps {
        let f = f_lo + (f_hi - f_lo) * i as f64 / steps as f64;
        let (c, rss) = linear_sin(&x, &y, f);
        if rss < best.1 {
            best = (f, rss, c);
        }
    }
    let (f0, _, c0) = best;
    let beta0 = DVector::from_vec(vec![c0[0], c0[1], c0[2], f0]);
    let model = |xi: f64, b: &DVector<f64>| b[0] * (b[3] * xi).sin() + b[1] * (b[3] * xi).cos() + b[2];
    let jac = |xi: f64, b: &DVector<f64>| {
        let (s, c) = (b[3] * xi).sin_cos();
        DVector::from_vec(vec![s, c, 1.0, xi * (b[0] * c - b[1] * s)])
    };
    let (beta, rss) = levenberg_marquardt(&x, &y, beta0, model, jac, 200);
    let (mut a_s, a_c, offset, mut f) = (beta[0], beta[1], beta[2], beta[3]);
    if f < 0.0 {
        f = -f;
        a_s = -a_s;
    }
    if !(f > 0.0) || !rss.is_finite() {
        return Err(Error::FitFailure("sinusoid refinement diverged".into()));
    }
    let amplitude = a_s.hypot(a_c);
    // phase relative to log r = 0
    let tau = 2.0 * std::f64::consts::PI;
    let phase = (a_c.atan2(a_s) - f * x0).rem_euclid(tau);
    let periods = span * f / tau;
    if frequency_hint.is_none() && periods < MIN_PERIODS_FREE {
        return Err(Error::WindowTooShort { periods, required: MIN_PERIODS_FREE });
    }
    Ok(SinFit {
        amplitude,
        frequency: f,
        phase,
        offset,
        residual_rms: (rss / n as f64).sqrt(),
        window,
        periods,
        samples: n,
    })
}

/// Log-log regression `y = coefficient x^exponent`.
pub fn fit_power(points: &[(f64, f64)]) -> Result<PowerFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientData { found: n, required: 3 });
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::domain("power fit needs positive data"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("power fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    Ok(PowerFit {
        exponent: slope,
        coefficient: icpt.exp(),
        residual_rms: (rss / n as f64).sqrt(),
        points: n,
        r_squared: if syy > 0.0 { 1.0 - rss / syy } else { 1.0 },
    })
}

/// `y = center + r^exponent (a sin(f log r) + b cos(f log r))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedSinFit {
    pub center: f64,
    pub exponent: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub residual_rms: f64,
}

pub fn fit_damped_log_sinusoid(series: &[(f64, f64)], exponent0: f64, frequency0: f64) -> Result<DampedSinFit> {
    let n = series.len();
    if n < 8 {
        return Err(Error::InsufficientData { found: n, required: 8 });
    }
    let x: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    // linear seed for (center, a, b) at fixed exponent and frequency
    let design = |xi: f64, e: f64, f: f64| {
        let env = (e * xi).exp();
        [1.0, env * (f * xi).sin(), env * (f * xi).cos()]
    };
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(&y) {
        let row = Vector3::from(design(xi, exponent0, frequency0));
        ata += row * row.transpose();
        aty += row * yi;
    }
    let seed = ata.try_inverse().map(|m| m * aty).ok_or_else(|| Error::FitFailure("singular seed system".into()))?;
    let beta0 = DVector::from_vec(vec![seed[0], exponent0, seed[1], seed[2], frequency0]);
    let model = |xi: f64, b: &DVector<f64>| {
        let env = (b[1] * xi).exp();
        b[0] + env * (b[2] * (b[4] * xi).sin() + b[3] * (b[4] * xi).cos())
    };
    let jac = |xi: f64, b: &DVector<f64>| {
        let env = (b[1] * xi).exp();
        let (s, c) = (b[4] * xi).sin_cos();
        let osc = b[2] * s + b[3] * c;
        DVector::from_vec(vec![1.0, xi * env * osc, env * s, env * c, xi * env * (b[2] * c - b[3] * s)])
    };
    let (b, rss) = levenberg_marquardt(&x, &y, beta0, model, jac, 500);
    if !rss.is_finite() {
        return Err(Error::FitFailure("damped sinusoid refinement diverged".into()));
    }
    Ok(DampedSinFit {
        center: b[0],
        exponent: b[1],
        amplitude: b[2].hypot(b[3]),
        frequency: b[4].abs(),
        phase: b[3].atan2(b[2]).rem_euclid(2.0 * std::f64::consts::PI),
        residual_rms: (rss / n as f64).sqrt(),
    })
}

/// Ordinary least squares `y = slope x + intercept`; returns `(slope, intercept, max |residual|)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData { found: n, required: 2 });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("line fit needs distinct abscissae"));
    }
    let slope = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let icpt = my - slope * mx;
    let max_res = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).abs()).fold(0.0, f64::max);
    Ok((slope, icpt, max_res))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(a: f64, f: f64, ph: f64, b: f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let r = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
                (r, a * (f * r.ln() + ph).sin() + b)
            })
            .collect()
    }

    #[test]
    fn recovers_exact_sinusoid() {
        let s = synthetic(2.0, 3.873, 0.7, 0.0, 1.0, 1e3, 400);
        for hint in [None, Some(3.873)] {
            let fit = fit_log_sinusoid(&s, hint).unwrap();
            assert!((fit.amplitude - 2.0).abs() < 1e-6, "{fit:?}");
            assert!((fit.frequency - 3.873).abs() < 1e-6);
            assert!((fit.phase - 0.7).abs() < 1e-6);
            assert!(fit.residual_rms < 1e-8);
        }
    }

    #[test]
    fn hint_far_from_truth_still_scans() {
        let s = synthetic(1.0, 1.9365, 2.0, 0.3, 1e1, 1e5, 300);
        let fit = fit_log_sinusoid(&s, Some(3.873)).unwrap();
        assert!((fit.frequency - 1.9365).abs() < 1e-6);
        assert!((fit.offset - 0.3).abs() < 1e-6);
    }

    #[test]
    fn window_checks() {
        let s = synthetic(1.0, 3.873, 0.0, 0.0, 1.0, 3.0, 64);
        assert!(matches!(fit_log_sinusoid(&s, Some(3.873)), Err(Error::WindowTooShort { .. })));
        assert!(matches!(fit_log_sinusoid(&s[..10], None), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn power_law() {
        let pts: Vec<(f64, f64)> = (1..20).map(|i| (i as f64, 3.0 * (i as f64).powf(-0.5))).collect();
        let f = fit_power(&pts).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
        assert!((f.coefficient - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_power(&pts[..2]).is_err());
    }

    #[test]
    fn damped_sinusoid() {
        let s: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let t = 10f64 * 1000f64.powf(i as f64 / 299.0);
                (t, 3.3 + t.powf(-0.5) * (0.4 * (1.93 * t.ln()).sin() - 0.2 * (1.93 * t.ln()).cos()))
            })
            .collect();
        let f = fit_damped_log_sinusoid(&s, -0.45, 1.9).unwrap();
        assert!((f.center - 3.3).abs() < 1e-9, "{f:?}");
        assert!((f.exponent + 0.5).abs() < 1e-7);
        assert!((f.frequency - 1.93).abs() < 1e-7);
    }

    #[test]
    fn line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, i, m) = fit_line(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (i - 1.0).abs() < 1e-14 && m < 1e-14);
    }
}
