//! Problem parameters, closed-form constants and hypothesis checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameters of the radial equation
/// `u'' + (d-1)/r u' - (r^2 - lambda) u + |u|^{q-1} u + |u|^{p-1} u = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub d: u32,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub linear_mode: bool,
}

impl ProblemParams {
    pub fn new(d: u32, p: f64, q: Option<f64>) -> Self {
        Self { d, p, q, lambda: None, linear_mode: false }
    }

    /// d = 5, p = 3, q = 1.5.
    pub fn canonical() -> Self {
        Self::new(5, 3.0, Some(1.5))
    }

    pub fn pure_p(d: u32, p: f64) -> Self {
        Self::new(d, p, None)
    }

    /// Linear harmonic oscillator in dimension `d`; `p` is kept only so that
    /// derived constants stay defined.
    pub fn linear(d: u32) -> Self {
        Self { d, p: 3.0, q: None, lambda: None, linear_mode: true }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn dim(&self) -> f64 {
        f64::from(self.d)
    }

    /// Sobolev critical exponent (d+2)/(d-2).
    pub fn critical_exponent(&self) -> f64 {
        (self.dim() + 2.0) / (self.dim() - 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("dimension too small: d = {d} violates d >= 3")]
    DimensionTooSmall { d: u32 },
    #[error("p = {p} violates p > 1")]
    PNotAboveOne { p: f64 },
    #[error("q = {q} violates q > 1")]
    QNotAboveOne { q: f64 },
    #[error("p subcritical: p = {p} violates p > (d+2)/(d-2) = {critical}")]
    PSubcritical { p: f64, critical: f64 },
    #[error("p above Joseph-Lundgren: p = {p} violates p < p_JL = {p_jl}")]
    PAboveJosephLundgren { p: f64, p_jl: f64 },
    #[error("q >= (p+1)/2: q = {q} violates q < (p+1)/2 = {bound}")]
    QAboveHalfPPlusOne { q: f64, bound: f64 },
    #[error("q >= p: q = {q} violates q < p = {p}")]
    QNotBelowP { q: f64, p: f64 },
    #[error("lambda out of range: lambda = {lambda} violates 0 < lambda < d = {d}")]
    LambdaOutOfRange { lambda: f64, d: u32 },
    #[error("A undefined: d - 2 - 2/(p-1) = {gap} violates d - 2 - 2/(p-1) > 0")]
    AUndefined { gap: f64 },
    #[error("non-finite parameter: {name}")]
    NonFinite { name: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    Basic,
    Theorem,
}

/// Joseph-Lundgren exponent; `f64::INFINITY` for d <= 10.
pub fn joseph_lundgren(d: u32) -> Result<f64, ValidationError> {
    if d < 3 {
        return Err(ValidationError::DimensionTooSmall { d });
    }
    if d <= 10 {
        return Ok(f64::INFINITY);
    }
    let d = f64::from(d);
    Ok(1.0 + 4.0 / (d - 4.0 - 2.0 * (d - 1.0).sqrt()))
}

pub fn validate(params: &ProblemParams, mode: ValidationMode) -> Result<ProblemParams, ValidationError> {
    if !params.p.is_finite() {
        return Err(ValidationError::NonFinite { name: "p" });
    }
    if params.d < 3 {
        return Err(ValidationError::DimensionTooSmall { d: params.d });
    }
    if params.p <= 1.0 {
        return Err(ValidationError::PNotAboveOne { p: params.p });
    }
    if let Some(q) = params.q {
        if !q.is_finite() {
            return Err(ValidationError::NonFinite { name: "q" });
        }
        if q <= 1.0 {
            return Err(ValidationError::QNotAboveOne { q });
        }
    }
    if let Some(lambda) = params.lambda {
        if !lambda.is_finite() {
            return Err(ValidationError::NonFinite { name: "lambda" });
        }
    }
    if mode == ValidationMode::Basic {
        return Ok(params.clone());
    }

    let critical = params.critical_exponent();
    if params.p <= critical {
        return Err(ValidationError::PSubcritical { p: params.p, critical });
    }
    let p_jl = joseph_lundgren(params.d)?;
    if params.p >= p_jl {
        return Err(ValidationError::PAboveJosephLundgren { p: params.p, p_jl });
    }
    if let Some(q) = params.q {
        let bound = (params.p + 1.0) / 2.0;
        if q >= bound {
            return Err(ValidationError::QAboveHalfPPlusOne { q, bound });
        }
        if q >= params.p {
            return Err(ValidationError::QNotBelowP { q, p: params.p });
        }
    }
    if let Some(lambda) = params.lambda {
        if !(lambda > 0.0 && lambda < params.dim()) {
            return Err(ValidationError::LambdaOutOfRange { lambda, d: params.d });
        }
    }
    Ok(params.clone())
}

/// Closed-form constants of the problem.
///
/// `omega` is `sqrt(|(d-2)^2 - 4 p A^{p-1}|)`. The Euler modes
/// `r^{-(d-2)/2} sin(nu log r)` of the linearisation at the singular
/// solution oscillate at `nu = omega / 2`; `log_frequency` stores `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub omega: f64,
    pub log_frequency: f64,
    pub discriminant: f64,
    pub oscillatory: bool,
    #[serde(with = "extended_real")]
    pub p_jl: f64,
    pub lambda1: f64,
    pub m: f64,
    pub mu: f64,
    pub origin_correction_exponent: f64,
}

pub fn derive_constants(params: &ProblemParams) -> Result<DerivedConstants, ValidationError> {
    let params = validate(params, ValidationMode::Basic)?;
    let d = params.dim();
    let p = params.p;
    let alpha = 2.0 / (p - 1.0);
    let gap = d - 2.0 - alpha;
    if gap <= 0.0 {
        return Err(ValidationError::AUndefined { gap });
    }
    let a_pow = alpha * gap;
    let a = a_pow.powf(1.0 / (p - 1.0));
    let discriminant = (d - 2.0).powi(2) - 4.0 * p * a_pow;
    let omega = discriminant.abs().sqrt();
    let m = a_pow.powf(-0.5);
    // Pure-p correction is O(r^2).
    let origin_correction_exponent = match params.q {
        Some(q) => 2.0 * (p - q) / (p - 1.0),
        None => 2.0,
    };
    Ok(DerivedConstants {
        a,
        alpha,
        sigma: d / 2.0 - alpha,
        beta: (p + 1.0) / 2.0,
        omega,
        log_frequency: omega / 2.0,
        discriminant,
        oscillatory: discriminant < 0.0,
        p_jl: joseph_lundgren(params.d)?,
        lambda1: d,
        m,
        mu: m * (d - 2.0 - 2.0 * alpha),
        origin_correction_exponent,
    })
}

impl DerivedConstants {
    /// `A^{p-1}`, computed from `A`.
    pub fn a_pow(&self, p: f64) -> f64 {
        self.a.powf(p - 1.0)
    }

    /// Envelope exponent `(1 - sigma) / alpha` of the lambda-theta law.
    pub fn envelope_exponent(&self) -> f64 {
        (1.0 - self.sigma) / self.alpha
    }

    /// `alpha * omega`, the log-theta frequency stated by the oscillation law.
    pub fn stated_theta_frequency(&self) -> f64 {
        self.alpha * self.omega
    }

    /// `nu / alpha`, the log-theta frequency implied by the Euler modes.
    pub fn modal_theta_frequency(&self) -> f64 {
        self.log_frequency / self.alpha
    }
}

/// Serializes `+inf` as the string `"inf"`.
mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad extended real {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn canonical_constants() {
        let c = derive_constants(&ProblemParams::canonical()).unwrap();
        assert_relative_eq!(c.a, 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.omega, 15f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.log_frequency, 15f64.sqrt() / 2.0, max_relative = 1e-14);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.sigma, 1.5);
        assert_eq!(c.beta, 2.0);
        assert_relative_eq!(c.m, 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.mu, 0.5f64.sqrt(), max_relative = 1e-14);
        assert_eq!(c.lambda1, 5.0);
        assert_eq!(c.origin_correction_exponent, 1.5);
        assert!(c.oscillatory);
        assert!(c.p_jl.is_infinite());
        assert_eq!(c.envelope_exponent(), -0.5);
    }

    #[test]
    fn d3_p7() {
        let c = derive_constants(&ProblemParams::pure_p(3, 7.0)).unwrap();
        assert_relative_eq!(c.alpha, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(c.a, (2.0f64 / 9.0).powf(1.0 / 6.0), max_relative = 1e-14);
        assert_eq!(c.origin_correction_exponent, 2.0);
    }

    #[test]
    fn jl_values() {
        assert!(joseph_lundgren(5).unwrap().is_infinite());
        assert!(joseph_lundgren(10).unwrap().is_infinite());
        assert!((joseph_lundgren(11).unwrap() - 6.92203).abs() < 1e-4);
        assert!(joseph_lundgren(2).is_err());
    }

    #[test]
    fn theorem_mode_errors() {
        let ok = validate(&ProblemParams::canonical(), ValidationMode::Theorem);
        assert!(ok.is_ok());
        let e = validate(&ProblemParams::new(5, 3.0, Some(2.5)), ValidationMode::Theorem).unwrap_err();
        assert!(e.to_string().contains("q >= (p+1)/2"), "{e}");
        let e = validate(&ProblemParams::new(5, 2.0, Some(1.5)), ValidationMode::Theorem).unwrap_err();
        assert!(e.to_string().contains("p subcritical"), "{e}");
        let e = validate(&ProblemParams::canonical().with_lambda(5.0), ValidationMode::Theorem).unwrap_err();
        assert!(matches!(e, ValidationError::LambdaOutOfRange { .. }));
        let e = validate(&ProblemParams::pure_p(12, 8.0), ValidationMode::Theorem).unwrap_err();
        assert!(matches!(e, ValidationError::PAboveJosephLundgren { .. }));
        // basic mode only checks d, p, q
        assert!(validate(&ProblemParams::new(5, 2.0, Some(1.9)), ValidationMode::Basic).is_ok());
        assert!(validate(&ProblemParams::new(2, 3.0, None), ValidationMode::Basic).is_err());
        assert!(validate(&ProblemParams::new(5, 3.0, Some(1.0)), ValidationMode::Basic).is_err());
    }

    #[test]
    fn a_undefined() {
        // d = 3, p = 2: alpha = 2 > d - 2
        let e = derive_constants(&ProblemParams::pure_p(3, 2.0)).unwrap_err();
        assert!(e.to_string().contains("A undefined"));
    }

    #[test]
    fn json_flat_keys() {
        let p = ProblemParams::canonical();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"d":5,"p":3.0,"q":1.5,"linear_mode":false}"#);
        let back: ProblemParams = serde_json::from_str(r#"{"d":5,"p":3}"#).unwrap();
        assert_eq!(back, ProblemParams::pure_p(5, 3.0));
        let c = derive_constants(&p).unwrap();
        let js = serde_json::to_value(&c).unwrap();
        assert_eq!(js["p_jl"], "inf");
        let c2: DerivedConstants = serde_json::from_value(js).unwrap();
        assert_eq!(c, c2);
    }
}
