// reference values are tabulated to eight digits
#![allow(clippy::approx_constant)]

use gpss_core::{derive_constants, joseph_lundgren, validate, ProblemParams, ValidationError, ValidationMode};
use proptest::prelude::*;

/// Supercritical `(d, p)` below the Joseph-Lundgren exponent.
fn supercritical() -> impl Strategy<Value = (u32, f64)> {
    (3u32..=16, 0.001f64..0.999).prop_map(|(d, t)| {
        let crit = (f64::from(d) + 2.0) / (f64::from(d) - 2.0);
        let top = joseph_lundgren(d).unwrap().min(crit + 8.0);
        (d, crit + t * (top - crit))
    })
}

fn any_params() -> impl Strategy<Value = ProblemParams> {
    (0u32..14, 0.5f64..10.0, prop::option::of(0.5f64..6.0), prop::option::of(-1.0f64..12.0), any::<bool>())
        .prop_map(|(d, p, q, lambda, linear_mode)| ProblemParams { d, p, q, lambda, linear_mode })
}

proptest! {
    #[test]
    fn a_power_identity((d, p) in supercritical()) {
        let c = derive_constants(&ProblemParams::pure_p(d, p)).unwrap();
        let rhs = c.alpha * (f64::from(d) - 2.0 - c.alpha);
        prop_assert!((c.a_pow(p) - rhs).abs() <= 1e-13 * rhs.abs());
    }

    #[test]
    fn oscillatory_below_dimension_eleven((d, p) in supercritical()) {
        prop_assume!(d <= 10);
        let c = derive_constants(&ProblemParams::pure_p(d, p)).unwrap();
        prop_assert!(c.oscillatory);
        prop_assert!(c.discriminant < 0.0);
        prop_assert!(c.sigma > 1.0);
    }

    #[test]
    fn validate_is_idempotent(params in any_params()) {
        for mode in [ValidationMode::Basic, ValidationMode::Theorem] {
            if let Ok(v) = validate(&params, mode) {
                prop_assert_eq!(validate(&v, mode), Ok(v.clone()));
                prop_assert_eq!(v, params.clone());
            }
        }
    }

    #[test]
    fn json_round_trip(params in any_params()) {
        let s = serde_json::to_string(&params).unwrap();
        let back: ProblemParams = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, params);
    }
}

#[test]
fn joseph_lundgren_examples() {
    assert_eq!(joseph_lundgren(5).unwrap(), f64::INFINITY);
    assert_eq!(joseph_lundgren(10).unwrap(), f64::INFINITY);
    assert!((joseph_lundgren(11).unwrap() - 6.92203).abs() < 1e-4);
    assert!(matches!(joseph_lundgren(2), Err(ValidationError::DimensionTooSmall { d: 2 })));
}

#[test]
fn canonical_constants() {
    let c = derive_constants(&ProblemParams::canonical()).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-8;
    assert!(close(c.a, 1.41421356));
    assert!(close(c.alpha, 1.0));
    assert!(close(c.sigma, 1.5));
    assert!(close(c.beta, 2.0));
    assert!(close(c.omega, 3.87298335));
    assert!(close(c.m, 0.70710678));
    assert!(close(c.mu, 0.70710678));
    assert_eq!(c.lambda1, 5.0);
    assert_eq!(c.origin_correction_exponent, 1.5);
}

#[test]
fn theorem_mode_messages() {
    let ok = validate(&ProblemParams::canonical(), ValidationMode::Theorem);
    assert!(ok.is_ok());
    let e = validate(&ProblemParams::new(5, 3.0, Some(2.5)), ValidationMode::Theorem).unwrap_err();
    assert!(e.to_string().contains("q >= (p+1)/2"), "{e}");
    let e = validate(&ProblemParams::new(5, 2.0, Some(1.5)), ValidationMode::Theorem).unwrap_err();
    assert!(e.to_string().contains("p subcritical"), "{e}");
    let e = validate(&ProblemParams::canonical().with_lambda(5.0), ValidationMode::Theorem).unwrap_err();
    assert!(matches!(e, ValidationError::LambdaOutOfRange { .. }));
    // basic mode ignores the theorem hypotheses
    assert!(validate(&ProblemParams::new(5, 2.0, Some(2.5)), ValidationMode::Basic).is_ok());
}

#[test]
fn missing_keys_are_absent() {
    let p: ProblemParams = serde_json::from_str(r#"{"d":5,"p":3.0}"#).unwrap();
    assert_eq!(p, ProblemParams::pure_p(5, 3.0));
    let s = serde_json::to_value(ProblemParams::canonical()).unwrap();
    assert!(s.get("lambda").is_none());
    assert_eq!(s["q"], 1.5);
}
