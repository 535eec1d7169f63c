//! Fits, far-field diagnostics, kernel functions and identity residuals.

mod far_field;
mod fit;
mod identities;
mod kernel;

pub use far_field::{
    extract_k, far_field_diagnostics, plateau, FarField, FarFieldSettings, FarFieldWarning, KEstimate, Plateau,
};
pub use fit::{
    fit_damped_log_sinusoid, fit_line, fit_log_sinusoid, fit_power, DampedSinFit, PowerFit, SinFit, MIN_PERIODS_FREE,
    MIN_PERIODS_HINTED, MIN_SIN_SAMPLES,
};
pub use identities::{
    exterior_transform_residual, exterior_transform_residual_with, lambda_q_residual, lambda_q_residual_with,
    lambda_q_value, ode_residual_sample, ExteriorResidual, ExteriorVariant, LambdaQResidual,
};
pub use kernel::{
    euler_mode_profiles, euler_modes, kernel_psi1, second_kernel_solution, wronskian, EulerModes, WronskianReport,
};

/// Samples `f` at `n` log-spaced radii of `[lo, hi]`.
pub fn log_series<F>(lo: f64, hi: f64, n: usize, f: F) -> crate::Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> crate::Result<f64>,
{
    (0..n)
        .map(|i| {
            let r = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
            Ok((r, f(r)?))
        })
        .collect()
}
