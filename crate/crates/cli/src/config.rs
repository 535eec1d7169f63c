use std::path::{Path, PathBuf};

use gpss_core::acceptance::AcceptanceSettings;
use gpss_core::bifurcation::{SweepMode, TheoryTolerances};
use gpss_core::profiles::{default_bracket, ShootSettings, DEFAULT_SINGULAR_R0};
use gpss_core::{validate, ProblemParams, ValidationMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Everything a run depends on. Missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ProblemParams,
    pub theta_min: f64,
    pub theta_max: f64,
    pub points: usize,
    pub rtol: f64,
    pub atol: f64,
    pub lambda_tol: f64,
    pub lambda_star_tol: f64,
    pub r_star: f64,
    pub r0: f64,
    pub r_max: f64,
    pub emden_r_max: f64,
    pub output_dir: PathBuf,
    pub frequency_tol: f64,
    pub envelope_tol: f64,
    pub center_tol: f64,
    /// Height for `shoot`; `--theta` overrides it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Bisection bracket for `lambda`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = AcceptanceSettings::default();
        Self {
            params: ProblemParams::canonical(),
            theta_min: a.theta_min,
            theta_max: a.theta_max,
            points: a.points,
            rtol: a.rtol,
            atol: a.atol,
            lambda_tol: a.lambda_tol,
            lambda_star_tol: a.lambda_star_tol,
            r_star: a.r_star,
            r0: DEFAULT_SINGULAR_R0,
            r_max: a.r_max,
            emden_r_max: a.emden_r_max,
            output_dir: PathBuf::from("gpss-out"),
            frequency_tol: a.theory.frequency_tol,
            envelope_tol: a.theory.envelope_tol,
            center_tol: a.theory.center_tol,
            theta: None,
            bracket: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.theta_min > 0.0 && self.theta_min < self.theta_max) {
            return bad(format!("need 0 < theta_min < theta_max, got {} and {}", self.theta_min, self.theta_max));
        }
        if self.points < 2 {
            return bad(format!("points = {} must be at least 2", self.points));
        }
        let tols = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("lambda_tol", self.lambda_tol),
            ("lambda_star_tol", self.lambda_star_tol),
            ("frequency_tol", self.frequency_tol),
            ("envelope_tol", self.envelope_tol),
            ("center_tol", self.center_tol),
        ];
        if let Some((name, v)) = tols.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return bad(format!("{name} = {v} must be positive"));
        }
        if !(self.r0 > 0.0 && self.r0 < self.r_star && self.r_star < 1.0 && 1.0 < self.r_max) {
            return bad(format!("need 0 < r0 < r_star < 1 < r_max, got {}, {}, {}", self.r0, self.r_star, self.r_max));
        }
        if !(self.emden_r_max > 1.0) {
            return bad(format!("emden_r_max = {} must exceed 1", self.emden_r_max));
        }
        if let Some(t) = self.theta {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("theta = {t} must be positive"));
            }
        }
        if let Some((lo, hi)) = self.bracket {
            if !(lo < hi) {
                return bad(format!("bracket [{lo}, {hi}] is empty"));
            }
        }
        validate(&self.params, ValidationMode::Basic)?;
        Ok(())
    }

    pub fn shoot_settings(&self) -> ShootSettings {
        ShootSettings { rtol: self.rtol, atol: self.atol, ..ShootSettings::default() }
    }

    /// The configured bracket, else one that contains the ground state.
    pub fn bracket(&self) -> (f64, f64) {
        self.bracket.unwrap_or_else(|| {
            let (lo, hi) = default_bracket(&self.params);
            // the linear ground state sits at lambda = d, above the nonlinear bracket
            if self.params.linear_mode {
                (lo, self.params.dim() + 2.0)
            } else {
                (lo, hi)
            }
        })
    }

    pub fn acceptance(&self, parallel: Option<usize>) -> AcceptanceSettings {
        AcceptanceSettings {
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            points: self.points,
            rtol: self.rtol,
            atol: self.atol,
            lambda_tol: self.lambda_tol,
            lambda_star_tol: self.lambda_star_tol,
            r0: self.r0,
            r_star: self.r_star,
            r_max: self.r_max,
            emden_r_max: self.emden_r_max,
            mode: if parallel.is_some() { SweepMode::Parallel } else { SweepMode::WarmStart },
            threads: parallel,
            theory: TheoryTolerances {
                frequency_tol: self.frequency_tol,
                envelope_tol: self.envelope_tol,
                center_tol: self.center_tol,
                ..TheoryTolerances::default()
            },
        }
    }
}
