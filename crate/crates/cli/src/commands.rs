use std::time::Instant;

use clap::ValueEnum;
use gpss_core::acceptance::{self, CaseReport, EMDEN_WINDOW, PSI1_WINDOW};
use gpss_core::analysis::{
    euler_mode_profiles, far_field_diagnostics, fit_log_sinusoid, kernel_psi1, lambda_q_residual, log_series,
    ode_residual_sample, wronskian, FarFieldSettings,
};
use gpss_core::bifurcation::{compare_theory, log_grid, sweep, BifurcationCurve, SweepMode, SweepSettings};
use gpss_core::cache::LambdaStarCache;
use gpss_core::integrator::{Profile, SingularOrder, Tolerances};
use gpss_core::io::csv_columns;
use gpss_core::profiles::{find_lambda_star, shoot_lambda, solve_emden_fowler, LambdaStar};
use gpss_core::{derive_constants, ProblemParams};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::plot::{script, Plot, Series};
use crate::summary::{ArtifactWriter, RunSummary};

/// Points of the residual spot check.
const RESIDUAL_SAMPLES: usize = 200;
const RESIDUAL_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Constants,
    Emden,
    Singular,
    Shoot,
    Sweep,
    Kernel,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Emden => "emden",
            Command::Singular => "singular",
            Command::Shoot => "shoot",
            Command::Sweep => "sweep",
            Command::Kernel => "kernel",
            Command::Verify => "verify",
        }
    }
}

pub struct Run {
    pub config: RunConfig,
    pub parallel: Option<usize>,
    /// Fixed seed for sampled checks unless seed-free.
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub cache: LambdaStarCache,
}

impl Run {
    pub fn new(config: RunConfig, parallel: Option<usize>, seed_free: bool, theta: Option<f64>) -> Self {
        let cache = LambdaStarCache::from_env_or(config.output_dir.join("cache"));
        Self { config, parallel, seed: (!seed_free).then_some(RESIDUAL_SEED), theta, cache }
    }

    fn tol(&self) -> Tolerances {
        Tolerances::new(self.config.rtol, self.config.atol)
    }

    fn params(&self) -> &ProblemParams {
        &self.config.params
    }

    fn lambda_star(&self, params: &ProblemParams) -> Result<LambdaStar> {
        let c = &self.config;
        Ok(find_lambda_star(
            c.bracket.unwrap_or_else(|| gpss_core::profiles::default_bracket(params)),
            c.lambda_star_tol,
            c.r0,
            SingularOrder::Corrected,
            params,
            &c.shoot_settings(),
            Some(&self.cache),
        )?)
    }

    pub fn execute(&self, cmd: Command) -> Result<RunSummary> {
        let mut s = RunSummary::new(cmd.name(), &self.config);
        s.constants = derive_constants(self.params()).ok();
        let mut w = ArtifactWriter::new(&self.config.output_dir);
        let t0 = Instant::now();
        match cmd {
            Command::Constants => self.constants(&mut s, &mut w)?,
            Command::Emden => self.emden(&mut s, &mut w)?,
            Command::Singular => self.singular(&mut s, &mut w)?,
            Command::Shoot => self.shoot(&mut s, &mut w)?,
            Command::Sweep => self.sweep(&mut s, &mut w)?,
            Command::Kernel => self.kernel(&mut s, &mut w)?,
            Command::Verify => self.verify(&mut s, &mut w)?,
        }
        s.timings.insert("total".into(), t0.elapsed().as_secs_f64());
        s.passed = s.checks.iter().all(|c| c.pass);
        w.finish(s)
    }

    fn constants(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let k = derive_constants(self.params())?;
        println!("{}", pretty(&k)?);
        w.json("constants.json", &k)?;
        s.constants = Some(k);
        Ok(())
    }

    fn emden_profile(&self, s: &mut RunSummary) -> Result<Profile> {
        let t = Instant::now();
        let q = solve_emden_fowler(self.config.emden_r_max, self.tol(), self.params())?;
        s.timings.insert("emden".into(), t.elapsed().as_secs_f64());
        Ok(q)
    }

    fn emden(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let k = derive_constants(self.params())?;
        let q = self.emden_profile(s)?;
        let h = (self.params().dim() - 2.0) / 2.0;
        let (lo, hi) = (EMDEN_WINDOW.0, EMDEN_WINDOW.1.min(q.r_max()));
        let tail = log_series(lo, hi, 2000, |r| Ok(r.powf(h) * (q.u(r)? - k.a * r.powf(-k.alpha))))?;
        let fit = fit_log_sinusoid(&tail, None)?;
        s.fit("emden_tail", &fit)?;
        w.profile("emden", &q)?;
        let (r, y): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
        w.text("emden_tail.csv", &csv_columns(&["r", "tail"], &[&r, &y]))?;
        w.text(
            "emden_tail.py",
            &script(&Plot {
                title: "Emden-Fowler tail r^((d-2)/2) (Q - A r^-alpha)".into(),
                xlabel: "r".into(),
                ylabel: "tail".into(),
                logx: true,
                logy: false,
                series: vec![Series::line("emden_tail.csv", "r", "tail", "Q tail")],
                hline: None,
                image: "emden_tail.png".into(),
            }),
        )?;
        println!("{}", pretty(&fit)?);
        Ok(())
    }

    fn singular(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let t = Instant::now();
        let ls = self.lambda_star(self.params())?;
        s.timings.insert("lambda_star".into(), t.elapsed().as_secs_f64());
        s.lambda_star = Some(ls.lambda_star);
        s.cache_hit = Some(ls.cache_hit);
        let ff = far_field_diagnostics(&ls.phi, ls.lambda_star, &FarFieldSettings::default())?;
        s.fit(
            "far_field",
            &serde_json::json!({
                "plateau1": ff.plateau1, "plateau2": ff.plateau2, "K": ff.k, "warnings": ff.warnings,
            }),
        )?;
        s.fit("ode_residual_rtol_units", &ode_residual_sample(&ls.phi, RESIDUAL_SAMPLES, self.seed, self.tol())?)?;
        s.fit("shoot", &ls.shoot.summary())?;
        w.profile("phi", &ls.phi)?;
        w.text(
            "far_field.csv",
            &csv_columns(
                &["r", "e_over_psi", "r2_excess", "log_k"],
                &[&ff.r, &ff.e_over_psi, &ff.r2_excess, &ff.log_k],
            ),
        )?;
        w.text(
            "phi.py",
            &script(&Plot {
                title: format!("singular profile, lambda* = {:.10}", ls.lambda_star),
                xlabel: "r".into(),
                ylabel: "Phi".into(),
                logx: true,
                logy: true,
                series: vec![Series::line("phi.csv", "r", "u", "Phi")],
                hline: None,
                image: "phi.png".into(),
            }),
        )?;
        println!(
            "{}",
            pretty(&serde_json::json!({ "lambda_star": ls.lambda_star, "cache_hit": ls.cache_hit, "K": ff.k.value }))?
        );
        Ok(())
    }

    fn shoot(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let theta = self
            .theta
            .or(self.config.theta)
            .ok_or_else(|| CliError::Config("shoot needs a height: pass --theta or set theta".into()))?;
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(CliError::Config(format!("theta = {theta} must be positive")));
        }
        let t = Instant::now();
        let r = shoot_lambda(
            theta,
            self.config.bracket(),
            self.config.lambda_tol,
            self.params(),
            &self.config.shoot_settings(),
        )?;
        s.timings.insert("shoot".into(), t.elapsed().as_secs_f64());
        let summary = r.summary();
        s.fit("shoot", &summary)?;
        s.fit("ode_residual_rtol_units", &ode_residual_sample(&r.profile, RESIDUAL_SAMPLES, self.seed, self.tol())?)?;
        if let Ok(ff) = far_field_diagnostics(&r.profile, r.lambda, &FarFieldSettings::default()) {
            s.fit("K", &ff.k)?;
        }
        w.profile("shoot", &r.profile)?;
        println!(
            "{}",
            pretty(&serde_json::json!({
                "theta": theta, "lambda": r.lambda, "achieved_tol": r.achieved_tol, "iterations": r.iterations,
            }))?
        );
        Ok(())
    }

    fn write_curve(
        &self,
        w: &mut ArtifactWriter,
        stem: &str,
        curve: &BifurcationCurve,
        lambda_star: f64,
    ) -> Result<()> {
        w.paths(&curve.write_csv(w.dir(), stem)?);
        w.text(
            &format!("{stem}_curve.py"),
            &script(&Plot {
                title: format!("bifurcation curve ({stem})"),
                xlabel: "theta".into(),
                ylabel: "lambda".into(),
                logx: true,
                logy: false,
                series: vec![
                    Series::line(&format!("{stem}_curve.csv"), "theta", "lambda", "lambda(theta)"),
                    Series::points(&format!("{stem}_branches.csv"), "theta_n", "lambda_n", "branch points"),
                ],
                hline: Some((lambda_star, "lambda*".into())),
                image: format!("{stem}_curve.png"),
            }),
        )
    }

    fn sweep(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let params = self.params();
        let ls = self.lambda_star(params)?;
        s.lambda_star = Some(ls.lambda_star);
        s.cache_hit = Some(ls.cache_hit);
        let c = &self.config;
        let settings = SweepSettings {
            shoot: c.shoot_settings(),
            bracket: c.bracket,
            lambda_tol: c.lambda_tol,
            mode: if self.parallel.is_some() { SweepMode::Parallel } else { SweepMode::WarmStart },
            threads: self.parallel,
            ..SweepSettings::default()
        };
        let t = Instant::now();
        let grid = log_grid(c.theta_min, c.theta_max, c.points)?;
        let mut curve = sweep(&grid, params, Some(ls.lambda_star), &settings)?;
        s.timings.insert("sweep".into(), t.elapsed().as_secs_f64());
        s.fit("failures", &curve.failures)?;
        // the curve is worth keeping even when the comparison below fails
        self.write_curve(w, "sweep", &curve, ls.lambda_star)?;
        let k = derive_constants(params)?;
        let report = compare_theory(&mut curve, &k, ls.lambda_star, &c.acceptance(self.parallel).theory)?;
        self.write_curve(w, "sweep", &curve, ls.lambda_star)?;
        s.fit("theory", &report)?;
        s.fit("period_fit", &curve.period_fit)?;
        s.fit("envelope_fit", &curve.envelope_fit)?;
        s.fit("damped_fit", &curve.damped_fit)?;
        w.json("theory.json", &report)?;
        println!("{}", pretty(&report)?);
        Ok(())
    }

    fn kernel(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let params = self.params();
        let k = derive_constants(params)?;
        let q = self.emden_profile(s)?;
        let lq = lambda_q_residual(&q, params)?;
        s.fit("lambda_q_max_relative_residual", &lq.max_relative_residual)?;
        let ls = self.lambda_star(params)?;
        s.lambda_star = Some(ls.lambda_star);
        s.cache_hit = Some(ls.cache_hit);
        let l = ls.lambda_star;
        let t = Instant::now();
        let psi = kernel_psi1(l, &ls.phi, l.sqrt() + 2.0, Tolerances::new(self.config.rtol, 0.0))?;
        s.timings.insert("kernel".into(), t.elapsed().as_secs_f64());
        let h = (params.dim() - 2.0) / 2.0;
        let near = log_series(PSI1_WINDOW.0.max(psi.r_min()), PSI1_WINDOW.1, 1000, |r| Ok(r.powf(h) * psi.u(r)?))?;
        s.fit("psi1_origin", &fit_log_sinusoid(&near, None)?)?;
        let (f, g) = euler_mode_profiles(params, 0.01, 10.0, 500)?;
        let wr = wronskian(&f, &g, None)?;
        s.fit(
            "euler_wronskian",
            &serde_json::json!({ "median": wr.median, "max_rel_deviation": wr.max_rel_deviation }),
        )?;
        s.fit("frequencies", &serde_json::json!({ "omega": k.omega, "log_frequency": k.log_frequency }))?;
        w.profile("psi1", &psi)?;
        let (r, y): (Vec<f64>, Vec<f64>) = near.into_iter().unzip();
        w.text("psi1_origin.csv", &csv_columns(&["r", "scaled_psi1"], &[&r, &y]))?;
        w.text("euler_modes.csv", &csv_columns(&["r", "phi1", "phi2"], &[f.grid(), f.values(), g.values()]))?;
        w.text(
            "psi1_origin.py",
            &script(&Plot {
                title: "kernel element near the origin".into(),
                xlabel: "r".into(),
                ylabel: "r^((d-2)/2) psi_1".into(),
                logx: true,
                logy: false,
                series: vec![Series::line("psi1_origin.csv", "r", "scaled_psi1", "psi_1")],
                hline: None,
                image: "psi1_origin.png".into(),
            }),
        )?;
        println!("{}", pretty(&s.fits)?);
        Ok(())
    }

    fn record_case(&self, s: &mut RunSummary, w: &mut ArtifactWriter, stem: &str, rep: &CaseReport) -> Result<()> {
        s.timings.insert(stem.into(), rep.seconds);
        if let (Some(curve), Some(l)) = (&rep.curve, rep.lambda_star) {
            self.write_curve(w, stem, curve, l)?;
        }
        s.fit(stem, rep)?;
        s.checks.extend(rep.checks.iter().cloned());
        Ok(())
    }

    fn verify(&self, s: &mut RunSummary, w: &mut ArtifactWriter) -> Result<()> {
        let settings = self.config.acceptance(self.parallel);
        let params = self.params().clone();
        s.checks.extend(acceptance::check_constants());
        s.checks.extend(acceptance::check_linear_oracle(&settings));
        let main = acceptance::run_case(&params, &settings, Some(&self.cache));
        s.lambda_star = main.lambda_star;
        s.cache_hit = Some(main.lambda_star_cache_hit);
        self.record_case(s, w, "case", &main)?;
        if params.q.is_some() {
            // the law does not involve q: the pure power case must obey it too
            s.checks.extend(acceptance::check_pure_p_targets());
            let pure = acceptance::run_case(&ProblemParams::pure_p(params.d, params.p), &settings, Some(&self.cache));
            self.record_case(s, w, "pure_p", &pure)?;
        }
        for c in &s.checks {
            println!("{c}");
        }
        Ok(())
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v).map_err(gpss_core::Error::from)?)
}
