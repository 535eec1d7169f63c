use crate::cache::{CachedLambdaStar, LambdaStarCache, LambdaStarKey};
use crate::error::Result;
use crate::integrator::{
    classify_tail, integrate_shot, origin_init_singular, Classification, EventSet, Profile, ProfileKind, SingularOrder,
};
use crate::params::ProblemParams;

use super::shoot::{bisect, classifier, ShootResult, ShootSettings};

pub const DEFAULT_SINGULAR_R0: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct LambdaStar {
    pub lambda_star: f64,
    pub phi: Profile,
    pub shoot: ShootResult,
    pub cache_hit: bool,
}

/// Singular profile launched from `r0` at a given `lambda`.
pub fn singular_profile(
    lambda: f64,
    r0: f64,
    order: SingularOrder,
    params: &ProblemParams,
    settings: &ShootSettings,
) -> Result<Profile> {
    let init = origin_init_singular(r0, params, lambda, order)?;
    let events = EventSet::shooting(lambda, 1.0, init.u.abs(), settings.decay_atol);
    integrate_shot(params, lambda, ProfileKind::Singular, init, settings.r_end, settings.tolerances(), &events)
}

/// Eigenvalue `lambda*` of the singular solution and its profile.
pub fn find_lambda_star(
    bracket: (f64, f64),
    tol: f64,
    r0: f64,
    order: SingularOrder,
    params: &ProblemParams,
    settings: &ShootSettings,
    cache: Option<&LambdaStarCache>,
) -> Result<LambdaStar> {
    if !(1e-6..=1e-3).contains(&r0) {
        return Err(crate::Error::domain(format!("singular start r0 = {r0} outside [1e-6, 1e-3]")));
    }
    let key = LambdaStarKey::new(params, r0, tol, settings.rtol, order, bracket);
    if let Some(entry) = cache.and_then(|c| c.load(&key)) {
        log::debug!("lambda* cache hit: {}", entry.lambda_star);
        let mut phi = singular_profile(entry.lambda_star, r0, order, params, settings)?;
        phi.truncate_to_positive();
        let shoot = ShootResult {
            theta: None,
            lambda: entry.lambda_star,
            bracket_history: entry.bracket_history,
            iterations: entry.iterations,
            achieved_tol: entry.achieved_tol,
            sign_changes: entry.sign_changes,
            profile: phi.clone(),
        };
        return Ok(LambdaStar { lambda_star: entry.lambda_star, phi, shoot, cache_hit: true });
    }

    let cs = classifier(settings);
    let launch = |l: f64| -> Result<Classification> {
        let prof = singular_profile(l, r0, order, params, settings)?;
        Ok(classify_tail(&prof, l, &cs))
    };
    let b = bisect(launch, bracket, tol, settings)?;
    if b.sign_changes > 1 {
        log::warn!("singular shoot: {} sign changes in the pre-scan", b.sign_changes);
    }
    let mut phi = singular_profile(b.lambda, r0, order, params, settings)?;
    phi.truncate_to_positive();
    if let Some(c) = cache {
        let entry = CachedLambdaStar {
            key,
            lambda_star: b.lambda,
            achieved_tol: b.achieved_tol,
            iterations: b.iterations,
            sign_changes: b.sign_changes,
            bracket_history: b.history.clone(),
        };
        if let Err(e) = c.store(&entry) {
            log::warn!("could not write lambda* cache: {e}");
        }
    }
    let shoot = ShootResult {
        theta: None,
        lambda: b.lambda,
        bracket_history: b.history,
        iterations: b.iterations,
        achieved_tol: b.achieved_tol,
        sign_changes: b.sign_changes,
        profile: phi.clone(),
    };
    Ok(LambdaStar { lambda_star: b.lambda, phi, shoot, cache_hit: false })
}
