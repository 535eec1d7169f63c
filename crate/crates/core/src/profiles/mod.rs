//! Smooth shoots, the singular solution and the Emden-Fowler profile.

mod emden;
mod interior;
mod shoot;
mod singular;

pub use emden::{emden_eval, emden_series, scale_emden, solve_emden_fowler, ScaledEmden, EMDEN_R0};
pub use interior::{interior_remainder, InteriorRemainder};
pub use shoot::{default_bracket, shoot_lambda, BracketRecord, ShootResult, ShootSettings, ShootSummary};
pub use singular::{find_lambda_star, singular_profile, LambdaStar, DEFAULT_SINGULAR_R0};
