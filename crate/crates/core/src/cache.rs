//! On-disk cache of singular eigenvalues keyed by a content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::integrator::SingularOrder;
use crate::io::write_json;
use crate::params::ProblemParams;
use crate::profiles::BracketRecord;

pub const CACHE_ENV: &str = "GPSS_CACHE_DIR";

/// Inputs that determine the singular eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStarKey {
    pub d: u32,
    pub p: f64,
    pub q: Option<f64>,
    pub r0: f64,
    pub lambda_tol: f64,
    pub rtol: f64,
    pub order: SingularOrder,
    pub bracket: (f64, f64),
}

impl LambdaStarKey {
    pub fn new(
        params: &ProblemParams,
        r0: f64,
        lambda_tol: f64,
        rtol: f64,
        order: SingularOrder,
        bracket: (f64, f64),
    ) -> Self {
        Self { d: params.d, p: params.p, q: params.q, r0, lambda_tol, rtol, order, bracket }
    }

    /// SHA-256 over the exact bit patterns of every field.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"lambda-star/v1");
        h.update(self.d.to_le_bytes());
        h.update(self.p.to_bits().to_le_bytes());
        match self.q {
            Some(q) => {
                h.update([1]);
                h.update(q.to_bits().to_le_bytes());
            }
            None => h.update([0]),
        }
        for x in [self.r0, self.lambda_tol, self.rtol, self.bracket.0, self.bracket.1] {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update([matches!(self.order, SingularOrder::Corrected) as u8]);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedLambdaStar {
    pub key: LambdaStarKey,
    pub lambda_star: f64,
    pub achieved_tol: f64,
    pub iterations: usize,
    pub sign_changes: usize,
    pub bracket_history: Vec<BracketRecord>,
}

#[derive(Debug, Clone)]
pub struct LambdaStarCache {
    dir: PathBuf,
}

impl LambdaStarCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$GPSS_CACHE_DIR` when set, otherwise `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &LambdaStarKey) -> PathBuf {
        self.dir.join(format!("lambda_star-{}.json", key.digest()))
    }

    /// Entry for `key`; unreadable or mismatching files count as misses.
    pub fn load(&self, key: &LambdaStarKey) -> Option<CachedLambdaStar> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        let entry: CachedLambdaStar = serde_json::from_slice(&bytes).ok()?;
        (entry.key == *key).then_some(entry)
    }

    pub fn store(&self, entry: &CachedLambdaStar) -> Result<PathBuf> {
        let path = self.path_for(&entry.key);
        write_json(&path, entry)?;
        Ok(path)
    }
}
