use crate::canon::{CanonError, Reader, Writer};
use crate::solver::CheckBudget;

use super::{ExploreBounds, SPEC_VERSION};

pub const ANALYZER_NAME: &str = "tcpa-symexec";

/// The analyzer image X: which analyzer runs and with which bounds. Its
/// canonical bytes are what gets measured, so two parties agreeing on X
/// agree on the exploration bounds too.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalyzerConfig {
    pub spec_version: String,
    pub bounds: ExploreBounds,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            spec_version: SPEC_VERSION.to_string(),
            bounds: ExploreBounds::default(),
        }
    }
}

impl AnalyzerConfig {
    pub fn with_bounds(bounds: ExploreBounds) -> Self {
        AnalyzerConfig {
            bounds,
            ..Self::default()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let b = &self.bounds;
        let mut w = Writer::new();
        w.str(ANALYZER_NAME)
            .str(&self.spec_version)
            .u64(b.max_paths)
            .u64(b.max_depth)
            .u32(b.loop_unroll)
            .u64(b.per_path_solver_budget.max_millis)
            .u64(b.per_path_solver_budget.max_enumeration);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CanonError> {
        let mut r = Reader::new(bytes);
        let offset = r.position();
        if r.str()? != ANALYZER_NAME {
            return Err(CanonError::BadValue { offset, value: 0 });
        }
        let spec_version = r.str()?.to_string();
        let bounds = ExploreBounds {
            max_paths: r.u64()?,
            max_depth: r.u64()?,
            loop_unroll: r.u32()?,
            per_path_solver_budget: CheckBudget {
                max_millis: r.u64()?,
                max_enumeration: r.u64()?,
            },
        };
        r.finish()?;
        Ok(AnalyzerConfig { spec_version, bounds })
    }

    /// Whether this build of the analyzer implements the requested semantics.
    pub fn is_supported(&self) -> bool {
        self.spec_version == SPEC_VERSION
    }
}
