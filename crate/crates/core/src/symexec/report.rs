use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::canon::{CanonError, Reader, Writer};
use crate::interp::TrapKind;
use crate::wasm::SourceLocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Valid,
    Violated,
    Unknown,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Valid => "valid",
            Outcome::Violated => "violated",
            Outcome::Unknown => "unknown",
        }
    }

    fn code(self) -> u8 {
        match self {
            Outcome::Valid => 0,
            Outcome::Violated => 1,
            Outcome::Unknown => 2,
        }
    }

    fn from_code(c: u8) -> Option<Outcome> {
        [Outcome::Valid, Outcome::Violated, Outcome::Unknown]
            .into_iter()
            .find(|o| o.code() == c)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Concrete input that drives `entry` into `trap` at `offset`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Witness {
    pub entry: String,
    /// Entry arguments as zero-extended bit patterns.
    pub args: Vec<u64>,
    pub trap: TrapKind,
    pub offset: u32,
    pub location: Option<SourceLocation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PropertyOutcome {
    pub id: String,
    pub outcome: Outcome,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Stats {
    /// Paths that returned or reached a feasible trap.
    pub paths_completed: u64,
    /// Paths abandoned because of a bound or an undecided query.
    pub paths_unknown: u64,
    /// True if `max_paths` stopped exploration with work remaining.
    pub path_bound_hit: bool,
    pub solver_calls: u64,
    pub elapsed_ms: u64,
    /// Peak heap bytes; filled in by callers that run an allocation probe.
    pub peak_memory_bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AnalysisReport {
    /// Executable-equality outcome; false until the build check has run.
    pub eo: bool,
    pub outcomes: Vec<PropertyOutcome>,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("malformed report encoding: {0}")]
    Encoding(#[from] CanonError),
    #[error("unknown {what} code {code}")]
    BadCode { what: &'static str, code: u8 },
}

impl AnalysisReport {
    /// True when the executable matched and every property is valid.
    pub fn all_valid(&self) -> bool {
        self.eo && self.outcomes.iter().all(|o| o.outcome == Outcome::Valid)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bool(self.eo).u32(self.outcomes.len() as u32);
        for o in &self.outcomes {
            w.str(&o.id).u8(o.outcome.code());
            match &o.witness {
                None => {
                    w.bool(false);
                }
                Some(wit) => {
                    w.bool(true).str(&wit.entry).u32(wit.args.len() as u32);
                    for a in &wit.args {
                        w.u64(*a);
                    }
                    w.u8(wit.trap.code()).u32(wit.offset);
                    match wit.location {
                        Some(l) => w.bool(true).u32(l.line).u32(l.col),
                        None => w.bool(false),
                    };
                }
            }
        }
        let s = &self.stats;
        w.u64(s.paths_completed)
            .u64(s.paths_unknown)
            .bool(s.path_bound_hit)
            .u64(s.solver_calls)
            .u64(s.elapsed_ms)
            .u64(s.peak_memory_bytes);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ReportError> {
        let mut r = Reader::new(bytes);
        let eo = r.bool()?;
        let n = r.u32()?;
        let mut outcomes = Vec::new();
        for _ in 0..n {
            let id = r.str()?.to_string();
            let code = r.u8()?;
            let outcome = Outcome::from_code(code).ok_or(ReportError::BadCode {
                what: "outcome",
                code,
            })?;
            let witness = if r.bool()? {
                let entry = r.str()?.to_string();
                let argc = r.u32()?;
                let args = (0..argc).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
                let code = r.u8()?;
                let trap = TrapKind::from_code(code).ok_or(ReportError::BadCode { what: "trap", code })?;
                let offset = r.u32()?;
                let location = if r.bool()? {
                    Some(SourceLocation {
                        line: r.u32()?,
                        col: r.u32()?,
                    })
                } else {
                    None
                };
                Some(Witness {
                    entry,
                    args,
                    trap,
                    offset,
                    location,
                })
            } else {
                None
            };
            outcomes.push(PropertyOutcome { id, outcome, witness });
        }
        let stats = Stats {
            paths_completed: r.u64()?,
            paths_unknown: r.u64()?,
            path_bound_hit: r.bool()?,
            solver_calls: r.u64()?,
            elapsed_ms: r.u64()?,
            peak_memory_bytes: r.u64()?,
        };
        r.finish()?;
        Ok(AnalysisReport { eo, outcomes, stats })
    }

    /// Line-oriented rendering: `eo`, then one `property` line per outcome in
    /// property order, then `stats`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "eo {}", self.eo);
        for o in &self.outcomes {
            let _ = write!(out, "property {} {}", o.id, o.outcome);
            if let Some(w) = &o.witness {
                let args: Vec<String> = w.args.iter().map(u64::to_string).collect();
                let _ = write!(
                    out,
                    " entry={} args=[{}] trap={} offset={}",
                    w.entry,
                    args.join(","),
                    w.trap,
                    w.offset
                );
                if let Some(l) = w.location {
                    let _ = write!(out, " at={l}");
                }
            }
            out.push('\n');
        }
        let s = &self.stats;
        let _ = writeln!(
            out,
            "stats paths={} unknown={} path_bound_hit={} solver_calls={} elapsed_ms={} peak_bytes={}",
            s.paths_completed, s.paths_unknown, s.path_bound_hit, s.solver_calls, s.elapsed_ms, s.peak_memory_bytes
        );
        out
    }
}
