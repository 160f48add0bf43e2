//! Symbolic execution over the WASM subset.
//!
//! An [`Analysis`] bundles the module, its source map and the properties to
//! check. [`explore`] runs a depth-first search over [`Configuration`]s using
//! [`Engine::step`], deciding trap reachability with the built-in solver.
//!
//! Exploration order is fixed: depth-first, the not-taken side of a branch
//! before the taken side, and for multi-way forks the order `step` returns.
//! A property is `valid` only if every relevant entry was explored
//! exhaustively without any unknown path.

mod config;
mod engine;
mod graph;
mod props;
mod report;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

pub use config::{AnalyzerConfig, ANALYZER_NAME};
pub use engine::{arg_name, Configuration, Deps, Engine, Frame, ModuleState, PathStatus, SymValue, UnknownCause};
pub use graph::{DepKind, GraphError, SemanticGraph, Vertex};
pub use props::{Property, PropertyError, PropertyKind, PropertySet};
pub use report::{AnalysisReport, Outcome, PropertyOutcome, ReportError, Stats, Witness};

use crate::interp::{TrapKind, MAX_CALL_DEPTH};
use crate::solver::{CheckBudget, PathCondition, SatResult};
use crate::wasm::{Module, SourceMap};

/// Identifier of the implemented WASM semantics.
pub const SPEC_VERSION: &str = "wasm-core-1/int-subset";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymexecError {
    #[error("property target {0:?} is not an exported function")]
    UnknownTarget(String),
    #[error("entry signature {0} is not analyzable")]
    UnsupportedEntry(String),
    #[error("program counter outside the function body")]
    PcOutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreBounds {
    /// Finished paths (completed or unknown) per entry.
    pub max_paths: u64,
    /// Instructions per path.
    pub max_depth: u64,
    /// Constrained loop iterations per loop entry.
    pub loop_unroll: u32,
    pub per_path_solver_budget: CheckBudget,
}

impl Default for ExploreBounds {
    fn default() -> Self {
        ExploreBounds {
            max_paths: 4096,
            max_depth: 1_000_000,
            loop_unroll: 8,
            per_path_solver_budget: CheckBudget::default(),
        }
    }
}

/// The analysis tuple. The call-stack and operand-stack entries are
/// templates: they fix limits, while live stacks belong to configurations.
pub struct Analysis {
    pub modules: Vec<Module>,
    pub src_map: SourceMap,
    pub properties: PropertySet,
    pub spec_version: &'static str,
    pub call_stack_limit: usize,
    /// Entries in analysis order with the function index of each.
    entries: Vec<(String, u32)>,
    solver_calls: AtomicU64,
}

/// Validates property targets and fixes the entry order: explicit targets
/// in first-mention order, or every exported function for untargeted
/// properties.
pub fn init_analysis(m: Module, map: SourceMap, props: PropertySet) -> Result<Analysis, SymexecError> {
    let mut entries: Vec<(String, u32)> = Vec::new();
    let mut add = |name: &str, m: &Module| -> Result<(), SymexecError> {
        let f = m
            .exported_function(name)
            .ok_or_else(|| SymexecError::UnknownTarget(name.to_string()))?;
        if !entries.iter().any(|(n, _)| n == name) {
            entries.push((name.to_string(), f));
        }
        Ok(())
    };
    for p in props.properties() {
        match &p.target {
            Some(t) => add(t, &m)?,
            None => {
                let names: Vec<String> = m
                    .exports
                    .iter()
                    .filter(|e| e.kind == crate::wasm::ExportKind::Func)
                    .map(|e| e.name.clone())
                    .collect();
                for n in names {
                    add(&n, &m)?;
                }
            }
        }
    }
    Ok(Analysis {
        modules: vec![m],
        src_map: map,
        properties: props,
        spec_version: SPEC_VERSION,
        call_stack_limit: MAX_CALL_DEPTH,
        entries,
        solver_calls: AtomicU64::new(0),
    })
}

/// How one explored path ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathEnd {
    Returned,
    /// Feasible trap with a witness.
    Trapped(Witness),
    /// A trap whose feasibility could not be decided.
    UndecidedTrap(TrapKind),
    Unknown(UnknownCause),
}

#[derive(Debug, Clone)]
pub struct PathRecord {
    pub entry: String,
    pub end: PathEnd,
    pub path_condition: PathCondition,
}

/// Full exploration output; [`explore`] keeps only the report.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub report: AnalysisReport,
    pub paths: Vec<PathRecord>,
    /// Union of the semantic graphs of all finished paths.
    pub graph: SemanticGraph,
    /// Entries whose exploration stopped at `max_paths`.
    pub truncated: Vec<String>,
}

impl Analysis {
    pub fn module(&self) -> &Module {
        &self.modules[0]
    }

    pub fn engine(&self) -> Engine<'_> {
        Engine {
            module: &self.modules[0],
            src_map: &self.src_map,
            solver_calls: &self.solver_calls,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entry_configuration(&self, entry: &str) -> Result<Configuration, SymexecError> {
        let f = self
            .module()
            .exported_function(entry)
            .ok_or_else(|| SymexecError::UnknownTarget(entry.to_string()))?;
        self.engine().entry_configuration(f)
    }

    pub fn step(&self, c: &Configuration, bounds: &ExploreBounds) -> Result<Vec<Configuration>, SymexecError> {
        self.engine().step(c, bounds)
    }

    fn witness(&self, entry: &str, model: &BTreeMap<String, u64>, kind: TrapKind, offset: u32) -> Witness {
        let f = self.module().exported_function(entry).unwrap();
        let params = self.module().func_type(f).unwrap().params.len();
        Witness {
            entry: entry.to_string(),
            args: (0..params)
                .map(|i| model.get(&arg_name(i)).copied().unwrap_or(0))
                .collect(),
            trap: kind,
            offset,
            location: self.src_map.location(offset),
        }
    }

    fn explore_entry(&self, entry: &str, bounds: &ExploreBounds, out: &mut Exploration) {
        let engine = self.engine();
        let budget = &bounds.per_path_solver_budget;
        let mut finished: u64 = 0;
        let mut finish = |out: &mut Exploration, c: &Configuration, end: PathEnd| {
            finished += 1;
            match end {
                PathEnd::Returned | PathEnd::Trapped(_) => out.report.stats.paths_completed += 1,
                _ => out.report.stats.paths_unknown += 1,
            }
            out.graph.merge(&c.graph);
            out.paths.push(PathRecord {
                entry: entry.to_string(),
                end,
                path_condition: c.path_condition.clone(),
            });
            finished
        };
        let mut work = match self.entry_configuration(entry) {
            Ok(c) => vec![c],
            Err(e) => {
                log::warn!("cannot explore {entry}: {e}");
                out.truncated.push(entry.to_string());
                return;
            }
        };
        let mut count = 0;
        while let Some(c) = work.pop() {
            if count >= bounds.max_paths {
                out.report.stats.path_bound_hit = true;
                out.truncated.push(entry.to_string());
                return;
            }
            match &c.status {
                PathStatus::Returned(_) => count = finish(out, &c, PathEnd::Returned),
                PathStatus::Unknown(cause) => count = finish(out, &c, PathEnd::Unknown(*cause)),
                PathStatus::Trapped { kind, offset } => {
                    let (kind, offset) = (*kind, *offset);
                    let hinted = c.hint.as_ref().filter(|h| c.path_condition.holds_under(h));
                    let verdict = match hinted {
                        Some(h) => SatResult::Sat((**h).clone()),
                        None => engine.check(&c.path_condition, budget),
                    };
                    match verdict {
                        SatResult::Sat(model) => {
                            let w = self.witness(entry, &model, kind, offset);
                            count = finish(out, &c, PathEnd::Trapped(w));
                        }
                        SatResult::Unsat => {}
                        SatResult::Unknown(_) => count = finish(out, &c, PathEnd::UndecidedTrap(kind)),
                    }
                }
                PathStatus::Running => {
                    if c.steps >= bounds.max_depth {
                        count = finish(out, &c, PathEnd::Unknown(UnknownCause::DepthBound));
                        continue;
                    }
                    let succ = match engine.step(&c, bounds) {
                        Ok(s) => s,
                        Err(e) => {
                            log::warn!("step failed in {entry}: {e}");
                            count = finish(out, &c, PathEnd::Unknown(UnknownCause::Solver));
                            continue;
                        }
                    };
                    let forked = succ.len() > 1;
                    let mut keep = Vec::with_capacity(succ.len());
                    for mut s in succ {
                        let grew = s.path_condition.len() > c.path_condition.len();
                        if forked && grew && s.status == PathStatus::Running {
                            let ok = s.hint.as_ref().is_some_and(|h| s.path_condition.holds_under(h));
                            if !ok {
                                match engine.check(&s.path_condition, budget) {
                                    SatResult::Sat(m) => s.hint = Some(Arc::new(m)),
                                    SatResult::Unsat => continue,
                                    SatResult::Unknown(_) => {}
                                }
                            }
                        }
                        keep.push(s);
                    }
                    work.extend(keep.into_iter().rev());
                }
            }
        }
    }

    /// Explores every entry and keeps paths, witnesses and the merged graph.
    pub fn explore_detailed(&self, bounds: &ExploreBounds) -> Exploration {
        let started = Instant::now();
        let memory = crate::harness::PeakScope::begin();
        let calls_before = self.solver_calls.load(Ordering::Relaxed);
        let mut out = Exploration {
            report: AnalysisReport::default(),
            paths: Vec::new(),
            graph: SemanticGraph::new(),
            truncated: Vec::new(),
        };
        for (entry, _) in &self.entries {
            self.explore_entry(entry, bounds, &mut out);
        }
        let mut outcomes = Vec::with_capacity(self.properties.len());
        for p in self.properties.properties() {
            let relevant = |e: &str| p.target.as_deref().map_or(true, |t| t == e);
            let matches = |k: TrapKind| p.kind == PropertyKind::NoTrap || k == TrapKind::AssertFailed;
            let mut witness = None;
            let mut unknown = out.truncated.iter().any(|e| relevant(e));
            for rec in out.paths.iter().filter(|r| relevant(&r.entry)) {
                match &rec.end {
                    PathEnd::Trapped(w) if matches(w.trap) => {
                        witness = Some(w.clone());
                        break;
                    }
                    PathEnd::UndecidedTrap(k) if matches(*k) => unknown = true,
                    PathEnd::Unknown(_) => unknown = true,
                    _ => {}
                }
            }
            let outcome = match (&witness, unknown) {
                (Some(_), _) => Outcome::Violated,
                (None, true) => Outcome::Unknown,
                (None, false) => Outcome::Valid,
            };
            outcomes.push(PropertyOutcome {
                id: p.id.clone(),
                outcome,
                witness,
            });
        }
        out.report.outcomes = outcomes;
        out.report.stats.solver_calls = self.solver_calls.load(Ordering::Relaxed) - calls_before;
        out.report.stats.elapsed_ms = started.elapsed().as_millis() as u64;
        out.report.stats.peak_memory_bytes = memory.peak_bytes();
        out
    }
}

/// Runs the analysis to completion or until a bound is hit.
pub fn explore(a: &Analysis, bounds: &ExploreBounds) -> AnalysisReport {
    a.explore_detailed(bounds).report
}

/// Transitive dependencies of `v` in `g`.
pub fn dependencies_of(
    g: &SemanticGraph,
    v: Vertex,
) -> Result<std::collections::BTreeSet<(Vertex, DepKind)>, GraphError> {
    g.dependencies_of(v)
}

#[cfg(test)]
mod tests;
