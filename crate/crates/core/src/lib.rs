//! Confidential program analysis with attested results.
//!
//! A provider submits source code to an analysis running inside a
//! (simulated) trusted execution environment. The analysis builds the
//! source, checks the build against the executable the provider ships,
//! symbolically executes it against agreed properties and signs a
//! compliance certificate. A consumer verifies the certificate chain
//! without ever seeing the source.
//!
//! Module map:
//!
//! - [`wasm`]: the WebAssembly subset (binary reader, encoder, text assembler, CFGs)
//! - [`interp`]: concrete reference interpreter
//! - [`solver`]: bit-vector path conditions, satisfiability checking, SMT-LIB export
//! - [`symexec`]: bounded symbolic execution and property outcomes
//! - [`crypto`], [`canon`]: primitives and the canonical byte encoding
//! - [`certs`]: PC, ICC, CC and OC certificates and chain verification
//! - [`tee`]: the simulated manufacturer, platform and isolated computation
//! - [`build_check`]: the reference builder and executable comparison
//! - [`protocol`]: wire frames, provider and consumer actors, transports
//! - [`harness`]: plain vs isolated overhead measurement

pub mod build_check;
pub mod canon;
pub mod certs;
pub mod crypto;
pub mod harness;
pub mod interp;
pub mod protocol;
pub mod solver;
pub mod symexec;
pub mod tee;
pub mod wasm;

pub use build_check::{build_executable, compare_executables, BuilderConfig};
pub use certs::{verify_chain, CertificateChain, Stage, VerifyOutcome};
pub use crypto::{measure, KeyPair, Measurement};
pub use interp::{run_concrete, TraceResult, TrapKind};
pub use protocol::{consumer_verify, provider_run, ProtocolMessage};
pub use solver::{check_sat, PathCondition, SatResult};
pub use symexec::{explore, init_analysis, AnalysisReport, AnalyzerConfig, ExploreBounds, Outcome, PropertySet};
pub use tee::{platform_setup, Manufacturer, Platform};
pub use wasm::{assemble_text, parse_module, Module, SourceMap};
