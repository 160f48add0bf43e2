//! The builder B and the executable checker.
//!
//! B is the text-subset assembler. Its configuration is serialized
//! canonically, and those bytes are the `b_config` image that gets measured,
//! so any change of builder options changes the measurement.

use thiserror::Error;

use crate::canon::{CanonError, Reader, Writer};
use crate::wasm::{assemble_text, AssembleError, SourceMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuilderKind {
    ReferenceAssembler,
}

impl BuilderKind {
    pub fn name(self) -> &'static str {
        match self {
            BuilderKind::ReferenceAssembler => "reference_assembler",
        }
    }
}

const FLAG_DETERMINISTIC: u32 = 1;
const FLAG_RETURN_EXECUTABLE: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BuilderConfig {
    pub kind: BuilderKind,
    /// Always set for the reference assembler; kept explicit so that it is
    /// part of the measured image.
    pub deterministic: bool,
    /// Alternative flow: the IC returns its own build E' inside the CC
    /// instead of comparing against the submitted E.
    pub return_executable: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            kind: BuilderKind::ReferenceAssembler,
            deterministic: true,
            return_executable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("build failed at {line}:{col}: {message}")]
    BuildFailed { line: u32, col: u32, message: String },
    #[error("malformed builder configuration: {0}")]
    BadConfig(String),
}

impl From<CanonError> for BuildError {
    fn from(e: CanonError) -> Self {
        BuildError::BadConfig(e.to_string())
    }
}

impl BuilderConfig {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut flags = 0;
        if self.deterministic {
            flags |= FLAG_DETERMINISTIC;
        }
        if self.return_executable {
            flags |= FLAG_RETURN_EXECUTABLE;
        }
        let mut w = Writer::new();
        w.str(self.kind.name()).u32(flags);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BuildError> {
        let mut r = Reader::new(bytes);
        let kind = match r.str()? {
            "reference_assembler" => BuilderKind::ReferenceAssembler,
            other => return Err(BuildError::BadConfig(format!("unknown builder {other:?}"))),
        };
        let flags = r.u32()?;
        r.finish()?;
        if flags & !(FLAG_DETERMINISTIC | FLAG_RETURN_EXECUTABLE) != 0 {
            return Err(BuildError::BadConfig(format!("unknown flags {flags:#x}")));
        }
        Ok(BuilderConfig {
            kind,
            deterministic: flags & FLAG_DETERMINISTIC != 0,
            return_executable: flags & FLAG_RETURN_EXECUTABLE != 0,
        })
    }
}

pub fn build_executable(b: &BuilderConfig, source: &str) -> Result<(Vec<u8>, SourceMap), BuildError> {
    match b.kind {
        BuilderKind::ReferenceAssembler => assemble_text(source).map_err(|e| match e {
            AssembleError::SyntaxError { line, col, message } => BuildError::BuildFailed { line, col, message },
            AssembleError::UnsupportedConstruct { line, col, construct } => BuildError::BuildFailed {
                line,
                col,
                message: format!("unsupported construct {construct}"),
            },
        }),
    }
}

/// Decides whether a submitted executable matches the IC's own build.
/// Semantic checkers would implement this too; only the syntactic one
/// exists.
pub trait ExecutableChecker {
    fn equivalent(&self, e: &[u8], e_prime: &[u8]) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SyntacticChecker;

impl ExecutableChecker for SyntacticChecker {
    fn equivalent(&self, e: &[u8], e_prime: &[u8]) -> bool {
        compare_executables(e, e_prime)
    }
}

pub fn compare_executables(e: &[u8], e_prime: &[u8]) -> bool {
    e == e_prime
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;

    const SRC: &str = "(module\n  (func (export \"f\") (param i32) (result i32)\n    local.get 0\n    i32.const 1\n    i32.add))\n";

    #[test]
    fn deterministic_build() {
        let b = BuilderConfig::default();
        let (e1, m1) = build_executable(&b, SRC).unwrap();
        let (e2, m2) = build_executable(&b, SRC).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(m1, m2);
        assert!(compare_executables(&e1, &e2));
        assert_eq!(hash(&e1), hash(&e2));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = build_executable(&BuilderConfig::default(), "(module\n  (func\n    i32.bogus))").unwrap_err();
        match err {
            BuildError::BuildFailed { line, col, .. } => assert_eq!((line, col), (3, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_module_is_header_only() {
        let (e, map) = build_executable(&BuilderConfig::default(), "(module)").unwrap();
        assert_eq!(e, [0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00]);
        assert!(map.is_empty());
    }

    #[test]
    fn one_byte_difference() {
        let (e, _) = build_executable(&BuilderConfig::default(), SRC).unwrap();
        let mut f = e.clone();
        *f.last_mut().unwrap() ^= 0x80;
        assert!(!compare_executables(&e, &f));
        assert!(!SyntacticChecker.equivalent(&e, &f));
    }

    #[test]
    fn config_bytes_roundtrip_and_differ() {
        let a = BuilderConfig::default();
        let b = BuilderConfig {
            return_executable: true,
            ..a
        };
        assert_ne!(a.to_bytes(), b.to_bytes());
        for c in [a, b] {
            assert_eq!(BuilderConfig::from_bytes(&c.to_bytes()).unwrap(), c);
        }
        let mut bad = a.to_bytes();
        *bad.last_mut().unwrap() |= 0x40;
        assert!(BuilderConfig::from_bytes(&bad).is_err());
    }
}
