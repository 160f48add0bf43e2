//! Bidirectional map between instruction byte offsets and source positions.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceLocation {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceMapError {
    #[error("line {line}: expected `offset<TAB>line<TAB>col`")]
    Malformed { line: usize },
    #[error("offset {offset} mapped twice")]
    DuplicateOffset { offset: u32 },
    #[error("source location {location} mapped twice")]
    DuplicateLocation { location: SourceLocation },
}

/// Both directions are kept as ordered maps so that each offset has exactly
/// one location and each location exactly one offset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceMap {
    forward: BTreeMap<u32, SourceLocation>,
    inverse: BTreeMap<SourceLocation, u32>,
}

impl SourceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, offset: u32, location: SourceLocation) -> Result<(), SourceMapError> {
        if self.forward.contains_key(&offset) {
            return Err(SourceMapError::DuplicateOffset { offset });
        }
        if self.inverse.contains_key(&location) {
            return Err(SourceMapError::DuplicateLocation { location });
        }
        self.forward.insert(offset, location);
        self.inverse.insert(location, offset);
        Ok(())
    }

    pub fn location(&self, offset: u32) -> Option<SourceLocation> {
        self.forward.get(&offset).copied()
    }

    pub fn offset(&self, location: SourceLocation) -> Option<u32> {
        self.inverse.get(&location).copied()
    }

    /// Location of the mapped instruction at or before `offset`.
    pub fn nearest(&self, offset: u32) -> Option<SourceLocation> {
        self.forward.range(..=offset).next_back().map(|(_, l)| *l)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Entries in increasing offset order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, SourceLocation)> + '_ {
        self.forward.iter().map(|(o, l)| (*o, *l))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (o, l) in self.entries() {
            s.push_str(&format!("{o}\t{}\t{}\n", l.line, l.col));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SourceMapError> {
        let mut map = SourceMap::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let parsed = match fields.as_slice() {
                [o, l, c] => o
                    .parse::<u32>()
                    .ok()
                    .zip(l.parse::<u32>().ok())
                    .zip(c.parse::<u32>().ok()),
                _ => None,
            };
            let ((offset, line), col) = parsed.ok_or(SourceMapError::Malformed { line: i + 1 })?;
            map.insert(offset, SourceLocation { line, col })?;
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(line: u32, col: u32) -> SourceLocation {
        SourceLocation { line, col }
    }

    #[test]
    fn text_roundtrip_and_inverse() {
        let mut m = SourceMap::new();
        m.insert(31, loc(3, 5)).unwrap();
        m.insert(33, loc(4, 1)).unwrap();
        let text = m.to_text();
        assert_eq!(text, "31\t3\t5\n33\t4\t1\n");
        let back = SourceMap::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.offset(loc(4, 1)), Some(33));
        assert_eq!(back.nearest(32), Some(loc(3, 5)));
    }

    #[test]
    fn rejects_non_injective_entries() {
        let mut m = SourceMap::new();
        m.insert(1, loc(1, 1)).unwrap();
        assert!(m.insert(1, loc(2, 1)).is_err());
        assert!(m.insert(2, loc(1, 1)).is_err());
        assert!(SourceMap::from_text("1 2 3\n").is_err());
    }
}
