use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::canon::{CanonError, Reader, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PropertyKind {
    /// No feasible path fails a `tcpa_assert` call.
    AssertionUnreachable,
    /// No feasible path traps for any reason.
    NoTrap,
}

impl PropertyKind {
    pub fn name(self) -> &'static str {
        match self {
            PropertyKind::AssertionUnreachable => "assertion_unreachable",
            PropertyKind::NoTrap => "no_trap",
        }
    }

    pub fn from_name(s: &str) -> Option<PropertyKind> {
        match s {
            "assertion_unreachable" => Some(PropertyKind::AssertionUnreachable),
            "no_trap" => Some(PropertyKind::NoTrap),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            PropertyKind::AssertionUnreachable => 0,
            PropertyKind::NoTrap => 1,
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Property {
    pub id: String,
    pub kind: PropertyKind,
    /// Export to analyze; `None` means every exported function.
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropertyError {
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("duplicate property id {0:?}")]
    DuplicateId(String),
    #[error("malformed property encoding: {0}")]
    Encoding(#[from] CanonError),
    #[error("unknown property kind code {0}")]
    UnknownKind(u8),
}

/// Ordered properties with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PropertySet {
    properties: Vec<Property>,
}

impl PropertySet {
    pub fn new(properties: Vec<Property>) -> Result<Self, PropertyError> {
        let mut seen = BTreeSet::new();
        for p in &properties {
            if !seen.insert(p.id.as_str()) {
                return Err(PropertyError::DuplicateId(p.id.clone()));
            }
        }
        Ok(PropertySet { properties })
    }

    pub fn properties(&self) -> &[Property] {
        &self.properties
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    /// Parses the line format `id kind [target]`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PropertyError> {
        let mut props = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |detail: String| PropertyError::Syntax {
                line: i + 1,
                detail,
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() < 2 || words.len() > 3 {
                return Err(syntax("expected `id kind [target]`".into()));
            }
            let kind = PropertyKind::from_name(words[1])
                .ok_or_else(|| syntax(format!("unknown property kind {:?}", words[1])))?;
            props.push(Property {
                id: words[0].to_string(),
                kind,
                target: words.get(2).map(|s| s.to_string()),
            });
        }
        PropertySet::new(props)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            out.push_str(&p.id);
            out.push(' ');
            out.push_str(p.kind.name());
            if let Some(t) = &p.target {
                out.push(' ');
                out.push_str(t);
            }
            out.push('\n');
        }
        out
    }

    /// Canonical bytes; these are the `P` image that gets measured.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.properties.len() as u32);
        for p in &self.properties {
            w.str(&p.id).u8(p.kind.code());
            match &p.target {
                Some(t) => w.bool(true).str(t),
                None => w.bool(false),
            };
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PropertyError> {
        let mut r = Reader::new(bytes);
        let n = r.u32()?;
        let mut props = Vec::new();
        for _ in 0..n {
            let id = r.str()?.to_string();
            let code = r.u8()?;
            let kind = match code {
                0 => PropertyKind::AssertionUnreachable,
                1 => PropertyKind::NoTrap,
                c => return Err(PropertyError::UnknownKind(c)),
            };
            let target = if r.bool()? {
                Some(r.str()?.to_string())
            } else {
                None
            };
            props.push(Property { id, kind, target });
        }
        r.finish()?;
        PropertySet::new(props)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_bytes_roundtrip() {
        let text = "# header\nsafe assertion_unreachable f\nclean no_trap\n";
        let set = PropertySet::parse(text).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.properties()[1].target, None);
        assert_eq!(PropertySet::parse(&set.to_text()).unwrap(), set);
        assert_eq!(PropertySet::from_bytes(&set.to_bytes()).unwrap(), set);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            PropertySet::parse("a no_trap\na no_trap"),
            Err(PropertyError::DuplicateId(_))
        ));
        assert!(matches!(
            PropertySet::parse("a maybe"),
            Err(PropertyError::Syntax { line: 1, .. })
        ));
        let mut bytes = PropertySet::parse("a no_trap").unwrap().to_bytes();
        bytes.push(0);
        assert!(PropertySet::from_bytes(&bytes).is_err());
    }
}
