//! Loading of files, keys and randomness shared by the subcommands.

use std::fmt;
use std::path::Path;

use anyhow::Result;
use tcpa_core::crypto::{os_rng, seeded_rng, CryptoRngImpl, KeyPair, PUBLIC_KEY_LEN};
use tcpa_core::protocol::Registry;
use tcpa_core::solver::CheckBudget;
use tcpa_core::symexec::{ExploreBounds, PropertySet};
use tcpa_core::tee::Manufacturer;
use tcpa_core::{AnalyzerConfig, BuilderConfig};

use crate::{BoundsArgs, ImageArgs, TrustArgs};

/// An error that maps to a specific process exit code.
#[derive(Debug)]
pub struct Exit(pub u8, pub String);

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

pub fn exit(code: u8, msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Exit(code, msg.into()))
}

pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_ADDR_IN_USE: u8 = 3;

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| exit(EXIT_BAD_INPUT, format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| exit(EXIT_BAD_INPUT, format!("{} is not UTF-8 text", path.display())))
}

/// Text property file, canonical property bytes, or a registry file.
pub fn load_properties(path: &Path) -> Result<PropertySet> {
    let bytes = read(path)?;
    let bad = |e: &dyn fmt::Display| exit(EXIT_BAD_INPUT, format!("{}: {e}", path.display()));
    if bytes.starts_with(tcpa_core::protocol::REGISTRY_MAGIC) {
        return Registry::decode(&bytes).map(|r| r.properties).map_err(|e| bad(&e));
    }
    if let Ok(p) = PropertySet::from_bytes(&bytes) {
        return Ok(p);
    }
    let text = std::str::from_utf8(&bytes).map_err(|e| bad(&e))?;
    PropertySet::parse(text).map_err(|e| bad(&e))
}

pub struct Images {
    pub x: Vec<u8>,
    pub b: Vec<u8>,
    pub p: Vec<u8>,
}

/// Reads and validates the three images; P is normalized to its canonical
/// bytes so that formatting of the text file does not affect measurement.
pub fn load_images(args: &ImageArgs) -> Result<Images> {
    let x = read(&args.x_code)?;
    AnalyzerConfig::from_bytes(&x).map_err(|e| exit(EXIT_BAD_INPUT, format!("{}: {e}", args.x_code.display())))?;
    let b = read(&args.b_config)?;
    BuilderConfig::from_bytes(&b).map_err(|e| exit(EXIT_BAD_INPUT, format!("{}: {e}", args.b_config.display())))?;
    let p = load_properties(&args.props)?.to_bytes();
    Ok(Images { x, b, p })
}

pub fn bounds(b: &BoundsArgs) -> ExploreBounds {
    ExploreBounds {
        max_paths: b.max_paths,
        max_depth: b.max_depth,
        loop_unroll: b.unroll,
        per_path_solver_budget: CheckBudget {
            max_millis: b.solver_ms,
            max_enumeration: b.solver_enum,
        },
    }
}

/// Randomness for keys and nonces: fixed by `TCPA_SEED` when set.
pub fn rng() -> Result<CryptoRngImpl> {
    match std::env::var("TCPA_SEED") {
        Ok(s) => {
            let seed: u64 = s.trim().parse().map_err(|_| anyhow::anyhow!("TCPA_SEED must be an unsigned integer"))?;
            Ok(seeded_rng(seed))
        }
        Err(_) => Ok(os_rng()),
    }
}

pub fn manufacturer(seed: u64) -> Manufacturer {
    Manufacturer::new(&mut seeded_rng(seed))
}

pub fn parse_key(hex_text: &str, what: &str) -> Result<[u8; PUBLIC_KEY_LEN]> {
    let bytes = hex::decode(hex_text.trim()).map_err(|e| anyhow::anyhow!("{what}: {e}"))?;
    bytes
        .try_into()
        .map_err(|_| anyhow::anyhow!("{what}: expected {PUBLIC_KEY_LEN} bytes"))
}

pub fn rot_public(t: &TrustArgs) -> Result<[u8; PUBLIC_KEY_LEN]> {
    match &t.rot_pub {
        Some(h) => parse_key(h, "--rot-pub"),
        None => Ok(manufacturer(t.manufacturer_seed).rot_public()),
    }
}

/// Key files hold the 32-byte secret as hex.
pub fn read_key(path: &Path) -> Result<KeyPair> {
    let text = read_text(path)?;
    let secret = parse_key(&text, &path.display().to_string()).map_err(|e| exit(EXIT_BAD_INPUT, e.to_string()))?;
    Ok(KeyPair::from_secret(secret))
}
