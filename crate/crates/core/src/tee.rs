//! Software stand-in for a trusted execution environment.
//!
//! NOT A SECURITY BOUNDARY. Isolation here is a matter of API shape: the
//! root-of-trust key stays inside [`Manufacturer`], the platform key inside
//! [`Platform`], and each isolated computation's key pair, session key and
//! decrypted source are reachable only through
//! [`Platform::ic_handle_message`]. Nothing is memory-encrypted and every
//! secret lives in ordinary process memory.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::build_check::{build_executable, compare_executables, BuildError, BuilderConfig};
use crate::certs::{issue_cc, issue_icc, issue_pc, CcExecutable, IcCertificate, PlatformCertificate};
use crate::crypto::{self, hash, measure, KeyPair, Measurement, SecureRng, SessionKey, PUBLIC_KEY_LEN};
use crate::protocol::{keyshare_transcript, ErrorCode, ProtocolMessage};
use crate::symexec::{explore, init_analysis, AnalyzerConfig, PropertySet};
use crate::wasm::parse_module;

/// Executables above this size travel in the CC as a digest only.
pub const CC_EMBED_LIMIT: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TeeError {
    #[error("image {0} is empty")]
    EmptyImage(&'static str),
    #[error("image {image} is malformed: {detail}")]
    InvalidImage { image: &'static str, detail: String },
    #[error("no isolated computation with id {0}")]
    UnknownIc(IcId),
    #[error("protocol violation in state {state}: unexpected {kind}")]
    ProtocolViolation { state: &'static str, kind: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IcId(pub u64);

impl fmt::Display for IcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ic{}", self.0)
    }
}

/// Holder of the root-of-trust key pair. There is deliberately no accessor
/// or serialization for the private half.
pub struct Manufacturer {
    rot: KeyPair,
}

impl Manufacturer {
    pub fn new(rng: &mut dyn SecureRng) -> Self {
        Manufacturer {
            rot: KeyPair::generate(rng),
        }
    }

    pub fn rot_public(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.rot.public()
    }
}

impl fmt::Debug for Manufacturer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Manufacturer")
            .field("rot_pub", &Hex(&self.rot.public()))
            .finish()
    }
}

/// Which party runs the platform. Only informational; the protocol is the
/// same in every arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HostRole {
    #[default]
    Consumer,
    Provider,
    ThirdParty,
}

pub struct Platform {
    keys: KeyPair,
    pc: PlatformCertificate,
    host: HostRole,
    rng: Mutex<ChaCha20Rng>,
    next_id: AtomicU64,
    ics: Mutex<BTreeMap<IcId, Arc<Mutex<IsolatedComputation>>>>,
}

/// The only per-IC data a host may inspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcInfo {
    pub m_ic: Measurement,
    pub ic_pub: [u8; PUBLIC_KEY_LEN],
}

pub fn platform_setup(man: &Manufacturer, rng: &mut dyn SecureRng) -> Platform {
    let keys = KeyPair::generate(rng);
    let pc = issue_pc(keys.public(), &man.rot);
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    Platform {
        keys,
        pc,
        host: HostRole::default(),
        rng: Mutex::new(ChaCha20Rng::from_seed(seed)),
        next_id: AtomicU64::new(1),
        ics: Mutex::new(BTreeMap::new()),
    }
}

impl Platform {
    pub fn with_host(mut self, host: HostRole) -> Self {
        self.host = host;
        self
    }

    pub fn host(&self) -> HostRole {
        self.host
    }

    pub fn pc(&self) -> &PlatformCertificate {
        &self.pc
    }

    pub fn plat_public(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.keys.public()
    }

    pub fn ic_info(&self, id: IcId) -> Option<IcInfo> {
        let ic = self.ics.lock().unwrap().get(&id).cloned()?;
        let ic = ic.lock().unwrap();
        Some(IcInfo {
            m_ic: ic.m_ic,
            ic_pub: ic.keys.public(),
        })
    }

    pub fn loaded(&self) -> Vec<IcId> {
        self.ics.lock().unwrap().keys().copied().collect()
    }

    /// Measures the images, creates the IC key pair and certifies
    /// `(m_ic, ic_pub)` under the platform key.
    pub fn load_ic(&self, x_code: &[u8], b_config: &[u8], p_props: &[u8]) -> Result<(IcId, IcCertificate), TeeError> {
        for (name, image) in [("x_code", x_code), ("b_config", b_config), ("p_props", p_props)] {
            if image.is_empty() {
                return Err(TeeError::EmptyImage(name));
            }
        }
        let invalid = |image: &'static str| move |e: &dyn fmt::Display| TeeError::InvalidImage {
            image,
            detail: e.to_string(),
        };
        let analyzer = AnalyzerConfig::from_bytes(x_code).map_err(|e| invalid("x_code")(&e))?;
        if !analyzer.is_supported() {
            return Err(invalid("x_code")(&format!("unsupported semantics {:?}", analyzer.spec_version)));
        }
        let builder = BuilderConfig::from_bytes(b_config).map_err(|e| invalid("b_config")(&e))?;
        let props = PropertySet::from_bytes(p_props).map_err(|e| invalid("p_props")(&e))?;

        let m_ic = measure(x_code, b_config, p_props);
        let mut ic_rng = {
            let mut seed = [0u8; 32];
            self.rng.lock().unwrap().fill_bytes(&mut seed);
            ChaCha20Rng::from_seed(seed)
        };
        let keys = KeyPair::generate(&mut ic_rng);
        let icc = issue_icc(m_ic, keys.public(), &self.keys);
        let id = IcId(self.next_id.fetch_add(1, Ordering::Relaxed));
        let ic = IsolatedComputation {
            digests: [hash(x_code), hash(b_config), hash(p_props)],
            analyzer,
            builder,
            props,
            m_ic,
            keys,
            icc: icc.clone(),
            pc: self.pc.clone(),
            rng: ic_rng,
            phase: IcPhase::Init,
            session: 0,
            key: None,
        };
        self.ics.lock().unwrap().insert(id, Arc::new(Mutex::new(ic)));
        log::info!("loaded {id} with measurement {m_ic}");
        Ok((id, icc))
    }

    /// Feeds one message to an IC. Protocol violations come back as an
    /// `Error` frame and leave the IC aborted.
    pub fn ic_handle_message(&self, id: IcId, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, TeeError> {
        let ic = self.ics.lock().unwrap().get(&id).cloned().ok_or(TeeError::UnknownIc(id))?;
        let mut ic = ic.lock().unwrap();
        Ok(ic.handle(msg))
    }

    pub fn unload(&self, id: IcId) -> bool {
        self.ics.lock().unwrap().remove(&id).is_some()
    }
}

impl fmt::Debug for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Platform")
            .field("plat_pub", &Hex(&self.keys.public()))
            .field("host", &self.host)
            .field("ics", &self.loaded())
            .finish()
    }
}

struct Hex<'a>(&'a [u8]);

impl fmt::Debug for Hex<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IcPhase {
    Init,
    Greeted,
    Agreed,
    Attested,
    Negotiated,
    Done,
    Aborted,
}

impl IcPhase {
    fn name(self) -> &'static str {
        match self {
            IcPhase::Init => "init",
            IcPhase::Greeted => "greeted",
            IcPhase::Agreed => "agreed",
            IcPhase::Attested => "attested",
            IcPhase::Negotiated => "negotiated",
            IcPhase::Done => "done",
            IcPhase::Aborted => "aborted",
        }
    }
}

struct IsolatedComputation {
    digests: [[u8; 32]; 3],
    analyzer: AnalyzerConfig,
    builder: BuilderConfig,
    props: PropertySet,
    m_ic: Measurement,
    keys: KeyPair,
    icc: IcCertificate,
    pc: PlatformCertificate,
    rng: ChaCha20Rng,
    phase: IcPhase,
    session: u64,
    key: Option<SessionKey>,
}

impl IsolatedComputation {
    fn handle(&mut self, msg: &ProtocolMessage) -> Vec<ProtocolMessage> {
        match self.step(msg) {
            Ok(out) => out,
            Err((code, text)) => {
                self.phase = IcPhase::Aborted;
                self.key = None;
                vec![ProtocolMessage::error(code, text)]
            }
        }
    }

    fn step(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, (ErrorCode, String)> {
        use ProtocolMessage as M;
        let [x, b, p] = self.digests;
        match (self.phase, msg) {
            (IcPhase::Init, M::Hello { session }) => {
                self.session = *session;
                self.phase = IcPhase::Greeted;
                Ok(vec![M::Hello { session: *session }])
            }
            (IcPhase::Greeted, M::AgreeParams { .. }) => {
                self.phase = IcPhase::Agreed;
                Ok(vec![M::AgreeParams { x, b, p }])
            }
            (IcPhase::Agreed, M::RequestAttestation) => {
                self.phase = IcPhase::Attested;
                Ok(vec![M::AttestationResponse {
                    pc: self.pc.clone(),
                    icc: self.icc.clone(),
                }])
            }
            (IcPhase::Attested, M::KeyShare { share, .. }) => {
                let (own, secret) = crypto::dh_keypair(&mut self.rng);
                let key = crypto::dh_shared(&secret, share)
                    .map_err(|e| (ErrorCode::NegotiationFailed, e.to_string()))?;
                let signature = self.keys.sign(&keyshare_transcript(self.session, &own, share)).to_vec();
                self.key = Some(key);
                self.phase = IcPhase::Negotiated;
                Ok(vec![M::KeyShare { share: own, signature }])
            }
            (IcPhase::Negotiated, M::SubmitJob { s_t, e }) => {
                let cc = self.analyse(s_t, e)?;
                self.phase = IcPhase::Done;
                self.key = None;
                Ok(vec![M::ComplianceResult { cc }])
            }
            (IcPhase::Aborted, _) => Err((ErrorCode::ProtocolViolation, "computation aborted".into())),
            (phase, msg) => {
                let v = TeeError::ProtocolViolation {
                    state: phase.name(),
                    kind: msg.kind_name(),
                };
                Err((ErrorCode::ProtocolViolation, v.to_string()))
            }
        }
    }

    /// Decrypts S, builds E', analyses it and certifies the result. Error
    /// texts never include source-derived bytes beyond positions.
    fn analyse(&mut self, s_t: &[u8], e: &[u8]) -> Result<crate::certs::ComplianceCertificate, (ErrorCode, String)> {
        let key = self.key.as_ref().ok_or((ErrorCode::Internal, "no session key".to_string()))?;
        let source = crypto::sym_decrypt(key.as_bytes(), s_t)
            .map_err(|_| (ErrorCode::DecryptFailed, "source failed authenticated decryption".to_string()))?;
        let h_s = hash(&source);
        let text = String::from_utf8(source)
            .map_err(|_| (ErrorCode::BuildFailed, "source is not valid UTF-8".to_string()))?;
        let (e_prime, map) = build_executable(&self.builder, &text).map_err(|err| match err {
            BuildError::BuildFailed { line, col, .. } => (ErrorCode::BuildFailed, format!("build failed at {line}:{col}")),
            other => (ErrorCode::BuildFailed, other.to_string()),
        })?;
        drop(text);
        let module = parse_module(&e_prime).map_err(|err| (ErrorCode::AnalysisFailed, err.to_string()))?;
        let analysis = init_analysis(module, map, self.props.clone())
            .map_err(|err| (ErrorCode::AnalysisFailed, err.to_string()))?;
        let mut report = explore(&analysis, &self.analyzer.bounds);
        let embedded = if self.builder.return_executable {
            report.eo = true;
            e_prime
        } else {
            report.eo = compare_executables(e, &e_prime);
            e.to_vec()
        };
        let executable = if embedded.len() > CC_EMBED_LIMIT {
            CcExecutable::Digest(hash(&embedded))
        } else {
            CcExecutable::Embedded(embedded)
        };
        log::info!("analysis finished: eo={} properties={}", report.eo, report.outcomes.len());
        Ok(issue_cc(h_s, executable, report, &self.keys))
    }
}
