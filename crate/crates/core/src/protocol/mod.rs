//! The three-party protocol: framing, the provider and consumer actors, and
//! transports that connect a provider to an isolated computation.
//!
//! Both actors are sans-I/O state machines. [`provider_run`] drives a
//! [`Provider`] over any [`Transport`]; one request is answered by exactly
//! one reply, so the exchange is strictly alternating:
//!
//! ```text
//! provider                 IC
//!   Hello ---------------->   (session id)
//!   <---------------- Hello
//!   AgreeParams ---------->   (digests of X, B, P)
//!   <---------- AgreeParams
//!   RequestAttestation --->
//!   <-- AttestationResponse   (PC, ICC)
//!   KeyShare ------------->   (provider share)
//!   <------------- KeyShare   (IC share, signed by ic_priv)
//!   SubmitJob ------------>   (S under T, E)
//!   <----- ComplianceResult   (CC)
//! ```
//!
//! The provider then hands `Forward(PC, ICC, CC, OC?)` to the consumer.

mod message;
mod net;
mod registry;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use message::{
    decode_frame, decode_frame_with_cap, encode_frame, read_frame, write_frame, ErrorCode, FrameError,
    ProtocolMessage, DEFAULT_FRAME_CAP, FRAME_MAGIC, FRAME_VERSION, HEADER_LEN,
};
pub use net::{receive_forward, send_forward, serve_ic, StreamTransport};
pub use registry::{Registry, RegistryError, REGISTRY_EXTENSION, REGISTRY_MAGIC};

use crate::canon::Writer;
use crate::certs::{
    issue_oc, verify_attestation, verify_chain, CertificateChain, ComplianceCertificate, IcCertificate,
    OriginCertificate, PlatformCertificate, Stage, VerifyOutcome,
};
use crate::crypto::{self, hash, measure, DhSecret, KeyPair, SecureRng, SessionKey, PUBLIC_KEY_LEN};
use crate::tee::{IcId, Platform};

/// Bytes the IC signs to bind its key share to the session and to the
/// provider's share.
pub fn keyshare_transcript(session: u64, ic_share: &[u8; 32], provider_share: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("tcpa/keyshare/v1").u64(session).bytes(ic_share).bytes(provider_share);
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Init,
    Attesting,
    Negotiated,
    Submitted,
    Done,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("attestation failed at step {0}")]
    AttestationFailed(Stage),
    #[error("key negotiation failed: {0}")]
    NegotiationFailed(String),
    #[error("transport: {0}")]
    TransportError(String),
    #[error("isolated computation reported {code:?}: {text}")]
    IcError { code: ErrorCode, text: String },
    #[error("unexpected {kind} in phase {phase:?}")]
    Unexpected { phase: Phase, kind: &'static str },
    #[error("compliance certificate rejected: {0}")]
    ResultRejected(String),
    #[error("actor already aborted")]
    Aborted,
    #[error("peer closed the connection")]
    Closed,
}

impl From<FrameError> for ProtocolError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Closed => ProtocolError::Closed,
            e => ProtocolError::TransportError(e.to_string()),
        }
    }
}

/// Everything a provider brings to a session.
#[derive(Debug)]
pub struct ProviderParams {
    pub session: u64,
    pub rot_pub: [u8; PUBLIC_KEY_LEN],
    pub x_code: Vec<u8>,
    pub b_config: Vec<u8>,
    pub p_props: Vec<u8>,
    pub source: String,
    pub executable: Vec<u8>,
    /// When present, an origin certificate is issued over (h(S), h(E)).
    pub origin_key: Option<KeyPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderOutcome {
    pub pc: PlatformCertificate,
    pub icc: IcCertificate,
    pub cc: ComplianceCertificate,
    pub oc: Option<OriginCertificate>,
}

impl ProviderOutcome {
    pub fn chain(&self) -> CertificateChain {
        CertificateChain {
            pc: self.pc.clone(),
            icc: self.icc.clone(),
            cc: self.cc.clone(),
            oc: self.oc.clone(),
        }
    }

    pub fn forward(&self) -> ProtocolMessage {
        ProtocolMessage::Forward {
            pc: self.pc.clone(),
            icc: self.icc.clone(),
            cc: self.cc.clone(),
            oc: self.oc.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Awaiting {
    Hello,
    Params,
    Attestation,
    KeyShare,
    Result,
}

pub struct Provider {
    params: ProviderParams,
    phase: Phase,
    awaiting: Awaiting,
    rng: ChaCha20Rng,
    attestation: Option<(PlatformCertificate, IcCertificate)>,
    dh: Option<([u8; 32], DhSecret)>,
    key: Option<SessionKey>,
    outcome: Option<ProviderOutcome>,
    farewell: Option<ProtocolMessage>,
}

impl Provider {
    pub fn new(params: ProviderParams, rng: &mut dyn SecureRng) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Provider {
            params,
            phase: Phase::Init,
            awaiting: Awaiting::Hello,
            rng: ChaCha20Rng::from_seed(seed),
            attestation: None,
            dh: None,
            key: None,
            outcome: None,
            farewell: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn outcome(&self) -> Option<&ProviderOutcome> {
        self.outcome.as_ref()
    }

    /// Error frame owed to the peer after an abort, handed out once.
    pub fn take_farewell(&mut self) -> Option<ProtocolMessage> {
        self.farewell.take()
    }

    pub fn start(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        if self.phase != Phase::Init {
            return Err(ProtocolError::Unexpected {
                phase: self.phase,
                kind: "start",
            });
        }
        self.phase = Phase::Attesting;
        Ok(ProtocolMessage::Hello {
            session: self.params.session,
        })
    }

    fn abort(&mut self, err: ProtocolError, code: ErrorCode) -> ProtocolError {
        self.phase = Phase::Aborted;
        self.key = None;
        self.dh = None;
        if !matches!(err, ProtocolError::IcError { .. }) {
            self.farewell = Some(ProtocolMessage::error(code, err.to_string()));
        }
        err
    }

    /// Consumes one reply and returns the next request, or `None` once the
    /// compliance certificate has been accepted.
    pub fn on_message(&mut self, msg: &ProtocolMessage) -> Result<Option<ProtocolMessage>, ProtocolError> {
        use ProtocolMessage as M;
        if self.phase == Phase::Aborted {
            return Err(ProtocolError::Aborted);
        }
        if let M::Error { code, text } = msg {
            let err = ProtocolError::IcError {
                code: ErrorCode::from_code(*code),
                text: text.clone(),
            };
            return Err(self.abort(err, ErrorCode::Internal));
        }
        let p = &self.params;
        match (self.awaiting, msg) {
            (Awaiting::Hello, M::Hello { session }) if *session == p.session => {
                self.awaiting = Awaiting::Params;
                Ok(Some(M::AgreeParams {
                    x: hash(&p.x_code),
                    b: hash(&p.b_config),
                    p: hash(&p.p_props),
                }))
            }
            (Awaiting::Params, M::AgreeParams { x, b, p: pp }) => {
                if [*x, *b, *pp] != [hash(&p.x_code), hash(&p.b_config), hash(&p.p_props)] {
                    log::warn!("peer announced different parameter digests; attestation decides");
                }
                self.awaiting = Awaiting::Attestation;
                Ok(Some(M::RequestAttestation))
            }
            (Awaiting::Attestation, M::AttestationResponse { pc, icc }) => {
                let m_exp = measure(&p.x_code, &p.b_config, &p.p_props);
                if let Err((stage, _)) = verify_attestation(pc, icc, &p.rot_pub, &m_exp) {
                    return Err(self.abort(ProtocolError::AttestationFailed(stage), ErrorCode::AttestationFailed));
                }
                self.attestation = Some((pc.clone(), icc.clone()));
                let (share, secret) = crypto::dh_keypair(&mut self.rng);
                self.dh = Some((share, secret));
                self.awaiting = Awaiting::KeyShare;
                Ok(Some(M::KeyShare {
                    share,
                    signature: Vec::new(),
                }))
            }
            (Awaiting::KeyShare, M::KeyShare { share, signature }) => {
                let (own, secret) = self.dh.take().expect("share sent before awaiting KeyShare");
                let ic_pub = self.attestation.as_ref().unwrap().1.ic_pub;
                let signed = keyshare_transcript(p.session, share, &own);
                if !crypto::verify(signature, &signed, &ic_pub).unwrap_or(false) {
                    let err = ProtocolError::NegotiationFailed("IC share signature invalid".into());
                    return Err(self.abort(err, ErrorCode::NegotiationFailed));
                }
                let key = match crypto::dh_shared(&secret, share) {
                    Ok(k) => k,
                    Err(e) => return Err(self.abort(ProtocolError::NegotiationFailed(e.to_string()), ErrorCode::NegotiationFailed)),
                };
                self.phase = Phase::Negotiated;
                let s_t = crypto::sym_encrypt(key.as_bytes(), self.params.source.as_bytes(), &mut self.rng)
                    .expect("session keys have the AEAD key length");
                self.key = Some(key);
                self.phase = Phase::Submitted;
                self.awaiting = Awaiting::Result;
                Ok(Some(M::SubmitJob {
                    s_t,
                    e: self.params.executable.clone(),
                }))
            }
            (Awaiting::Result, M::ComplianceResult { cc }) => {
                let (pc, icc) = self.attestation.clone().unwrap();
                let h_s = hash(p.source.as_bytes());
                let problem = if !cc.verify(&icc.ic_pub) {
                    Some("signature does not verify under the attested IC key")
                } else if cc.h_s != h_s {
                    Some("source digest differs from the submitted source")
                } else {
                    None
                };
                if let Some(why) = problem {
                    return Err(self.abort(ProtocolError::ResultRejected(why.into()), ErrorCode::ProtocolViolation));
                }
                let oc = p
                    .origin_key
                    .as_ref()
                    .map(|a| issue_oc(h_s, hash(&p.executable), a));
                self.key = None;
                self.phase = Phase::Done;
                self.outcome = Some(ProviderOutcome {
                    pc,
                    icc,
                    cc: cc.clone(),
                    oc,
                });
                Ok(None)
            }
            (_, msg) => {
                let err = ProtocolError::Unexpected {
                    phase: self.phase,
                    kind: msg.kind_name(),
                };
                Err(self.abort(err, ErrorCode::ProtocolViolation))
            }
        }
    }
}

/// A reliable, ordered carrier of protocol messages.
pub trait Transport {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError>;
}

/// Append-only record of every frame byte that crossed a transport, in
/// either direction. Cloning shares the buffer.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<u8>>>);

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, frame: &[u8]) {
        self.0.lock().unwrap().extend_from_slice(frame);
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Message types in the order they were recorded.
    pub fn message_kinds(&self) -> Vec<&'static str> {
        let bytes = self.bytes();
        let mut kinds = Vec::new();
        let mut rest = &bytes[..];
        while rest.len() >= HEADER_LEN {
            let len = u32::from_be_bytes(rest[6..10].try_into().unwrap()) as usize;
            let Some(frame) = rest.get(..HEADER_LEN + len) else { break };
            match decode_frame(frame) {
                Ok(m) => kinds.push(m.kind_name()),
                Err(_) => break,
            }
            rest = &rest[HEADER_LEN + len..];
        }
        kinds
    }
}

/// In-process transport straight into a platform's IC. Every message is
/// still framed, recorded and decoded, so this exercises the same bytes a
/// socket would carry.
pub struct LocalTransport<'a> {
    platform: &'a Platform,
    ic: IcId,
    inbox: VecDeque<Vec<u8>>,
    transcript: Transcript,
}

impl<'a> LocalTransport<'a> {
    pub fn new(platform: &'a Platform, ic: IcId, transcript: Transcript) -> Self {
        LocalTransport {
            platform,
            ic,
            inbox: VecDeque::new(),
            transcript,
        }
    }
}

impl Transport for LocalTransport<'_> {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        let frame = encode_frame(msg);
        self.transcript.record(&frame);
        let msg = decode_frame(&frame)?;
        let replies = self
            .platform
            .ic_handle_message(self.ic, &msg)
            .map_err(|e| ProtocolError::TransportError(e.to_string()))?;
        for r in replies {
            let frame = encode_frame(&r);
            self.transcript.record(&frame);
            self.inbox.push_back(frame);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        let frame = self
            .inbox
            .pop_front()
            .ok_or_else(|| ProtocolError::TransportError("no reply pending".into()))?;
        Ok(decode_frame(&frame)?)
    }
}

/// Runs a full provider session: attestation, key negotiation, job
/// submission and result check.
pub fn provider_run(
    transport: &mut dyn Transport,
    params: ProviderParams,
    rng: &mut dyn SecureRng,
) -> Result<ProviderOutcome, ProtocolError> {
    let mut provider = Provider::new(params, rng);
    let mut next = Some(provider.start()?);
    while let Some(msg) = next {
        transport.send(&msg)?;
        let reply = transport.recv()?;
        next = match provider.on_message(&reply) {
            Ok(n) => n,
            Err(e) => {
                if let Some(bye) = provider.take_farewell() {
                    // Best effort; the session is over either way.
                    let _ = transport.send(&bye);
                }
                return Err(e);
            }
        };
    }
    Ok(provider.outcome.expect("provider finished without an outcome"))
}

/// Agreed parameters a consumer checks a chain against.
#[derive(Debug, Clone)]
pub struct ConsumerParams {
    pub rot_pub: [u8; PUBLIC_KEY_LEN],
    pub x_code: Vec<u8>,
    pub b_config: Vec<u8>,
    pub p_props: Vec<u8>,
    pub a_pub: Option<[u8; PUBLIC_KEY_LEN]>,
}

/// Recomputes the expected measurement and verifies the whole chain,
/// requiring every property to be valid.
pub fn consumer_verify(
    chain: &CertificateChain,
    rot_pub: &[u8],
    x_code: &[u8],
    b_config: &[u8],
    p_props: &[u8],
    a_pub: Option<&[u8]>,
) -> VerifyOutcome {
    let m_exp = measure(x_code, b_config, p_props);
    verify_chain(chain, rot_pub, &m_exp, true, a_pub)
}

pub struct Consumer {
    params: ConsumerParams,
    phase: Phase,
    verdict: Option<VerifyOutcome>,
}

impl Consumer {
    pub fn new(params: ConsumerParams) -> Self {
        Consumer {
            params,
            phase: Phase::Init,
            verdict: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn verdict(&self) -> Option<VerifyOutcome> {
        self.verdict
    }

    /// Accepts exactly one `Forward`; anything else aborts.
    pub fn on_message(&mut self, msg: &ProtocolMessage) -> Result<VerifyOutcome, ProtocolError> {
        if self.phase != Phase::Init {
            return Err(ProtocolError::Unexpected {
                phase: self.phase,
                kind: msg.kind_name(),
            });
        }
        let ProtocolMessage::Forward { pc, icc, cc, oc } = msg else {
            self.phase = Phase::Aborted;
            return Err(ProtocolError::Unexpected {
                phase: Phase::Init,
                kind: msg.kind_name(),
            });
        };
        let chain = CertificateChain {
            pc: pc.clone(),
            icc: icc.clone(),
            cc: cc.clone(),
            oc: oc.clone(),
        };
        let p = &self.params;
        let v = consumer_verify(
            &chain,
            &p.rot_pub,
            &p.x_code,
            &p.b_config,
            &p.p_props,
            p.a_pub.as_ref().map(|k| &k[..]),
        );
        self.phase = if v.is_accepted() { Phase::Done } else { Phase::Aborted };
        self.verdict = Some(v);
        Ok(v)
    }
}
