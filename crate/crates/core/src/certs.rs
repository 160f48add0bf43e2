//! The four certificates of the attestation chain and its verification.
//!
//! File layout of every certificate: `"TCPC"`, version byte, kind byte, the
//! canonical body fields, then the 64-byte signature as a final field. The
//! signature covers everything before it, header included.
//!
//! | kind | certificate | body fields                          | signer   |
//! |------|-------------|--------------------------------------|----------|
//! | 1    | PC          | plat_pub                             | RoT      |
//! | 2    | ICC         | m_ic, ic_pub                         | platform |
//! | 3    | CC          | h_s, e_mode, e, report               | IC       |
//! | 4    | OC          | h_s, e_digest                        | provider |
//! | 5    | chain       | pc, icc, cc, has_oc, [oc] (unsigned) | -        |

use std::fmt;

use thiserror::Error;

use crate::canon::{CanonError, Reader, Writer};
use crate::crypto::{self, hash, KeyPair, Measurement, DIGEST_LEN, PUBLIC_KEY_LEN, SIGNATURE_LEN};
use crate::symexec::{AnalysisReport, Outcome, ReportError};

pub const MAGIC: &[u8; 4] = b"TCPC";
pub const VERSION: u8 = 1;
pub const FILE_EXTENSION: &str = "tcpc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CertKind {
    Platform = 1,
    IsolatedComputation = 2,
    Compliance = 3,
    Origin = 4,
    Chain = 5,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("bad certificate magic")]
    BadMagic,
    #[error("unsupported certificate version {0}")]
    BadVersion(u8),
    #[error("expected certificate kind {expected:?}, found byte {found}")]
    WrongKind { expected: CertKind, found: u8 },
    #[error("malformed certificate body: {0}")]
    Malformed(#[from] CanonError),
    #[error("malformed embedded report: {0}")]
    Report(#[from] ReportError),
    #[error("unknown executable mode {0}")]
    BadMode(u8),
}

fn header(kind: CertKind) -> Writer {
    let mut head = MAGIC.to_vec();
    head.extend_from_slice(&[VERSION, kind as u8]);
    Writer::with_prefix(&head)
}

fn open(bytes: &[u8], kind: CertKind) -> Result<Reader<'_>, CertError> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(CertError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(CertError::BadVersion(bytes[4]));
    }
    if bytes[5] != kind as u8 {
        return Err(CertError::WrongKind {
            expected: kind,
            found: bytes[5],
        });
    }
    Ok(Reader::new(&bytes[6..]))
}

fn append_signature(mut signed: Vec<u8>, sig: &[u8; SIGNATURE_LEN]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(sig);
    signed.extend_from_slice(w.as_slice());
    signed
}

fn sig_ok(sig: &[u8], signed: &[u8], public: &[u8]) -> Result<(), Rejection> {
    match crypto::verify(sig, signed, public) {
        Ok(true) => Ok(()),
        Ok(false) => Err(Rejection::BadSignature),
        Err(_) => Err(Rejection::MalformedKey),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformCertificate {
    pub plat_pub: [u8; PUBLIC_KEY_LEN],
    pub signature: [u8; SIGNATURE_LEN],
}

impl PlatformCertificate {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut w = header(CertKind::Platform);
        w.bytes(&self.plat_pub);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        append_signature(self.signed_bytes(), &self.signature)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = open(bytes, CertKind::Platform)?;
        let plat_pub = r.fixed()?;
        let signature = r.fixed()?;
        r.finish()?;
        Ok(PlatformCertificate { plat_pub, signature })
    }

    pub fn verify(&self, rot_pub: &[u8]) -> bool {
        sig_ok(&self.signature, &self.signed_bytes(), rot_pub).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcCertificate {
    pub m_ic: Measurement,
    pub ic_pub: [u8; PUBLIC_KEY_LEN],
    pub signature: [u8; SIGNATURE_LEN],
}

impl IcCertificate {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut w = header(CertKind::IsolatedComputation);
        w.bytes(self.m_ic.as_bytes()).bytes(&self.ic_pub);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        append_signature(self.signed_bytes(), &self.signature)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = open(bytes, CertKind::IsolatedComputation)?;
        let m_ic = Measurement::from_encoded(r.fixed()?);
        let ic_pub = r.fixed()?;
        let signature = r.fixed()?;
        r.finish()?;
        Ok(IcCertificate {
            m_ic,
            ic_pub,
            signature,
        })
    }

    pub fn verify(&self, plat_pub: &[u8]) -> bool {
        sig_ok(&self.signature, &self.signed_bytes(), plat_pub).is_ok()
    }
}

/// How a compliance certificate carries the executable.
#[derive(Clone, PartialEq, Eq)]
pub enum CcExecutable {
    /// The executable bytes themselves.
    Embedded(Vec<u8>),
    /// Only its digest; the bytes travel separately. An extension for
    /// large executables.
    Digest([u8; DIGEST_LEN]),
}

impl CcExecutable {
    pub fn digest(&self) -> [u8; DIGEST_LEN] {
        match self {
            CcExecutable::Embedded(e) => hash(e),
            CcExecutable::Digest(d) => *d,
        }
    }

    fn mode(&self) -> u8 {
        match self {
            CcExecutable::Embedded(_) => 0,
            CcExecutable::Digest(_) => 1,
        }
    }
}

impl fmt::Debug for CcExecutable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CcExecutable::Embedded(e) => write!(f, "Embedded({} bytes)", e.len()),
            CcExecutable::Digest(d) => write!(f, "Digest({})", hex(d)),
        }
    }
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplianceCertificate {
    pub h_s: [u8; DIGEST_LEN],
    pub executable: CcExecutable,
    pub report: AnalysisReport,
    pub signature: [u8; SIGNATURE_LEN],
}

impl ComplianceCertificate {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut w = header(CertKind::Compliance);
        w.bytes(&self.h_s).u8(self.executable.mode());
        match &self.executable {
            CcExecutable::Embedded(e) => w.bytes(e),
            CcExecutable::Digest(d) => w.bytes(d),
        };
        w.bytes(&self.report.to_bytes());
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        append_signature(self.signed_bytes(), &self.signature)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = open(bytes, CertKind::Compliance)?;
        let h_s = r.fixed()?;
        let executable = match r.u8()? {
            0 => CcExecutable::Embedded(r.bytes()?.to_vec()),
            1 => CcExecutable::Digest(r.fixed()?),
            m => return Err(CertError::BadMode(m)),
        };
        let report = AnalysisReport::from_bytes(r.bytes()?)?;
        let signature = r.fixed()?;
        r.finish()?;
        Ok(ComplianceCertificate {
            h_s,
            executable,
            report,
            signature,
        })
    }

    pub fn verify(&self, ic_pub: &[u8]) -> bool {
        sig_ok(&self.signature, &self.signed_bytes(), ic_pub).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OriginCertificate {
    pub h_s: [u8; DIGEST_LEN],
    pub e_digest: [u8; DIGEST_LEN],
    pub signature: [u8; SIGNATURE_LEN],
}

impl OriginCertificate {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut w = header(CertKind::Origin);
        w.bytes(&self.h_s).bytes(&self.e_digest);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        append_signature(self.signed_bytes(), &self.signature)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = open(bytes, CertKind::Origin)?;
        let h_s = r.fixed()?;
        let e_digest = r.fixed()?;
        let signature = r.fixed()?;
        r.finish()?;
        Ok(OriginCertificate {
            h_s,
            e_digest,
            signature,
        })
    }

    pub fn verify(&self, a_pub: &[u8]) -> bool {
        sig_ok(&self.signature, &self.signed_bytes(), a_pub).is_ok()
    }
}

pub fn issue_pc(plat_pub: [u8; PUBLIC_KEY_LEN], rot: &KeyPair) -> PlatformCertificate {
    let mut c = PlatformCertificate {
        plat_pub,
        signature: [0; SIGNATURE_LEN],
    };
    c.signature = rot.sign(&c.signed_bytes());
    c
}

pub fn issue_icc(m_ic: Measurement, ic_pub: [u8; PUBLIC_KEY_LEN], plat: &KeyPair) -> IcCertificate {
    let mut c = IcCertificate {
        m_ic,
        ic_pub,
        signature: [0; SIGNATURE_LEN],
    };
    c.signature = plat.sign(&c.signed_bytes());
    c
}

pub fn issue_cc(
    h_s: [u8; DIGEST_LEN],
    executable: CcExecutable,
    report: AnalysisReport,
    ic: &KeyPair,
) -> ComplianceCertificate {
    let mut c = ComplianceCertificate {
        h_s,
        executable,
        report,
        signature: [0; SIGNATURE_LEN],
    };
    c.signature = ic.sign(&c.signed_bytes());
    c
}

pub fn issue_oc(h_s: [u8; DIGEST_LEN], e_digest: [u8; DIGEST_LEN], a: &KeyPair) -> OriginCertificate {
    let mut c = OriginCertificate {
        h_s,
        e_digest,
        signature: [0; SIGNATURE_LEN],
    };
    c.signature = a.sign(&c.signed_bytes());
    c
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateChain {
    pub pc: PlatformCertificate,
    pub icc: IcCertificate,
    pub cc: ComplianceCertificate,
    pub oc: Option<OriginCertificate>,
}

impl CertificateChain {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = header(CertKind::Chain);
        w.bytes(&self.pc.encode())
            .bytes(&self.icc.encode())
            .bytes(&self.cc.encode());
        match &self.oc {
            Some(oc) => w.bool(true).bytes(&oc.encode()),
            None => w.bool(false),
        };
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = open(bytes, CertKind::Chain)?;
        let pc = PlatformCertificate::decode(r.bytes()?)?;
        let icc = IcCertificate::decode(r.bytes()?)?;
        let cc = ComplianceCertificate::decode(r.bytes()?)?;
        let oc = if r.bool()? {
            Some(OriginCertificate::decode(r.bytes()?)?)
        } else {
            None
        };
        r.finish()?;
        Ok(CertificateChain { pc, icc, cc, oc })
    }
}

/// Verification stages in the order they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    PcSignature,
    IccSignature,
    Measurement,
    CcSignature,
    Report,
    Origin,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::PcSignature,
        Stage::IccSignature,
        Stage::Measurement,
        Stage::CcSignature,
        Stage::Report,
        Stage::Origin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::PcSignature => "pc_signature",
            Stage::IccSignature => "icc_signature",
            Stage::Measurement => "measurement",
            Stage::CcSignature => "cc_signature",
            Stage::Report => "report",
            Stage::Origin => "origin",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn code(self) -> u8 {
        Stage::ALL.iter().position(|s| *s == self).unwrap() as u8
    }

    pub fn from_code(c: u8) -> Option<Stage> {
        Stage::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    BadSignature,
    MalformedKey,
    MeasurementMismatch,
    ExecutableMismatch,
    PropertyNotValid,
    /// OC digests disagree with the CC.
    DigestMismatch,
    /// An origin key was supplied but the chain has no OC.
    MissingOrigin,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerifyOutcome {
    Accepted,
    Rejected { stage: Stage, reason: Rejection },
}

impl VerifyOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, VerifyOutcome::Accepted)
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            VerifyOutcome::Accepted => None,
            VerifyOutcome::Rejected { stage, .. } => Some(*stage),
        }
    }
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyOutcome::Accepted => f.write_str("accepted"),
            VerifyOutcome::Rejected { stage, reason } => write!(f, "rejected(step={stage}, {reason})"),
        }
    }
}

/// Attestation prefix of the chain: PC under `rot_pub`, ICC under the
/// certified platform key, then the measurement.
pub fn verify_attestation(
    pc: &PlatformCertificate,
    icc: &IcCertificate,
    rot_pub: &[u8],
    m_exp: &Measurement,
) -> Result<(), (Stage, Rejection)> {
    sig_ok(&pc.signature, &pc.signed_bytes(), rot_pub).map_err(|r| (Stage::PcSignature, r))?;
    sig_ok(&icc.signature, &icc.signed_bytes(), &pc.plat_pub).map_err(|r| (Stage::IccSignature, r))?;
    if icc.m_ic != *m_exp {
        return Err((Stage::Measurement, Rejection::MeasurementMismatch));
    }
    Ok(())
}

/// Runs every stage in order; the first failure decides the outcome.
/// The origin stage runs only when `a_pub` is given.
pub fn verify_chain(
    chain: &CertificateChain,
    rot_pub: &[u8],
    m_exp: &Measurement,
    require_all_valid: bool,
    a_pub: Option<&[u8]>,
) -> VerifyOutcome {
    let run = || -> Result<(), (Stage, Rejection)> {
        verify_attestation(&chain.pc, &chain.icc, rot_pub, m_exp)?;
        let cc = &chain.cc;
        sig_ok(&cc.signature, &cc.signed_bytes(), &chain.icc.ic_pub).map_err(|r| (Stage::CcSignature, r))?;
        if require_all_valid {
            if !cc.report.eo {
                return Err((Stage::Report, Rejection::ExecutableMismatch));
            }
            if cc.report.outcomes.iter().any(|o| o.outcome != Outcome::Valid) {
                return Err((Stage::Report, Rejection::PropertyNotValid));
            }
        }
        if let Some(a_pub) = a_pub {
            let oc = chain.oc.as_ref().ok_or((Stage::Origin, Rejection::MissingOrigin))?;
            sig_ok(&oc.signature, &oc.signed_bytes(), a_pub).map_err(|r| (Stage::Origin, r))?;
            if oc.h_s != cc.h_s || oc.e_digest != cc.executable.digest() {
                return Err((Stage::Origin, Rejection::DigestMismatch));
            }
        }
        Ok(())
    };
    match run() {
        Ok(()) => VerifyOutcome::Accepted,
        Err((stage, reason)) => VerifyOutcome::Rejected { stage, reason },
    }
}
