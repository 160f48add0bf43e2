use std::io::{Read, Write};

use thiserror::Error;

use crate::canon::{CanonError, Reader, Writer};
use crate::certs::{CertError, ComplianceCertificate, IcCertificate, OriginCertificate, PlatformCertificate};
use crate::crypto::DIGEST_LEN;

pub const FRAME_MAGIC: &[u8; 4] = b"TCPA";
pub const FRAME_VERSION: u8 = 1;
/// magic, version, type, length
pub const HEADER_LEN: usize = 10;
pub const DEFAULT_FRAME_CAP: u64 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("frame declares {declared} payload bytes but {actual} are present")]
    LengthMismatch { declared: u64, actual: u64 },
    #[error("declared payload length {declared} exceeds the cap of {cap}")]
    Oversize { declared: u64, cap: u64 },
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error("connection closed")]
    Closed,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CanonError> for FrameError {
    fn from(e: CanonError) -> Self {
        FrameError::Payload(e.to_string())
    }
}

impl From<CertError> for FrameError {
    fn from(e: CertError) -> Self {
        FrameError::Payload(e.to_string())
    }
}

/// Error codes carried by [`ProtocolMessage::Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    ProtocolViolation,
    DecryptFailed,
    BuildFailed,
    AnalysisFailed,
    AttestationFailed,
    NegotiationFailed,
    Internal,
}

impl ErrorCode {
    const ALL: [ErrorCode; 7] = [
        ErrorCode::ProtocolViolation,
        ErrorCode::DecryptFailed,
        ErrorCode::BuildFailed,
        ErrorCode::AnalysisFailed,
        ErrorCode::AttestationFailed,
        ErrorCode::NegotiationFailed,
        ErrorCode::Internal,
    ];

    pub fn code(self) -> u16 {
        Self::ALL.iter().position(|c| *c == self).unwrap() as u16 + 1
    }

    pub fn from_code(c: u16) -> ErrorCode {
        c.checked_sub(1)
            .and_then(|i| Self::ALL.get(i as usize))
            .copied()
            .unwrap_or(ErrorCode::Internal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    Hello {
        session: u64,
    },
    /// Digests of the X, B and P images.
    AgreeParams {
        x: [u8; DIGEST_LEN],
        b: [u8; DIGEST_LEN],
        p: [u8; DIGEST_LEN],
    },
    RequestAttestation,
    AttestationResponse {
        pc: PlatformCertificate,
        icc: IcCertificate,
    },
    /// X25519 share; the signature is empty on the provider side.
    KeyShare {
        share: [u8; 32],
        signature: Vec<u8>,
    },
    SubmitJob {
        s_t: Vec<u8>,
        e: Vec<u8>,
    },
    ComplianceResult {
        cc: ComplianceCertificate,
    },
    Forward {
        pc: PlatformCertificate,
        icc: IcCertificate,
        cc: ComplianceCertificate,
        oc: Option<OriginCertificate>,
    },
    Error {
        code: u16,
        text: String,
    },
}

impl ProtocolMessage {
    pub fn type_byte(&self) -> u8 {
        match self {
            ProtocolMessage::Hello { .. } => 1,
            ProtocolMessage::AgreeParams { .. } => 2,
            ProtocolMessage::RequestAttestation => 3,
            ProtocolMessage::AttestationResponse { .. } => 4,
            ProtocolMessage::KeyShare { .. } => 5,
            ProtocolMessage::SubmitJob { .. } => 6,
            ProtocolMessage::ComplianceResult { .. } => 7,
            ProtocolMessage::Forward { .. } => 8,
            ProtocolMessage::Error { .. } => 9,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProtocolMessage::Hello { .. } => "Hello",
            ProtocolMessage::AgreeParams { .. } => "AgreeParams",
            ProtocolMessage::RequestAttestation => "RequestAttestation",
            ProtocolMessage::AttestationResponse { .. } => "AttestationResponse",
            ProtocolMessage::KeyShare { .. } => "KeyShare",
            ProtocolMessage::SubmitJob { .. } => "SubmitJob",
            ProtocolMessage::ComplianceResult { .. } => "ComplianceResult",
            ProtocolMessage::Forward { .. } => "Forward",
            ProtocolMessage::Error { .. } => "Error",
        }
    }

    pub fn error(code: ErrorCode, text: impl Into<String>) -> Self {
        ProtocolMessage::Error {
            code: code.code(),
            text: text.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, ProtocolMessage::Error { .. })
    }

    fn payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            ProtocolMessage::Hello { session } => {
                w.u64(*session);
            }
            ProtocolMessage::AgreeParams { x, b, p } => {
                w.bytes(x).bytes(b).bytes(p);
            }
            ProtocolMessage::RequestAttestation => {}
            ProtocolMessage::AttestationResponse { pc, icc } => {
                w.bytes(&pc.encode()).bytes(&icc.encode());
            }
            ProtocolMessage::KeyShare { share, signature } => {
                w.bytes(share).bytes(signature);
            }
            ProtocolMessage::SubmitJob { s_t, e } => {
                w.bytes(s_t).bytes(e);
            }
            ProtocolMessage::ComplianceResult { cc } => {
                w.bytes(&cc.encode());
            }
            ProtocolMessage::Forward { pc, icc, cc, oc } => {
                w.bytes(&pc.encode()).bytes(&icc.encode()).bytes(&cc.encode());
                match oc {
                    Some(oc) => w.bool(true).bytes(&oc.encode()),
                    None => w.bool(false),
                };
            }
            ProtocolMessage::Error { code, text } => {
                w.u16(*code).str(text);
            }
        }
        w.finish()
    }

    fn from_payload(ty: u8, payload: &[u8]) -> Result<Self, FrameError> {
        let mut r = Reader::new(payload);
        let msg = match ty {
            1 => ProtocolMessage::Hello { session: r.u64()? },
            2 => ProtocolMessage::AgreeParams {
                x: r.fixed()?,
                b: r.fixed()?,
                p: r.fixed()?,
            },
            3 => ProtocolMessage::RequestAttestation,
            4 => ProtocolMessage::AttestationResponse {
                pc: PlatformCertificate::decode(r.bytes()?)?,
                icc: IcCertificate::decode(r.bytes()?)?,
            },
            5 => ProtocolMessage::KeyShare {
                share: r.fixed()?,
                signature: r.bytes()?.to_vec(),
            },
            6 => ProtocolMessage::SubmitJob {
                s_t: r.bytes()?.to_vec(),
                e: r.bytes()?.to_vec(),
            },
            7 => ProtocolMessage::ComplianceResult {
                cc: ComplianceCertificate::decode(r.bytes()?)?,
            },
            8 => ProtocolMessage::Forward {
                pc: PlatformCertificate::decode(r.bytes()?)?,
                icc: IcCertificate::decode(r.bytes()?)?,
                cc: ComplianceCertificate::decode(r.bytes()?)?,
                oc: if r.bool()? {
                    Some(OriginCertificate::decode(r.bytes()?)?)
                } else {
                    None
                },
            },
            9 => ProtocolMessage::Error {
                code: r.u16()?,
                text: r.str()?.to_string(),
            },
            t => return Err(FrameError::UnknownType(t)),
        };
        r.finish()?;
        Ok(msg)
    }
}

pub fn encode_frame(msg: &ProtocolMessage) -> Vec<u8> {
    let payload = msg.payload();
    let len = u32::try_from(payload.len()).expect("frame payload longer than 4 GiB");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(msg.type_byte());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Checks a header and returns (type, declared payload length).
fn check_header(h: &[u8; HEADER_LEN], cap: u64) -> Result<(u8, u64), FrameError> {
    if &h[..4] != FRAME_MAGIC {
        return Err(FrameError::BadMagic);
    }
    if h[4] != FRAME_VERSION {
        return Err(FrameError::BadVersion(h[4]));
    }
    if !(1..=9).contains(&h[5]) {
        return Err(FrameError::UnknownType(h[5]));
    }
    let declared = u32::from_be_bytes(h[6..10].try_into().unwrap()) as u64;
    if declared > cap {
        return Err(FrameError::Oversize { declared, cap });
    }
    Ok((h[5], declared))
}

pub fn decode_frame(bytes: &[u8]) -> Result<ProtocolMessage, FrameError> {
    decode_frame_with_cap(bytes, DEFAULT_FRAME_CAP)
}

pub fn decode_frame_with_cap(bytes: &[u8], cap: u64) -> Result<ProtocolMessage, FrameError> {
    let Some(header) = bytes.first_chunk::<HEADER_LEN>() else {
        return Err(FrameError::LengthMismatch {
            declared: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    };
    let (ty, declared) = check_header(header, cap)?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != declared {
        return Err(FrameError::LengthMismatch { declared, actual });
    }
    ProtocolMessage::from_payload(ty, &bytes[HEADER_LEN..])
}

/// Reads one frame; the cap is enforced before the payload is allocated.
pub fn read_frame(r: &mut impl Read, cap: u64) -> Result<(ProtocolMessage, Vec<u8>), FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(FrameError::Closed),
            Ok(0) => {
                return Err(FrameError::LengthMismatch {
                    declared: HEADER_LEN as u64,
                    actual: filled as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (ty, declared) = check_header(&header, cap)?;
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + declared as usize, 0);
    r.read_exact(&mut frame[HEADER_LEN..]).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => FrameError::LengthMismatch {
            declared,
            actual: 0,
        },
        _ => FrameError::Io(e),
    })?;
    let msg = ProtocolMessage::from_payload(ty, &frame[HEADER_LEN..])?;
    Ok((msg, frame))
}

pub fn write_frame(w: &mut impl Write, msg: &ProtocolMessage) -> Result<Vec<u8>, FrameError> {
    let frame = encode_frame(msg);
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame)
}
