use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use super::{read_frame, write_frame, ProtocolError, ProtocolMessage, Transcript, Transport, DEFAULT_FRAME_CAP};
use crate::tee::{IcId, Platform};

/// Frames over any byte stream, recording both directions.
pub struct StreamTransport<S> {
    stream: S,
    cap: u64,
    transcript: Transcript,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S, transcript: Transcript) -> Self {
        StreamTransport {
            stream,
            cap: DEFAULT_FRAME_CAP,
            transcript,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        let frame = write_frame(&mut self.stream, msg)?;
        self.transcript.record(&frame);
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        let (msg, frame) = read_frame(&mut self.stream, self.cap)?;
        self.transcript.record(&frame);
        Ok(msg)
    }
}

/// Host side of one session: accepts a single connection and relays frames
/// between it and the IC until the IC answers with a result or an error, or
/// the peer hangs up.
pub fn serve_ic(listener: &TcpListener, platform: &Platform, ic: IcId, transcript: Transcript) -> Result<(), ProtocolError> {
    let (stream, peer) = listener.accept().map_err(|e| ProtocolError::TransportError(e.to_string()))?;
    log::info!("host: session from {peer} for {ic}");
    let mut t = StreamTransport::new(stream, transcript);
    loop {
        let msg = match t.recv() {
            Ok(m) => m,
            Err(ProtocolError::Closed) => {
                log::info!("host: peer closed the connection");
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let replies = platform
            .ic_handle_message(ic, &msg)
            .map_err(|e| ProtocolError::TransportError(e.to_string()))?;
        let mut finished = msg.is_error();
        for r in &replies {
            t.send(r)?;
            finished |= matches!(r, ProtocolMessage::ComplianceResult { .. } | ProtocolMessage::Error { .. });
        }
        if finished {
            log::info!("host: session for {ic} finished");
            return Ok(());
        }
    }
}

/// Delivers a `Forward` to a listening consumer.
pub fn send_forward(addr: impl ToSocketAddrs, msg: &ProtocolMessage, transcript: Transcript) -> Result<(), ProtocolError> {
    let stream = TcpStream::connect(addr).map_err(|e| ProtocolError::TransportError(e.to_string()))?;
    StreamTransport::new(stream, transcript).send(msg)
}

/// Accepts one connection and reads one message from it.
pub fn receive_forward(listener: &TcpListener, transcript: Transcript) -> Result<ProtocolMessage, ProtocolError> {
    let (stream, _) = listener.accept().map_err(|e| ProtocolError::TransportError(e.to_string()))?;
    StreamTransport::new(stream, transcript).recv()
}
