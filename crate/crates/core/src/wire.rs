//! Networked prover and verifier over a length-prefixed TCP protocol.
//!
//! Framing: a 4-byte big-endian length (covering everything after itself),
//! one tag byte, then the payload. Field elements travel as fixed-width
//! big-endian strings of `ceil(bits(p)/8)` bytes, the width being fixed by
//! the Setup message; a polynomial is a varint coefficient count followed by
//! the coefficients, low to high degree. Integers are big-endian throughout;
//! varints are unsigned LEB128. The exact grammar is in `docs/FORMATS.md`.
//!
//! Message order per session: Hello, Setup, then RoundPoly(i)/Challenge(i)
//! alternating for i = 1..n-1, then RoundPoly(n), then Verdict. The
//! challenge of the final round is drawn by the verifier but never sent.
//! Transport failures abort the session; they are never reported as
//! rejections.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;

use crate::cnf::{ThreeCnf, ThreeDnf};
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement, PrimeModulus};
use crate::primality::PrattCertificate;
use crate::prover::ProverStrategy;
use crate::unipoly::UnivariatePoly;
use crate::verifier::{
    drive_session, setup_failure_transcript, verify_setup, AbortCode, ChallengeSource, Mode,
    ReceivedPoly, RejectReason, RoundSource, SessionAbort, Transcript, Verdict, VerifySettings,
};

pub const PROTOCOL_VERSION: u8 = 1;
pub const DEFAULT_MAX_FRAME: u32 = 1 << 20;

// ---------------------------------------------------------------------------
// primitive codecs

/// Wire width of one field element for modulus `p`.
pub fn element_width(p: &BigUint) -> usize {
    ((p.bits() + 7) / 8) as usize
}

/// Fixed-width big-endian encoding (left-padded with zeros).
pub fn encode_element_fixed(value: &FieldElement, width: usize) -> Vec<u8> {
    let bytes = value.to_bytes();
    debug_assert!(bytes.len() <= width);
    let mut out = vec![0u8; width];
    out[width - bytes.len()..].copy_from_slice(&bytes);
    out
}

pub fn decode_element_fixed(
    bytes: &[u8],
    field: &Field,
    width: usize,
) -> std::result::Result<FieldElement, String> {
    if bytes.len() != width {
        return Err(format!(
            "field element has {} bytes, session width is {width}",
            bytes.len()
        ));
    }
    field
        .element_from_bytes(bytes)
        .map_err(|e| format!("field element not reduced: {e}"))
}

pub fn encode_varint(mut value: u64, out: &mut Vec<u8>) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn decode_varint(bytes: &[u8]) -> std::result::Result<(u64, usize), String> {
    let mut value = 0u64;
    let mut shift = 0u32;
    for (i, byte) in bytes.iter().enumerate() {
        if shift >= 64 {
            return Err("varint overflows 64 bits".into());
        }
        value |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
        shift += 7;
    }
    Err("truncated varint".into())
}

/// Polynomial payload: varint coefficient count, then that many fixed-width
/// coefficients, low to high degree.
pub fn encode_polynomial(poly: &UnivariatePoly, width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + poly.coefficient_count() * width);
    encode_varint(poly.coefficient_count() as u64, &mut out);
    for coefficient in poly.coefficients() {
        out.extend_from_slice(&encode_element_fixed(coefficient, width));
    }
    out
}

/// Returns the parsed polynomial and the declared coefficient count (the
/// degree cap applies to the declared count, before canonical trimming).
pub fn decode_polynomial(
    bytes: &[u8],
    field: &Field,
    width: usize,
) -> std::result::Result<(UnivariatePoly, usize), String> {
    let (count, used) = decode_varint(bytes)?;
    let body = &bytes[used..];
    let expected = (count as usize)
        .checked_mul(width)
        .ok_or("coefficient count overflows")?;
    if body.len() != expected {
        return Err(format!(
            "polynomial payload has {} coefficient bytes, count {count} needs {expected}",
            body.len()
        ));
    }
    let mut coefficients = Vec::with_capacity(count as usize);
    for chunk in body.chunks_exact(width) {
        coefficients.push(decode_element_fixed(chunk, field, width)?);
    }
    let poly = UnivariatePoly::new(field.clone(), coefficients)
        .map_err(|e| format!("invalid polynomial: {e}"))?;
    Ok((poly, count as usize))
}

// ---------------------------------------------------------------------------
// messages

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Hello {
        version: u8,
        session: u64,
        mode: Mode,
        variable_count: u32,
        clause_count: u32,
        formula_digest: [u8; 32],
    },
    Setup {
        session: u64,
        prime: BigUint,
        certificate_json: Vec<u8>,
    },
    RoundPoly {
        session: u64,
        round: u32,
        payload: Vec<u8>,
    },
    Challenge {
        session: u64,
        round: u32,
        value: Vec<u8>,
    },
    Verdict {
        session: u64,
        accept: bool,
        reject_reason: Option<RejectReason>,
    },
    Abort {
        session: u64,
        code: AbortCode,
        detail: String,
    },
}

const TAG_HELLO: u8 = 1;
const TAG_SETUP: u8 = 2;
const TAG_ROUND_POLY: u8 = 3;
const TAG_CHALLENGE: u8 = 4;
const TAG_VERDICT: u8 = 5;
const TAG_ABORT: u8 = 6;

fn mode_to_byte(mode: Mode) -> u8 {
    match mode {
        Mode::PaperStrict => 0,
        Mode::Relaxed => 1,
    }
}

fn mode_from_byte(byte: u8) -> std::result::Result<Mode, String> {
    match byte {
        0 => Ok(Mode::PaperStrict),
        1 => Ok(Mode::Relaxed),
        other => Err(format!("unknown mode byte {other}")),
    }
}

fn reject_reason_to_bytes(reason: &RejectReason, out: &mut Vec<u8>) {
    match reason {
        RejectReason::BadCertificate => out.push(1),
        RejectReason::PrimeOutOfRange => out.push(2),
        RejectReason::CoefficientOverflow { round } => {
            out.push(3);
            out.extend_from_slice(&(*round as u32).to_be_bytes());
        }
        RejectReason::RoundSumMismatch { round } => {
            out.push(4);
            out.extend_from_slice(&(*round as u32).to_be_bytes());
        }
        RejectReason::FinalCheckMismatch => out.push(5),
    }
}

fn reject_reason_from_bytes(r: &mut ByteReader) -> std::result::Result<RejectReason, String> {
    match r.u8()? {
        1 => Ok(RejectReason::BadCertificate),
        2 => Ok(RejectReason::PrimeOutOfRange),
        3 => Ok(RejectReason::CoefficientOverflow {
            round: r.u32()? as usize,
        }),
        4 => Ok(RejectReason::RoundSumMismatch {
            round: r.u32()? as usize,
        }),
        5 => Ok(RejectReason::FinalCheckMismatch),
        other => Err(format!("unknown reject reason code {other}")),
    }
}

fn abort_code_to_byte(code: AbortCode) -> u8 {
    match code {
        AbortCode::ProtocolOrder => 1,
        AbortCode::FrameTooLarge => 2,
        AbortCode::MalformedFrame => 3,
        AbortCode::VersionMismatch => 4,
        AbortCode::FormulaMismatch => 5,
        AbortCode::ProverCapacity => 6,
        AbortCode::Transport => 7,
        AbortCode::Internal => 8,
    }
}

fn abort_code_from_byte(byte: u8) -> std::result::Result<AbortCode, String> {
    match byte {
        1 => Ok(AbortCode::ProtocolOrder),
        2 => Ok(AbortCode::FrameTooLarge),
        3 => Ok(AbortCode::MalformedFrame),
        4 => Ok(AbortCode::VersionMismatch),
        5 => Ok(AbortCode::FormulaMismatch),
        6 => Ok(AbortCode::ProverCapacity),
        7 => Ok(AbortCode::Transport),
        8 => Ok(AbortCode::Internal),
        other => Err(format!("unknown abort code {other}")),
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, at: 0 }
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.at + n > self.bytes.len() {
            return Err("truncated message".into());
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> std::result::Result<u64, String> {
        let (value, used) = decode_varint(&self.bytes[self.at..])?;
        self.at += used;
        Ok(value)
    }

    fn rest(&mut self) -> &'a [u8] {
        let slice = &self.bytes[self.at..];
        self.at = self.bytes.len();
        slice
    }

    fn finish(&self) -> std::result::Result<(), String> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err("trailing bytes after message".into())
        }
    }
}

impl WireMessage {
    pub fn session(&self) -> u64 {
        match self {
            WireMessage::Hello { session, .. }
            | WireMessage::Setup { session, .. }
            | WireMessage::RoundPoly { session, .. }
            | WireMessage::Challenge { session, .. }
            | WireMessage::Verdict { session, .. }
            | WireMessage::Abort { session, .. } => *session,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            WireMessage::Hello {
                version,
                session,
                mode,
                variable_count,
                clause_count,
                formula_digest,
            } => {
                out.push(TAG_HELLO);
                out.push(*version);
                out.extend_from_slice(&session.to_be_bytes());
                out.push(mode_to_byte(*mode));
                out.extend_from_slice(&variable_count.to_be_bytes());
                out.extend_from_slice(&clause_count.to_be_bytes());
                out.extend_from_slice(formula_digest);
            }
            WireMessage::Setup {
                session,
                prime,
                certificate_json,
            } => {
                out.push(TAG_SETUP);
                out.extend_from_slice(&session.to_be_bytes());
                let prime_bytes = if prime.is_zero() {
                    Vec::new()
                } else {
                    prime.to_bytes_be()
                };
                encode_varint(prime_bytes.len() as u64, &mut out);
                out.extend_from_slice(&prime_bytes);
                encode_varint(certificate_json.len() as u64, &mut out);
                out.extend_from_slice(certificate_json);
            }
            WireMessage::RoundPoly {
                session,
                round,
                payload,
            } => {
                out.push(TAG_ROUND_POLY);
                out.extend_from_slice(&session.to_be_bytes());
                out.extend_from_slice(&round.to_be_bytes());
                out.extend_from_slice(payload);
            }
            WireMessage::Challenge {
                session,
                round,
                value,
            } => {
                out.push(TAG_CHALLENGE);
                out.extend_from_slice(&session.to_be_bytes());
                out.extend_from_slice(&round.to_be_bytes());
                out.extend_from_slice(value);
            }
            WireMessage::Verdict {
                session,
                accept,
                reject_reason,
            } => {
                out.push(TAG_VERDICT);
                out.extend_from_slice(&session.to_be_bytes());
                out.push(u8::from(*accept));
                if let Some(reason) = reject_reason {
                    reject_reason_to_bytes(reason, &mut out);
                }
            }
            WireMessage::Abort {
                session,
                code,
                detail,
            } => {
                out.push(TAG_ABORT);
                out.extend_from_slice(&session.to_be_bytes());
                out.push(abort_code_to_byte(*code));
                let detail_bytes = detail.as_bytes();
                encode_varint(detail_bytes.len() as u64, &mut out);
                out.extend_from_slice(detail_bytes);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<WireMessage, String> {
        let mut r = ByteReader::new(bytes);
        let tag = r.u8()?;
        let message = match tag {
            TAG_HELLO => {
                let version = r.u8()?;
                let session = r.u64()?;
                let mode = mode_from_byte(r.u8()?)?;
                let variable_count = r.u32()?;
                let clause_count = r.u32()?;
                let formula_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
                WireMessage::Hello {
                    version,
                    session,
                    mode,
                    variable_count,
                    clause_count,
                    formula_digest,
                }
            }
            TAG_SETUP => {
                let session = r.u64()?;
                let plen = r.varint()? as usize;
                let prime = BigUint::from_bytes_be(r.take(plen)?);
                let clen = r.varint()? as usize;
                let certificate_json = r.take(clen)?.to_vec();
                WireMessage::Setup {
                    session,
                    prime,
                    certificate_json,
                }
            }
            TAG_ROUND_POLY => {
                let session = r.u64()?;
                let round = r.u32()?;
                let payload = r.rest().to_vec();
                WireMessage::RoundPoly {
                    session,
                    round,
                    payload,
                }
            }
            TAG_CHALLENGE => {
                let session = r.u64()?;
                let round = r.u32()?;
                let value = r.rest().to_vec();
                WireMessage::Challenge {
                    session,
                    round,
                    value,
                }
            }
            TAG_VERDICT => {
                let session = r.u64()?;
                let accept = match r.u8()? {
                    0 => false,
                    1 => true,
                    other => return Err(format!("invalid accept byte {other}")),
                };
                let reject_reason = if accept {
                    None
                } else {
                    Some(reject_reason_from_bytes(&mut r)?)
                };
                WireMessage::Verdict {
                    session,
                    accept,
                    reject_reason,
                }
            }
            TAG_ABORT => {
                let session = r.u64()?;
                let code = abort_code_from_byte(r.u8()?)?;
                let dlen = r.varint()? as usize;
                let detail = String::from_utf8(r.take(dlen)?.to_vec())
                    .map_err(|_| "abort detail is not UTF-8".to_string())?;
                WireMessage::Abort {
                    session,
                    code,
                    detail,
                }
            }
            other => return Err(format!("unknown message tag {other}")),
        };
        r.finish()?;
        Ok(message)
    }
}

// ---------------------------------------------------------------------------
// framing

#[derive(Debug)]
pub enum FrameError {
    Io(io::Error),
    TooLarge(u32),
    Malformed(String),
}

impl From<io::Error> for FrameError {
    fn from(e: io::Error) -> Self {
        FrameError::Io(e)
    }
}

pub fn write_frame(stream: &mut impl Write, message: &WireMessage) -> io::Result<()> {
    let body = message.encode();
    let len = body.len() as u32;
    stream.write_all(&len.to_be_bytes())?;
    stream.write_all(&body)?;
    stream.flush()
}

pub fn read_frame(stream: &mut impl Read, max_frame: u32) -> std::result::Result<WireMessage, FrameError> {
    let mut len_bytes = [0u8; 4];
    stream.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes);
    if len == 0 {
        return Err(FrameError::Malformed("zero-length frame".into()));
    }
    if len > max_frame {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    stream.read_exact(&mut body)?;
    WireMessage::decode(&body).map_err(FrameError::Malformed)
}

// ---------------------------------------------------------------------------
// prover server

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub max_frame: u32,
    /// Dead-session reaping; the verifier owns the protocol-level timeouts.
    pub read_timeout: Option<Duration>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            max_frame: DEFAULT_MAX_FRAME,
            read_timeout: Some(Duration::from_secs(120)),
        }
    }
}

/// Handle on a running prover server; sessions are isolated, one thread each.
pub struct ProverServer {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ProverServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ProverServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

/// Binds `addr` and serves the strategy until shutdown. Each accepted
/// connection is one protocol session handled on its own thread.
pub fn serve_prover(
    addr: &str,
    cnf: ThreeCnf,
    strategy: Arc<dyn ProverStrategy>,
    options: ServeOptions,
) -> Result<ProverServer> {
    let listener = TcpListener::bind(addr)?;
    let local_addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = stop.clone();
    let acceptor = std::thread::spawn(move || {
        let mut sessions: Vec<JoinHandle<()>> = Vec::new();
        loop {
            match listener.accept() {
                Ok((stream, _peer)) => {
                    let cnf = cnf.clone();
                    let strategy = strategy.clone();
                    let options = options.clone();
                    sessions.push(std::thread::spawn(move || {
                        handle_session(stream, &cnf, strategy.as_ref(), &options);
                    }));
                }
                Err(ref e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if stop_flag.load(Ordering::SeqCst) {
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break,
            }
            sessions.retain(|handle| !handle.is_finished());
        }
        for handle in sessions {
            let _ = handle.join();
        }
    });
    Ok(ProverServer {
        local_addr,
        stop,
        acceptor: Some(acceptor),
    })
}

fn send_abort(stream: &mut TcpStream, session: u64, code: AbortCode, detail: &str) {
    let _ = write_frame(
        stream,
        &WireMessage::Abort {
            session,
            code,
            detail: detail.to_string(),
        },
    );
}

fn handle_session(
    mut stream: TcpStream,
    cnf: &ThreeCnf,
    strategy: &dyn ProverStrategy,
    options: &ServeOptions,
) {
    let _ = stream.set_read_timeout(options.read_timeout);
    let _ = stream.set_nodelay(true);

    let hello = match read_frame(&mut stream, options.max_frame) {
        Ok(message) => message,
        Err(FrameError::TooLarge(len)) => {
            send_abort(
                &mut stream,
                0,
                AbortCode::FrameTooLarge,
                &format!("frame of {len} bytes exceeds limit {}", options.max_frame),
            );
            return;
        }
        Err(FrameError::Malformed(detail)) => {
            send_abort(&mut stream, 0, AbortCode::MalformedFrame, &detail);
            return;
        }
        Err(FrameError::Io(_)) => return,
    };
    let (session, version, digest, n_claim, m_claim) = match hello {
        WireMessage::Hello {
            version,
            session,
            formula_digest,
            variable_count,
            clause_count,
            ..
        } => (session, version, formula_digest, variable_count, clause_count),
        other => {
            send_abort(
                &mut stream,
                other.session(),
                AbortCode::ProtocolOrder,
                "expected hello",
            );
            return;
        }
    };
    if version != PROTOCOL_VERSION {
        send_abort(
            &mut stream,
            session,
            AbortCode::VersionMismatch,
            &format!("peer speaks version {version}, this server speaks {PROTOCOL_VERSION}"),
        );
        return;
    }
    if digest != cnf.digest()
        || n_claim != cnf.variable_count()
        || m_claim as usize != cnf.clause_count()
    {
        send_abort(
            &mut stream,
            session,
            AbortCode::FormulaMismatch,
            "peer formula differs from the served formula",
        );
        return;
    }

    let field = strategy.field().clone();
    let width = element_width(field.prime());
    let setup = WireMessage::Setup {
        session,
        prime: field.prime().clone(),
        certificate_json: strategy.certificate().to_canonical_json().into_bytes(),
    };
    if write_frame(&mut stream, &setup).is_err() {
        return;
    }

    let rounds = cnf.variable_count();
    let mut prefix: Vec<FieldElement> = Vec::with_capacity(rounds as usize);
    for round in 1..=rounds {
        let poly = match strategy.respond(round as usize, &prefix) {
            Ok(poly) => poly,
            Err(e) => {
                let code = match e {
                    Error::Capacity { .. } => AbortCode::ProverCapacity,
                    _ => AbortCode::Internal,
                };
                send_abort(&mut stream, session, code, &e.to_string());
                return;
            }
        };
        let message = WireMessage::RoundPoly {
            session,
            round,
            payload: encode_polynomial(&poly, width),
        };
        if write_frame(&mut stream, &message).is_err() {
            return;
        }
        if round == rounds {
            break;
        }
        match read_frame(&mut stream, options.max_frame) {
            Ok(WireMessage::Challenge {
                session: peer_session,
                round: peer_round,
                value,
            }) => {
                if peer_session != session || peer_round != round {
                    send_abort(
                        &mut stream,
                        session,
                        AbortCode::ProtocolOrder,
                        &format!("expected challenge for round {round}"),
                    );
                    return;
                }
                match decode_element_fixed(&value, &field, width) {
                    Ok(challenge) => prefix.push(challenge),
                    Err(detail) => {
                        send_abort(&mut stream, session, AbortCode::MalformedFrame, &detail);
                        return;
                    }
                }
            }
            // the verifier may reject early instead of sending a challenge
            Ok(WireMessage::Verdict { .. }) => return,
            Ok(_) => {
                send_abort(
                    &mut stream,
                    session,
                    AbortCode::ProtocolOrder,
                    &format!("expected challenge for round {round}"),
                );
                return;
            }
            Err(FrameError::TooLarge(len)) => {
                send_abort(
                    &mut stream,
                    session,
                    AbortCode::FrameTooLarge,
                    &format!("frame of {len} bytes exceeds limit {}", options.max_frame),
                );
                return;
            }
            Err(FrameError::Malformed(detail)) => {
                send_abort(&mut stream, session, AbortCode::MalformedFrame, &detail);
                return;
            }
            Err(FrameError::Io(_)) => return,
        }
    }
    // final verdict notification, best effort
    let _ = read_frame(&mut stream, options.max_frame);
}

// ---------------------------------------------------------------------------
// verifier client

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub max_frame: u32,
    pub connect_timeout: Duration,
    /// Per-round response deadline; the verifier is the resource-bounded
    /// party and owns the session timeouts.
    pub round_timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            max_frame: DEFAULT_MAX_FRAME,
            connect_timeout: Duration::from_secs(10),
            round_timeout: Duration::from_secs(30),
        }
    }
}

/// One networked protocol session, living from Hello/Setup to Verdict.
pub struct RemoteSession {
    stream: TcpStream,
    session: u64,
    field: Field,
    certificate: PrattCertificate,
    width: usize,
    max_frame: u32,
}

impl RemoteSession {
    /// Connects, introduces the formula, and receives the proof's setup half.
    pub fn connect(
        addr: &str,
        cnf: &ThreeCnf,
        mode: Mode,
        options: &ClientOptions,
    ) -> std::result::Result<RemoteSession, SessionAbort> {
        let transport = |detail: String| SessionAbort {
            code: AbortCode::Transport,
            detail,
        };
        let resolved: Vec<SocketAddr> = addr
            .to_socket_addrs()
            .map_err(|e| transport(format!("cannot resolve {addr}: {e}")))?
            .collect();
        let target = resolved
            .first()
            .ok_or_else(|| transport(format!("no address for {addr}")))?;
        let mut stream = TcpStream::connect_timeout(target, options.connect_timeout)
            .map_err(|e| transport(format!("connect to {addr} failed: {e}")))?;
        stream
            .set_read_timeout(Some(options.round_timeout))
            .map_err(|e| transport(e.to_string()))?;
        let _ = stream.set_nodelay(true);

        // the session id is transport metadata; it must not consume the
        // verifier's seeded challenge randomness
        let session = rand::rngs::OsRng.next_u64();
        let hello = WireMessage::Hello {
            version: PROTOCOL_VERSION,
            session,
            mode,
            variable_count: cnf.variable_count(),
            clause_count: cnf.clause_count() as u32,
            formula_digest: cnf.digest(),
        };
        write_frame(&mut stream, &hello).map_err(|e| transport(format!("hello failed: {e}")))?;

        let setup = read_peer_frame(&mut stream, options.max_frame)?;
        let (peer_session, prime, certificate_json) = match setup {
            WireMessage::Setup {
                session,
                prime,
                certificate_json,
            } => (session, prime, certificate_json),
            other => {
                return Err(SessionAbort {
                    code: AbortCode::ProtocolOrder,
                    detail: format!("expected setup, got {other:?}"),
                })
            }
        };
        if peer_session != session {
            return Err(SessionAbort {
                code: AbortCode::MalformedFrame,
                detail: "setup carries a foreign session id".into(),
            });
        }
        let malformed = |detail: String| SessionAbort {
            code: AbortCode::MalformedFrame,
            detail,
        };
        let certificate = std::str::from_utf8(&certificate_json)
            .map_err(|_| malformed("certificate is not UTF-8".into()))
            .and_then(|text| {
                PrattCertificate::from_json(text).map_err(|e| malformed(e.to_string()))
            })?;
        let modulus =
            PrimeModulus::new(prime, false).map_err(|e| malformed(e.to_string()))?;
        let field = Field::new(modulus);
        let width = element_width(field.prime());
        Ok(RemoteSession {
            stream,
            session,
            field,
            certificate,
            width,
            max_frame: options.max_frame,
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn certificate(&self) -> &PrattCertificate {
        &self.certificate
    }
}

fn read_peer_frame(
    stream: &mut TcpStream,
    max_frame: u32,
) -> std::result::Result<WireMessage, SessionAbort> {
    match read_frame(stream, max_frame) {
        Ok(WireMessage::Abort { code, detail, .. }) => Err(SessionAbort {
            code,
            detail: format!("peer aborted: {detail}"),
        }),
        Ok(message) => Ok(message),
        Err(FrameError::TooLarge(len)) => Err(SessionAbort {
            code: AbortCode::FrameTooLarge,
            detail: format!("peer frame of {len} bytes exceeds limit {max_frame}"),
        }),
        Err(FrameError::Malformed(detail)) => Err(SessionAbort {
            code: AbortCode::MalformedFrame,
            detail,
        }),
        Err(FrameError::Io(e)) => Err(SessionAbort {
            code: AbortCode::Transport,
            detail: e.to_string(),
        }),
    }
}

impl RoundSource for RemoteSession {
    fn round_poly(
        &mut self,
        round: usize,
        previous_challenge: Option<&FieldElement>,
    ) -> std::result::Result<ReceivedPoly, SessionAbort> {
        if let Some(challenge) = previous_challenge {
            let message = WireMessage::Challenge {
                session: self.session,
                round: (round - 1) as u32,
                value: encode_element_fixed(challenge, self.width),
            };
            write_frame(&mut self.stream, &message).map_err(|e| SessionAbort {
                code: AbortCode::Transport,
                detail: format!("sending challenge failed: {e}"),
            })?;
        }
        let message = read_peer_frame(&mut self.stream, self.max_frame)?;
        let (peer_session, peer_round, payload) = match message {
            WireMessage::RoundPoly {
                session,
                round,
                payload,
            } => (session, round, payload),
            other => {
                return Err(SessionAbort {
                    code: AbortCode::ProtocolOrder,
                    detail: format!("expected round polynomial, got {other:?}"),
                })
            }
        };
        if peer_session != self.session || peer_round as usize != round {
            return Err(SessionAbort {
                code: AbortCode::ProtocolOrder,
                detail: format!("round polynomial for round {peer_round}, expected {round}"),
            });
        }
        let (poly, declared) =
            decode_polynomial(&payload, &self.field, self.width).map_err(|detail| SessionAbort {
                code: AbortCode::MalformedFrame,
                detail,
            })?;
        Ok(ReceivedPoly {
            wire_bytes: payload,
            poly,
            declared_coefficients: declared,
        })
    }

    fn finish(&mut self, verdict: &Verdict) {
        let message = match verdict {
            Verdict::Accept => WireMessage::Verdict {
                session: self.session,
                accept: true,
                reject_reason: None,
            },
            Verdict::Reject { reason } => WireMessage::Verdict {
                session: self.session,
                accept: false,
                reject_reason: Some(*reason),
            },
            Verdict::Abort { code, detail } => WireMessage::Abort {
                session: self.session,
                code: *code,
                detail: detail.clone(),
            },
        };
        let _ = write_frame(&mut self.stream, &message);
    }
}

#[derive(Debug, Clone)]
pub struct RemoteOutcome {
    pub accepted: bool,
    pub transcripts: Vec<Transcript>,
    /// Set when a session could not even reach the protocol (connect or
    /// setup failure); such failures never count as rejections.
    pub abort: Option<(AbortCode, String)>,
}

impl RemoteOutcome {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
            || self
                .transcripts
                .iter()
                .any(|transcript| transcript.verdict.is_abort())
    }
}

/// Networked counterpart of in-process verification: same setup checks, same
/// round loop, same transcripts (byte-identical under equal seeds and
/// strategy). Each trial is one TCP session.
pub fn run_remote_verification(
    addr: &str,
    cnf: &ThreeCnf,
    settings: &VerifySettings,
    challenges: &mut dyn ChallengeSource,
    options: &ClientOptions,
) -> Result<RemoteOutcome> {
    let mut transcripts = Vec::new();
    for _ in 0..settings.trials.max(1) {
        let mut session = match RemoteSession::connect(addr, cnf, settings.mode, options) {
            Ok(session) => session,
            Err(abort) => {
                return Ok(RemoteOutcome {
                    accepted: false,
                    transcripts,
                    abort: Some((abort.code, abort.detail)),
                })
            }
        };
        if let Err(reason) = verify_setup(
            session.field.prime(),
            &session.certificate,
            cnf.variable_count(),
            settings.c_p,
            settings.mode,
        ) {
            let transcript = setup_failure_transcript(
                cnf,
                session.field.prime(),
                &session.certificate,
                settings.mode,
                reason,
            );
            session.finish(&transcript.verdict);
            transcripts.push(transcript);
            return Ok(RemoteOutcome {
                accepted: false,
                transcripts,
                abort: None,
            });
        }
        let field = session.field.clone();
        let digest = session.certificate.digest();
        let transcript = drive_session(cnf, &field, digest, settings.mode, &mut session, challenges)?;
        let ok = transcript.verdict.is_accept();
        transcripts.push(transcript);
        if !ok {
            return Ok(RemoteOutcome {
                accepted: false,
                transcripts,
                abort: None,
            });
        }
    }
    Ok(RemoteOutcome {
        accepted: true,
        transcripts,
        abort: None,
    })
}

/// 3DNF tautology claim over the network: verify UNSAT of the negation.
pub fn run_remote_dnf_verification(
    addr: &str,
    dnf: &ThreeDnf,
    settings: &VerifySettings,
    challenges: &mut dyn ChallengeSource,
    options: &ClientOptions,
) -> Result<RemoteOutcome> {
    let negated = dnf.negation();
    run_remote_verification(addr, &negated, settings, challenges, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::parse_dimacs;
    use crate::primality::certify;
    use crate::prover::{CheatKind, CheatingProver, HonestProver};
    use crate::verifier::{run_sumcheck, RngChallenges};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn field_with_cert(p: u64) -> (Field, PrattCertificate) {
        let cert = certify(&BigUint::from(p)).unwrap();
        (Field::from_u64(p), cert)
    }

    fn random_message(rng: &mut ChaCha20Rng) -> WireMessage {
        let session = rng.gen();
        match rng.gen_range(0..6) {
            0 => WireMessage::Hello {
                version: rng.gen(),
                session,
                mode: if rng.gen() { Mode::Relaxed } else { Mode::PaperStrict },
                variable_count: rng.gen(),
                clause_count: rng.gen(),
                formula_digest: rng.gen(),
            },
            1 => {
                let mut prime_bytes = vec![0u8; rng.gen_range(0..20)];
                rng.fill_bytes(&mut prime_bytes);
                if let Some(first) = prime_bytes.first_mut() {
                    *first |= 1; // keep the encoding minimal
                }
                let mut certificate_json = vec![0u8; rng.gen_range(0..64)];
                rng.fill_bytes(&mut certificate_json);
                WireMessage::Setup {
                    session,
                    prime: BigUint::from_bytes_be(&prime_bytes),
                    certificate_json,
                }
            }
            2 => {
                let mut payload = vec![0u8; rng.gen_range(1..128)];
                rng.fill_bytes(&mut payload);
                WireMessage::RoundPoly {
                    session,
                    round: rng.gen(),
                    payload,
                }
            }
            3 => {
                let mut value = vec![0u8; rng.gen_range(1..32)];
                rng.fill_bytes(&mut value);
                WireMessage::Challenge {
                    session,
                    round: rng.gen(),
                    value,
                }
            }
            4 => {
                let accept: bool = rng.gen();
                let reject_reason = if accept {
                    None
                } else {
                    Some(match rng.gen_range(0..5) {
                        0 => RejectReason::BadCertificate,
                        1 => RejectReason::PrimeOutOfRange,
                        2 => RejectReason::CoefficientOverflow {
                            round: rng.gen::<u32>() as usize,
                        },
                        3 => RejectReason::RoundSumMismatch {
                            round: rng.gen::<u32>() as usize,
                        },
                        _ => RejectReason::FinalCheckMismatch,
                    })
                };
                WireMessage::Verdict {
                    session,
                    accept,
                    reject_reason,
                }
            }
            _ => WireMessage::Abort {
                session,
                code: match rng.gen_range(0..8) {
                    0 => AbortCode::ProtocolOrder,
                    1 => AbortCode::FrameTooLarge,
                    2 => AbortCode::MalformedFrame,
                    3 => AbortCode::VersionMismatch,
                    4 => AbortCode::FormulaMismatch,
                    5 => AbortCode::ProverCapacity,
                    6 => AbortCode::Transport,
                    _ => AbortCode::Internal,
                },
                detail: format!("detail {}", rng.gen::<u32>()),
            },
        }
    }

    #[test]
    fn varint_round_trip() {
        for value in [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX] {
            let mut bytes = Vec::new();
            encode_varint(value, &mut bytes);
            assert_eq!(decode_varint(&bytes).unwrap(), (value, bytes.len()));
        }
        assert!(decode_varint(&[0x80]).is_err());
    }

    #[test]
    fn message_codec_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        for _ in 0..10_000 {
            let message = random_message(&mut rng);
            let decoded = WireMessage::decode(&message.encode()).unwrap();
            assert_eq!(decoded, message);
        }
    }

    #[test]
    fn polynomial_codec_round_trip_and_validation() {
        let (field, _) = field_with_cert(65537);
        let width = element_width(field.prime());
        assert_eq!(width, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(56);
        for _ in 0..200 {
            let coefficients: Vec<FieldElement> = (0..rng.gen_range(0..20))
                .map(|_| field.sample(&mut rng))
                .collect();
            let poly = UnivariatePoly::new(field.clone(), coefficients).unwrap();
            let bytes = encode_polynomial(&poly, width);
            let (decoded, declared) = decode_polynomial(&bytes, &field, width).unwrap();
            assert_eq!(decoded, poly);
            assert_eq!(declared, poly.coefficient_count());
        }
        // truncated payload
        let poly = UnivariatePoly::new(field.clone(), vec![field.one()]).unwrap();
        let mut bytes = encode_polynomial(&poly, width);
        bytes.pop();
        assert!(decode_polynomial(&bytes, &field, width).is_err());
        // unreduced coefficient
        let mut bytes = Vec::new();
        encode_varint(1, &mut bytes);
        bytes.extend_from_slice(&[0xff, 0xff, 0xff]);
        assert!(decode_polynomial(&bytes, &field, width).is_err());
    }

    #[test]
    fn frame_limits() {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&0u32.to_be_bytes());
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 1024),
            Err(FrameError::Malformed(_))
        ));
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&(2048u32).to_be_bytes());
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 1024),
            Err(FrameError::TooLarge(2048))
        ));
    }

    fn serve_contradiction(p: u64) -> (ProverServer, ThreeCnf, Arc<dyn ProverStrategy>) {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        let (field, cert) = field_with_cert(p);
        let strategy: Arc<dyn ProverStrategy> =
            Arc::new(HonestProver::new(cnf.clone(), field, cert));
        let server = serve_prover(
            "127.0.0.1:0",
            cnf.clone(),
            strategy.clone(),
            ServeOptions::default(),
        )
        .unwrap();
        (server, cnf, strategy)
    }

    #[test]
    fn loopback_honest_session_accepts() {
        let (server, cnf, _strategy) = serve_contradiction(11);
        let addr = server.local_addr().to_string();
        let settings = VerifySettings {
            trials: 3,
            ..Default::default()
        };
        let mut challenges = RngChallenges(ChaCha20Rng::seed_from_u64(7));
        let outcome = run_remote_verification(
            &addr,
            &cnf,
            &settings,
            &mut challenges,
            &ClientOptions::default(),
        )
        .unwrap();
        assert!(outcome.accepted, "{:?}", outcome.abort);
        assert_eq!(outcome.transcripts.len(), 3);
        server.shutdown();
    }

    #[test]
    fn remote_equals_local_under_same_seed() {
        let cnf = parse_dimacs("p cnf 2 3\n1 2 0\n-1 2 0\n-2 -2 0\n").unwrap();
        let (field, cert) = field_with_cert(257);
        for (kind, seed) in [
            (None, 1u64),
            (Some(CheatKind::RandomPoly), 2),
            (Some(CheatKind::SumConsistent), 3),
        ] {
            let strategy: Arc<dyn ProverStrategy> = match kind {
                None => Arc::new(HonestProver::new(cnf.clone(), field.clone(), cert.clone())),
                Some(kind) => Arc::new(CheatingProver::new(
                    kind,
                    cnf.clone(),
                    field.clone(),
                    cert.clone(),
                    seed,
                )),
            };
            let server = serve_prover(
                "127.0.0.1:0",
                cnf.clone(),
                strategy.clone(),
                ServeOptions::default(),
            )
            .unwrap();
            let addr = server.local_addr().to_string();

            let local = run_sumcheck(
                &cnf,
                strategy.as_ref(),
                &mut RngChallenges(ChaCha20Rng::seed_from_u64(40 + seed)),
                Mode::Relaxed,
            )
            .unwrap();
            let remote = run_remote_verification(
                &addr,
                &cnf,
                &VerifySettings {
                    trials: 1,
                    ..Default::default()
                },
                &mut RngChallenges(ChaCha20Rng::seed_from_u64(40 + seed)),
                &ClientOptions::default(),
            )
            .unwrap();
            assert_eq!(remote.transcripts.len(), 1);
            assert_eq!(
                remote.transcripts[0].to_canonical_json(),
                local.to_canonical_json(),
                "strategy {:?}",
                strategy.name()
            );
            server.shutdown();
        }
    }

    #[test]
    fn out_of_order_challenge_aborts() {
        let (server, cnf, strategy) = serve_contradiction(257);
        let addr = server.local_addr();
        let mut stream = TcpStream::connect(addr).unwrap();
        write_frame(
            &mut stream,
            &WireMessage::Hello {
                version: PROTOCOL_VERSION,
                session: 9,
                mode: Mode::Relaxed,
                variable_count: cnf.variable_count(),
                clause_count: cnf.clause_count() as u32,
                formula_digest: cnf.digest(),
            },
        )
        .unwrap();
        let _setup = read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap();
        let _poly1 = read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap();
        // n = 1: no challenge is ever expected; send one with a bogus round
        let width = element_width(strategy.field().prime());
        write_frame(
            &mut stream,
            &WireMessage::Challenge {
                session: 9,
                round: 7,
                value: vec![0u8; width],
            },
        )
        .unwrap();
        // server is done after round 1; it reads our message as the verdict
        // slot and drops the session, so use a 2-variable formula instead
        server.shutdown();

        let cnf2 = parse_dimacs("p cnf 2 3\n1 2 0\n-1 2 0\n-2 -2 0\n").unwrap();
        let (field2, cert2) = field_with_cert(257);
        let strategy2: Arc<dyn ProverStrategy> =
            Arc::new(HonestProver::new(cnf2.clone(), field2.clone(), cert2));
        let server2 = serve_prover(
            "127.0.0.1:0",
            cnf2.clone(),
            strategy2,
            ServeOptions::default(),
        )
        .unwrap();
        let mut stream = TcpStream::connect(server2.local_addr()).unwrap();
        write_frame(
            &mut stream,
            &WireMessage::Hello {
                version: PROTOCOL_VERSION,
                session: 9,
                mode: Mode::Relaxed,
                variable_count: cnf2.variable_count(),
                clause_count: cnf2.clause_count() as u32,
                formula_digest: cnf2.digest(),
            },
        )
        .unwrap();
        let _setup = read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap();
        let _poly1 = read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap();
        let width2 = element_width(&BigUint::from(257u32));
        write_frame(
            &mut stream,
            &WireMessage::Challenge {
                session: 9,
                round: 7,
                value: vec![0u8; width2],
            },
        )
        .unwrap();
        match read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap() {
            WireMessage::Abort { code, .. } => assert_eq!(code, AbortCode::ProtocolOrder),
            other => panic!("expected abort, got {other:?}"),
        }
        server2.shutdown();
    }

    #[test]
    fn wrong_version_and_wrong_formula_abort() {
        let (server, cnf, _strategy) = serve_contradiction(257);
        let addr = server.local_addr();

        let mut stream = TcpStream::connect(addr).unwrap();
        write_frame(
            &mut stream,
            &WireMessage::Hello {
                version: 99,
                session: 1,
                mode: Mode::Relaxed,
                variable_count: cnf.variable_count(),
                clause_count: cnf.clause_count() as u32,
                formula_digest: cnf.digest(),
            },
        )
        .unwrap();
        match read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap() {
            WireMessage::Abort { code, .. } => assert_eq!(code, AbortCode::VersionMismatch),
            other => panic!("expected abort, got {other:?}"),
        }

        let mut stream = TcpStream::connect(addr).unwrap();
        write_frame(
            &mut stream,
            &WireMessage::Hello {
                version: PROTOCOL_VERSION,
                session: 2,
                mode: Mode::Relaxed,
                variable_count: cnf.variable_count(),
                clause_count: cnf.clause_count() as u32,
                formula_digest: [0u8; 32],
            },
        )
        .unwrap();
        match read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap() {
            WireMessage::Abort { code, .. } => assert_eq!(code, AbortCode::FormulaMismatch),
            other => panic!("expected abort, got {other:?}"),
        }
        server.shutdown();
    }

    #[test]
    fn oversized_frame_aborts() {
        let (server, _cnf, _strategy) = serve_contradiction(257);
        let mut stream = TcpStream::connect(server.local_addr()).unwrap();
        // claim a frame far beyond the limit; the server must refuse to read it
        stream
            .write_all(&(DEFAULT_MAX_FRAME + 1).to_be_bytes())
            .unwrap();
        stream.flush().unwrap();
        match read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap() {
            WireMessage::Abort { code, .. } => assert_eq!(code, AbortCode::FrameTooLarge),
            other => panic!("expected abort, got {other:?}"),
        }
        server.shutdown();
    }

    #[test]
    fn endpoint_down_is_transport_abort_not_reject() {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        // bind and drop to get a port that refuses connections
        let port = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().port()
        };
        let outcome = run_remote_verification(
            &format!("127.0.0.1:{port}"),
            &cnf,
            &VerifySettings::default(),
            &mut RngChallenges(ChaCha20Rng::seed_from_u64(0)),
            &ClientOptions {
                connect_timeout: Duration::from_millis(500),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!outcome.accepted);
        assert!(outcome.aborted());
        assert!(outcome.transcripts.is_empty());
        let (code, _) = outcome.abort.unwrap();
        assert_eq!(code, AbortCode::Transport);
    }

    #[test]
    fn concurrent_sessions_are_isolated() {
        let (server, cnf, _strategy) = serve_contradiction(257);
        let addr = server.local_addr().to_string();
        let mut handles = Vec::new();
        for seed in 0..4u64 {
            let addr = addr.clone();
            let cnf = cnf.clone();
            handles.push(std::thread::spawn(move || {
                let mut challenges = RngChallenges(ChaCha20Rng::seed_from_u64(seed));
                run_remote_verification(
                    &addr,
                    &cnf,
                    &VerifySettings {
                        trials: 2,
                        ..Default::default()
                    },
                    &mut challenges,
                    &ClientOptions::default(),
                )
                .unwrap()
            }));
        }
        for handle in handles {
            let outcome = handle.join().unwrap();
            assert!(outcome.accepted);
            assert_eq!(outcome.transcripts.len(), 2);
        }
        server.shutdown();
    }
}
