//! Wire protocol between coordinator and clients.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! magic "FCWA" (4) | version 0x01 (1) | type (1) | payload length u64 (8) | payload
//! ```
//!
//! Payload fields are written in declaration order: integers as `u64`, the
//! cost as `f64`, parameter vectors as `dim: u64` followed by `dim` `f64`s.
//!
//! Two [`Session`] implementations carry these frames: [`InProcSession`]
//! over std channels and [`TcpSession`] over a `TcpStream`. Both move the
//! same encoded bytes, so the coordinator cannot tell them apart.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::params::ParamVector;

pub const MAGIC: [u8; 4] = *b"FCWA";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 14;
pub const DEFAULT_MAX_PAYLOAD: u64 = 64 * 1024 * 1024;

const TYPE_JOIN: u8 = 0x01;
const TYPE_GLOBAL_MODEL: u8 = 0x02;
const TYPE_UPDATE: u8 = 0x03;
const TYPE_SHUTDOWN: u8 = 0x04;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Join {
        client_id: u64,
        sample_count: u64,
    },
    GlobalModel {
        round: u64,
        params: ParamVector,
    },
    Update {
        round: u64,
        client_id: u64,
        sample_count: u64,
        cost: f64,
        params: ParamVector,
    },
    Shutdown,
}

impl Message {
    fn type_byte(&self) -> u8 {
        match self {
            Message::Join { .. } => TYPE_JOIN,
            Message::GlobalModel { .. } => TYPE_GLOBAL_MODEL,
            Message::Update { .. } => TYPE_UPDATE,
            Message::Shutdown => TYPE_SHUTDOWN,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Join { .. } => "Join",
            Message::GlobalModel { .. } => "GlobalModel",
            Message::Update { .. } => "Update",
            Message::Shutdown => "Shutdown",
        }
    }
}

fn put_params(buf: &mut Vec<u8>, params: &ParamVector) {
    buf.extend_from_slice(&(params.dim() as u64).to_le_bytes());
    for v in params.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut payload = Vec::new();
    match msg {
        Message::Join {
            client_id,
            sample_count,
        } => {
            payload.extend_from_slice(&client_id.to_le_bytes());
            payload.extend_from_slice(&sample_count.to_le_bytes());
        }
        Message::GlobalModel { round, params } => {
            payload.reserve(16 + 8 * params.dim());
            payload.extend_from_slice(&round.to_le_bytes());
            put_params(&mut payload, params);
        }
        Message::Update {
            round,
            client_id,
            sample_count,
            cost,
            params,
        } => {
            payload.reserve(40 + 8 * params.dim());
            payload.extend_from_slice(&round.to_le_bytes());
            payload.extend_from_slice(&client_id.to_le_bytes());
            payload.extend_from_slice(&sample_count.to_le_bytes());
            payload.extend_from_slice(&cost.to_le_bytes());
            put_params(&mut payload, params);
        }
        Message::Shutdown => {}
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&MAGIC);
    frame.push(VERSION);
    frame.push(msg.type_byte());
    frame.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Validates a frame header and returns the message type and payload length.
/// The length is checked against `max_payload` before anything is allocated.
pub fn parse_header(header: &[u8; HEADER_LEN], max_payload: u64) -> Result<(u8, u64)> {
    if header[..4] != MAGIC {
        return Err(Error::Protocol(format!("bad magic {:02x?}", &header[..4])));
    }
    if header[4] != VERSION {
        return Err(Error::Protocol(format!(
            "unsupported protocol version {}",
            header[4]
        )));
    }
    let kind = header[5];
    if !(TYPE_JOIN..=TYPE_SHUTDOWN).contains(&kind) {
        return Err(Error::Protocol(format!("unknown message type {kind:#04x}")));
    }
    let len = u64::from_le_bytes(header[6..].try_into().expect("8 bytes"));
    if len > max_payload {
        return Err(Error::Oversize {
            len,
            max: max_payload,
        });
    }
    Ok((kind, len))
}

struct PayloadReader<'a> {
    buf: &'a [u8],
}

impl PayloadReader<'_> {
    fn u64(&mut self) -> Result<u64> {
        if self.buf.len() < 8 {
            return Err(Error::Protocol("payload ends inside a field".into()));
        }
        let (head, rest) = self.buf.split_at(8);
        self.buf = rest;
        Ok(u64::from_le_bytes(head.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        self.u64().map(f64::from_bits)
    }

    fn params(&mut self) -> Result<ParamVector> {
        let dim = self.u64()?;
        if dim > (self.buf.len() / 8) as u64 {
            return Err(Error::Protocol(format!(
                "parameter dim {dim} exceeds remaining payload of {} bytes",
                self.buf.len()
            )));
        }
        let values = (0..dim).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        ParamVector::new(values).map_err(|e| Error::Protocol(e.to_string()))
    }

    fn finish(self) -> Result<()> {
        if !self.buf.is_empty() {
            return Err(Error::Protocol(format!(
                "{} trailing payload bytes",
                self.buf.len()
            )));
        }
        Ok(())
    }
}

pub fn decode_payload(kind: u8, payload: &[u8]) -> Result<Message> {
    let mut r = PayloadReader { buf: payload };
    let msg = match kind {
        TYPE_JOIN => Message::Join {
            client_id: r.u64()?,
            sample_count: r.u64()?,
        },
        TYPE_GLOBAL_MODEL => Message::GlobalModel {
            round: r.u64()?,
            params: r.params()?,
        },
        TYPE_UPDATE => Message::Update {
            round: r.u64()?,
            client_id: r.u64()?,
            sample_count: r.u64()?,
            cost: r.f64()?,
            params: r.params()?,
        },
        TYPE_SHUTDOWN => Message::Shutdown,
        other => {
            return Err(Error::Protocol(format!(
                "unknown message type {other:#04x}"
            )))
        }
    };
    r.finish()?;
    Ok(msg)
}

/// Decodes the frame at the start of `bytes`, returning the message and the
/// number of bytes it occupied.
pub fn decode_frame(bytes: &[u8], max_payload: u64) -> Result<(Message, usize)> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Frame(format!("{} bytes is shorter than a header", bytes.len())))?;
    let (kind, len) = parse_header(header, max_payload)?;
    let end = HEADER_LEN as u64 + len;
    if (bytes.len() as u64) < end {
        return Err(Error::Frame(format!(
            "frame needs {end} bytes, only {} available",
            bytes.len()
        )));
    }
    let end = end as usize;
    Ok((decode_payload(kind, &bytes[HEADER_LEN..end])?, end))
}

/// Decodes one complete frame with the default payload limit.
pub fn decode(bytes: &[u8]) -> Result<Message> {
    decode_frame(bytes, DEFAULT_MAX_PAYLOAD).map(|(msg, _)| msg)
}

/// Decodes a buffer of back-to-back frames.
pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<Message>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (msg, used) = decode_frame(bytes, DEFAULT_MAX_PAYLOAD)?;
        out.push(msg);
        bytes = &bytes[used..];
    }
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R, max_payload: u64) -> Result<Message> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let (kind, len) = parse_header(&header, max_payload)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            Error::Frame(format!("stream ended inside a {len}-byte payload"))
        }
        _ => Error::Io(e),
    })?;
    decode_payload(kind, &payload)
}

/// One end of an ordered, reliable, frame-preserving connection.
pub trait Session: Send {
    fn send(&mut self, msg: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
}

impl<S: Session + ?Sized> Session for Box<S> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message> {
        (**self).recv()
    }
}

fn disconnected() -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::BrokenPipe,
        "peer disconnected",
    ))
}

/// Channel-backed session carrying encoded frames.
pub struct InProcSession {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn inproc_pair() -> (InProcSession, InProcSession) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        InProcSession { tx: a_tx, rx: a_rx },
        InProcSession { tx: b_tx, rx: b_rx },
    )
}

impl Session for InProcSession {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.tx.send(encode(msg)).map_err(|_| disconnected())
    }

    fn recv(&mut self) -> Result<Message> {
        let frame = self.rx.recv().map_err(|_| disconnected())?;
        decode(&frame)
    }
}

pub struct TcpSession {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    max_payload: u64,
}

impl TcpSession {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpSession {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            max_payload: DEFAULT_MAX_PAYLOAD,
        })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        Self::new(TcpStream::connect(addr)?)
    }

    pub fn with_max_payload(mut self, max_payload: u64) -> Self {
        self.max_payload = max_payload;
        self
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<()> {
        self.reader.get_ref().set_read_timeout(timeout)?;
        Ok(())
    }

    pub fn peer_addr(&self) -> Option<std::net::SocketAddr> {
        self.reader.get_ref().peer_addr().ok()
    }
}

impl Session for TcpSession {
    fn send(&mut self, msg: &Message) -> Result<()> {
        write_frame(&mut self.writer, msg)
    }

    fn recv(&mut self) -> Result<Message> {
        read_frame(&mut self.reader, self.max_payload)
    }
}
