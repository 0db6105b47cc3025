//! Wire format.
//!
//! ```text
//! byte 0      command code in the high nibble, low nibble zero
//! bytes 1..5  id, u32 big-endian
//! payload     fixed width per command (see below)
//! last 4      CRC-32 (reflected 0x04C11DB7, init/xorout 0xFFFFFFFF) over
//!             all preceding bytes, big-endian
//!
//! SYN      seed[16] tau[1] ek_st[16]    33 bytes
//! FIN_SYN  iv[1]                         1 byte
//! ACK_SYN  tau[1]                        1 byte
//! NAK_SYN  tau[1]                        1 byte
//! AUTH     ek_code[16]                  16 bytes
//! ```
//!
//! `tau` is `0x01` for +1 and `0x00` for −1.

use crate::error::{Error, Result};

const HEADER: usize = 5;
const TRAILER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Command {
    Syn = 0b0000,
    FinSyn = 0b0001,
    AckSyn = 0b0010,
    NakSyn = 0b0011,
    Auth = 0b0100,
}

impl Command {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0b0000 => Ok(Self::Syn),
            0b0001 => Ok(Self::FinSyn),
            0b0010 => Ok(Self::AckSyn),
            0b0011 => Ok(Self::NakSyn),
            0b0100 => Ok(Self::Auth),
            0b0101..=0b1111 => Err(Error::Protocol(format!("reserved command code {code:04b}"))),
            _ => Err(Error::Framing(format!("command code {code} wider than a nibble"))),
        }
    }

    fn payload_len(self) -> usize {
        match self {
            Command::Syn => 33,
            Command::FinSyn | Command::AckSyn | Command::NakSyn => 1,
            Command::Auth => 16,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Syn => "SYN",
            Command::FinSyn => "FIN_SYN",
            Command::AckSyn => "ACK_SYN",
            Command::NakSyn => "NAK_SYN",
            Command::Auth => "AUTH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payload {
    Syn { seed: [u8; 16], tau: i8, ek_st: [u8; 16] },
    FinSyn { iv: u8 },
    AckSyn { tau: i8 },
    NakSyn { tau: i8 },
    Auth { ek_code: [u8; 16] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame {
    pub id: u32,
    pub payload: Payload,
}

impl Frame {
    pub fn command(&self) -> Command {
        match self.payload {
            Payload::Syn { .. } => Command::Syn,
            Payload::FinSyn { .. } => Command::FinSyn,
            Payload::AckSyn { .. } => Command::AckSyn,
            Payload::NakSyn { .. } => Command::NakSyn,
            Payload::Auth { .. } => Command::Auth,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER + self.command().payload_len() + TRAILER
    }
}

fn tau_byte(tau: i8) -> u8 {
    u8::from(tau > 0)
}

fn byte_tau(b: u8) -> Result<i8> {
    match b {
        0x01 => Ok(1),
        0x00 => Ok(-1),
        other => Err(Error::Framing(format!("output byte {other:#04x} is neither 0x00 nor 0x01"))),
    }
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.push(frame.command().code() << 4);
    out.extend_from_slice(&frame.id.to_be_bytes());
    match frame.payload {
        Payload::Syn { seed, tau, ek_st } => {
            out.extend_from_slice(&seed);
            out.push(tau_byte(tau));
            out.extend_from_slice(&ek_st);
        }
        Payload::FinSyn { iv } => out.push(iv),
        Payload::AckSyn { tau } | Payload::NakSyn { tau } => out.push(tau_byte(tau)),
        Payload::Auth { ek_code } => out.extend_from_slice(&ek_code),
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

/// Parse and verify one datagram. The checksum is verified before anything
/// else is interpreted.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < HEADER + TRAILER {
        return Err(Error::Framing(format!("truncated frame of {} bytes", bytes.len())));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - TRAILER);
    let expected = u32::from_be_bytes(trailer.try_into().unwrap());
    let found = crc32(body);
    if expected != found {
        return Err(Error::Integrity { expected, found });
    }
    if body[0] & 0x0f != 0 {
        return Err(Error::Framing(format!("low nibble of command byte set ({:#04x})", body[0])));
    }
    let command = Command::from_code(body[0] >> 4)?;
    let id = u32::from_be_bytes(body[1..HEADER].try_into().unwrap());
    let p = &body[HEADER..];
    if p.len() != command.payload_len() {
        return Err(Error::Framing(format!(
            "{} payload is {} bytes, expected {}",
            command.name(),
            p.len(),
            command.payload_len()
        )));
    }
    let block = |s: &[u8]| -> [u8; 16] { s.try_into().unwrap() };
    let payload = match command {
        Command::Syn => Payload::Syn { seed: block(&p[..16]), tau: byte_tau(p[16])?, ek_st: block(&p[17..33]) },
        Command::FinSyn => Payload::FinSyn { iv: p[0] },
        Command::AckSyn => Payload::AckSyn { tau: byte_tau(p[0])? },
        Command::NakSyn => Payload::NakSyn { tau: byte_tau(p[0])? },
        Command::Auth => Payload::Auth { ek_code: block(p) },
    };
    Ok(Frame { id, payload })
}

/// A fixed SYN frame and its encoding, written out as a conformance vector.
pub fn golden_syn() -> (Frame, &'static str) {
    let frame =
        Frame { id: 7, payload: Payload::Syn { seed: core::array::from_fn(|i| i as u8), tau: 1, ek_st: [0xA5; 16] } };
    (frame, GOLDEN_SYN_HEX)
}

pub const GOLDEN_SYN_HEX: &str = "0000000007000102030405060708090a0b0c0d0e0f01a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5da93134a";

/// Render every frame kind as `name hex` lines.
pub fn golden_vector_text() -> String {
    let frames = [
        golden_syn().0,
        Frame { id: 8, payload: Payload::AckSyn { tau: -1 } },
        Frame { id: 9, payload: Payload::NakSyn { tau: 1 } },
        Frame { id: 10, payload: Payload::FinSyn { iv: 5 } },
        Frame { id: 11, payload: Payload::Auth { ek_code: [0x3C; 16] } },
    ];
    let mut out = String::from("# frame codec golden vectors: command id hex\n");
    for f in frames {
        out.push_str(&format!("{} {} {}\n", f.command().name(), f.id, crate::codec::to_hex(&encode_frame(&f))));
    }
    out
}
