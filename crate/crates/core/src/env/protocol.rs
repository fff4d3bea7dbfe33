//! Byte-stream protocol for driving an emulator in another process.
//!
//! Every message is `len: u32 LE` followed by `len` bytes: a one-byte
//! opcode and its payload. All integers and floats are little-endian.
//!
//! | opcode | name  | payload |
//! |--------|-------|---------|
//! | 0 | RESET | `seed: u32` |
//! | 1 | STEP  | `action: u8` |
//! | 2 | OBS   | `width: u16, height: u16, pixels: [u8; width·height], reward: f32, terminal: u8` |
//! | 3 | ERR   | UTF-8 message |

use std::io::{self, Read, Write};

use thiserror::Error;

pub const OP_RESET: u8 = 0;
pub const OP_STEP: u8 = 1;
pub const OP_OBS: u8 = 2;
pub const OP_ERR: u8 = 3;

/// Upper bound on a message body; larger prefixes are rejected unread.
pub const MAX_MESSAGE_LEN: u32 = 1 << 26;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("connection closed by the peer")]
    Closed,
    #[error("protocol violation: {0}")]
    Protocol(String),
}

fn protocol<T>(msg: impl Into<String>) -> Result<T, TransportError> {
    Err(TransportError::Protocol(msg.into()))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Reset { seed: u32 },
    Step { action: u8 },
    Obs { width: u16, height: u16, pixels: Vec<u8>, reward: f32, terminal: bool },
    Err(String),
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Message::Reset { seed } => {
                body.push(OP_RESET);
                body.extend_from_slice(&seed.to_le_bytes());
            }
            Message::Step { action } => {
                body.push(OP_STEP);
                body.push(*action);
            }
            Message::Obs { width, height, pixels, reward, terminal } => {
                body.push(OP_OBS);
                body.extend_from_slice(&width.to_le_bytes());
                body.extend_from_slice(&height.to_le_bytes());
                body.extend_from_slice(pixels);
                body.extend_from_slice(&reward.to_le_bytes());
                body.push(u8::from(*terminal));
            }
            Message::Err(text) => {
                body.push(OP_ERR);
                body.extend_from_slice(text.as_bytes());
            }
        }
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes one message body (opcode + payload, without the length prefix).
    pub fn decode(body: &[u8]) -> Result<Message, TransportError> {
        let Some((&op, payload)) = body.split_first() else {
            return protocol("empty message");
        };
        match op {
            OP_RESET => {
                let seed: [u8; 4] = payload
                    .try_into()
                    .map_err(|_| TransportError::Protocol(format!("RESET payload of {} bytes", payload.len())))?;
                Ok(Message::Reset { seed: u32::from_le_bytes(seed) })
            }
            OP_STEP => match payload {
                [action] => Ok(Message::Step { action: *action }),
                _ => protocol(format!("STEP payload of {} bytes", payload.len())),
            },
            OP_OBS => {
                if payload.len() < 4 {
                    return protocol("OBS payload shorter than its header");
                }
                let width = u16::from_le_bytes([payload[0], payload[1]]);
                let height = u16::from_le_bytes([payload[2], payload[3]]);
                let n = usize::from(width) * usize::from(height);
                if payload.len() != 4 + n + 5 {
                    return protocol(format!(
                        "OBS declares {width}x{height} pixels but carries {} payload bytes",
                        payload.len()
                    ));
                }
                let pixels = payload[4..4 + n].to_vec();
                let reward = f32::from_le_bytes(payload[4 + n..8 + n].try_into().expect("4 bytes"));
                let terminal = match payload[8 + n] {
                    0 => false,
                    1 => true,
                    b => return protocol(format!("terminal flag {b}")),
                };
                Ok(Message::Obs { width, height, pixels, reward, terminal })
            }
            OP_ERR => Ok(Message::Err(String::from_utf8_lossy(payload).into_owned())),
            _ => protocol(format!("unknown opcode {op}")),
        }
    }
}

fn map_io(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionAborted => {
            TransportError::Closed
        }
        _ => TransportError::Io(e),
    }
}

/// Reads as many bytes as are available up to `buf.len()`; returns the count.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize, TransportError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(map_io(e)),
        }
    }
    Ok(filled)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<(), TransportError> {
    w.write_all(&msg.encode()).map_err(map_io)?;
    w.flush().map_err(map_io)
}

/// Reads one framed message. A clean end of stream before the first byte is
/// [`TransportError::Closed`]; one inside a message is a protocol violation.
pub fn read_message(r: &mut impl Read) -> Result<Message, TransportError> {
    let mut header = [0u8; 4];
    match read_full(r, &mut header)? {
        0 => return Err(TransportError::Closed),
        4 => {}
        n => return protocol(format!("truncated length prefix ({n} of 4 bytes)")),
    }
    let len = u32::from_le_bytes(header);
    if len == 0 || len > MAX_MESSAGE_LEN {
        return protocol(format!("message length {len} outside 1..={MAX_MESSAGE_LEN}"));
    }
    let mut body = vec![0u8; len as usize];
    let got = read_full(r, &mut body)?;
    if got != body.len() {
        return protocol(format!("truncated message ({got} of {len} bytes)"));
    }
    Message::decode(&body)
}
