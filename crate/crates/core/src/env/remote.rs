//! Emulator proxy over TCP and the matching server loop.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::env::protocol::{read_message, write_message, Message, TransportError};
use crate::env::{luminance, Emulator, EnvStep, RawFrame};
use crate::error::{Error, Result};

/// An emulator living on the other end of a byte stream.
pub struct RemoteEmulator {
    stream: TcpStream,
    name: String,
    num_actions: usize,
}

impl RemoteEmulator {
    /// Connects to `addr`. The protocol carries no action-space metadata, so
    /// the caller supplies `num_actions`.
    pub fn connect(
        addr: impl ToSocketAddrs,
        name: &str,
        num_actions: usize,
        timeout: Option<Duration>,
    ) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(TransportError::from)?;
        stream.set_read_timeout(timeout).map_err(TransportError::from)?;
        stream.set_write_timeout(timeout).map_err(TransportError::from)?;
        stream.set_nodelay(true).map_err(TransportError::from)?;
        Ok(RemoteEmulator { stream, name: name.to_string(), num_actions })
    }

    fn request(&mut self, msg: &Message) -> Result<EnvStep> {
        write_message(&mut self.stream, msg)?;
        match read_message(&mut self.stream)? {
            Message::Obs { width, height, pixels, reward, terminal } => Ok(EnvStep {
                frame: RawFrame { width: width.into(), height: height.into(), channels: 1, pixels },
                reward,
                terminal,
            }),
            Message::Err(text) => Err(Error::Env(format!("remote emulator: {text}"))),
            other => Err(TransportError::Protocol(format!("expected OBS or ERR, got {other:?}")).into()),
        }
    }
}

impl Emulator for RemoteEmulator {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn reset(&mut self, seed: u32) -> Result<RawFrame> {
        Ok(self.request(&Message::Reset { seed })?.frame)
    }

    fn act(&mut self, action: usize) -> Result<EnvStep> {
        let action =
            u8::try_from(action).map_err(|_| Error::Env(format!("action {action} does not fit the protocol")))?;
        self.request(&Message::Step { action })
    }
}

fn obs_message(step: &EnvStep) -> Result<Message> {
    let gray = luminance(&step.frame);
    let (Ok(width), Ok(height)) = (u16::try_from(gray.width), u16::try_from(gray.height)) else {
        return Err(Error::Env(format!("frame {}x{} too large for the protocol", gray.width, gray.height)));
    };
    Ok(Message::Obs { width, height, pixels: gray.pixels, reward: step.reward, terminal: step.terminal })
}

/// Serves one connection until the peer hangs up. Emulator failures are
/// reported to the peer as ERR messages; transport failures end the loop.
pub fn serve_connection<E: Emulator>(mut stream: TcpStream, emu: &mut E) -> Result<()> {
    stream.set_nodelay(true).map_err(TransportError::from)?;
    loop {
        let request = match read_message(&mut stream) {
            Ok(m) => m,
            Err(TransportError::Closed) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let reply = match request {
            Message::Reset { seed } => {
                emu.reset(seed).and_then(|frame| obs_message(&EnvStep { frame, reward: 0.0, terminal: false }))
            }
            Message::Step { action } => emu.act(action.into()).and_then(|s| obs_message(&s)),
            other => Err(Error::Env(format!("unexpected request {other:?}"))),
        };
        let reply = reply.unwrap_or_else(|e| Message::Err(e.to_string()));
        write_message(&mut stream, &reply)?;
    }
}

/// Accepts connections, serving each on its own thread with a fresh
/// emulator. Returns once `max_connections` connections (when given) have
/// been accepted and finished.
pub fn serve<E: Emulator + 'static>(
    listener: &TcpListener,
    mut make: impl FnMut() -> E,
    max_connections: Option<usize>,
) -> Result<()> {
    std::thread::scope(|scope| {
        for (served, stream) in listener.incoming().enumerate() {
            let stream = stream.map_err(TransportError::from)?;
            let mut emu = make();
            scope.spawn(move || {
                if let Err(e) = serve_connection(stream, &mut emu) {
                    eprintln!("env server: connection ended with error: {e}");
                }
            });
            if max_connections.is_some_and(|m| served + 1 >= m) {
                break;
            }
        }
        Ok(())
    })
}
