//! Transport behind the modem's data channel. The modem only ever sends one
//! newline-terminated frame and reads one reply line, so the trait is tiny.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::gateway::store::GatewayStore;

#[derive(Debug)]
pub enum LinkError {
    /// `send_frame` before `connect`, or after the peer vanished.
    NotConnected,
    /// Connection establishment failed.
    Unreachable(String),
    /// Transfer failed mid-flight.
    Io(String),
}

impl fmt::Display for LinkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkError::NotConnected => write!(f, "data link is not connected"),
            LinkError::Unreachable(detail) => write!(f, "peer unreachable: {detail}"),
            LinkError::Io(detail) => write!(f, "data link I/O error: {detail}"),
        }
    }
}

impl std::error::Error for LinkError {}

/// One frame out, one reply line back.
pub trait DataLink {
    fn connect(&mut self, host: &str, port: u16) -> Result<(), LinkError>;
    /// Deliver one frame and return the peer's reply line (trailing newline
    /// included when the peer sent one).
    fn send_frame(&mut self, frame: &[u8]) -> Result<Vec<u8>, LinkError>;
    fn disconnect(&mut self);
}

/// Loopback link straight into a [`GatewayStore`]: the default harness
/// transport, fully deterministic and free of real sockets.
pub struct InProcessLink {
    store: Rc<RefCell<GatewayStore>>,
    connected: bool,
}

impl InProcessLink {
    pub fn new(store: Rc<RefCell<GatewayStore>>) -> Self {
        InProcessLink {
            store,
            connected: false,
        }
    }

    pub fn store(&self) -> Rc<RefCell<GatewayStore>> {
        self.store.clone()
    }
}

impl DataLink for InProcessLink {
    fn connect(&mut self, _host: &str, _port: u16) -> Result<(), LinkError> {
        self.connected = true;
        Ok(())
    }

    fn send_frame(&mut self, frame: &[u8]) -> Result<Vec<u8>, LinkError> {
        if !self.connected {
            return Err(LinkError::NotConnected);
        }
        Ok(self.store.borrow_mut().ingest_reply(frame))
    }

    fn disconnect(&mut self) {
        self.connected = false;
    }
}

/// Real TCP transport for `--remote` runs, speaking the same one-line
/// request/reply exchange against a live gateway ingest socket.
#[cfg(not(target_arch = "wasm32"))]
pub use tcp::TcpLink;

#[cfg(not(target_arch = "wasm32"))]
mod tcp {
    use super::{DataLink, LinkError};
    use std::io::{Read, Write};
    use std::net::TcpStream;
    use std::time::Duration;

    const REPLY_TIMEOUT: Duration = Duration::from_secs(5);

    #[derive(Default)]
    pub struct TcpLink {
        stream: Option<TcpStream>,
        /// Bytes read past the last reply line (the peer never pipelines,
        /// but a buffer keeps the read loop honest).
        residue: Vec<u8>,
    }

    impl TcpLink {
        pub fn new() -> Self {
            TcpLink::default()
        }
    }

    impl DataLink for TcpLink {
        fn connect(&mut self, host: &str, port: u16) -> Result<(), LinkError> {
            let stream = TcpStream::connect((host, port))
                .map_err(|e| LinkError::Unreachable(e.to_string()))?;
            stream
                .set_read_timeout(Some(REPLY_TIMEOUT))
                .map_err(|e| LinkError::Io(e.to_string()))?;
            self.stream = Some(stream);
            self.residue.clear();
            Ok(())
        }

        fn send_frame(&mut self, frame: &[u8]) -> Result<Vec<u8>, LinkError> {
            let stream = self.stream.as_mut().ok_or(LinkError::NotConnected)?;
            stream
                .write_all(frame)
                .map_err(|e| LinkError::Io(e.to_string()))?;
            let mut chunk = [0u8; 256];
            loop {
                if let Some(pos) = self.residue.iter().position(|&b| b == b'\n') {
                    let mut line: Vec<u8> = self.residue.drain(..=pos).collect();
                    line.shrink_to_fit();
                    return Ok(line);
                }
                let n = stream
                    .read(&mut chunk)
                    .map_err(|e| LinkError::Io(e.to_string()))?;
                if n == 0 {
                    return Err(LinkError::Io("peer closed before replying".to_string()));
                }
                self.residue.extend_from_slice(&chunk[..n]);
            }
        }

        fn disconnect(&mut self) {
            if let Some(stream) = self.stream.take() {
                let _ = stream.shutdown(std::net::Shutdown::Both);
            }
            self.residue.clear();
        }
    }
}
