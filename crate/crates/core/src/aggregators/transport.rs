use std::fs::OpenOptions;
use std::io::{self, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::wire::write_frame;

/// Acknowledgement byte sent by the ingestion listener after a frame was stored.
pub const ACK: u8 = 0x06;
/// Negative acknowledgement: the frame was received but rejected.
pub const NAK: u8 = 0x15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("link failure: {0}")]
    Link(String),
    #[error("receiver rejected the batch")]
    Rejected,
    #[error("batch could not be encoded: {0}")]
    Encoding(String),
}

impl From<io::Error> for TransportError {
    fn from(e: io::Error) -> Self {
        TransportError::Link(e.to_string())
    }
}

/// Send-with-acknowledgement link to the backend. `Ok` means the receiver
/// confirmed the frame.
pub trait Transport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
}

/// Appends frames to a `.ksb` file; a completed, flushed write counts as acknowledged.
#[derive(Debug, Clone)]
pub struct FileTransport {
    path: PathBuf,
}

impl FileTransport {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileTransport { path: path.into() }
    }
}

impl Transport for FileTransport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        let file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let mut w = BufWriter::new(file);
        write_frame(&mut w, frame).map_err(|e| TransportError::Link(e.to_string()))?;
        w.flush()?;
        w.get_ref().sync_data()?;
        Ok(())
    }
}

/// One connection to the ingestion listener. Each frame waits for an ACK byte.
#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        write_frame(&mut self.stream, frame).map_err(|e| TransportError::Link(e.to_string()))?;
        self.stream.flush()?;
        let mut ack = [0u8; 1];
        self.stream.read_exact(&mut ack)?;
        match ack[0] {
            ACK => Ok(()),
            _ => Err(TransportError::Rejected),
        }
    }
}
