//! Length-prefixed framing used by `.ksb` files and the ingestion socket:
//! `u32 LE frame length | encoded batch`.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{decode_batch, encode_batch, BatchEnvelope, WireError};

/// Upper bound on a single frame; a full envelope of maximal records stays far below.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the frame size limit")]
    TooLarge(u32),
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("frame {index}: {source}")]
    Wire {
        index: usize,
        #[source]
        source: WireError,
    },
}

pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> Result<(), FrameError> {
    let len = u32::try_from(frame.len())
        .ok()
        .filter(|&l| l <= MAX_FRAME_LEN)
        .ok_or(FrameError::TooLarge(u32::MAX))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(frame)?;
    Ok(())
}

/// Reads the next frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut len[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(FrameError::TooLarge(len));
    }
    let mut frame = vec![0u8; len as usize];
    r.read_exact(&mut frame).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(frame))
}

/// Writes envelopes as consecutive frames.
pub fn write_ksb(path: &Path, envelopes: &[BatchEnvelope]) -> Result<(), FrameError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    for (index, e) in envelopes.iter().enumerate() {
        let bytes = encode_batch(e).map_err(|source| FrameError::Wire { index, source })?;
        write_frame(&mut w, &bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ksb(path: &Path) -> Result<Vec<BatchEnvelope>, FrameError> {
    let mut r = io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    while let Some(frame) = read_frame(&mut r)? {
        let index = out.len();
        out.push(decode_batch(&frame).map_err(|source| FrameError::Wire { index, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::StationId;
    use crate::wire::FixedPosition;

    #[test]
    fn frames_round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ksb");
        let envs = vec![
            BatchEnvelope::new(StationId(1), 10, FixedPosition::default(), vec![]),
            BatchEnvelope::new(StationId(2), 20, FixedPosition { lat_e7: 5, lon_e7: -5 }, vec![]),
        ];
        write_ksb(&path, &envs).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 2 * (4 + 26));
        assert_eq!(read_ksb(&path).unwrap(), envs);
    }

    #[test]
    fn truncated_stream() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &[1, 2, 3]).unwrap();
        buf.pop();
        assert!(matches!(read_frame(&mut buf.as_slice()), Err(FrameError::Truncated)));
        assert!(matches!(read_frame(&mut &[1u8, 0][..]), Err(FrameError::Truncated)));
        assert!(matches!(read_frame(&mut &[][..]), Ok(None)));
    }

    #[test]
    fn oversized_length_is_refused() {
        let buf = (MAX_FRAME_LEN + 1).to_le_bytes();
        assert!(matches!(read_frame(&mut &buf[..]), Err(FrameError::TooLarge(_))));
    }
}
