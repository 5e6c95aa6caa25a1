//! Length-prefixed framing shared by the client protocol and the worker protocol.
//!
//! ```text
//! [u32 LE length][u16 LE message id][payload]
//! ```
//!
//! `length` counts the id and the payload, so it is always `2 + payload.len()`.

use thiserror::Error;

/// Bytes taken by the length prefix.
pub const LENGTH_PREFIX: usize = 4;

/// Bytes taken by the message id.
pub const ID_SIZE: usize = 2;

/// Upper bound on `length`. Anything larger is treated as a corrupt stream.
pub const MAX_FRAME_LENGTH: u32 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame length {0} out of range")]
    BadLength(u32),
    #[error("payload too large to frame ({0} bytes)")]
    PayloadTooLarge(usize),
}

/// A frame borrowed from an input buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawFrame<'a> {
    pub id: u16,
    pub payload: &'a [u8],
    /// Total bytes the frame occupies, prefix included.
    pub consumed: usize,
}

/// Peek at the message id of a partially received frame, if enough bytes are present.
pub fn peek_id(bytes: &[u8]) -> Option<u16> {
    bytes
        .get(LENGTH_PREFIX..LENGTH_PREFIX + ID_SIZE)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
}

/// Split one frame off the front of `bytes`. `Ok(None)` means more bytes are needed.
pub fn split_frame(bytes: &[u8]) -> Result<Option<RawFrame<'_>>, FrameError> {
    if bytes.len() < LENGTH_PREFIX {
        return Ok(None);
    }
    let length = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if (length as usize) < ID_SIZE || length > MAX_FRAME_LENGTH {
        return Err(FrameError::BadLength(length));
    }
    let total = LENGTH_PREFIX + length as usize;
    if bytes.len() < total {
        return Ok(None);
    }
    let id = u16::from_le_bytes([bytes[4], bytes[5]]);
    Ok(Some(RawFrame {
        id,
        payload: &bytes[LENGTH_PREFIX + ID_SIZE..total],
        consumed: total,
    }))
}

/// Wrap a payload into a frame.
pub fn frame_bytes(id: u16, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    let length = payload.len() + ID_SIZE;
    if length > MAX_FRAME_LENGTH as usize {
        return Err(FrameError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(LENGTH_PREFIX + length);
    out.extend_from_slice(&(length as u32).to_le_bytes());
    out.extend_from_slice(&id.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Little-endian cursor over a payload.
pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

/// Returned when a payload ends before a field is complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Truncated {
    pub field: &'static str,
}

macro_rules! read_le {
    ($name:ident, $ty:ty, $n:expr) => {
        pub fn $name(&mut self, field: &'static str) -> Result<$ty, Truncated> {
            let b = self.take($n, field)?;
            Ok(<$ty>::from_le_bytes(b.try_into().expect("slice length")))
        }
    };
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], Truncated> {
        if self.remaining() < n {
            return Err(Truncated { field });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    read_le!(u8, u8, 1);
    read_le!(u16, u16, 2);
    read_le!(u32, u32, 4);
    read_le!(u64, u64, 8);
    read_le!(f32, f32, 4);

    pub fn vec3(&mut self, field: &'static str) -> Result<[f32; 3], Truncated> {
        Ok([self.f32(field)?, self.f32(field)?, self.f32(field)?])
    }
}

/// Little-endian writer helpers on `Vec<u8>`.
pub(crate) trait PutLe {
    fn put_u8(&mut self, v: u8);
    fn put_u16(&mut self, v: u16);
    fn put_u32(&mut self, v: u32);
    fn put_u64(&mut self, v: u64);
    fn put_f32(&mut self, v: f32);
    fn put_vec3(&mut self, v: &[f32; 3]);
}

impl PutLe for Vec<u8> {
    fn put_u8(&mut self, v: u8) {
        self.push(v);
    }
    fn put_u16(&mut self, v: u16) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_u32(&mut self, v: u32) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_u64(&mut self, v: u64) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_f32(&mut self, v: f32) {
        self.extend_from_slice(&v.to_le_bytes());
    }
    fn put_vec3(&mut self, v: &[f32; 3]) {
        for x in v {
            self.put_f32(*x);
        }
    }
}
