//! Reading message streams off an ordered byte transport.

use std::collections::BTreeMap;
use std::io::{self, Read};

use thiserror::Error;

use super::{decode_message, Decoded, Message, WireError};

const READ_CHUNK: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("protocol error at byte offset {offset}: {source}")]
    Protocol { offset: u64, source: WireError },
    #[error("transport ended mid-frame at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("transport error at byte offset {offset}: {source}")]
    Io { offset: u64, source: io::Error },
}

impl SessionError {
    pub fn offset(&self) -> u64 {
        match self {
            SessionError::Protocol { offset, .. }
            | SessionError::Truncated { offset }
            | SessionError::Io { offset, .. } => *offset,
        }
    }
}

/// Incremental ICSP decoder over any `Read`.
///
/// Tolerates arbitrary chunking of the underlying stream.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
    start: usize,
    /// Stream offset of `buf[start]`.
    offset: u64,
    eof: bool,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, buf: Vec::new(), start: 0, offset: 0, eof: false }
    }

    /// Bytes consumed by fully decoded messages so far.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    /// Next message, or `Ok(None)` when the transport ends on a frame boundary.
    pub fn next_message(&mut self) -> Result<Option<Message>, SessionError> {
        loop {
            match decode_message(&self.buf[self.start..]) {
                Ok(Decoded::Message { message, consumed }) => {
                    self.start += consumed;
                    self.offset += consumed as u64;
                    if self.start == self.buf.len() {
                        self.buf.clear();
                        self.start = 0;
                    }
                    return Ok(Some(message));
                }
                Ok(Decoded::NeedMore) => {}
                Err(source) => return Err(SessionError::Protocol { offset: self.offset, source }),
            }
            if self.eof {
                return if self.start == self.buf.len() {
                    Ok(None)
                } else {
                    Err(SessionError::Truncated { offset: self.offset })
                };
            }
            self.fill()?;
        }
    }

    fn fill(&mut self) -> Result<(), SessionError> {
        if self.start > 0 {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        let len = self.buf.len();
        self.buf.resize(len + READ_CHUNK, 0);
        loop {
            match self.inner.read(&mut self.buf[len..]) {
                Ok(0) => {
                    self.eof = true;
                    self.buf.truncate(len);
                    return Ok(());
                }
                Ok(n) => {
                    self.buf.truncate(len + n);
                    return Ok(());
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(source) => {
                    self.buf.truncate(len);
                    return Err(SessionError::Io { offset: self.offset, source });
                }
            }
        }
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<Message, SessionError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_message().transpose()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionSummary {
    /// Message count per message id.
    pub counts: BTreeMap<u16, usize>,
    /// True when the session ended with CLOSE.
    pub terminated: bool,
    pub bytes: u64,
}

/// Deliver every message of a session to `sink`, in wire order.
///
/// Stops after CLOSE or at the end of the transport.
pub fn stream_session<R: Read>(
    transport: R,
    mut sink: impl FnMut(Message),
) -> Result<SessionSummary, SessionError> {
    let mut reader = FrameReader::new(transport);
    let mut summary = SessionSummary::default();
    while let Some(message) = reader.next_message()? {
        *summary.counts.entry(message.id() as u16).or_default() += 1;
        let close = matches!(message, Message::Close);
        sink(message);
        if close {
            summary.terminated = true;
            break;
        }
    }
    summary.bytes = reader.offset();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{encode_message, Meta};

    fn bytes(messages: &[Message]) -> Vec<u8> {
        messages.iter().flat_map(|m| encode_message(m).unwrap()).collect()
    }

    #[test]
    fn counts_handshake_and_close() {
        let data = bytes(&[
            Message::ConfigName("sax".into()),
            Message::SessionHeader(Meta::new().with("patient_key", "p1")),
            Message::Close,
        ]);
        let mut seen = Vec::new();
        let summary = stream_session(&data[..], |m| seen.push(m.id() as u16)).unwrap();
        assert!(summary.terminated);
        assert_eq!(summary.counts, BTreeMap::from([(1, 1), (3, 1), (4, 1)]));
        assert_eq!(seen, [1, 3, 4]);
    }

    #[test]
    fn mid_frame_end_reports_offset() {
        let mut data = bytes(&[Message::Text("hello".into()), Message::Text("world".into())]);
        let first = encode_message(&Message::Text("hello".into())).unwrap().len();
        data.truncate(data.len() - 2);
        let err = stream_session(&data[..], |_| {}).unwrap_err();
        assert!(matches!(err, SessionError::Truncated { .. }));
        assert_eq!(err.offset(), first as u64);
    }

    #[test]
    fn protocol_error_reports_offset() {
        let mut data = bytes(&[Message::Text("a".into())]);
        let good = data.len() as u64;
        data.extend_from_slice(&[2, 0, 0, 0, 99, 0]);
        let err = stream_session(&data[..], |_| {}).unwrap_err();
        assert_eq!(err.offset(), good);
        assert!(matches!(err, SessionError::Protocol { source: WireError::UnknownMessageId(99), .. }));
    }

    #[test]
    fn stops_at_close() {
        let data = bytes(&[Message::Close, Message::Text("late".into())]);
        let mut n = 0;
        let summary = stream_session(&data[..], |_| n += 1).unwrap();
        assert_eq!(n, 1);
        assert!(summary.terminated);
    }
}
