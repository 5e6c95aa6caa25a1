//! Full-duplex streaming client with pacing and receive timestamps.

use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::wire::{encode_message, FrameReader, Message, MessageId};

use super::phantom::Pacing;
use super::session::Session;
use super::SimError;

/// How long the client waits for the server to finish after CLOSE.
pub const RESULT_TIMEOUT: Duration = Duration::from_secs(300);

/// Send and receive timestamps in microseconds since connect.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingLog {
    pub sent: Vec<(u16, u64)>,
    pub received: Vec<(u16, u64)>,
}

fn is_result(id: u16) -> bool {
    [MessageId::Image, MessageId::Report, MessageId::Text].iter().any(|m| *m as u16 == id)
}

impl TimingLog {
    pub fn last_acquisition_us(&self) -> Option<u64> {
        self.sent.iter().rev().find(|(id, _)| *id == MessageId::Acquisition as u16).map(|e| e.1)
    }

    pub fn first_result_us(&self) -> Option<u64> {
        self.received.iter().find(|(id, _)| is_result(*id)).map(|e| e.1)
    }

    pub fn first_image_us(&self) -> Option<u64> {
        self.received.iter().find(|(id, _)| *id == MessageId::Image as u16).map(|e| e.1)
    }

    pub fn last_result_us(&self) -> Option<u64> {
        self.received.iter().rev().find(|(id, _)| is_result(*id)).map(|e| e.1)
    }

    /// Time from the last acquisition to the last result, in ms.
    pub fn completion_ms(&self) -> Option<f64> {
        let (a, r) = (self.last_acquisition_us()?, self.last_result_us()?);
        Some((r as f64 - a as f64) / 1000.0)
    }

    pub fn first_result_latency_ms(&self) -> Option<f64> {
        let first_sent = self.sent.first()?.1;
        Some((self.first_result_us()? as f64 - first_sent as f64) / 1000.0)
    }

    pub fn is_monotone(&self) -> bool {
        let mono = |v: &[(u16, u64)]| v.windows(2).all(|w| w[0].1 <= w[1].1);
        mono(&self.sent) && mono(&self.received)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub timing: TimingLog,
    pub received: Vec<Message>,
    /// The server answered CLOSE.
    pub server_closed: bool,
}

impl RunRecord {
    pub fn reports(&self) -> impl Iterator<Item = &str> {
        self.received.iter().filter_map(|m| match m {
            Message::Report(r) => Some(r.as_str()),
            _ => None,
        })
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.received.iter().filter_map(|m| match m {
            Message::Text(t) => Some(t.as_str()),
            _ => None,
        })
    }
}

fn micros(start: Instant) -> u64 {
    start.elapsed().as_micros() as u64
}

/// Stream `session` to `endpoint` and collect everything the server sends
/// back. Sent frames are also written to `capture` when given.
pub fn run_client(
    endpoint: &str,
    session: &Session,
    pacing: Option<Pacing>,
    mut capture: Option<&mut dyn Write>,
) -> Result<RunRecord, SimError> {
    let stream = TcpStream::connect(endpoint)?;
    let start = Instant::now();
    let _ = stream.set_nodelay(true);
    stream.set_read_timeout(Some(RESULT_TIMEOUT))?;
    let reader_stream = stream.try_clone()?;
    let receiver = thread::Builder::new().name("sim receiver".into()).spawn(move || {
        let mut reader = FrameReader::new(BufReader::new(reader_stream));
        let mut got = Vec::new();
        let mut log = Vec::new();
        loop {
            match reader.next_message() {
                Ok(Some(m)) => {
                    log.push((m.id() as u16, micros(start)));
                    let close = m == Message::Close;
                    got.push(m);
                    if close {
                        return Ok((got, log, true));
                    }
                }
                Ok(None) => return Ok((got, log, false)),
                Err(e) => return Err(SimError::Protocol(e.to_string())),
            }
        }
    })?;

    let mut sent = Vec::new();
    let mut w = BufWriter::new(stream.try_clone()?);
    let send_result = (|| -> Result<(), SimError> {
        for planned in session.messages() {
            if let (Some(p), Some(slot)) = (pacing, planned.slot) {
                let due = Duration::from_secs_f64(p.offset_ms(slot.slice, slot.index, slot.count) / 1000.0);
                if let Some(wait) = due.checked_sub(start.elapsed()) {
                    thread::sleep(wait);
                }
            }
            let bytes = encode_message(&planned.message)?;
            w.write_all(&bytes)?;
            if pacing.is_some() {
                w.flush()?;
            }
            if let Some(c) = capture.as_deref_mut() {
                c.write_all(&bytes)?;
            }
            sent.push((planned.message.id() as u16, micros(start)));
        }
        w.flush()?;
        Ok(())
    })();
    if send_result.is_err() {
        let _ = stream.shutdown(Shutdown::Both);
    }
    let received = receiver.join().map_err(|_| SimError::Protocol("receiver panicked".into()))?;
    let _ = stream.shutdown(Shutdown::Both);
    send_result?;
    let (received, log, closed) = received?;
    debug!("run finished: {} sent, {} received", sent.len(), received.len());
    Ok(RunRecord { timing: TimingLog { sent, received: log }, received, server_closed: closed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_metrics() {
        let t = TimingLog {
            sent: vec![(1, 0), (10, 100), (10, 2000), (4, 2100)],
            received: vec![(11, 500), (13, 3000), (4, 3100)],
        };
        assert_eq!(t.last_acquisition_us(), Some(2000));
        assert_eq!(t.first_result_us(), Some(500));
        assert_eq!(t.completion_ms(), Some(1.0));
        assert_eq!(t.first_result_latency_ms(), Some(0.5));
        assert!(t.is_monotone());
    }

    #[test]
    fn pacing_offsets() {
        let p = Pacing::default();
        assert_eq!(p.offset_ms(0, 0, 10), 0.0);
        assert_eq!(p.offset_ms(2, 5, 10), 2.0 * 450.0 + 150.0);
        assert_eq!(Pacing::scaled(0.0), None);
        assert_eq!(Pacing::scaled(2.0).unwrap().slice_ms, 600.0);
    }
}
