//! Worker protocol frames. Framing is shared with ICSP; payloads:
//!
//! | id | message  | payload |
//! |----|----------|---------|
//! | 1  | LOAD     | u16 len + model_id, u8 device (0 cpu, 1 gpu), u16 n, n × (u16 len + key, u16 len + value) |
//! | 2  | LOAD_ACK | u8 status (0 ok), u32 len + text |
//! | 3  | INFER    | u32 request_id, u16 n, n × tensor |
//! | 4  | RESULT   | u32 request_id, u8 status (0 ok), u32 len + error text, u16 n, n × tensor |
//! | 5  | SHUTDOWN | empty |

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read};
use std::str::FromStr;

use crate::wire::frame::{frame_bytes, split_frame, ByteReader, PutLe, ID_SIZE, LENGTH_PREFIX, MAX_FRAME_LENGTH};

use super::{BridgeError, Tensor};

pub mod ids {
    pub const LOAD: u16 = 1;
    pub const LOAD_ACK: u16 = 2;
    pub const INFER: u16 = 3;
    pub const RESULT: u16 = 4;
    pub const SHUTDOWN: u16 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Device {
    #[default]
    Cpu,
    Gpu,
}

impl FromStr for Device {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cpu" => Ok(Device::Cpu),
            "gpu" | "cuda" => Ok(Device::Gpu),
            other => Err(format!("unknown device {other:?}")),
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Device::Cpu => "cpu",
            Device::Gpu => "gpu",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerMessage {
    Load { model_id: String, device: Device, params: BTreeMap<String, String> },
    LoadAck(Result<(), String>),
    Infer { request_id: u32, tensors: Vec<Tensor> },
    Result { request_id: u32, outcome: Result<Vec<Tensor>, String> },
    Shutdown,
}

impl WorkerMessage {
    pub fn id(&self) -> u16 {
        match self {
            WorkerMessage::Load { .. } => ids::LOAD,
            WorkerMessage::LoadAck(_) => ids::LOAD_ACK,
            WorkerMessage::Infer { .. } => ids::INFER,
            WorkerMessage::Result { .. } => ids::RESULT,
            WorkerMessage::Shutdown => ids::SHUTDOWN,
        }
    }
}

fn put_str16(out: &mut Vec<u8>, s: &str, field: &str) -> Result<(), BridgeError> {
    let len = u16::try_from(s.len()).map_err(|_| BridgeError::Protocol(format!("{field} longer than 65535 bytes")))?;
    out.put_u16(len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_str32(out: &mut Vec<u8>, s: &str) {
    out.put_u32(s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_tensors(out: &mut Vec<u8>, tensors: &[Tensor]) -> Result<(), BridgeError> {
    let n = u16::try_from(tensors.len()).map_err(|_| BridgeError::Protocol("more than 65535 tensors".into()))?;
    out.put_u16(n);
    tensors.iter().try_for_each(|t| t.encode(out))
}

fn text(bytes: &[u8], field: &str) -> Result<String, BridgeError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| BridgeError::Protocol(format!("{field} is not UTF-8")))
}

fn str16(r: &mut ByteReader, field: &'static str) -> Result<String, BridgeError> {
    let n = r.u16(field)? as usize;
    text(r.take(n, field)?, field)
}

fn str32(r: &mut ByteReader, field: &'static str) -> Result<String, BridgeError> {
    let n = r.u32(field)? as usize;
    text(r.take(n, field)?, field)
}

fn tensors(r: &mut ByteReader) -> Result<Vec<Tensor>, BridgeError> {
    let n = r.u16("tensor_count")?;
    (0..n).map(|_| Tensor::decode(r)).collect()
}

pub fn encode_worker(m: &WorkerMessage) -> Result<Vec<u8>, BridgeError> {
    let mut p = Vec::new();
    match m {
        WorkerMessage::Load { model_id, device, params } => {
            put_str16(&mut p, model_id, "model_id")?;
            p.put_u8(match device {
                Device::Cpu => 0,
                Device::Gpu => 1,
            });
            let n = u16::try_from(params.len()).map_err(|_| BridgeError::Protocol("too many params".into()))?;
            p.put_u16(n);
            for (k, v) in params {
                put_str16(&mut p, k, "param key")?;
                put_str16(&mut p, v, "param value")?;
            }
        }
        WorkerMessage::LoadAck(status) => {
            p.put_u8(status.is_err() as u8);
            put_str32(&mut p, status.as_ref().err().map_or("", String::as_str));
        }
        WorkerMessage::Infer { request_id, tensors } => {
            p.put_u32(*request_id);
            put_tensors(&mut p, tensors)?;
        }
        WorkerMessage::Result { request_id, outcome } => {
            p.put_u32(*request_id);
            p.put_u8(outcome.is_err() as u8);
            match outcome {
                Ok(t) => {
                    put_str32(&mut p, "");
                    put_tensors(&mut p, t)?;
                }
                Err(e) => {
                    put_str32(&mut p, e);
                    p.put_u16(0);
                }
            }
        }
        WorkerMessage::Shutdown => {}
    }
    frame_bytes(m.id(), &p).map_err(|e| BridgeError::Protocol(e.to_string()))
}

pub fn decode_worker_payload(id: u16, payload: &[u8]) -> Result<WorkerMessage, BridgeError> {
    let mut r = ByteReader::new(payload);
    let m = match id {
        ids::LOAD => {
            let model_id = str16(&mut r, "model_id")?;
            let device = match r.u8("device")? {
                0 => Device::Cpu,
                1 => Device::Gpu,
                d => return Err(BridgeError::Protocol(format!("unknown device code {d}"))),
            };
            let n = r.u16("param_count")?;
            let mut params = BTreeMap::new();
            for _ in 0..n {
                let k = str16(&mut r, "param key")?;
                params.insert(k, str16(&mut r, "param value")?);
            }
            WorkerMessage::Load { model_id, device, params }
        }
        ids::LOAD_ACK => {
            let status = r.u8("status")?;
            let t = str32(&mut r, "text")?;
            WorkerMessage::LoadAck(if status == 0 { Ok(()) } else { Err(t) })
        }
        ids::INFER => {
            let request_id = r.u32("request_id")?;
            WorkerMessage::Infer { request_id, tensors: tensors(&mut r)? }
        }
        ids::RESULT => {
            let request_id = r.u32("request_id")?;
            let status = r.u8("status")?;
            let err = str32(&mut r, "error")?;
            let t = tensors(&mut r)?;
            WorkerMessage::Result { request_id, outcome: if status == 0 { Ok(t) } else { Err(err) } }
        }
        ids::SHUTDOWN => WorkerMessage::Shutdown,
        other => return Err(BridgeError::Protocol(format!("unknown worker message id {other}"))),
    };
    if r.remaining() != 0 {
        return Err(BridgeError::Protocol(format!("{} trailing bytes in message {id}", r.remaining())));
    }
    Ok(m)
}

/// Decode one frame from the front of `bytes`; `Ok(None)` means more bytes are needed.
pub fn decode_worker(bytes: &[u8]) -> Result<Option<(WorkerMessage, usize)>, BridgeError> {
    match split_frame(bytes).map_err(|e| BridgeError::Protocol(e.to_string()))? {
        None => Ok(None),
        Some(f) => Ok(Some((decode_worker_payload(f.id, f.payload)?, f.consumed))),
    }
}

/// Blocking read of one frame. `Ok(None)` on end of stream at a frame boundary.
pub fn read_worker_message(r: &mut impl Read) -> Result<Option<WorkerMessage>, BridgeError> {
    let mut prefix = [0u8; LENGTH_PREFIX];
    let mut got = 0;
    while got < LENGTH_PREFIX {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(BridgeError::Protocol("stream ended inside a frame".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(BridgeError::Io(e.to_string())),
        }
    }
    let length = u32::from_le_bytes(prefix);
    if (length as usize) < ID_SIZE || length > MAX_FRAME_LENGTH {
        return Err(BridgeError::Protocol(format!("frame length {length} out of range")));
    }
    let mut body = vec![0u8; length as usize];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => BridgeError::Protocol("stream ended inside a frame".into()),
        _ => BridgeError::Io(e.to_string()),
    })?;
    let id = u16::from_le_bytes([body[0], body[1]]);
    decode_worker_payload(id, &body[ID_SIZE..]).map(Some)
}
