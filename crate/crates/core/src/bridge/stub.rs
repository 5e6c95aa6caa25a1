//! Native stub worker used by the test suite and as the default worker.
//!
//! Models: `identity` echoes its inputs; `oracle_segmenter` returns the
//! `gt_mask` input as `mask`; `oracle_landmarks` returns `gt_landmarks` as
//! `landmarks` together with `landmark_names`. Load parameters `delay_ms`,
//! `fail_request` and `crash_request` inject latency, a RESULT error and an
//! abrupt exit for testing.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Duration;

use super::protocol::{encode_worker, ids, read_worker_message, Device, WorkerMessage};
use super::{BridgeError, Tensor};

pub const MODELS: [&str; 3] = ["identity", "oracle_segmenter", "oracle_landmarks"];

/// Exit code after a malformed frame.
pub const EXIT_MALFORMED: i32 = 2;
/// Exit code of an injected crash.
pub const EXIT_CRASH: i32 = 3;

struct Loaded {
    model: String,
    delay: Duration,
    fail_request: Option<u32>,
    crash_request: Option<u32>,
}

fn param<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, String> {
    params
        .get(key)
        .map(|v| v.parse::<T>().map_err(|_| format!("bad {key} {v:?}")))
        .transpose()
}

fn load(model_id: &str, device: Device, params: &BTreeMap<String, String>) -> Result<Loaded, String> {
    if !MODELS.contains(&model_id) {
        return Err(format!("unknown model {model_id:?}"));
    }
    if device != Device::Cpu {
        return Err("device unsupported".into());
    }
    Ok(Loaded {
        model: model_id.to_string(),
        delay: Duration::from_millis(param(params, "delay_ms")?.unwrap_or(0)),
        fail_request: param(params, "fail_request")?,
        crash_request: param(params, "crash_request")?,
    })
}

fn find<'a>(inputs: &'a [Tensor], name: &str, model: &str) -> Result<&'a Tensor, String> {
    inputs.iter().find(|t| t.name == name).ok_or_else(|| format!("{model} needs input {name:?}"))
}

fn infer(m: &Loaded, inputs: Vec<Tensor>) -> Result<Vec<Tensor>, String> {
    match m.model.as_str() {
        "identity" => Ok(inputs),
        "oracle_segmenter" => {
            let gt = find(&inputs, "gt_mask", &m.model)?;
            Ok(vec![Tensor { name: "mask".into(), ..gt.clone() }])
        }
        "oracle_landmarks" => {
            let gt = find(&inputs, "gt_landmarks", &m.model)?;
            let names = find(&inputs, "landmark_names", &m.model)?;
            Ok(vec![Tensor { name: "landmarks".into(), ..gt.clone() }, names.clone()])
        }
        other => Err(format!("model {other:?} has no inference")),
    }
}

fn send(w: &mut impl Write, m: &WorkerMessage) -> std::io::Result<()> {
    let bytes = encode_worker(m).map_err(std::io::Error::other)?;
    w.write_all(&bytes)?;
    w.flush()
}

fn log_line(log: &mut Option<&mut dyn Write>, line: &str) {
    if let Some(l) = log {
        let _ = writeln!(l, "{line}");
        let _ = l.flush();
    }
}

/// Serve requests until SHUTDOWN or end of input; returns the exit code.
pub fn serve_worker(input: &mut impl Read, output: &mut impl Write, mut log: Option<&mut dyn Write>) -> i32 {
    let mut loaded: Option<Loaded> = None;
    loop {
        let msg = match read_worker_message(input) {
            Ok(Some(m)) => m,
            Ok(None) => return 0,
            Err(BridgeError::Io(_)) => return 0,
            Err(e) => {
                log_line(&mut log, &format!("MALFORMED {e}"));
                return EXIT_MALFORMED;
            }
        };
        let reply = match msg {
            WorkerMessage::Load { model_id, device, params } => {
                log_line(&mut log, &format!("LOAD {model_id} {device}"));
                match load(&model_id, device, &params) {
                    Ok(l) => {
                        loaded = Some(l);
                        WorkerMessage::LoadAck(Ok(()))
                    }
                    Err(e) => WorkerMessage::LoadAck(Err(e)),
                }
            }
            WorkerMessage::Infer { request_id, tensors } => {
                log_line(&mut log, &format!("INFER {request_id}"));
                let outcome = match &loaded {
                    None => Err("no model loaded".to_string()),
                    Some(m) => {
                        if m.crash_request == Some(request_id) {
                            log_line(&mut log, "CRASH");
                            return EXIT_CRASH;
                        }
                        std::thread::sleep(m.delay);
                        if m.fail_request == Some(request_id) {
                            Err(format!("injected failure on request {request_id}"))
                        } else {
                            infer(m, tensors)
                        }
                    }
                };
                WorkerMessage::Result { request_id, outcome }
            }
            WorkerMessage::Shutdown => {
                log_line(&mut log, "SHUTDOWN");
                return 0;
            }
            other => {
                log_line(&mut log, &format!("UNEXPECTED {}", other.id()));
                if other.id() == ids::LOAD_ACK || other.id() == ids::RESULT {
                    return EXIT_MALFORMED;
                }
                continue;
            }
        };
        if send(output, &reply).is_err() {
            return 0;
        }
    }
}
