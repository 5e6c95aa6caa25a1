use std::collections::{BTreeMap, HashMap};
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::protocol::{encode_worker, read_worker_message, Device, WorkerMessage};
use super::{BridgeError, Tensor};

pub const DEFAULT_LOAD_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_INFER_TIMEOUT: Duration = Duration::from_secs(60);
/// Time a worker gets to exit after SHUTDOWN before it is killed.
pub const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

const STUB_WORKER: &str = "inline-stub-worker";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerTarget {
    /// Spawn a child and talk over its stdin/stdout.
    Command(Vec<String>),
    /// Connect to a persistent worker at `host:port`.
    Endpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model_id: String,
    pub device: Device,
    pub params: BTreeMap<String, String>,
    pub load_timeout: Duration,
}

impl ModelSpec {
    pub fn new(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            device: Device::Cpu,
            params: BTreeMap::new(),
            load_timeout: DEFAULT_LOAD_TIMEOUT,
        }
    }
}

static NEXT_HANDLE: AtomicU64 = AtomicU64::new(1);

/// A model loaded in one particular worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHandle {
    id: u64,
    pub model_id: String,
}

/// The stub worker binary next to the running executable (or one directory
/// up, which is where it lives relative to test binaries).
pub fn default_worker_cmd() -> Option<Vec<String>> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?;
    [dir.to_path_buf(), dir.parent().map(PathBuf::from).unwrap_or_default()]
        .into_iter()
        .map(|d| d.join(STUB_WORKER))
        .find(|p| p.is_file())
        .map(|p| vec![p.to_string_lossy().into_owned()])
}

enum Link {
    Child(Child),
    Socket(TcpStream),
}

/// Client side of one worker connection. Requests are serialized; replies
/// are matched to requests by id.
pub struct WorkerClient {
    writer: Option<BufWriter<Box<dyn Write + Send>>>,
    replies: Receiver<Result<WorkerMessage, BridgeError>>,
    reader: Option<JoinHandle<()>>,
    link: Option<Link>,
    handle: Option<ModelHandle>,
    next_request: u32,
    grace: Duration,
    broken: Option<BridgeError>,
}

impl std::fmt::Debug for WorkerClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerClient").field("handle", &self.handle).finish()
    }
}

impl WorkerClient {
    pub fn connect(target: &WorkerTarget) -> Result<Self, BridgeError> {
        let (writer, reader, link): (Box<dyn Write + Send>, Box<dyn std::io::Read + Send>, Link) = match target {
            WorkerTarget::Command(argv) => {
                let launch = |reason: String| BridgeError::Launch { command: argv.join(" "), reason };
                let (program, args) = argv.split_first().ok_or_else(|| launch("empty command".into()))?;
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| launch(e.to_string()))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), Box::new(stdout), Link::Child(child))
            }
            WorkerTarget::Endpoint(addr) => {
                let launch = |e: std::io::Error| BridgeError::Launch { command: addr.clone(), reason: e.to_string() };
                let s = TcpStream::connect(addr).map_err(launch)?;
                let _ = s.set_nodelay(true);
                let r = s.try_clone().map_err(launch)?;
                let w = s.try_clone().map_err(launch)?;
                (Box::new(w), Box::new(r), Link::Socket(s))
            }
        };
        let (tx, rx) = channel();
        let reader = thread::Builder::new()
            .name("worker reader".into())
            .spawn(move || {
                let mut r = BufReader::new(reader);
                loop {
                    match read_worker_message(&mut r) {
                        Ok(Some(m)) => {
                            if tx.send(Ok(m)).is_err() {
                                return;
                            }
                        }
                        Ok(None) => {
                            let _ = tx.send(Err(BridgeError::WorkerExited("end of stream".into())));
                            return;
                        }
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            return;
                        }
                    }
                }
            })
            .map_err(|e| BridgeError::Io(e.to_string()))?;
        Ok(Self {
            writer: Some(BufWriter::new(writer)),
            replies: rx,
            reader: Some(reader),
            link: Some(link),
            handle: None,
            next_request: 1,
            grace: SHUTDOWN_GRACE,
            broken: None,
        })
    }

    /// Shorten the SHUTDOWN grace period (tests).
    pub fn set_grace(&mut self, grace: Duration) {
        self.grace = grace;
    }

    fn send(&mut self, m: &WorkerMessage) -> Result<(), BridgeError> {
        if let Some(e) = &self.broken {
            return Err(e.clone());
        }
        let bytes = encode_worker(m)?;
        let w = self.writer.as_mut().ok_or_else(|| BridgeError::WorkerExited("worker shut down".into()))?;
        w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| self.poison(BridgeError::Io(e.to_string())))
    }

    fn poison(&mut self, e: BridgeError) -> BridgeError {
        self.broken.get_or_insert(e.clone());
        e
    }

    fn recv(&mut self, deadline: Instant, what: &'static str, timeout: Duration) -> Result<WorkerMessage, BridgeError> {
        let left = deadline.saturating_duration_since(Instant::now());
        match self.replies.recv_timeout(left) {
            Ok(Ok(m)) => Ok(m),
            Ok(Err(e)) => {
                let e = match (e, self.exit_status()) {
                    (BridgeError::WorkerExited(_), Some(status)) => BridgeError::WorkerExited(status),
                    (e, _) => e,
                };
                Err(self.poison(e))
            }
            Err(RecvTimeoutError::Timeout) => {
                Err(self.poison(BridgeError::Timeout { what, ms: timeout.as_millis() as u64 }))
            }
            Err(RecvTimeoutError::Disconnected) => Err(self.poison(BridgeError::WorkerExited("reader stopped".into()))),
        }
    }

    fn exit_status(&mut self) -> Option<String> {
        if let Some(Link::Child(c)) = &mut self.link {
            // give the reaper a moment; the pipe closes slightly before exit
            for _ in 0..50 {
                if let Ok(Some(s)) = c.try_wait() {
                    return Some(s.to_string());
                }
                thread::sleep(Duration::from_millis(2));
            }
        }
        None
    }

    /// Send LOAD and wait for the acknowledgement. A worker hosts one model.
    pub fn load(&mut self, spec: &ModelSpec) -> Result<ModelHandle, BridgeError> {
        if self.handle.is_some() {
            return Err(BridgeError::AlreadyLoaded);
        }
        self.send(&WorkerMessage::Load {
            model_id: spec.model_id.clone(),
            device: spec.device,
            params: spec.params.clone(),
        })?;
        let deadline = Instant::now() + spec.load_timeout;
        match self.recv(deadline, "model load", spec.load_timeout)? {
            WorkerMessage::LoadAck(Ok(())) => {
                let h = ModelHandle { id: NEXT_HANDLE.fetch_add(1, Ordering::Relaxed), model_id: spec.model_id.clone() };
                self.handle = Some(h.clone());
                Ok(h)
            }
            WorkerMessage::LoadAck(Err(text)) => Err(BridgeError::LoadRejected(text)),
            other => Err(self.poison(BridgeError::Unexpected(format!("message {} during load", other.id())))),
        }
    }

    pub fn infer(&mut self, handle: &ModelHandle, inputs: Vec<Tensor>, timeout: Duration) -> Result<Vec<Tensor>, BridgeError> {
        self.infer_many(handle, vec![inputs], timeout)?.pop().expect("one result")
    }

    /// Issue every request, then collect replies, matching them by request id.
    /// The outer error is a transport failure; inner ones are per-request.
    #[allow(clippy::type_complexity)]
    pub fn infer_many(
        &mut self,
        handle: &ModelHandle,
        requests: Vec<Vec<Tensor>>,
        timeout: Duration,
    ) -> Result<Vec<Result<Vec<Tensor>, BridgeError>>, BridgeError> {
        if self.handle.as_ref() != Some(handle) {
            return Err(BridgeError::InvalidHandle);
        }
        let mut pending = HashMap::new();
        for (slot, tensors) in requests.into_iter().enumerate() {
            let request_id = self.next_request;
            self.next_request = self.next_request.wrapping_add(1);
            self.send(&WorkerMessage::Infer { request_id, tensors })?;
            pending.insert(request_id, slot);
        }
        let mut results: Vec<Option<Result<Vec<Tensor>, BridgeError>>> = (0..pending.len()).map(|_| None).collect();
        let deadline = Instant::now() + timeout;
        while !pending.is_empty() {
            match self.recv(deadline, "inference", timeout)? {
                WorkerMessage::Result { request_id, outcome } => {
                    let slot = pending.remove(&request_id).ok_or_else(|| {
                        self.poison(BridgeError::Unexpected(format!("RESULT for unknown request {request_id}")))
                    })?;
                    results[slot] = Some(outcome.map_err(BridgeError::Worker));
                }
                other => {
                    return Err(self.poison(BridgeError::Unexpected(format!("message {} during inference", other.id()))))
                }
            }
        }
        Ok(results.into_iter().map(|r| r.expect("every slot answered")).collect())
    }

    /// SHUTDOWN, wait for exit up to the grace period, then kill.
    pub fn shutdown(&mut self) {
        self.handle = None;
        if self.writer.is_some() && self.broken.is_none() {
            let _ = self.send(&WorkerMessage::Shutdown);
        }
        self.writer = None; // closes stdin
        match self.link.take() {
            Some(Link::Child(mut child)) => {
                let deadline = Instant::now() + self.grace;
                loop {
                    match child.try_wait() {
                        Ok(Some(status)) => {
                            debug!("worker exited with {status}");
                            break;
                        }
                        Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                        _ => {
                            warn!("worker did not exit within {:?}, killing", self.grace);
                            let _ = child.kill();
                            let _ = child.wait();
                            break;
                        }
                    }
                }
            }
            Some(Link::Socket(s)) => {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
            None => {}
        }
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
    }

    /// OS process id of a spawned worker.
    pub fn pid(&self) -> Option<u32> {
        match &self.link {
            Some(Link::Child(c)) => Some(c.id()),
            _ => None,
        }
    }
}

impl Drop for WorkerClient {
    fn drop(&mut self) {
        self.shutdown();
    }
}
