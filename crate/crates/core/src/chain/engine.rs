use std::collections::BTreeMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::os::unix::net::UnixStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, error, info, warn};
use thiserror::Error;

use crate::wire::{encode_message, FrameReader, Message, SessionError, WireError};

use super::{assemble_chain, parse_chain_config, resolve_chain, ChainDefaults, Gadget, GadgetRegistry, Item, SessionStore};

/// Capacity of every inter-stage queue.
pub const QUEUE_CAPACITY: usize = 64;

/// A bidirectional byte stream the engine can split into reader and writer halves.
pub trait Transport: Read + Write + Send + Sized + 'static {
    fn try_clone_transport(&self) -> io::Result<Self>;
    /// Unblock a pending read on another handle.
    fn shutdown_read(&self);
}

impl Transport for TcpStream {
    fn try_clone_transport(&self) -> io::Result<Self> {
        self.try_clone()
    }

    fn shutdown_read(&self) {
        let _ = self.shutdown(Shutdown::Read);
    }
}

impl Transport for UnixStream {
    fn try_clone_transport(&self) -> io::Result<Self> {
        self.try_clone()
    }

    fn shutdown_read(&self) {
        let _ = self.shutdown(Shutdown::Read);
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("handshake: {0}")]
    Handshake(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageSummary {
    pub name: String,
    pub received: usize,
    pub emitted: usize,
    pub first_emit: Option<Duration>,
    pub last_emit: Option<Duration>,
}

impl StageSummary {
    fn emit(&mut self, at: Duration) {
        self.emitted += 1;
        self.first_emit.get_or_insert(at);
        self.last_emit = Some(at);
    }
}

/// Per-connection counts and timestamps, relative to connection start.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConnectionSummary {
    pub chain: String,
    pub stages: Vec<StageSummary>,
    pub messages_in: BTreeMap<u16, usize>,
    pub messages_out: BTreeMap<u16, usize>,
    /// Items that reached the writer with no wire representation.
    pub dropped: usize,
    pub first_message: Option<Duration>,
    pub last_acquisition: Option<Duration>,
    pub close_received: Option<Duration>,
    pub finished: Duration,
    pub error: Option<String>,
}

struct Shared {
    start: Instant,
    abort: AtomicBool,
    failure: Mutex<Option<String>>,
}

impl Shared {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn fail(&self, message: String) {
        error!("{message}");
        let mut f = self.failure.lock().unwrap_or_else(|e| e.into_inner());
        f.get_or_insert(message);
        self.abort.store(true, Ordering::SeqCst);
    }

    fn aborted(&self) -> bool {
        self.abort.load(Ordering::SeqCst)
    }

    fn failure(&self) -> Option<String> {
        self.failure.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

fn write_message(w: &mut impl Write, m: &Message) -> Result<(), EngineError> {
    w.write_all(&encode_message(m)?)?;
    Ok(())
}

fn reject<T: Transport>(transport: T, reason: String) -> EngineError {
    warn!("rejecting connection: {reason}");
    let mut w = BufWriter::new(transport);
    let _ = write_message(&mut w, &Message::Text(format!("error: {reason}")));
    let _ = write_message(&mut w, &Message::Close);
    let _ = w.flush();
    EngineError::Handshake(reason)
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_stage(
    name: &str,
    gadget: &mut dyn Gadget,
    rx: Receiver<Item>,
    tx: SyncSender<Item>,
    shared: &Shared,
) -> StageSummary {
    let mut summary = StageSummary { name: name.to_string(), ..Default::default() };
    let mut out = Vec::new();
    for item in rx.iter() {
        if shared.aborted() {
            return summary;
        }
        summary.received += 1;
        match catch_unwind(AssertUnwindSafe(|| gadget.process(item, &mut out))) {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                shared.fail(format!("stage {name} failed: {e}"));
                return summary;
            }
            Err(p) => {
                shared.fail(format!("stage {name} panicked: {}", panic_text(p)));
                return summary;
            }
        }
        for o in out.drain(..) {
            summary.emit(shared.now());
            if tx.send(o).is_err() {
                return summary;
            }
        }
    }
    if shared.aborted() {
        return summary;
    }
    match catch_unwind(AssertUnwindSafe(|| gadget.flush(&mut out))) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            shared.fail(format!("stage {name} failed during flush: {e}"));
            return summary;
        }
        Err(p) => {
            shared.fail(format!("stage {name} panicked during flush: {}", panic_text(p)));
            return summary;
        }
    }
    for o in out.drain(..) {
        summary.emit(shared.now());
        if tx.send(o).is_err() {
            break;
        }
    }
    summary
}

#[derive(Default)]
struct WriterSummary {
    counts: BTreeMap<u16, usize>,
    dropped: usize,
}

fn to_messages(item: Item, dropped: &mut usize) -> Vec<Message> {
    match item {
        Item::Image(f) => vec![Message::Image(f)],
        Item::Group(g) => g.frames.into_iter().map(Message::Image).collect(),
        Item::Report(r) => vec![Message::Report(r)],
        Item::Text(t) => vec![Message::Text(t)],
        Item::Waveform(w) => vec![Message::Waveform(w)],
        other => {
            debug!("writer dropping {} item", other.kind());
            *dropped += 1;
            Vec::new()
        }
    }
}

fn run_writer<T: Transport>(transport: T, rx: Receiver<Item>, shared: &Shared) -> WriterSummary {
    let mut summary = WriterSummary::default();
    let mut w = BufWriter::new(transport);
    let send = |w: &mut BufWriter<T>, m: Message, summary: &mut WriterSummary| -> bool {
        let id = m.id() as u16;
        match write_message(w, &m) {
            Ok(()) => {
                *summary.counts.entry(id).or_default() += 1;
                true
            }
            Err(e) => {
                shared.fail(format!("writing to client: {e}"));
                false
            }
        }
    };
    loop {
        let item = match rx.try_recv() {
            Ok(i) => i,
            Err(TryRecvError::Empty) => {
                if let Err(e) = w.flush() {
                    shared.fail(format!("writing to client: {e}"));
                    return summary;
                }
                match rx.recv() {
                    Ok(i) => i,
                    Err(_) => break,
                }
            }
            Err(TryRecvError::Disconnected) => break,
        };
        if shared.aborted() {
            break;
        }
        for m in to_messages(item, &mut summary.dropped) {
            if !send(&mut w, m, &mut summary) {
                return summary;
            }
        }
    }
    if let Some(reason) = shared.failure() {
        send(&mut w, Message::Text(format!("error: {reason}")), &mut summary);
    }
    send(&mut w, Message::Close, &mut summary);
    let _ = w.flush();
    if shared.aborted() {
        w.get_ref().shutdown_read();
    }
    summary
}

/// Run one client connection to completion.
///
/// The client must open with CONFIG_NAME or CONFIG_INLINE followed by
/// SESSION_HEADER. Data messages then stream through the chain as they
/// arrive; CLOSE flushes the stages in order and the server answers with
/// CLOSE once every result has been written. A stage failure is reported
/// to the client as TEXT and tears the chain down; it is returned in
/// [`ConnectionSummary::error`] rather than as `Err`.
pub fn serve_connection<T: Transport>(
    transport: T,
    registry: &GadgetRegistry,
    store: &Arc<SessionStore>,
    defaults: &ChainDefaults,
) -> Result<ConnectionSummary, EngineError> {
    let shared = Shared { start: Instant::now(), abort: AtomicBool::new(false), failure: Mutex::new(None) };
    let mut summary = ConnectionSummary::default();
    let mut reader = FrameReader::new(BufReader::new(transport.try_clone_transport()?));

    let mut next = |summary: &mut ConnectionSummary| -> Result<Option<Message>, SessionError> {
        let m = reader.next_message()?;
        if let Some(m) = &m {
            summary.first_message.get_or_insert(shared.now());
            *summary.messages_in.entry(m.id() as u16).or_default() += 1;
        }
        Ok(m)
    };

    let config = match next(&mut summary) {
        Ok(Some(Message::ConfigName(name))) => resolve_chain(name.trim(), defaults).map_err(|e| e.to_string()),
        Ok(Some(Message::ConfigInline(text))) => parse_chain_config(&text).map_err(|e| e.to_string()),
        Ok(Some(other)) => Err(format!("expected chain configuration, got {:?}", other.id())),
        Ok(None) => Err("connection closed before configuration".into()),
        Err(e) => Err(e.to_string()),
    };
    let config = match config {
        Ok(c) => c,
        Err(reason) => return Err(reject(transport, reason)),
    };
    let session = match next(&mut summary) {
        Ok(Some(Message::SessionHeader(meta))) => meta,
        Ok(Some(other)) => return Err(reject(transport, format!("expected session header, got {:?}", other.id()))),
        Ok(None) => return Err(reject(transport, "connection closed before session header".into())),
        Err(e) => return Err(reject(transport, e.to_string())),
    };
    let chain = match assemble_chain(&config, registry, &session, store, defaults) {
        Ok(c) => c,
        Err(e) => return Err(reject(transport, e.to_string())),
    };
    info!("connection running chain {} ({} stages)", chain.name, chain.len());
    summary.chain = chain.name.clone();

    let n = chain.stages.len();
    let (mut senders, mut receivers): (Vec<_>, Vec<_>) = (0..=n).map(|_| sync_channel::<Item>(QUEUE_CAPACITY)).unzip();
    let mut stages = chain.stages;

    thread::scope(|scope| {
        let shared = &shared;
        let writer_rx = receivers.pop().expect("writer queue");
        let writer = scope.spawn(move || run_writer(transport, writer_rx, shared));
        let mut handles = Vec::with_capacity(n);
        for (i, ((name, gadget), rx)) in stages.iter_mut().zip(receivers.drain(..)).enumerate() {
            let tx = senders[i + 1].clone();
            handles.push(scope.spawn(move || run_stage(name, gadget.as_mut(), rx, tx, shared)));
        }
        let head = senders.swap_remove(0);
        senders.clear();

        loop {
            let msg = match next(&mut summary) {
                Ok(Some(m)) => m,
                Ok(None) => {
                    if !shared.aborted() {
                        shared.fail("client disconnected without CLOSE".into());
                    }
                    break;
                }
                Err(e) => {
                    if !shared.aborted() {
                        shared.fail(format!("protocol error at byte {}: {e}", e.offset()));
                    }
                    break;
                }
            };
            let item = match msg {
                Message::Close => {
                    summary.close_received = Some(shared.now());
                    break;
                }
                Message::Acquisition(r) => {
                    summary.last_acquisition = Some(shared.now());
                    Item::Readout(r)
                }
                Message::Image(f) => Item::Image(f),
                Message::Waveform(w) => Item::Waveform(w),
                Message::Text(t) => {
                    info!("client: {t}");
                    continue;
                }
                other => {
                    shared.fail(format!("unexpected {:?} after session start", other.id()));
                    break;
                }
            };
            if head.send(item).is_err() {
                break;
            }
        }
        drop(head);
        summary.stages = handles.into_iter().map(|h| h.join().expect("stage thread")).collect();
        let w = writer.join().expect("writer thread");
        summary.messages_out = w.counts;
        summary.dropped = w.dropped;
    });
    drop(stages);
    summary.error = shared.failure();
    summary.finished = shared.now();
    Ok(summary)
}
