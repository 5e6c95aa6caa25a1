//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use inline_cmr::bridge::{DType, Device, Tensor, WorkerMessage};
use inline_cmr::wire::{
    ImageFrame, ImageHeader, KSpaceReadout, Message, Meta, Pixels, ReadoutHeader, Waveform,
};
use num_complex::Complex32;
use rand::{Rng, RngExt};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata/golden")
}

pub fn golden(name: &str) -> Vec<u8> {
    let p = golden_dir().join(format!("{name}.bin"));
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn c(re: f32, im: f32) -> Complex32 {
    Complex32::new(re, im)
}

/// The values `testdata/gen_fixtures.py` encodes, by fixture name.
pub fn icsp_fixtures() -> Vec<(&'static str, Message)> {
    let readout = KSpaceReadout {
        header: ReadoutHeader {
            version: 1,
            flags: 0b110,
            scan_counter: 42,
            num_samples: 3,
            num_coils: 2,
            kline_idx: 7,
            slice_idx: 1,
            phase_idx: 4,
            repetition_idx: 0,
            set_idx: 0,
            average_idx: 0,
            sample_time_ns: 123_456_000,
            position_mm: [1.5, -2.0, 30.0],
            read_dir: [1.0, 0.0, 0.0],
            phase_dir: [0.0, 1.0, 0.0],
            slice_dir: [0.0, 0.0, 1.0],
        },
        samples: vec![c(0.5, -0.25), c(1.0, 0.0), c(-3.0, 2.5), c(0.0, 1.0), c(0.125, 0.0), c(2.0, -1.0)],
    };
    let image = ImageFrame {
        header: ImageHeader {
            version: 1,
            flags: 1,
            series_idx: 2,
            slice_idx: 5,
            phase_idx: 9,
            rows: 2,
            cols: 3,
            pixel_spacing_mm: [1.25, 1.25],
            slice_thickness_mm: 8.0,
            slice_spacing_mm: 10.0,
            trigger_time_ms: 412.5,
            position_mm: [-10.0, 20.0, -5.0],
            row_dir: [0.0, 1.0, 0.0],
            col_dir: [1.0, 0.0, 0.0],
        },
        meta: Meta::new().with("role", "ground_truth").with("landmark", "mv1").with("landmark", "mv2"),
        pixels: Pixels::Label(vec![0, 1, 2, 1, 0, 65535]),
    };
    let header = Meta::new()
        .with("heart_rate_bpm", "68")
        .with("bsa_m2", "1.8")
        .with("patient_key", "p1")
        .with("scan_kind", "sax");
    vec![
        ("icsp_config_name", Message::ConfigName("sax".into())),
        ("icsp_config_inline", Message::ConfigInline("[chain]\ngadgets = recon\n".into())),
        ("icsp_session_header", Message::SessionHeader(header)),
        ("icsp_close", Message::Close),
        ("icsp_text", Message::Text("ok".into())),
        ("icsp_acquisition", Message::Acquisition(readout)),
        ("icsp_image", Message::Image(image)),
        (
            "icsp_waveform",
            Message::Waveform(Waveform { wf_type: 1, sample_period_ms: 2.5, samples: vec![0.0, 0.5, 1.0, -0.25] }),
        ),
        ("icsp_report", Message::Report(r#"{"kind":"sax","tables":[]}"#.into())),
    ]
}

pub fn worker_fixtures() -> Vec<(&'static str, WorkerMessage)> {
    let frames = Tensor::from_f32("frames", &[1, 2, 2], &[0.0, 1.5, -2.0, 4.0]).unwrap();
    let mask = Tensor::new("mask", DType::U8, vec![1, 2, 2], vec![0, 1, 2, 1]).unwrap();
    vec![
        (
            "worker_load",
            WorkerMessage::Load {
                model_id: "oracle_segmenter".into(),
                device: Device::Cpu,
                params: BTreeMap::from([("threshold".to_string(), "0.5".to_string())]),
            },
        ),
        ("worker_load_ack", WorkerMessage::LoadAck(Err("device unsupported".into()))),
        ("worker_infer", WorkerMessage::Infer { request_id: 7, tensors: vec![frames] }),
        ("worker_result", WorkerMessage::Result { request_id: 7, outcome: Ok(vec![mask]) }),
        ("worker_shutdown", WorkerMessage::Shutdown),
    ]
}

fn unit(rng: &mut impl Rng) -> [f32; 3] {
    loop {
        let v: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.0f32..1.0));
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if n > 0.1 {
            return v.map(|x| x / n);
        }
    }
}

fn vec3(rng: &mut impl Rng) -> [f32; 3] {
    std::array::from_fn(|_| rng.random_range(-500.0f32..500.0))
}

fn text(rng: &mut impl Rng, max: usize) -> String {
    const CHARS: &[char] = &['a', 'Z', '0', ' ', '_', '.', '=', 'é', '心', '\t'];
    let n = rng.random_range(0..=max);
    (0..n).map(|_| CHARS[rng.random_range(0..CHARS.len())]).collect()
}

fn meta(rng: &mut impl Rng) -> Meta {
    let mut m = Meta::new();
    for _ in 0..rng.random_range(0..6) {
        let key = format!("k{}", rng.random_range(0..4));
        m.push(key, text(rng, 12));
    }
    m
}

fn complexes(rng: &mut impl Rng, n: usize) -> Vec<Complex32> {
    (0..n).map(|_| c(rng.random(), rng.random_range(-1e6f32..1e6))).collect()
}

/// A random valid message of the given id.
pub fn random_message(rng: &mut impl Rng, id: u16) -> Message {
    match id {
        1 => Message::ConfigName(text(rng, 20)),
        2 => Message::ConfigInline(text(rng, 200)),
        3 => Message::SessionHeader(meta(rng)),
        4 => Message::Close,
        5 => Message::Text(text(rng, 80)),
        10 => {
            let (ns, nc) = (rng.random_range(1..40u16), rng.random_range(1..5u16));
            Message::Acquisition(KSpaceReadout {
                header: ReadoutHeader {
                    version: rng.random(),
                    flags: rng.random(),
                    scan_counter: rng.random(),
                    num_samples: ns,
                    num_coils: nc,
                    kline_idx: rng.random(),
                    slice_idx: rng.random(),
                    phase_idx: rng.random(),
                    repetition_idx: rng.random(),
                    set_idx: rng.random(),
                    average_idx: rng.random(),
                    sample_time_ns: rng.random(),
                    position_mm: vec3(rng),
                    read_dir: unit(rng),
                    phase_dir: unit(rng),
                    slice_dir: unit(rng),
                },
                samples: complexes(rng, ns as usize * nc as usize),
            })
        }
        11 => {
            let (rows, cols) = (rng.random_range(1..12u16), rng.random_range(1..12u16));
            let n = rows as usize * cols as usize;
            let thickness = rng.random_range(0.5f32..10.0);
            let pixels = match rng.random_range(0..3) {
                0 => Pixels::Magnitude((0..n).map(|_| rng.random_range(-1e3f32..1e3)).collect()),
                1 => Pixels::Complex(complexes(rng, n)),
                _ => Pixels::Label((0..n).map(|_| rng.random()).collect()),
            };
            Message::Image(ImageFrame {
                header: ImageHeader {
                    version: rng.random(),
                    flags: rng.random(),
                    series_idx: rng.random(),
                    slice_idx: rng.random(),
                    phase_idx: rng.random(),
                    rows,
                    cols,
                    pixel_spacing_mm: [rng.random_range(0.1f32..5.0), rng.random_range(0.1f32..5.0)],
                    slice_thickness_mm: thickness,
                    slice_spacing_mm: thickness + rng.random_range(0.0f32..5.0),
                    trigger_time_ms: rng.random_range(0.0f32..2000.0),
                    position_mm: vec3(rng),
                    row_dir: unit(rng),
                    col_dir: unit(rng),
                },
                meta: meta(rng),
                pixels,
            })
        }
        12 => {
            let n = rng.random_range(0..50);
            Message::Waveform(Waveform {
                wf_type: rng.random_range(1..=2),
                sample_period_ms: rng.random_range(0.01f32..10.0),
                samples: (0..n).map(|_| rng.random_range(-5f32..5.0)).collect(),
            })
        }
        13 => Message::Report(text(rng, 300)),
        other => panic!("no message id {other}"),
    }
}

pub const MESSAGE_IDS: [u16; 9] = [1, 2, 3, 4, 5, 10, 11, 12, 13];

/// Cut `bytes` into random pieces of 1 to `max` bytes.
pub fn chunks<'a>(rng: &mut impl Rng, bytes: &'a [u8], max: usize) -> Vec<&'a [u8]> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let n = rng.random_range(1..=max).min(bytes.len() - at);
        out.push(&bytes[at..at + n]);
        at += n;
    }
    out
}

pub fn readout(slice: u16, phase: u16, counter: u32) -> KSpaceReadout {
    KSpaceReadout {
        header: ReadoutHeader {
            version: 1,
            flags: 0,
            scan_counter: counter,
            num_samples: 1,
            num_coils: 1,
            kline_idx: 0,
            slice_idx: slice,
            phase_idx: phase,
            repetition_idx: 0,
            set_idx: 0,
            average_idx: 0,
            sample_time_ns: 0,
            position_mm: [0.0; 3],
            read_dir: [1.0, 0.0, 0.0],
            phase_dir: [0.0, 1.0, 0.0],
            slice_dir: [0.0, 0.0, 1.0],
        },
        samples: vec![c(counter as f32, 0.0)],
    }
}

/// Non-decreasing keys: `groups` runs of random length, keys advancing by 1..=3.
pub fn monotone_keys(rng: &mut impl Rng, groups: usize, max_run: usize) -> Vec<u16> {
    let mut keys = Vec::new();
    let mut k = rng.random_range(0..3u16);
    for _ in 0..groups {
        for _ in 0..rng.random_range(1..=max_run) {
            keys.push(k);
        }
        k += rng.random_range(1..=3);
    }
    keys
}

/// Feed `keys` as slice indices through a trigger and check conservation
/// and emission timing.
pub fn check_trigger_stream(keys: &[u16], dim: inline_cmr::stages::TriggerDimension) -> Result<(), String> {
    use inline_cmr::stages::{Trigger, TriggerDimension};
    let mut t = Trigger::new(dim);
    // (emitted after ingesting item i, or None at end of stream)
    let mut emitted = Vec::new();
    for (i, &k) in keys.iter().enumerate() {
        let r = readout(k, 0, i as u32);
        if let Some(b) = t.ingest(r).map_err(|e| e.to_string())? {
            emitted.push((Some(i), b));
        }
    }
    if let Some(b) = t.finish() {
        emitted.push((None, b));
    }
    let order: Vec<u32> =
        emitted.iter().flat_map(|(_, b)| b.readouts.iter().map(|r| r.header.scan_counter)).collect();
    if order != (0..keys.len() as u32).collect::<Vec<_>>() {
        return Err(format!("readouts not conserved in order: {order:?}"));
    }
    if dim == TriggerDimension::None {
        return match emitted.as_slice() {
            [] if keys.is_empty() => Ok(()),
            [(None, _)] => Ok(()),
            _ => Err(format!("{} buckets without a trigger dimension", emitted.len())),
        };
    }
    let mut start = 0;
    for (n, (at, b)) in emitted.iter().enumerate() {
        let end = start + b.len();
        if b.readouts.iter().any(|r| r.header.slice_idx as u32 != b.key) {
            return Err(format!("bucket {n} mixes keys"));
        }
        let want = if end == keys.len() { None } else { Some(end) };
        if *at != want {
            return Err(format!("bucket {n} (key {}) emitted at {at:?}, expected {want:?}", b.key));
        }
        if end < keys.len() && keys[end] as u32 == b.key {
            return Err(format!("bucket {n} closed before its key ended"));
        }
        start = end;
    }
    Ok(())
}

pub fn image(slice: u16, phase: u16) -> ImageFrame {
    ImageFrame {
        header: ImageHeader {
            version: 1,
            flags: 0,
            series_idx: 0,
            slice_idx: slice,
            phase_idx: phase,
            rows: 1,
            cols: 1,
            pixel_spacing_mm: [1.0, 1.0],
            slice_thickness_mm: 8.0,
            slice_spacing_mm: 10.0,
            trigger_time_ms: 0.0,
            position_mm: [0.0; 3],
            row_dir: [1.0, 0.0, 0.0],
            col_dir: [0.0, 1.0, 0.0],
        },
        meta: Meta::new(),
        pixels: Pixels::Magnitude(vec![phase as f32]),
    }
}

/// Same checks for image grouping by slice; frames are told apart by phase index.
pub fn check_group_stream(keys: &[u16]) -> Result<(), String> {
    use inline_cmr::stages::{GroupBy, ImageGrouper};
    let mut g = ImageGrouper::new(GroupBy::Slice);
    let mut emitted = Vec::new();
    for (i, &k) in keys.iter().enumerate() {
        if let Some(grp) = g.ingest(image(k, i as u16)).map_err(|e| e.to_string())? {
            emitted.push((Some(i), grp));
        }
    }
    if let Some(grp) = g.finish() {
        emitted.push((None, grp));
    }
    let order: Vec<u16> = emitted.iter().flat_map(|(_, grp)| grp.frames.iter().map(|f| f.header.phase_idx)).collect();
    if order != (0..keys.len() as u16).collect::<Vec<_>>() {
        return Err("frames not conserved in order".into());
    }
    let mut start = 0;
    for (at, grp) in &emitted {
        let end = start + grp.len();
        let want = if end == keys.len() { None } else { Some(end) };
        if *at != want || grp.frames.iter().any(|f| f.header.slice_idx as u32 != grp.key) {
            return Err(format!("group {} emitted at {at:?}, expected {want:?}", grp.key));
        }
        start = end;
    }
    Ok(())
}

pub const STUB_WORKER: &str = env!("CARGO_BIN_EXE_inline-stub-worker");

/// Serve forever on an ephemeral port from a background thread.
pub fn start_server(worker_args: &[&str]) -> String {
    use inline_cmr::chain::{GadgetRegistry, Server, ServerConfig};
    let mut cmd = vec![STUB_WORKER.to_string()];
    cmd.extend(worker_args.iter().map(|s| s.to_string()));
    let config = ServerConfig { port: 0, worker_cmd: Some(cmd), ..ServerConfig::default() };
    let server = Server::bind(&config, GadgetRegistry::with_builtins()).unwrap();
    let addr = server.local_addr().unwrap().to_string();
    std::thread::spawn(move || server.run());
    addr
}

/// Phantom small enough for debug builds.
pub fn small_params(patient_key: &str) -> inline_cmr::sim::PhantomParams {
    inline_cmr::sim::PhantomParams {
        matrix: 96,
        n_coils: 2,
        fov_mm: 192.0,
        patient_key: patient_key.into(),
        ..Default::default()
    }
}

/// Stream one session and verify it against its ground truth.
pub fn run_and_verify(
    endpoint: &str,
    session: &inline_cmr::sim::Session,
    pacing: Option<inline_cmr::sim::Pacing>,
) -> (inline_cmr::sim::Verdict, inline_cmr::sim::RunRecord) {
    use inline_cmr::sim::{run_client, verify_run, RunInfo, Tolerances};
    let record = run_client(endpoint, session, pacing, None).unwrap();
    let info = RunInfo {
        kind: session.kind,
        chain: session.chain.clone(),
        endpoint: endpoint.into(),
        pacing,
        params: session.params.clone(),
    };
    let verdict = verify_run(&info, &session.truth(), &record, &Tolerances::default());
    (verdict, record)
}
