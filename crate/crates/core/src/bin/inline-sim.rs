//! Scanner simulator: stream a phantom session to a server, then verify.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inline_cmr::sim::verify::{load_run, render_run, save_run, write_verdict, SENT_FILE};
use inline_cmr::sim::{run_client, verify_run, Pacing, PhantomParams, RunInfo, ScanKind, Session, SimError, Tolerances};
use inline_cmr::wire::{DEFAULT_PORT, PORT_ENV};

#[derive(Parser)]
#[command(version, about = "Synthetic scanner client and verification harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stream one session and record the results.
    Run {
        #[arg(long)]
        kind: ScanKind,
        /// host:port; defaults to 127.0.0.1 and $ICSP_PORT or 9122.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplier on the default pacing (300 ms per slice, 150 ms gap); 0 streams unpaced.
        #[arg(long, default_value_t = 1.0)]
        pacing_scale: f64,
        #[arg(long)]
        out: PathBuf,
        /// Chain to request instead of the kind's default.
        #[arg(long)]
        chain: Option<String>,
        /// JSON file overriding phantom parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        patient_key: Option<String>,
    },
    /// Check a recorded run against its ground truth and render PNGs.
    Verify {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        tol_file: Option<PathBuf>,
    },
}

fn default_endpoint() -> String {
    let port = std::env::var(PORT_ENV).ok().and_then(|v| v.trim().parse::<u16>().ok()).unwrap_or(DEFAULT_PORT);
    format!("127.0.0.1:{port}")
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &PathBuf) -> Result<T, SimError> {
    let text = fs::read_to_string(path).map_err(|e| SimError::Artifact(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| SimError::Artifact(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn run(
    kind: ScanKind,
    endpoint: Option<String>,
    seed: u64,
    pacing_scale: f64,
    out: PathBuf,
    chain: Option<String>,
    params: Option<PathBuf>,
    patient_key: Option<String>,
) -> Result<bool, SimError> {
    let mut p: PhantomParams = match &params {
        Some(path) => read_json(path)?,
        None => PhantomParams::default(),
    };
    p.seed = seed;
    if let Some(k) = patient_key {
        p.patient_key = k;
    }
    let mut session = Session::new(kind, p.clone())?;
    if let Some(c) = chain {
        session = session.with_chain(&c);
    }
    let endpoint = endpoint.unwrap_or_else(default_endpoint);
    let pacing = Pacing::scaled(pacing_scale);
    fs::create_dir_all(&out)?;
    let mut capture = BufWriter::new(File::create(out.join(SENT_FILE))?);
    let record = run_client(&endpoint, &session, pacing, Some(&mut capture))?;
    drop(capture);
    let info = RunInfo { kind, chain: session.chain.clone(), endpoint, pacing, params: p };
    save_run(&out, &info, &session.truth(), &record)?;
    let t = &record.timing;
    println!(
        "{kind}: {} messages sent, {} received, first result {:?} ms, completion after acquisition {:?} ms",
        t.sent.len(),
        t.received.len(),
        t.first_result_latency_ms(),
        t.completion_ms()
    );
    Ok(record.server_closed)
}

fn verify(dir: PathBuf, tol_file: Option<PathBuf>) -> Result<bool, SimError> {
    let tol: Tolerances = match &tol_file {
        Some(p) => read_json(p)?,
        None => Tolerances::default(),
    };
    let (info, truth, record) = load_run(&dir)?;
    let verdict = verify_run(&info, &truth, &record, &tol);
    write_verdict(&dir, &verdict)?;
    render_run(&dir, &record)?;
    print!("{}", verdict.summary());
    Ok(verdict.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().cmd {
        Cmd::Run { kind, endpoint, seed, pacing_scale, out, chain, params, patient_key } => {
            run(kind, endpoint, seed, pacing_scale, out, chain, params, patient_key)
        }
        Cmd::Verify { run, tol_file } => verify(run, tol_file),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
