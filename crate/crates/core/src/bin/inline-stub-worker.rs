//! Native stub model worker speaking the worker protocol on stdin/stdout.

use std::fs::OpenOptions;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Parser;
use inline_cmr::bridge::stub::serve_worker;

#[derive(Parser)]
#[command(version, about = "Stub inference worker (identity and oracle models)")]
struct Args {
    /// Append one line per request to this file.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn main() {
    let args = Args::parse();
    let mut log_file = match &args.log {
        Some(p) => match OpenOptions::new().create(true).append(true).open(p) {
            Ok(f) => Some(f),
            Err(e) => {
                eprintln!("cannot open {}: {e}", p.display());
                std::process::exit(1);
            }
        },
        None => None,
    };
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    let code = serve_worker(&mut input, &mut output, log_file.as_mut().map(|f| f as &mut dyn Write));
    let _ = output.flush();
    std::process::exit(code);
}
