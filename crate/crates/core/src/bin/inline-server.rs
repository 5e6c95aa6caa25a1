//! ICSP server: one chain per client connection.

use std::path::PathBuf;

use clap::Parser;
use inline_cmr::bridge::default_worker_cmd;
use inline_cmr::chain::{GadgetRegistry, Server, ServerConfig};
use inline_cmr::wire::{DEFAULT_PORT, PORT_ENV};
use log::info;

#[derive(Parser)]
#[command(version, about = "Streaming inference server for cardiac MR")]
struct Args {
    /// Listen port; defaults to $ICSP_PORT, then 9122.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Directory of `<name>.ini` chain documents, searched before the built-in chains.
    #[arg(long)]
    chains_dir: Option<PathBuf>,
    /// Worker command line used when a chain names none.
    #[arg(long)]
    worker_cmd: Option<String>,
    #[arg(long, default_value = "info")]
    log_level: String,
}

fn main() {
    let args = Args::parse();
    env_logger::Builder::new().parse_filters(&args.log_level).format_timestamp_millis().init();
    let config = ServerConfig {
        bind: args.bind,
        port: args.port.unwrap_or_else(|| ServerConfig::port_from_env(DEFAULT_PORT)),
        chains_dir: args.chains_dir,
        worker_cmd: match args.worker_cmd {
            Some(cmd) => Some(cmd.split_whitespace().map(String::from).collect()),
            None => default_worker_cmd(),
        },
        ..ServerConfig::default()
    };
    let server = match Server::bind(&config, GadgetRegistry::with_builtins()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot listen on {}:{} ({PORT_ENV} overrides the port): {e}", config.bind, config.port);
            std::process::exit(1);
        }
    };
    match server.local_addr() {
        Ok(a) => info!("listening on {a}"),
        Err(e) => info!("listening ({e})"),
    }
    // the listening line on stdout lets wrappers pick up an ephemeral port
    if let Ok(a) = server.local_addr() {
        println!("listening {a}");
    }
    if let Err(e) = server.run() {
        eprintln!("server stopped: {e}");
        std::process::exit(1);
    }
}
