use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{info, warn};

use crate::wire::{DEFAULT_PORT, PORT_ENV};

use super::{serve_connection, ChainDefaults, GadgetRegistry, SessionStore, DEFAULT_CAPACITY, DEFAULT_TTL};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub chains_dir: Option<PathBuf>,
    pub store_ttl: Duration,
    pub store_capacity: usize,
    pub worker_cmd: Option<Vec<String>>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            chains_dir: None,
            store_ttl: DEFAULT_TTL,
            store_capacity: DEFAULT_CAPACITY,
            worker_cmd: None,
        }
    }
}

impl ServerConfig {
    /// Port from `ICSP_PORT` when set and valid, else `fallback`.
    pub fn port_from_env(fallback: u16) -> u16 {
        match std::env::var(PORT_ENV) {
            Ok(v) => v.trim().parse().unwrap_or_else(|_| {
                warn!("ignoring invalid {PORT_ENV}={v:?}");
                fallback
            }),
            Err(_) => fallback,
        }
    }
}

/// TCP front end: one thread per connection, shared registry and store.
pub struct Server {
    listener: TcpListener,
    registry: Arc<GadgetRegistry>,
    store: Arc<SessionStore>,
    defaults: Arc<ChainDefaults>,
}

impl Server {
    pub fn bind(config: &ServerConfig, registry: GadgetRegistry) -> io::Result<Self> {
        let listener = TcpListener::bind((config.bind.as_str(), config.port))?;
        Ok(Self {
            listener,
            registry: Arc::new(registry),
            store: Arc::new(SessionStore::new(config.store_ttl, config.store_capacity)),
            defaults: Arc::new(ChainDefaults {
                worker_cmd: config.worker_cmd.clone(),
                chains_dir: config.chains_dir.clone(),
            }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }

    fn spawn(&self, stream: TcpStream) -> io::Result<thread::JoinHandle<()>> {
        let (registry, store, defaults) = (self.registry.clone(), self.store.clone(), self.defaults.clone());
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        let _ = stream.set_nodelay(true);
        thread::Builder::new().name(format!("conn {peer}")).spawn(move || {
            match serve_connection(stream, &registry, &store, &defaults) {
                Ok(s) => info!(
                    "{peer}: chain {} done in {:.1} ms{}",
                    s.chain,
                    s.finished.as_secs_f64() * 1e3,
                    s.error.map(|e| format!(" with error: {e}")).unwrap_or_default()
                ),
                Err(e) => warn!("{peer}: {e}"),
            }
        })
    }

    /// Accept connections forever.
    pub fn run(&self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            match stream {
                Ok(s) => {
                    self.spawn(s)?;
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }

    /// Accept `n` connections, serving each to completion before the next.
    pub fn run_sequential(&self, n: usize) -> io::Result<()> {
        for _ in 0..n {
            let (s, _) = self.listener.accept()?;
            self.spawn(s)?.join().map_err(|_| io::Error::other("connection thread panicked"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_port_override() {
        // only this test touches the variable
        std::env::set_var(PORT_ENV, "9555");
        assert_eq!(ServerConfig::port_from_env(DEFAULT_PORT), 9555);
        std::env::set_var(PORT_ENV, "junk");
        assert_eq!(ServerConfig::port_from_env(DEFAULT_PORT), DEFAULT_PORT);
        std::env::remove_var(PORT_ENV);
        assert_eq!(ServerConfig::port_from_env(7), 7);
    }
}
