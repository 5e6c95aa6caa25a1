//! Chain configuration, assembly and per-connection execution.

mod builtin;
mod config;
mod engine;
mod server;
mod store;

pub use builtin::{builtin_chain, BUILTIN_CHAINS};
pub use config::{parse_chain_config, ChainConfig, ConfigError, GadgetConfig, ICSP_IO};
pub use engine::{serve_connection, ConnectionSummary, EngineError, StageSummary, Transport};
pub use server::{Server, ServerConfig};
pub use store::{kinds, SessionStore, DEFAULT_CAPACITY, DEFAULT_TTL};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::bridge::{BridgeError, InferredGroup};
use crate::cmr::AnalysisError;
use crate::recon::ReconError;
use crate::stages::{ImageGroup, KSpaceBucket, StageError};
use crate::wire::{ImageFrame, KSpaceReadout, Meta, Waveform};

/// Unit of data flowing between stages.
#[derive(Debug, Clone)]
pub enum Item {
    Readout(KSpaceReadout),
    Bucket(KSpaceBucket),
    ReconData { imaging: KSpaceBucket, calibration: KSpaceBucket },
    Image(ImageFrame),
    Group(ImageGroup),
    Inferred(InferredGroup),
    Waveform(Waveform),
    /// Serialized report document.
    Report(String),
    Text(String),
}

impl Item {
    pub fn kind(&self) -> &'static str {
        match self {
            Item::Readout(_) => "readout",
            Item::Bucket(_) => "bucket",
            Item::ReconData { .. } => "recon_data",
            Item::Image(_) => "image",
            Item::Group(_) => "group",
            Item::Inferred(_) => "inferred",
            Item::Waveform(_) => "waveform",
            Item::Report(_) => "report",
            Item::Text(_) => "text",
        }
    }
}

#[derive(Debug, Error)]
pub enum GadgetError {
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("property {key}: {reason}")]
    Property { key: String, reason: String },
    #[error("{0}")]
    Other(String),
}

/// One stage of a chain.
///
/// `process` receives items in upstream emission order and pushes whatever it
/// emits onto `out`. Items a gadget does not handle are passed on unchanged.
pub trait Gadget: Send {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError>;
    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError>;
    fn flush(&mut self, _out: &mut Vec<Item>) -> Result<(), GadgetError> {
        Ok(())
    }
}

/// Server-wide settings gadgets may fall back on.
#[derive(Debug, Clone, Default)]
pub struct ChainDefaults {
    /// Worker launch command when a gadget names neither `worker_cmd` nor `worker_endpoint`.
    pub worker_cmd: Option<Vec<String>>,
    /// Directory searched for `<name>.ini` before the built-in chains.
    pub chains_dir: Option<PathBuf>,
}

/// Everything a gadget sees while configuring.
pub struct GadgetContext<'a> {
    pub gadget: &'a str,
    pub position: usize,
    pub properties: &'a BTreeMap<String, String>,
    pub session: &'a Meta,
    pub store: &'a Arc<SessionStore>,
    pub defaults: &'a ChainDefaults,
}

impl GadgetContext<'_> {
    pub fn prop(&self, key: &str) -> Option<&str> {
        self.properties.get(key).map(String::as_str)
    }

    pub fn parse<T>(&self, key: &str) -> Result<Option<T>, GadgetError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.prop(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| GadgetError::Property { key: key.into(), reason: format!("{v:?}: {e}") })
            })
            .transpose()
    }

    pub fn session_key(&self) -> Option<&str> {
        self.session.get(crate::wire::meta::keys::PATIENT_KEY)
    }
}

type Factory = Box<dyn Fn() -> Box<dyn Gadget> + Send + Sync>;

/// Name → gadget factory map; immutable once the server starts.
#[derive(Default)]
pub struct GadgetRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for GadgetRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl GadgetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with every gadget shipped in this crate.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        crate::stages::register(&mut r);
        crate::bridge::register(&mut r);
        crate::cmr::register(&mut r);
        r
    }

    pub fn register<G, F>(&mut self, name: &str, factory: F)
    where
        G: Gadget + 'static,
        F: Fn() -> G + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(move || Box::new(factory())));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    fn create(&self, name: &str) -> Option<Box<dyn Gadget>> {
        self.factories.get(name).map(|f| f())
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown chain {0:?}")]
    UnknownChain(String),
    #[error("unregistered gadget {0:?}")]
    UnknownGadget(String),
    #[error("configuring {gadget} (stage {position}): {source}")]
    Configure {
        gadget: String,
        position: usize,
        #[source]
        source: GadgetError,
    },
}

/// Configured gadgets in chain order.
pub struct Chain {
    pub name: String,
    pub stages: Vec<(String, Box<dyn Gadget>)>,
}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chain")
            .field("name", &self.name)
            .field("stages", &self.stages.iter().map(|(n, _)| n).collect::<Vec<_>>())
            .finish()
    }
}

impl Chain {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Instantiate every gadget, then configure them in chain order.
pub fn assemble_chain(
    config: &ChainConfig,
    registry: &GadgetRegistry,
    session: &Meta,
    store: &Arc<SessionStore>,
    defaults: &ChainDefaults,
) -> Result<Chain, ChainError> {
    let mut stages = config
        .gadgets
        .iter()
        .map(|g| registry.create(&g.name).map(|gadget| (g.name.clone(), gadget)).ok_or_else(|| ChainError::UnknownGadget(g.name.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    for (position, ((name, gadget), cfg)) in stages.iter_mut().zip(&config.gadgets).enumerate() {
        let ctx = GadgetContext { gadget: name, position, properties: &cfg.properties, session, store, defaults };
        gadget
            .configure(&ctx)
            .map_err(|source| ChainError::Configure { gadget: name.clone(), position, source })?;
    }
    Ok(Chain { name: config.name.clone().unwrap_or_else(|| "inline".into()), stages })
}

/// Resolve a CONFIG_NAME: `<chains_dir>/<name>.ini` first, then the built-ins.
pub fn resolve_chain(name: &str, defaults: &ChainDefaults) -> Result<ChainConfig, ChainError> {
    let valid = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if valid {
        if let Some(dir) = &defaults.chains_dir {
            let path = dir.join(format!("{name}.ini"));
            if let Ok(text) = std::fs::read_to_string(&path) {
                let mut c = parse_chain_config(&text)?;
                c.name.get_or_insert_with(|| name.to_string());
                return Ok(c);
            }
        }
        if let Some(text) = builtin_chain(name) {
            return Ok(parse_chain_config(text)?);
        }
    }
    Err(ChainError::UnknownChain(name.to_string()))
}
