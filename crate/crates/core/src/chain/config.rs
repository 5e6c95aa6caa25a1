use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing [chain] section")]
    MissingChain,
    #[error("[chain] is missing key {0:?}")]
    MissingKey(&'static str),
    #[error("gadget list is empty")]
    EmptyGadgets,
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("unsupported {role} {name:?}")]
    UnsupportedIo { role: &'static str, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GadgetConfig {
    pub name: String,
    pub properties: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub name: Option<String>,
    pub reader: String,
    pub writer: String,
    pub gadgets: Vec<GadgetConfig>,
}

/// The only reader and writer implementation.
pub const ICSP_IO: &str = "icsp";

impl ChainConfig {
    /// Render back to the document format.
    pub fn to_document(&self) -> String {
        let mut out = String::from("[chain]\n");
        if let Some(n) = &self.name {
            out.push_str(&format!("name = {n}\n"));
        }
        out.push_str(&format!("reader = {}\nwriter = {}\n", self.reader, self.writer));
        let names: Vec<&str> = self.gadgets.iter().map(|g| g.name.as_str()).collect();
        out.push_str(&format!("gadgets = {}\n", names.join(", ")));
        let mut written = Vec::new();
        for g in &self.gadgets {
            if g.properties.is_empty() || written.contains(&g.name) {
                continue;
            }
            written.push(g.name.clone());
            out.push_str(&format!("\n[gadget.{}]\n", g.name));
            for (k, v) in &g.properties {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

enum Section {
    Chain,
    Gadget,
}

/// Parse an INI-style chain document.
///
/// ```text
/// [chain]
/// reader = icsp
/// writer = icsp
/// gadgets = kspace_buffer, trigger, fft_recon
///
/// [gadget.trigger]
/// trigger_dimension = slice
/// ```
///
/// Property sections apply to every instance of the named gadget.
pub fn parse_chain_config(text: &str) -> Result<ChainConfig, ConfigError> {
    let mut chain: Option<BTreeMap<String, String>> = None;
    let mut sections: Vec<(usize, String, BTreeMap<String, String>)> = Vec::new();
    let mut current: Option<Section> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let syntax = |reason: &str| ConfigError::Syntax { line: line_no, reason: reason.into() };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?.trim();
            if name == "chain" {
                if chain.is_some() {
                    return Err(syntax("duplicate [chain] section"));
                }
                chain = Some(BTreeMap::new());
                current = Some(Section::Chain);
            } else if let Some(g) = name.strip_prefix("gadget.") {
                let g = g.trim();
                if g.is_empty() {
                    return Err(syntax("empty gadget name"));
                }
                if sections.iter().any(|(_, n, _)| n == g) {
                    return Err(syntax(&format!("duplicate [gadget.{g}] section")));
                }
                sections.push((line_no, g.to_string(), BTreeMap::new()));
                current = Some(Section::Gadget);
            } else {
                return Err(ConfigError::UnknownSection { line: line_no, section: name.into() });
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(syntax("empty key"));
        }
        let map = match &current {
            None => return Err(syntax("key outside of a section")),
            Some(Section::Chain) => {
                if !matches!(key, "name" | "reader" | "writer" | "gadgets") {
                    return Err(syntax(&format!("unknown [chain] key {key:?}")));
                }
                chain.as_mut().expect("chain section open")
            }
            Some(Section::Gadget) => &mut sections.last_mut().expect("gadget section open").2,
        };
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(syntax(&format!("duplicate key {key:?}")));
        }
    }

    let mut chain = chain.ok_or(ConfigError::MissingChain)?;
    let mut take = |k: &'static str| chain.remove(k).ok_or(ConfigError::MissingKey(k));
    let reader = take("reader")?;
    let writer = take("writer")?;
    let list = take("gadgets")?;
    let name = chain.remove("name");
    for (role, v) in [("reader", &reader), ("writer", &writer)] {
        if v != ICSP_IO {
            return Err(ConfigError::UnsupportedIo { role, name: v.clone() });
        }
    }
    let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(ConfigError::EmptyGadgets);
    }
    for (line, section, _) in &sections {
        if !names.contains(&section.as_str()) {
            return Err(ConfigError::UnknownSection { line: *line, section: format!("gadget.{section}") });
        }
    }
    let gadgets = names
        .iter()
        .map(|n| GadgetConfig {
            name: n.to_string(),
            properties: sections.iter().find(|(_, s, _)| s == n).map(|(_, _, p)| p.clone()).unwrap_or_default(),
        })
        .collect();
    Ok(ChainConfig { name, reader, writer, gadgets })
}
