//! Topology records and experiment configuration.
//!
//! Topology files are line records, `#` starts a comment:
//!
//! ```text
//! node,<id>,<server|intermediate|client>
//! edge,<from>,<to>,<bandwidth_bps>,<delay_s>
//! ```
//!
//! Edges are written in the Interest direction (toward the server).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{GraphError, NetworkGraph, Node, OptimizerParams, Role};
use crate::prlnc::VideoProfile;
use crate::sim::SimParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("cycle in Interest links through node {0}")]
    Cycle(u32),
    #[error("expected exactly one server, found {0}")]
    MultiServer(usize),
    #[error("invalid topology: {0}")]
    Graph(GraphError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
}

impl From<GraphError> for ConfigError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Cycle(id) => ConfigError::Cycle(id),
            GraphError::MultiServer(n) => ConfigError::MultiServer(n),
            other => ConfigError::Graph(other),
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse { line, column, message: message.into() }
}

/// Parses topology records. Columns in errors are 1-based byte offsets of
/// the offending field.
pub fn parse_topology(text: &str) -> Result<NetworkGraph, ConfigError> {
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        // (column, field) pairs
        let mut fields = Vec::new();
        let mut col = 1;
        for f in content.split(',') {
            let lead = f.len() - f.trim_start().len();
            fields.push((col + lead, f.trim()));
            col += f.len() + 1;
        }
        let expect = |n: usize| -> Result<(), ConfigError> {
            if fields.len() != n {
                Err(parse_err(line_no, 1, format!("expected {n} fields, found {}", fields.len())))
            } else {
                Ok(())
            }
        };
        let id = |k: usize| -> Result<u32, ConfigError> {
            let (c, f) = fields[k];
            f.parse().map_err(|_| parse_err(line_no, c, format!("invalid node id `{f}`")))
        };
        let num = |k: usize, what: &str| -> Result<f64, ConfigError> {
            let (c, f) = fields[k];
            let v: f64 = f.parse().map_err(|_| parse_err(line_no, c, format!("invalid {what} `{f}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(line_no, c, format!("{what} must be a nonnegative number, got `{f}`")));
            }
            Ok(v)
        };
        match fields[0].1 {
            "node" => {
                expect(3)?;
                let role = match fields[2].1 {
                    "server" => Role::Server,
                    "intermediate" => Role::Intermediate,
                    "client" => Role::Client,
                    other => return Err(parse_err(line_no, fields[2].0, format!("unknown role `{other}`"))),
                };
                nodes.push(Node { id: id(1)?, role });
            }
            "edge" => {
                expect(5)?;
                links.push((id(1)?, id(2)?, num(3, "bandwidth")?, num(4, "delay")?));
            }
            other => return Err(parse_err(line_no, fields[0].0, format!("unknown record `{other}`"))),
        }
    }
    Ok(NetworkGraph::new(nodes, &links)?)
}

pub fn read_topology(path: &Path) -> Result<NetworkGraph, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_topology(&text)
}

/// Inverse of [`parse_topology`].
pub fn write_topology(g: &NetworkGraph) -> String {
    let mut s = String::new();
    for n in g.nodes() {
        let _ = writeln!(s, "node,{},{}", n.id, n.role.as_str());
    }
    for (a, b, bw, d) in g.link_tuples() {
        let _ = writeln!(s, "edge,{a},{b},{bw},{d}");
    }
    s
}

/// Everything an experiment needs besides the topology itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Topology file, relative to the config file's directory.
    pub topology: PathBuf,
    /// Output directory, relative to the working directory.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub video: VideoProfile,
    pub costs: Vec<f64>,
    #[serde(default)]
    pub optimizer: OptimizerParams,
    #[serde(default)]
    pub sim: SimParams,
    /// Directory the config was loaded from; topology paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn topology_path(&self) -> PathBuf {
        self.base_dir.join(&self.topology)
    }

    pub fn load_topology(&self) -> Result<NetworkGraph, ConfigError> {
        read_topology(&self.topology_path())
    }

    fn check(&self) -> Result<(), ConfigError> {
        self.video.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.costs.len() != self.video.layers() {
            return Err(ConfigError::Invalid(format!(
                "{} costs for {} layers",
                self.costs.len(),
                self.video.layers()
            )));
        }
        let o = &self.optimizer;
        if !(o.a > 0.0 && o.b >= 0.0 && o.c > 0.0) {
            return Err(ConfigError::Invalid("step parameters need a > 0, b >= 0, c > 0".into()));
        }
        self.sim.check().map_err(ConfigError::Invalid)
    }
}
