//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # Table 2, first row
//! w = 100
//! alpha = 0.1
//! r_s = 0.17
//! r_b = 0.19
//! u = 0.2
//! d = -0.1
//! delta = 0.95
//! v = 40
//! kind = average
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use finrep_core::model::DEFAULT_C_BAR;
use finrep_core::{DynamicsKind, MarketParams64, ModelError, ObservationModel};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    /// Name of the offending field, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } | ConfigError::DuplicateKey { key, .. } => Some(key),
            ConfigError::Missing(f) => Some(f),
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter { field, message } => ConfigError::Invalid {
                field: field.to_string(),
                message,
            },
            other => ConfigError::Invalid {
                field: "params".into(),
                message: other.to_string(),
            },
        }
    }
}

pub const DEFAULT_P_SS: f64 = 0.01;
pub const DEFAULT_EPS0: f64 = 0.5;
pub const DEFAULT_N0: u64 = 2000;
pub const DEFAULT_ROUNDS: u64 = 100_000;
pub const DEFAULT_STRIDE: u64 = 1000;
pub const DEFAULT_REPLICATIONS: usize = 20;
pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_NETWORK_CAP: usize = 5000;

const REQUIRED: [&str; 8] = ["w", "alpha", "r_s", "r_b", "u", "d", "delta", "v"];
const OPTIONAL: [&str; 13] = [
    "p_ss",
    "c_bar",
    "eps0",
    "n0",
    "rounds",
    "stride",
    "kind",
    "replications",
    "seed",
    "output",
    "finite",
    "network_cap",
    "edge_budget",
];
const OBSERVATION: &str = "observation";

/// One experiment: parameters, dynamics protocol and replication plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: MarketParams64,
    pub eps0: f64,
    pub n0: u64,
    pub rounds: u64,
    pub stride: u64,
    pub kind: DynamicsKind,
    pub observation: ObservationModel,
    pub replications: usize,
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    /// Clear a sampled network every round instead of using limiting returns.
    pub finite: bool,
    pub network_cap: usize,
    pub edge_budget: Option<u64>,
}

impl ExperimentConfig {
    /// Default protocol around the given parameters.
    pub fn with_params(params: MarketParams64) -> Self {
        ExperimentConfig {
            params,
            eps0: DEFAULT_EPS0,
            n0: DEFAULT_N0,
            rounds: DEFAULT_ROUNDS,
            stride: DEFAULT_STRIDE,
            kind: DynamicsKind::Average,
            observation: ObservationModel::Analytic,
            replications: DEFAULT_REPLICATIONS,
            master_seed: DEFAULT_SEED,
            output: None,
            finite: false,
            network_cap: DEFAULT_NETWORK_CAP,
            edge_budget: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        let bad = |field: &str, message: &str| {
            Err(ConfigError::Invalid {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return bad("eps0", "must lie in (0, 1)");
        }
        if self.n0 < 2 {
            return bad("n0", "must be at least 2");
        }
        if self.rounds < 1 {
            return bad("rounds", "must be at least 1");
        }
        if self.stride < 1 {
            return bad("stride", "must be at least 1");
        }
        if self.replications < 1 {
            return bad("replications", "must be at least 1");
        }
        if self.network_cap < 2 {
            return bad("network_cap", "must be at least 2");
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it yields an equal config.
    pub fn to_config_string(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        for (k, v) in [
            ("w", p.w),
            ("alpha", p.alpha),
            ("r_s", p.r_s),
            ("r_b", p.r_b),
            ("u", p.u),
            ("d", p.d),
            ("delta", p.delta),
            ("v", p.v),
            ("p_ss", p.p_ss),
            ("c_bar", p.c_bar),
            ("eps0", self.eps0),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "n0 = {}", self.n0);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s, "kind = {}", self.kind.label());
        let _ = writeln!(s, "{OBSERVATION} = {}", observation_label(self.observation));
        let _ = writeln!(s, "replications = {}", self.replications);
        let _ = writeln!(s, "seed = {}", self.master_seed);
        if let Some(out) = &self.output {
            let _ = writeln!(s, "output = {}", out.display());
        }
        let _ = writeln!(s, "finite = {}", self.finite);
        let _ = writeln!(s, "network_cap = {}", self.network_cap);
        if let Some(b) = self.edge_budget {
            let _ = writeln!(s, "edge_budget = {b}");
        }
        s
    }

    /// Short SHA-256 digest of the science-relevant settings (output path
    /// excluded).
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            output: None,
            ..self.clone()
        }
        .to_config_string();
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

fn observation_label(o: ObservationModel) -> &'static str {
    match o {
        ObservationModel::Analytic => "analytic",
        ObservationModel::Sampled => "sampled",
    }
}

pub fn parse_kind(s: &str) -> Option<DynamicsKind> {
    match s {
        "average" => Some(DynamicsKind::Average),
        "random" => Some(DynamicsKind::Random),
        _ => None,
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key or value".into(),
            });
        }
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) && key != OBSERVATION {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        if entries.insert(key, (line, value)).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.into(),
            });
        }
    }

    let number = |key: &'static str| -> Result<Option<f64>, ConfigError> {
        entries
            .get(key)
            .map(|&(line, v)| {
                v.parse::<f64>().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("`{key}` expects a number, found `{v}`"),
                })
            })
            .transpose()
    };
    let integer = |key: &'static str| -> Result<Option<u64>, ConfigError> {
        entries
            .get(key)
            .map(|&(line, v)| {
                v.replace('_', "").parse::<u64>().or_else(|_| {
                    // accept 1e5 style counts
                    match v.parse::<f64>() {
                        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => Ok(f as u64),
                        _ => Err(ConfigError::Parse {
                            line,
                            message: format!("`{key}` expects a non-negative integer, found `{v}`"),
                        }),
                    }
                })
            })
            .transpose()
    };
    let required = |key: &'static str| number(key)?.ok_or(ConfigError::Missing(key));

    let params = MarketParams64 {
        w: required("w")?,
        alpha: required("alpha")?,
        r_s: required("r_s")?,
        r_b: required("r_b")?,
        u: required("u")?,
        d: required("d")?,
        delta: required("delta")?,
        v: required("v")?,
        p_ss: number("p_ss")?.unwrap_or(DEFAULT_P_SS),
        c_bar: number("c_bar")?.unwrap_or(DEFAULT_C_BAR),
    };
    let mut cfg = ExperimentConfig::with_params(params);
    if let Some(e) = number("eps0")? {
        cfg.eps0 = e;
    }
    if let Some(n) = integer("n0")? {
        cfg.n0 = n;
    }
    if let Some(n) = integer("rounds")? {
        cfg.rounds = n;
    }
    if let Some(n) = integer("stride")? {
        cfg.stride = n;
    }
    if let Some(n) = integer("replications")? {
        cfg.replications = n as usize;
    }
    if let Some(n) = integer("seed")? {
        cfg.master_seed = n;
    }
    if let Some(n) = integer("network_cap")? {
        cfg.network_cap = n as usize;
    }
    cfg.edge_budget = integer("edge_budget")?;
    if let Some(&(line, v)) = entries.get("kind") {
        cfg.kind = parse_kind(v).ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("`kind` must be `average` or `random`, found `{v}`"),
        })?;
    }
    if let Some(&(line, v)) = entries.get(OBSERVATION) {
        cfg.observation = match v {
            "analytic" => ObservationModel::Analytic,
            "sampled" => ObservationModel::Sampled,
            _ => {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("`{OBSERVATION}` must be `analytic` or `sampled`, found `{v}`"),
                })
            }
        };
    }
    if let Some(&(line, v)) = entries.get("finite") {
        cfg.finite = v.parse::<bool>().map_err(|_| ConfigError::Parse {
            line,
            message: format!("`finite` must be `true` or `false`, found `{v}`"),
        })?;
    }
    if let Some(&(_, v)) = entries.get("output") {
        cfg.output = Some(PathBuf::from(v));
    }
    cfg.validate()?;
    Ok(cfg)
}
