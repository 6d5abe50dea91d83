use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use linsketch::compiler::{ReductionConfig, Variant};
use linsketch::sketch::EvalMode;
use linsketch::zoo::ZooParams;

/// A zoo entry and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Named {
    pub name: String,
    #[serde(default)]
    pub params: ZooParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub name: String,
    /// Falls back to the function's parameters.
    pub params: Option<ZooParams>,
    /// A serialized machine used instead of a zoo machine by `state-passing`.
    pub fsm_file: Option<PathBuf>,
    /// Player count for `simulate`; `reduce` uses `N + 1`.
    pub players: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    #[default]
    Uniform,
    /// CSV with header `x,weight`.
    Weights { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrgSpec {
    pub block_bits: u32,
    pub block_count: u64,
    /// `parity` (adds the parity of each block) or `sum` (adds the block
    /// value), both modulo `states`.
    pub machine: String,
    pub states: usize,
    pub samples: u64,
    pub sketch: Option<TemplateSpec>,
}

impl Default for PrgSpec {
    fn default() -> Self {
        Self {
            block_bits: 8,
            block_count: 16,
            machine: "parity".into(),
            states: 8,
            samples: 100_000,
            sketch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSpec {
    pub n: usize,
    pub s: usize,
    pub p: u32,
    /// Generator seed bytes as hex, least significant first; random if absent.
    pub generator_seed: Option<String>,
    /// Stream to apply; a random stream of `10 n` updates if absent.
    pub stream: Option<PathBuf>,
    pub permutations: usize,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        Self {
            n: 64,
            s: 8,
            p: 5,
            generator_seed: None,
            stream: None,
            permutations: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the subcommand when present.
    pub kind: Option<String>,
    /// Hex seed; `--seed` takes precedence.
    pub seed: Option<String>,
    pub function: Option<Named>,
    pub protocol: Option<ProtocolSpec>,
    pub variant: Option<Variant>,
    pub reduction: Option<ReductionConfig>,
    /// Runs multiplicative-weights boosting for this many rounds.
    pub boost_rounds: Option<usize>,
    pub distribution: DistributionSpec,
    pub sketch: Option<PathBuf>,
    pub mode: Option<EvalMode>,
    pub stream: Option<PathBuf>,
    pub prg: Option<PrgSpec>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("config must be a .toml or .json file: {}", path.display()),
        };
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn check_kind(&self, command: &str) -> Result<()> {
        match &self.kind {
            Some(k) if k != command => bail!("config is for {k:?} but the command is {command:?}"),
            _ => Ok(()),
        }
    }

    pub fn function(&self) -> Result<&Named> {
        self.function.as_ref().context("config needs a [function] section")
    }
}

pub fn parse_seed(s: &str) -> Result<u64> {
    let digits = s.trim_start_matches("0x");
    u64::from_str_radix(digits, 16).with_context(|| format!("seed {s:?} is not a hex number of at most 16 digits"))
}
