//! Scenario configuration: JSON file, command-line flags and their merge.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Spin-bath decoherence traces for several bath sizes.
    Trace,
    /// Layered determination chain: counts, events and timing.
    Sdc,
    /// Singlet correlations for arbitrary measurement angles.
    Bell,
    /// CHSH value for one choice of four angles.
    Chsh,
    /// Extended Wigner's friend, isolated or not.
    Ewf,
    /// Single-photon Mach-Zehnder interferometer.
    Mz,
    /// Classical causal model checks on a DAG and joint table.
    Ccm,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Trace => "trace",
            Scenario::Sdc => "sdc",
            Scenario::Bell => "bell",
            Scenario::Chsh => "chsh",
            Scenario::Ewf => "ewf",
            Scenario::Mz => "mz",
            Scenario::Ccm => "ccm",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One fully merged invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            parameters: Map::new(),
            seed: None,
            output_dir: None,
        }
    }

    /// Parses a JSON config document; the scenario key may be omitted when
    /// `fallback` supplies it.
    pub fn from_json(text: &str, origin: &str, fallback: Option<Scenario>) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            let path = e.path().to_string();
            CliError::Config {
                field: if path == "." { None } else { Some(path) },
                message: format!("{origin}:{}:{}: {inner}", inner.line(), inner.column()),
            }
        })?;
        let scenario = match (file.scenario, fallback) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::config(
                    "scenario",
                    format!("{origin} declares `{a}` but `{b}` was requested"),
                ))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(CliError::config("scenario", "missing scenario")),
        };
        Ok(Self {
            scenario,
            parameters: file.parameters,
            seed: file.seed,
            output_dir: file.output_dir,
        })
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::config(
                "seed",
                format!(
                    "scenario `{}` is stochastic here and needs an explicit seed",
                    self.scenario
                ),
            )
        })
    }

    /// Deserializes `parameters` into a scenario-specific struct.
    pub fn parameters<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        let value = Value::Object(self.parameters.clone());
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                field: Some(if path == "." {
                    "parameters".to_string()
                } else {
                    format!("parameters.{path}")
                }),
                message: e.inner().to_string(),
            }
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(self.scenario.name()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    scenario: Option<Scenario>,
    #[serde(default)]
    parameters: Map<String, Value>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

/// Failure classes with their exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Exit 2.
    Config { field: Option<String>, message: String },
    /// Exit 1.
    Runtime(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Config {
            field: Some(field.into()),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Classifies a library error; configuration errors keep their field,
    /// renamed through `rename` to the flag the user actually set.
    pub fn from_core(err: endqt::Error, rename: impl Fn(&str) -> Option<&'static str>) -> Self {
        match err {
            endqt::Error::Config { field, reason } => {
                let name = rename(field).unwrap_or(field);
                CliError::config(format!("parameters.{name}"), reason)
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config {
                field: Some(field),
                message,
            } => {
                write!(f, "configuration error in `{field}`: {message}")
            }
            CliError::Config { field: None, message } => write!(f, "configuration error: {message}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Fixed options; every other `--flag` is a scenario parameter.
#[derive(Debug, Parser)]
#[command(
    name = "endqt",
    version,
    about = "Seeded simulations of decoherence, determination chains, causal models and interferometry",
    after_help = "Any other --key value pair sets parameters.key (hyphens become underscores). \
Values are read as JSON when they parse, otherwise as strings; a bare flag means true."
)]
pub struct Cli {
    pub scenario: Scenario,
    /// JSON config file with `scenario`, `parameters`, `seed`, `output_dir`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed (required by trace, sdc, sampled mz and table-less ccm)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `out/<scenario>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seeds `seed, seed+1, …` concurrently, each into `<out>/seed-<s>`.
    #[arg(long)]
    pub batch_seeds: Option<u64>,
}

const FIXED: [&str; 4] = ["--config", "--seed", "--out", "--batch-seeds"];

/// Parsed command line.
#[derive(Debug)]
pub struct Invocation {
    pub cli: Cli,
    pub overrides: Map<String, Value>,
}

/// Splits argv into the fixed options (handled by clap) and parameter
/// overrides. Returns clap's error for help/version/usage problems.
pub fn parse_args<I, T>(args: I) -> Result<Invocation, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| {
            a.into()
                .into_string()
                .map_err(|bad| ArgsError::Config(CliError::config("argv", format!("non-UTF-8 argument {bad:?}"))))
        })
        .collect::<Result<_, _>>()?;
    let mut fixed = Vec::new();
    let mut overrides = Map::new();
    let mut it = args.into_iter().peekable();
    if let Some(bin) = it.next() {
        fixed.push(bin);
    }
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            fixed.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if key.is_empty() || key == "help" || key == "version" || FIXED.contains(&format!("--{key}").as_str()) {
            fixed.push(arg);
            continue;
        }
        let raw = match inline {
            Some(v) => Some(v),
            None => match it.peek() {
                Some(next) if !next.starts_with("--") => it.next(),
                _ => None,
            },
        };
        let value = match raw {
            None => Value::Bool(true),
            Some(s) => serde_json::from_str(&s).unwrap_or(Value::String(s)),
        };
        overrides.insert(key.replace('-', "_"), value);
    }
    let cli = Cli::try_parse_from(fixed).map_err(ArgsError::Clap)?;
    Ok(Invocation { cli, overrides })
}

#[derive(Debug)]
pub enum ArgsError {
    Clap(clap::Error),
    Config(CliError),
}

impl Invocation {
    /// File values first, then flags on top.
    pub fn resolve(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
                ScenarioConfig::from_json(&text, &path.display().to_string(), Some(self.cli.scenario))?
            }
            None => ScenarioConfig::new(self.cli.scenario),
        };
        for (k, v) in &self.overrides {
            cfg.parameters.insert(k.clone(), v.clone());
        }
        if let Some(seed) = self.cli.seed {
            cfg.seed = Some(seed);
        }
        if let Some(out) = &self.cli.out {
            cfg.output_dir = Some(out.clone());
        }
        Ok(cfg)
    }
}
