//! Artifact writing and the per-run report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use endqt::fmt::round12;
use serde::Serialize;
use serde_json::Value;

use crate::config::{CliError, ScenarioConfig};

/// Summary printed to stdout after a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub wall_seconds: f64,
    /// Paths of every file written, in write order.
    pub artifacts: Vec<PathBuf>,
    pub headlines: BTreeMap<String, Value>,
}

/// Collects files written into one output directory.
pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file created elsewhere (e.g. by [`crate::emit_plot_data`]).
    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> endqt::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// Pretty JSON with every float rounded to 12 significant digits.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let v = stable_json(value)?;
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, &v)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Converts to a JSON value with floats rounded to 12 significant digits.
pub fn stable_json<T: Serialize>(value: &T) -> Result<Value, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(round_floats(v))
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round12(x)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// Headline numbers, rounded like every other output.
#[derive(Default)]
pub struct Headlines(BTreeMap<String, Value>);

impl Headlines {
    pub fn set<T: Serialize>(&mut self, key: impl Into<String>, value: T) -> Result<(), CliError> {
        self.0.insert(key.into(), stable_json(&value)?);
        Ok(())
    }

    pub fn into_map(self) -> BTreeMap<String, Value> {
        self.0
    }
}
