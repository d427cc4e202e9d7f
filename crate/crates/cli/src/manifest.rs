use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use vecchia_em::data::write_atomic;
use vecchia_em::{Error, Result};

/// What a command did: enough to re-run it and get the same outputs.
#[derive(Serialize, Deserialize, Debug, Default)]
pub struct Manifest {
    pub command: String,
    /// The full command line, replayable with `vecchia-em replay`.
    pub argv: Vec<String>,
    /// All flags after defaults were applied.
    pub flags: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub threads: usize,
    pub seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>, flags: serde_json::Value, threads: usize) -> Self {
        Self {
            command: command.into(),
            argv,
            flags,
            version: env!("CARGO_PKG_VERSION").into(),
            threads,
            ..Self::default()
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    /// Where the manifest goes: next to the first output.
    pub fn path(&self) -> Option<PathBuf> {
        let first = PathBuf::from(self.outputs.first()?);
        let mut name = first.file_name()?.to_owned();
        name.push(".manifest.json");
        Some(first.with_file_name(name))
    }

    pub fn save(&self) -> Result<Option<PathBuf>> {
        let Some(path) = self.path() else {
            return Ok(None);
        };
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest: {e}")))?;
        write_atomic(&path, text.as_bytes())?;
        Ok(Some(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }
}
