//! Run manifests: UTF-8 `key = value` lines written next to every output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.txt";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Manifest {
    command: String,
    started: Instant,
    entries: Vec<(String, String)>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: Option<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            started: Instant::now(),
            entries: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: None,
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Resolved configuration, echoed verbatim as TOML.
    pub fn config(&mut self, toml_text: String) {
        self.config = Some(toml_text);
    }

    pub fn render(&self) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "command = {}", self.command)?;
        writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"))?;
        let argv: Vec<String> = std::env::args().collect();
        writeln!(s, "argv = {}", argv.join(" "))?;
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}")?;
        }
        for p in &self.inputs {
            writeln!(s, "input = {} sha256:{}", p.display(), sha256_file(p)?)?;
        }
        for p in &self.outputs {
            writeln!(s, "output = {} sha256:{}", p.display(), sha256_file(p)?)?;
        }
        writeln!(s, "duration_ms = {}", self.started.elapsed().as_millis())?;
        if let Some(c) = &self.config {
            writeln!(s, "\n[config]\n{}", c.trim_end())?;
        }
        Ok(s)
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(FILE_NAME);
        std::fs::write(&path, self.render()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
