//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.resolved.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct DatasetInfo<'a> {
    fingerprint: &'a str,
    num_entities: usize,
    num_relations: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    dataset: Option<DatasetInfo<'a>>,
    wall_ms: u64,
    failed: bool,
    outputs: Vec<OutputEntry>,
}

/// Files written under one run directory, recorded for the manifest.
pub struct RunDir {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_owned());
        }
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    /// Open a file for streaming writes; it is recorded immediately.
    pub fn create_file(&mut self, name: &str) -> Result<fs::File> {
        let p = self.file(name);
        let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        self.record(name);
        Ok(f)
    }

    pub fn write_manifest(
        &self,
        command: &str,
        config: &RunConfig,
        dataset: Option<(&str, usize, usize)>,
        failed: bool,
    ) -> Result<()> {
        let mut outputs = Vec::new();
        for name in &self.written {
            let bytes = fs::read(self.file(name))?;
            outputs.push(OutputEntry {
                file: name.clone(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            dataset: dataset.map(|(fingerprint, num_entities, num_relations)| DatasetInfo {
                fingerprint,
                num_entities,
                num_relations,
            }),
            wall_ms: self.started.elapsed().as_millis() as u64,
            failed,
            outputs,
        };
        let p = self.file(MANIFEST_FILE);
        let mut f = fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Tab-separated table builder.
pub struct Tsv {
    out: String,
}

impl Tsv {
    pub fn new(header: &[&str]) -> Self {
        let mut out = header.join("\t");
        out.push('\n');
        Self { out }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join("\t"));
        self.out.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}
