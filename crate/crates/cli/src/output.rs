//! Plot-ready CSV tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Table {
    name: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Table { name: name.into(), writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> (String, Vec<u8>) {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        (self.name, bytes)
    }
}

/// Collects a command's files and writes them, with a manifest, at the end.
pub struct Outputs {
    command: &'static str,
    files: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
}

pub struct ManifestInfo<'a> {
    pub config_canonical: &'a str,
    pub seed: u64,
    pub input_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Outputs {
    pub fn new(command: &'static str) -> Outputs {
        Outputs { command, files: Vec::new(), warnings: Vec::new() }
    }

    pub fn add(&mut self, table: Table) {
        let (artifact, bytes) = table.finish();
        self.files.push((format!("{}_{artifact}.csv", self.command), bytes));
    }

    pub fn add_raw(&mut self, artifact: &str, bytes: Vec<u8>) {
        self.files.push((format!("{}_{artifact}.csv", self.command), bytes));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    pub fn write(self, dir: &Path, info: &ManifestInfo<'_>) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let mut written = Vec::new();
        let mut manifest = String::new();
        writeln!(manifest, "command = {:?}", self.command)?;
        writeln!(manifest, "localiv_version = {:?}", localiv::VERSION)?;
        writeln!(manifest, "cli_version = {:?}", env!("CARGO_PKG_VERSION"))?;
        writeln!(manifest, "seed = {}", info.seed)?;
        writeln!(manifest, "config_sha256 = {:?}", sha256_hex(info.config_canonical.as_bytes()))?;
        if let Some(h) = &info.input_sha256 {
            writeln!(manifest, "input_sha256 = {h:?}")?;
        }
        writeln!(manifest, "warnings = [")?;
        for w in &self.warnings {
            writeln!(manifest, "  {w:?},")?;
        }
        writeln!(manifest, "]")?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
            writeln!(manifest, "\n[[files]]\nname = {name:?}\nsha256 = {:?}", sha256_hex(bytes))?;
            written.push(path);
        }
        writeln!(manifest, "\n[config]")?;
        manifest.push_str(&format!("# effective configuration\n{}", indent_config(info.config_canonical)));
        let path = dir.join(format!("{}_manifest.toml", self.command));
        fs::write(&path, manifest).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
        Ok(written)
    }
}

/// Embeds the canonical configuration as a TOML string literal.
fn indent_config(canonical: &str) -> String {
    format!("text = '''\n{canonical}'''\n")
}
