use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::svg::Plot;

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Informational verdicts are recorded but do not affect the exit code.
    pub asserted: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub constants: BTreeMap<String, f64>,
    pub verdicts: &'a [Verdict],
    pub files: Vec<String>,
    pub pass: bool,
}

/// One run directory; files are recorded in write order and listed sorted in the manifest.
pub struct RunDir {
    pub path: PathBuf,
    files: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub constants: BTreeMap<String, f64>,
    pub seeds: BTreeMap<String, u64>,
}

/// Shortest round-trip form; exponent notation outside [1e-4, 1e15).
pub fn cell(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl RunDir {
    pub fn create(path: PathBuf) -> io::Result<Self> {
        fs::create_dir_all(&path)?;
        Ok(RunDir {
            path,
            files: Vec::new(),
            verdicts: Vec::new(),
            constants: BTreeMap::new(),
            seeds: BTreeMap::new(),
        })
    }

    fn record(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.path.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.iter().map(|v| cell(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        let p = self.record(name);
        fs::write(p, s)
    }

    /// CSV whose rows mix text and numbers.
    pub fn csv_text(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> io::Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        let p = self.record(name);
        fs::write(p, s)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        let p = self.record(name);
        fs::write(p, s)
    }

    pub fn text(&mut self, name: &str, body: &str) -> io::Result<()> {
        let p = self.record(name);
        fs::write(p, body)
    }

    pub fn svg(&mut self, name: &str, plot: &Plot) -> io::Result<()> {
        let body = plot.render();
        self.text(name, &body)
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            asserted: true,
            detail,
        });
    }

    pub fn note(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            asserted: false,
            detail,
        });
    }

    pub fn constant(&mut self, name: &str, v: f64) {
        self.constants.insert(name.into(), v);
    }

    pub fn seed(&mut self, name: &str, v: u64) {
        self.seeds.insert(name.into(), v);
    }

    pub fn pass(&self) -> bool {
        self.verdicts.iter().filter(|v| v.asserted).all(|v| v.pass)
    }

    /// Writes manifest.json and returns the overall verdict.
    pub fn finish(mut self, command: &str, config: &RunConfig) -> io::Result<bool> {
        let pass = self.pass();
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        files.sort();
        let manifest = Manifest {
            tool: "taylor-lab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: config.hash(),
            config,
            seeds: std::mem::take(&mut self.seeds),
            constants: std::mem::take(&mut self.constants),
            verdicts: &self.verdicts,
            files,
            pass,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        s.push('\n');
        fs::write(self.path.join("manifest.json"), s)?;
        Ok(pass)
    }
}

/// TAYLOR_LAB_OUT, then --out, then the config key.
pub fn output_root(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(env) = std::env::var_os("TAYLOR_LAB_OUT").filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    match flag {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(&config.out),
    }
}
