//! File formats: gamma-function JSON, CSV tables and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gammadyn_core::{Cell, GridGeometry, TruncatedGammaFunction};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

/// Writes `{n_max, levels: [{n, entries: [{cells, value}]}]}` with values at
/// 17 significant digits. Levels and entries appear in key order, so equal
/// functions serialize to equal bytes.
pub fn gamma_json(f: &TruncatedGammaFunction) -> String {
    let mut s = String::new();
    let _ = write!(s, "{{\n  \"n_max\": {},\n  \"levels\": [", f.n_max());
    for n in 0..=f.n_max() {
        let _ = write!(s, "{}\n    {{\"n\": {n}, \"entries\": [", if n == 0 { "" } else { "," });
        for (i, (cells, v)) in f.level(n).iter().enumerate() {
            let list = cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
            let _ = write!(s, "{}\n      {{\"cells\": [{list}], \"value\": {}}}", if i == 0 { "" } else { "," }, num(*v));
        }
        s.push_str(if f.level(n).is_empty() { "]}" } else { "\n    ]}" });
    }
    s.push_str("\n  ]\n}\n");
    s
}

/// `{:.16e}` — 17 significant digits, always a valid JSON number.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".into()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaFile {
    n_max: usize,
    levels: Vec<LevelFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    n: usize,
    entries: Vec<EntryFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    cells: Vec<Cell>,
    value: f64,
}

pub fn parse_gamma(text: &str, grid: &GridGeometry) -> Result<TruncatedGammaFunction, String> {
    let file: GammaFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut f = TruncatedGammaFunction::zero(file.n_max);
    for level in file.levels {
        for e in level.entries {
            if e.cells.len() != level.n {
                return Err(format!("entry {:?} listed under level {}", e.cells, level.n));
            }
            if e.cells.len() > file.n_max {
                return Err(format!("entry {:?} exceeds n_max = {}", e.cells, file.n_max));
            }
            if !e.cells.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("cells {:?} are not strictly increasing", e.cells));
            }
            if e.cells.iter().any(|&c| c as usize >= grid.cell_count()) {
                return Err(format!("cells {:?} lie outside the grid", e.cells));
            }
            f.set(&e.cells, e.value);
        }
    }
    Ok(f)
}

pub fn read_gamma(path: &Path, grid: &GridGeometry) -> Result<TruncatedGammaFunction, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read gamma file {}: {e}", path.display())))?;
    parse_gamma(&text, grid).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Output directory that records every file it writes for the manifest.
pub struct Artifacts {
    dir: PathBuf,
    /// (name, sha256 or None for files carrying wall-clock timings)
    files: Vec<(String, Option<String>)>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        self.store(name, bytes, true)
    }

    fn store(&mut self, name: &str, bytes: &[u8], hashed: bool) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), hashed.then(|| sha256_hex(bytes))));
        Ok(path)
    }

    /// Serializes `rows` (header first) as CSV.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, Failure> {
        let bytes = csv_bytes(header, rows)?;
        self.store(name, &bytes, true)
    }

    /// Like [`write_csv`](Self::write_csv) for tables holding timings; the
    /// manifest lists them without a hash so it stays reproducible.
    pub fn write_timed_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, Failure> {
        let bytes = csv_bytes(header, rows)?;
        self.store(name, &bytes, false)
    }

    /// `manifest.json`: enough to reproduce the run — the verbatim config,
    /// its hash, the effective seed, tool versions and a hash of every
    /// artifact.
    pub fn finish(mut self, command: &str, config_text: &str, seed: u64, extra: serde_json::Value) -> Result<(), Failure> {
        let files: Vec<_> = self
            .files
            .iter()
            .map(|(name, hash)| match hash {
                Some(h) => serde_json::json!({ "name": name, "sha256": h }),
                None => serde_json::json!({ "name": name, "sha256": null, "note": "contains wall-clock timings" }),
            })
            .collect();
        let config: serde_json::Value = serde_json::from_str(config_text).unwrap_or(serde_json::Value::Null);
        let manifest = serde_json::json!({
            "tool": "gammadyn",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": gammadyn_core::VERSION,
            "command": command,
            "seed": seed,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "config": config,
            "files": files,
            "summary": extra,
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.clear();
        Ok(())
    }
}
