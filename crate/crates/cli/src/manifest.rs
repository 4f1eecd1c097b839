//! Run manifest and checksum-keyed stage skipping.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{BoxError, PipelineError};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Digest of the stage's parameters and the checksums of everything it reads.
    pub fingerprint: String,
    /// Output file (relative to the run directory) → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub pipeline: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, InputRecord>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Option<Manifest> {
        let text = fs::read_to_string(dir.join(MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Every artifact checksum of every stage, keyed by relative path.
    pub fn artifacts(&self) -> BTreeMap<&str, &str> {
        self.stages
            .iter()
            .flat_map(|s| s.artifacts.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .collect()
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Buffered writer for `dir/name`, creating parent directories.
pub fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `contents` to `dir/name` in one go.
pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> io::Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(contents)?;
    w.flush()
}

/// Executes pipeline stages in order, skipping any whose fingerprint and artifacts match
/// the manifest left by a previous run in the same directory.
pub struct Runner {
    out: PathBuf,
    previous: Option<Manifest>,
    manifest: Manifest,
    ran: Vec<&'static str>,
    skipped: Vec<&'static str>,
}

impl Runner {
    /// Checks and checksums `inputs` (logical name → path) before touching `cfg.out`, then
    /// echoes the effective config into it.
    pub fn start(cfg: &PipelineConfig, inputs: &[(&str, &Path)]) -> Result<Runner, PipelineError> {
        let mut records = BTreeMap::new();
        for (name, path) in inputs {
            if !path.is_file() {
                return Err(PipelineError::MissingInput(path.to_path_buf()));
            }
            let sha256 = sha256_file(path).map_err(|e| PipelineError::stage("inputs")(e.into()))?;
            records.insert(name.to_string(), InputRecord { path: path.to_path_buf(), sha256 });
        }
        let out = cfg.out.clone();
        let io_err = |e: io::Error| PipelineError::stage("setup")(e.into());
        fs::create_dir_all(&out).map_err(io_err)?;
        write_file(&out, CONFIG_ECHO, cfg.to_toml().as_bytes()).map_err(io_err)?;
        Ok(Runner {
            previous: Manifest::read(&out),
            manifest: Manifest {
                pipeline: cfg.pipeline.to_string(),
                config_hash: cfg.hash(),
                seed: cfg.seed,
                inputs: records,
                stages: Vec::new(),
            },
            out,
            ran: Vec::new(),
            skipped: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Checksum of an input (by logical name) or of an artifact written earlier in this run.
    fn checksum(&self, name: &str) -> Option<&str> {
        if let Some(i) = self.manifest.inputs.get(name) {
            return Some(&i.sha256);
        }
        self.manifest.stages.iter().rev().find_map(|s| s.artifacts.get(name).map(String::as_str))
    }

    fn fingerprint(&self, name: &str, params: &str, reads: &[&str]) -> String {
        let mut h = Sha256::new();
        h.update(name.as_bytes());
        h.update([0]);
        h.update(params.as_bytes());
        for r in reads {
            h.update([0]);
            h.update(r.as_bytes());
            h.update([b'=']);
            h.update(self.checksum(r).unwrap_or("-").as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn reusable(&self, name: &str, fingerprint: &str, artifacts: &[String]) -> Option<BTreeMap<String, String>> {
        let prev = self.previous.as_ref()?.stage(name)?;
        let mut wanted: Vec<&String> = artifacts.iter().collect();
        wanted.sort();
        if prev.fingerprint != fingerprint || !prev.artifacts.keys().eq(wanted) {
            return None;
        }
        for (file, sum) in &prev.artifacts {
            if sha256_file(&self.out.join(file)).ok()?.as_str() != sum {
                return None;
            }
        }
        Some(prev.artifacts.clone())
    }

    /// Runs (or reuses) one stage.
    ///
    /// `params` describes every setting the stage depends on and `reads` names the inputs and
    /// earlier artifacts it consumes. `run` must write exactly `artifacts` under the run
    /// directory; `load` rebuilds the stage's value from those files when the stage is
    /// skipped.
    pub fn stage<T>(
        &mut self,
        name: &'static str,
        params: &str,
        reads: &[&str],
        artifacts: &[String],
        run: impl FnOnce(&Path) -> Result<T, BoxError>,
        load: impl FnOnce(&Path) -> Result<T, BoxError>,
    ) -> Result<T, PipelineError> {
        let fingerprint = self.fingerprint(name, params, reads);
        let wrap = |e: BoxError| match e.downcast::<PipelineError>() {
            Ok(pe) => *pe,
            Err(e) => PipelineError::Stage { stage: name, source: e },
        };
        if let Some(sums) = self.reusable(name, &fingerprint, artifacts) {
            if let Ok(value) = load(&self.out) {
                log::info!("stage {name}: artifacts up to date, skipping");
                self.skipped.push(name);
                self.record(StageRecord { name: name.into(), fingerprint, artifacts: sums })?;
                return Ok(value);
            }
        }
        log::info!("stage {name}: running");
        let value = run(&self.out).map_err(wrap)?;
        let mut sums = BTreeMap::new();
        for a in artifacts {
            let sum = sha256_file(&self.out.join(a)).map_err(|e| wrap(e.into()))?;
            sums.insert(a.clone(), sum);
        }
        self.ran.push(name);
        self.record(StageRecord { name: name.into(), fingerprint, artifacts: sums })?;
        Ok(value)
    }

    fn record(&mut self, rec: StageRecord) -> Result<(), PipelineError> {
        self.manifest.stages.push(rec);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_file(&self.out, MANIFEST, format!("{json}\n").as_bytes())
            .map_err(|e| PipelineError::stage("manifest")(e.into()))
    }

    pub fn finish(self) -> RunOutcome {
        RunOutcome { out: self.out, manifest: self.manifest, ran: self.ran, skipped: self.skipped }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub manifest: Manifest,
    pub ran: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

/// Helper for artifact lists.
pub fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}
