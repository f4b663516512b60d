//! Run manifests: enough to re-run a command and check its outputs.

use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        let mut file = File::open(path)?;
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(hasher.finalize()),
            bytes,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub cwd: String,
    pub config: Option<serde_json::Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Collects what a command read and wrote.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    args: Vec<String>,
    config: Option<serde_json::Value>,
    workers: usize,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: Vec<u64>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Recorder {
    pub fn new(command: &str, args: Vec<String>, config: Option<serde_json::Value>, workers: usize) -> Self {
        Self {
            command: command.to_string(),
            args,
            config,
            workers,
            started_at: now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    /// Writes the manifest next to the first output as `<output>.manifest.json`,
    /// or to `path` when given.
    pub fn write(self, path: Option<&Path>) -> anyhow::Result<Option<PathBuf>> {
        let target = match path {
            Some(p) => p.to_path_buf(),
            None => match self.outputs.first() {
                Some(first) => {
                    let mut name = first.as_os_str().to_owned();
                    name.push(".manifest.json");
                    PathBuf::from(name)
                }
                None => return Ok(None),
            },
        };
        let digest = |paths: &[PathBuf]| -> anyhow::Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| FileDigest::of(p).with_context(|| format!("hashing {}", p.display())))
                .collect()
        };
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            args: self.args,
            cwd: std::env::current_dir()?.display().to_string(),
            config: self.config,
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            seeds: self.seeds,
            workers: self.workers,
            started_at: self.started_at,
            finished_at: now(),
        };
        crate::io::write_json(&target, &manifest)?;
        Ok(Some(target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_content() {
        let dir = std::env::temp_dir().join(format!("inferbias-digest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("abc.txt");
        fs::write(&p, "abc").unwrap();
        let d = FileDigest::of(&p).unwrap();
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(d.bytes, 3);
        fs::remove_dir_all(dir).unwrap();
    }
}
