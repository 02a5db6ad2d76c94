use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flowbridge_core::canonical_json;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".flowbridge.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a set of named files, git tree style: each entry is hashed as a
/// blob (`"blob <len>\0" + content`) and the sorted `<hash> <name>` lines are
/// hashed together.
pub fn content_hash(files: &[(String, PathBuf)]) -> Result<String> {
    let mut entries = Vec::with_capacity(files.len());
    for (name, path) in files {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", bytes.len()).as_bytes());
        h.update(&bytes);
        entries.push(format!("{} {name}\n", hex::encode(h.finalize())));
    }
    entries.sort();
    Ok(sha256_hex(entries.concat().as_bytes()))
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Value,
    pub config_hash: String,
    /// Input name to sha256.
    pub inputs: BTreeMap<String, String>,
    pub input_content_hash: String,
    /// Output name (relative to the manifest) to sha256.
    pub outputs: BTreeMap<String, String>,
    pub args: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        let config = serde_json::to_value(config).expect("serializable config");
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: sha256_hex(canonical_json(&config).as_bytes()),
            config,
            inputs: BTreeMap::new(),
            input_content_hash: sha256_hex(b""),
            outputs: BTreeMap::new(),
            args: BTreeMap::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.args.insert(key.to_string(), serde_json::to_value(value).expect("serializable arg"));
        self
    }

    pub fn inputs(&mut self, files: &[(String, PathBuf)]) -> Result<&mut Self> {
        for (name, path) in files {
            self.inputs.insert(name.clone(), file_sha256(path)?);
        }
        self.input_content_hash = content_hash(files)?;
        Ok(self)
    }

    /// Hashes the named outputs, all relative to `dir`.
    pub fn outputs(&mut self, dir: &Path, names: &[&str]) -> Result<&mut Self> {
        for name in names {
            self.outputs.insert(name.to_string(), file_sha256(&dir.join(name))?);
        }
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, canonical_json(self) + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// Creates `dir` if needed and takes its lock. A directory that already
    /// holds files is refused unless `force` is set.
    pub fn acquire(dir: &Path, force: bool) -> Result<Self> {
        if dir.exists() {
            let mut entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
            if !force && entries.next().is_some() {
                return Err(CliError::Usage(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Usage(format!(
                "{} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn content_hash_ignores_listing_order() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        fs::write(&a, "one").unwrap();
        fs::write(&b, "two").unwrap();
        let fwd = content_hash(&[("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
        let rev = content_hash(&[("b".into(), b.clone()), ("a".into(), a.clone())]).unwrap();
        assert_eq!(fwd, rev);
        fs::write(&b, "three").unwrap();
        assert_ne!(fwd, content_hash(&[("a".into(), a), ("b".into(), b)]).unwrap());
    }

    #[test]
    fn lock_rejects_second_holder_and_nonempty_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let held = DirLock::acquire(&out, false).unwrap();
        assert!(matches!(DirLock::acquire(&out, true), Err(CliError::Usage(_))));
        drop(held);
        assert!(!out.join(LOCK).exists());
        fs::write(out.join("x"), "1").unwrap();
        assert!(matches!(DirLock::acquire(&out, false), Err(CliError::Usage(_))));
        assert!(DirLock::acquire(&out, true).is_ok());
    }
}
