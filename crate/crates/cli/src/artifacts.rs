use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thermo_battery::experiments::Check;

/// One output file: either `<name>.<ext>` or a fixed file name.
pub struct Artifact {
    file: FileName,
    contents: String,
}

enum FileName {
    Ext(&'static str),
    Fixed(&'static str),
}

impl Artifact {
    pub fn new(ext: &'static str, contents: String) -> Self {
        Self { file: FileName::Ext(ext), contents }
    }

    pub fn named(file: &'static str, contents: String) -> Self {
        Self { file: FileName::Fixed(file), contents }
    }

    fn file_name(&self, stem: &str) -> String {
        match self.file {
            FileName::Ext(ext) => format!("{stem}.{ext}"),
            FileName::Fixed(f) => f.to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the artifacts and a `<stem>.manifest.json` describing them.
pub fn write_artifacts(
    dir: &Path,
    stem: &str,
    anchor: &str,
    files: &[Artifact],
    config: Value,
    wall_time_s: f64,
    passed: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = serde_json::Map::new();
    for a in files {
        let name = a.file_name(stem);
        std::fs::write(dir.join(&name), &a.contents).with_context(|| format!("writing {name}"))?;
        outputs.insert(name, json!({ "sha256": sha256_hex(a.contents.as_bytes()), "bytes": a.contents.len() }));
    }
    let manifest = json!({
        "name": stem,
        "anchor": anchor,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "outputs": outputs,
        "wall_time_s": wall_time_s,
        "passed": passed,
    });
    let path = dir.join(format!("{stem}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn failure_record(command: &str, error: &str, failed: &[Check]) -> String {
    let v = json!({ "command": command, "error": error, "failed_checks": failed });
    serde_json::to_string_pretty(&v).unwrap_or_else(|_| error.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = std::env::temp_dir().join(format!("tb-artifacts-{}", std::process::id()));
        write_artifacts(&dir, "x", "none", &[Artifact::new("csv", "a,b\n".into())], json!({}), 0.0, true).unwrap();
        let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("x.manifest.json")).unwrap()).unwrap();
        assert_eq!(m["outputs"]["x.csv"]["sha256"], sha256_hex(b"a,b\n"));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
