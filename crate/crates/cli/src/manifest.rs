use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use surfdiff::Result;

/// Writes `manifest.json` listing the resolved configuration and a SHA-256 of
/// every other file under `dir` (sorted, relative paths).
pub fn write(dir: &Path, command: &str, config: Value) -> Result<()> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    files.sort();
    let mut artifacts = Vec::with_capacity(files.len());
    for rel in files {
        let bytes = std::fs::read(dir.join(&rel))?;
        artifacts.push(json!({ "file": rel, "sha256": hex::encode(Sha256::digest(&bytes)) }));
    }
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "artifacts": artifacts,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != "manifest.json") || path.parent() != Some(root) {
            let rel = path.strip_prefix(root).expect("walked from root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
