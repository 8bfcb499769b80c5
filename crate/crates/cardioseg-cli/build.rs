use std::path::Path;

use sha2::{Digest, Sha256};

/// Content hash of the workspace sources, embedded into run manifests so an
/// artifact can be traced back to the code that produced it.
fn main() {
    let manifest_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let roots = [
        Path::new(&manifest_dir).join("src"),
        Path::new(&manifest_dir).join("build.rs"),
        Path::new(&manifest_dir).join("Cargo.toml"),
        Path::new(&manifest_dir).join("../cardioseg/src"),
        Path::new(&manifest_dir).join("../cardioseg/Cargo.toml"),
    ];
    let mut entries: Vec<(String, std::path::PathBuf)> = Vec::new();
    for root in &roots {
        if root.is_file() {
            entries.push((root.file_name().unwrap().to_string_lossy().into_owned(), root.clone()));
            continue;
        }
        for e in walkdir::WalkDir::new(root).sort_by_file_name() {
            let e = match e {
                Ok(e) => e,
                Err(_) => continue,
            };
            if e.file_type().is_file() {
                let rel = e
                    .path()
                    .strip_prefix(root)
                    .unwrap_or(e.path())
                    .to_string_lossy()
                    .into_owned();
                entries.push((rel, e.into_path()));
            }
        }
    }
    entries.sort();
    let mut hasher = Sha256::new();
    for (rel, path) in &entries {
        println!("cargo:rerun-if-changed={}", path.display());
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update(std::fs::read(path).unwrap_or_default());
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    println!("cargo:rustc-env=BUILD_CONTENT_HASH={hex}");
}
