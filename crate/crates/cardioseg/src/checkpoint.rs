//! Checkpointing: every network's parameters and buffers plus optimizer
//! state in a single safetensors file, with a JSON manifest embedded in the
//! file-level metadata. Loading verifies architecture fingerprints before
//! any tensor is copied, so a checkpoint can never be silently applied to a
//! different model shape.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::losses::LossWeights;
use crate::nn::ParamStore;

pub const FORMAT_VERSION: u32 = 1;

/// Everything about a run that is not a tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    /// Number of completed epochs.
    pub epoch: usize,
    /// Number of completed optimization steps.
    pub step: u64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Architecture fingerprint per section name ("g", "d1", "d2", "d3").
    pub spec_hashes: BTreeMap<String, String>,
    /// Verbatim config text for provenance; not machine-read on load.
    pub config_snapshot: Option<String>,
    pub best_val_dice: Option<f64>,
    pub epochs_since_improvement: Option<usize>,
}

impl CheckpointManifest {
    /// Errors unless section `name` was saved with exactly `expected`.
    pub fn verify_hash(&self, name: &str, expected: &str) -> Result<()> {
        match self.spec_hashes.get(name) {
            Some(h) if h == expected => Ok(()),
            Some(h) => Err(CoreError::Checkpoint(format!(
                "section `{name}` was saved from a different architecture \
                 (hash {h}, expected {expected})"
            ))),
            None => Err(CoreError::Checkpoint(format!(
                "checkpoint has no section `{name}`"
            ))),
        }
    }
}

/// Writes `sections` (each store's tensors namespaced under its prefix) and
/// pre-named `extras` (optimizer state) into one file.
pub fn save_checkpoint(
    path: &Path,
    manifest: &CheckpointManifest,
    sections: &[(&str, &ParamStore)],
    extras: &[(String, Tensor)],
) -> Result<()> {
    let mut named: BTreeMap<String, Tensor> = BTreeMap::new();
    for (prefix, store) in sections {
        for (name, t) in store.named_tensors() {
            let full = format!("{prefix}/{name}");
            if named.insert(full.clone(), t).is_some() {
                return Err(CoreError::Checkpoint(format!("duplicate tensor `{full}`")));
            }
        }
    }
    for (name, t) in extras {
        if named.insert(name.clone(), t.clone()).is_some() {
            return Err(CoreError::Checkpoint(format!("duplicate tensor `{name}`")));
        }
    }
    let json = serde_json::to_string(manifest)?;
    let meta: HashMap<String, String> = [("manifest".to_string(), json)].into();
    safetensors::serialize_to_file(named.iter().map(|(n, t)| (n.clone(), t)), Some(meta), path)
        .map_err(|e| CoreError::Checkpoint(format!("write {}: {e}", path.display())))?;
    Ok(())
}

/// Reads the manifest and all tensors back.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointManifest, HashMap<String, Tensor>)> {
    let bytes = std::fs::read(path)?;
    let (_n, meta) = safetensors::SafeTensors::read_metadata(&bytes)
        .map_err(|e| CoreError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let manifest_json = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get("manifest"))
        .ok_or_else(|| {
            CoreError::Checkpoint(format!("{}: no manifest metadata", path.display()))
        })?;
    let manifest: CheckpointManifest = serde_json::from_str(manifest_json)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "format version {} (supported: {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let tensors = candle_core::safetensors::load(path, &Device::Cpu)?;
    Ok((manifest, tensors))
}

/// The tensors under `prefix/`, with the prefix stripped.
pub fn section(tensors: &HashMap<String, Tensor>, prefix: &str) -> HashMap<String, Tensor> {
    let lead = format!("{prefix}/");
    tensors
        .iter()
        .filter_map(|(n, t)| n.strip_prefix(&lead).map(|rest| (rest.to_string(), t.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::optim::Adam;
    use crate::nn::{Init, Linear};
    use crate::rng::rng_for;
    use candle_core::DType;

    fn manifest() -> CheckpointManifest {
        CheckpointManifest {
            format_version: FORMAT_VERSION,
            epoch: 3,
            step: 42,
            seed: 7,
            weights: LossWeights::default(),
            spec_hashes: [("g".to_string(), "abc".to_string())].into(),
            config_snapshot: Some("k = v\n".into()),
            best_val_dice: Some(0.9),
            epochs_since_improvement: Some(1),
        }
    }

    #[test]
    fn round_trips_stores_and_optimizer_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.safetensors");

        let mut ps = ParamStore::new(DType::F32);
        let mut rng = rng_for(1, "ckpt");
        Linear::new(&mut ps, "lin", 4, 3, &mut rng).unwrap();
        let mut opt = Adam::new(ps.trainable(), 0.01, "g").unwrap();
        // Give the optimizer non-trivial moments.
        let mut loss = Tensor::zeros((), DType::F32, &Device::Cpu).unwrap();
        for var in ps.trainable() {
            loss = (loss + var.as_tensor().sqr().unwrap().sum_all().unwrap()).unwrap();
        }
        let grads = loss.backward().unwrap();
        opt.step(&grads).unwrap();

        save_checkpoint(&path, &manifest(), &[("g", &ps)], &opt.state("opt/g")).unwrap();

        let (m, tensors) = load_checkpoint(&path).unwrap();
        assert_eq!(m.epoch, 3);
        assert_eq!(m.step, 42);
        assert_eq!(m.config_snapshot.as_deref(), Some("k = v\n"));
        m.verify_hash("g", "abc").unwrap();
        assert!(m.verify_hash("g", "other").is_err());
        assert!(m.verify_hash("d1", "abc").is_err());

        // Restore into a differently-initialized store.
        let mut ps2 = ParamStore::new(DType::F32);
        let mut rng2 = rng_for(2, "ckpt");
        Linear::new(&mut ps2, "lin", 4, 3, &mut rng2).unwrap();
        assert_ne!(ps.digest().unwrap(), ps2.digest().unwrap());
        ps2.load_named(&section(&tensors, "g")).unwrap();
        assert_eq!(ps.digest().unwrap(), ps2.digest().unwrap());

        let mut opt2 = Adam::new(ps2.trainable(), 0.01, "g").unwrap();
        opt2.load_state("opt/g", &tensors).unwrap();
        let a: Vec<(String, Tensor)> = opt.state("opt/g");
        let b: Vec<(String, Tensor)> = opt2.state("opt/g");
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            let va: Vec<f64> = ta
                .flatten_all()
                .unwrap()
                .to_dtype(DType::F64)
                .unwrap()
                .to_vec1()
                .unwrap();
            let vb: Vec<f64> = tb
                .flatten_all()
                .unwrap()
                .to_dtype(DType::F64)
                .unwrap()
                .to_vec1()
                .unwrap();
            assert_eq!(va, vb, "{na}");
        }
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.safetensors");
        let mut ps = ParamStore::new(DType::F32);
        let mut rng = rng_for(3, "dup");
        ps.param("w", &[2], Init::Const(1.0), &mut rng).unwrap();
        let extra = vec![(
            "g/w".to_string(),
            Tensor::zeros(&[2], DType::F32, &Device::Cpu).unwrap(),
        )];
        let err = save_checkpoint(&path, &manifest(), &[("g", &ps)], &extra).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn missing_or_foreign_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_checkpoint(&dir.path().join("absent.safetensors")).is_err());
        // A safetensors file written without our manifest must be refused.
        let path = dir.path().join("foreign.safetensors");
        let t = Tensor::zeros(&[2], DType::F32, &Device::Cpu).unwrap();
        safetensors::serialize_to_file([("w".to_string(), &t)], None, &path).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("manifest"), "{err}");
    }
}
