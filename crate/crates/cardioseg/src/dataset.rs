//! On-disk dataset layout.
//!
//! ```text
//! <root>/
//!   manifest.json
//!   source/<subject_id>/{image.raw, label.raw, meta.json}
//!   target/<subject_id>/{image.raw, label.raw, meta.json}
//! ```
//!
//! `image.raw` holds little-endian f32 voxels, row-major within a slice,
//! slice-major across the stack; `label.raw` holds one u8 class id per voxel
//! in the same order. Target labels are written too, but they exist only for
//! evaluation: the training loaders never hand them to a loss.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::synth::{apply_domain_shift, gen_subject, DomainShiftConfig, PhantomParams, SubjectVolume};

/// Per-subject metadata, serialized as `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: String,
    pub n_slices: usize,
    pub height: usize,
    pub width: usize,
    /// [dz, dy, dx] in millimetres.
    pub spacing: [f64; 3],
    pub domain: String,
    pub n_classes: u8,
}

/// Subject ids per split within one domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Dataset-level manifest, serialized as `manifest.json` at the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub phantom: PhantomParams,
    pub shift: DomainShiftConfig,
    pub source: Split,
    pub target: Split,
}

/// Counts per split for one domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// 70/10/20 split: floor for train and val, remainder to test.
    pub fn from_fractions(n: usize) -> Self {
        let train = n * 7 / 10;
        let val = n / 10;
        Self { train, val, test: n - train - val }
    }
}

/// Generation request for a two-domain phantom dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub phantom: PhantomParams,
    pub shift: DomainShiftConfig,
    pub source: SplitCounts,
    pub target: SplitCounts,
}

pub fn write_subject(root: &Path, vol: &SubjectVolume) -> Result<PathBuf> {
    let dir = root.join(&vol.domain).join(&vol.subject_id);
    fs::create_dir_all(&dir)?;
    let expected = vol.n_slices * vol.height * vol.width;
    if vol.image.len() != expected || vol.labels.len() != expected {
        return Err(CoreError::Shape(format!(
            "subject {}: buffers {}/{} != {expected}",
            vol.subject_id,
            vol.image.len(),
            vol.labels.len()
        )));
    }
    let mut bytes = vec![0u8; vol.image.len() * 4];
    LittleEndian::write_f32_into(&vol.image, &mut bytes);
    fs::write(dir.join("image.raw"), &bytes)?;
    fs::write(dir.join("label.raw"), &vol.labels)?;
    let meta = SubjectMeta {
        subject_id: vol.subject_id.clone(),
        n_slices: vol.n_slices,
        height: vol.height,
        width: vol.width,
        spacing: vol.spacing,
        domain: vol.domain.clone(),
        n_classes: vol.n_classes,
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(dir)
}

pub fn read_subject(dir: &Path) -> Result<SubjectVolume> {
    let meta: SubjectMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let expected = meta.n_slices * meta.height * meta.width;
    let img_bytes = fs::read(dir.join("image.raw"))?;
    if img_bytes.len() != expected * 4 {
        return Err(CoreError::Dataset(format!(
            "{}: image.raw holds {} bytes, expected {}",
            dir.display(),
            img_bytes.len(),
            expected * 4
        )));
    }
    let mut image = vec![0.0f32; expected];
    LittleEndian::read_f32_into(&img_bytes, &mut image);
    let labels = fs::read(dir.join("label.raw"))?;
    if labels.len() != expected {
        return Err(CoreError::Dataset(format!(
            "{}: label.raw holds {} bytes, expected {expected}",
            dir.display(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l >= meta.n_classes) {
        return Err(CoreError::Dataset(format!(
            "{}: label id outside 0..{}",
            dir.display(),
            meta.n_classes
        )));
    }
    Ok(SubjectVolume {
        subject_id: meta.subject_id,
        image,
        labels,
        n_slices: meta.n_slices,
        height: meta.height,
        width: meta.width,
        spacing: meta.spacing,
        domain: meta.domain,
        n_classes: meta.n_classes,
    })
}

fn make_split(prefix: &str, counts: SplitCounts) -> Split {
    let ids: Vec<String> = (0..counts.total())
        .map(|i| format!("{prefix}{i:03}"))
        .collect();
    Split {
        train: ids[..counts.train].to_vec(),
        val: ids[counts.train..counts.train + counts.val].to_vec(),
        test: ids[counts.train + counts.val..].to_vec(),
    }
}

/// Generates the full two-domain dataset under `root` and returns the
/// manifest (also written to `manifest.json`). Source and target subjects
/// are distinct anatomies (unpaired domains); target subjects additionally
/// pass through the appearance shift.
pub fn generate_dataset(root: &Path, cfg: &GenConfig) -> Result<DatasetManifest> {
    cfg.phantom.validate()?;
    cfg.shift.validate()?;
    fs::create_dir_all(root)?;

    let source = make_split("src", cfg.source);
    let target = make_split("tgt", cfg.target);

    for id in source.all() {
        let vol = gen_subject(&cfg.phantom, id)?;
        write_subject(root, &vol)?;
    }
    for id in target.all() {
        let vol = gen_subject(&cfg.phantom, id)?;
        let shifted = apply_domain_shift(&vol, &cfg.shift)?;
        write_subject(root, &shifted)?;
    }

    let manifest = DatasetManifest {
        seed: cfg.phantom.seed,
        phantom: cfg.phantom.clone(),
        shift: cfg.shift.clone(),
        source,
        target,
    };
    fs::write(root.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_slice(&fs::read(root.join("manifest.json"))?)?)
}

/// Loads the subjects named by `ids` from `<root>/<domain>/`.
pub fn load_subjects(root: &Path, domain: &str, ids: &[String]) -> Result<Vec<SubjectVolume>> {
    ids.iter()
        .map(|id| read_subject(&root.join(domain).join(id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_fractions_of_ten() {
        let c = SplitCounts::from_fractions(10);
        assert_eq!((c.train, c.val, c.test), (7, 1, 2));
        let c = SplitCounts::from_fractions(20);
        assert_eq!((c.train, c.val, c.test), (14, 2, 4));
    }

    #[test]
    fn subject_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vol = gen_subject(&PhantomParams::default(), "src000").unwrap();
        write_subject(dir.path(), &vol).unwrap();
        let back = read_subject(&dir.path().join("source/src000")).unwrap();
        assert_eq!(back.image, vol.image);
        assert_eq!(back.labels, vol.labels);
        assert_eq!(back.subject_id, vol.subject_id);
        assert_eq!(back.spacing, vol.spacing);
    }

    #[test]
    fn read_rejects_truncated_raw() {
        let dir = tempfile::tempdir().unwrap();
        let vol = gen_subject(&PhantomParams::default(), "src000").unwrap();
        let sdir = write_subject(dir.path(), &vol).unwrap();
        let img = std::fs::read(sdir.join("image.raw")).unwrap();
        std::fs::write(sdir.join("image.raw"), &img[..img.len() - 4]).unwrap();
        assert!(matches!(read_subject(&sdir), Err(CoreError::Dataset(_))));
    }

    #[test]
    fn generate_writes_tree_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let phantom = PhantomParams { image_size: 32, n_slices: 2, ..Default::default() };
        let cfg = GenConfig {
            phantom,
            shift: DomainShiftConfig::default(),
            source: SplitCounts { train: 2, val: 1, test: 0 },
            target: SplitCounts { train: 2, val: 0, test: 1 },
        };
        let man = generate_dataset(dir.path(), &cfg).unwrap();
        assert_eq!(man.source.train, vec!["src000", "src001"]);
        assert_eq!(man.target.test, vec!["tgt002"]);
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back.source, man.source);
        let tgt = load_subjects(dir.path(), "target", &man.target.train).unwrap();
        assert_eq!(tgt.len(), 2);
        assert_eq!(tgt[0].domain, "target");
        // Unpaired: target anatomy differs from any source subject's.
        let src = load_subjects(dir.path(), "source", &man.source.train).unwrap();
        assert_ne!(src[0].labels, tgt[0].labels);
    }
}
