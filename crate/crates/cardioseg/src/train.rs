//! Training loop: one generator update (supervised terms on the source
//! stream plus adversarial terms on the target stream, a single combined
//! backward pass) followed by one update per enabled discriminator on
//! detached maps and clouds.
//!
//! Target batches are a type without labels, so label leakage from the
//! target domain into any loss is unrepresentable. Every random stream is
//! derived from the run seed, the epoch and the batch position, which makes
//! runs repeatable and resume exact.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{
    load_checkpoint, save_checkpoint, section, CheckpointManifest, FORMAT_VERSION,
};
use crate::config::TrainConfig;
use crate::dataset::{load_subjects, read_manifest};
use crate::error::{CoreError, Result};
use crate::eval::dice_per_class;
use crate::losses::{
    adv_loss, disc_bce, disc_loss_literal, emd_training_loss, seg_loss, self_information,
    total_objective, LossParts, LossRecord,
};
use crate::nets::{
    spec_hash, NetSpec, PatchGan, PatchGanSpec, PointNet, PointNetSpec, Segmenter, SegmenterSpec,
};
use crate::nn::optim::{Adam, SgdMomentum};
use crate::nn::ParamStore;
use crate::pointcloud::{make_gt_pointcloud, PointCloud};
use crate::preprocess::{augment, centroid_crop, histogram_equalize, minmax_normalize};
use crate::rng::{derive_seed, rng_for};
use crate::synth::SubjectVolume;

// ---------------------------------------------------------------------------
// Samples and batches
// ---------------------------------------------------------------------------

/// One preprocessed 2-D example: equalized, normalized, cropped around the
/// foreground centroid.
#[derive(Debug, Clone)]
pub struct SliceSample {
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
    pub slice_index: usize,
    pub n_slices: usize,
    pub subject: String,
}

/// Slices every subject into training examples. Labels steer the crop (pure
/// region-of-interest selection) and ride along for supervision or
/// evaluation; whether they may be read downstream is the caller's contract.
pub fn prepare_samples(subjects: &[SubjectVolume], crop: usize) -> Result<Vec<SliceSample>> {
    let mut out = Vec::new();
    for vol in subjects {
        for s in 0..vol.n_slices {
            let eq = histogram_equalize(vol.slice_image(s));
            let norm = minmax_normalize(&eq);
            let (img, lab, _origin) =
                centroid_crop(&norm, vol.slice_labels(s), vol.height, vol.width, crop)?;
            out.push(SliceSample {
                image: img,
                labels: lab,
                slice_index: s,
                n_slices: vol.n_slices,
                subject: vol.subject_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Supervised mini-batch from the source domain.
pub struct SourceBatch {
    /// [B, 3, S, S]; the grayscale slice replicated across channels.
    pub images: Tensor,
    /// [B, C, S, S] one-hot.
    pub onehot: Tensor,
    /// Reference surface cloud per item.
    pub clouds: Vec<PointCloud>,
}

/// Target-domain mini-batch. Deliberately has no label field: target labels
/// cannot reach a loss because no loss can be handed them.
pub struct TargetBatch {
    /// [B, 3, S, S].
    pub images: Tensor,
}

fn gray_to_rgb_tensor(images: &[&[f32]], s: usize) -> Result<Tensor> {
    let b = images.len();
    let mut flat = Vec::with_capacity(b * 3 * s * s);
    for img in images {
        if img.len() != s * s {
            return Err(CoreError::Shape(format!(
                "slice has {} pixels, expected {}x{s}",
                img.len(),
                s
            )));
        }
        for _ in 0..3 {
            flat.extend_from_slice(img);
        }
    }
    Ok(Tensor::from_vec(flat, (b, 3, s, s), &Device::Cpu)?)
}

/// Assembles an augmented, supervised batch. If augmentation wipes out the
/// foreground of a slice, that item falls back to its unaugmented form so
/// the reference cloud always exists.
pub fn build_source_batch(
    samples: &[SliceSample],
    order: &[usize],
    cfg: &TrainConfig,
    epoch: usize,
    batch_idx: usize,
) -> Result<SourceBatch> {
    let s = cfg.image_size;
    let c = cfg.n_classes;
    let b = order.len();
    let mut imgs: Vec<Vec<f32>> = Vec::with_capacity(b);
    let mut onehot = vec![0.0f32; b * c * s * s];
    let mut clouds = Vec::with_capacity(b);
    for (k, &idx) in order.iter().enumerate() {
        let sm = &samples[idx];
        let aseed = derive_seed(cfg.seed, &format!("aug/e{epoch}/b{batch_idx}/k{k}"));
        let (ai, al) = augment(&sm.image, &sm.labels, s, s, cfg.aug_policy, aseed)?;
        let (img, lab, cloud) =
            match make_gt_pointcloud(&al, s, s, sm.slice_index, sm.n_slices, cfg.n_points) {
                Ok(cl) => (ai, al, cl),
                Err(CoreError::EmptyMask(_)) => {
                    let cl = make_gt_pointcloud(
                        &sm.labels,
                        s,
                        s,
                        sm.slice_index,
                        sm.n_slices,
                        cfg.n_points,
                    )?;
                    (sm.image.clone(), sm.labels.clone(), cl)
                }
                Err(e) => return Err(e),
            };
        for (p, &l) in lab.iter().enumerate() {
            let l = l as usize;
            if l >= c {
                return Err(CoreError::Dataset(format!(
                    "label {l} out of range for {c} classes"
                )));
            }
            onehot[(k * c + l) * s * s + p] = 1.0;
        }
        imgs.push(img);
        clouds.push(cloud);
    }
    let refs: Vec<&[f32]> = imgs.iter().map(|v| v.as_slice()).collect();
    Ok(SourceBatch {
        images: gray_to_rgb_tensor(&refs, s)?,
        onehot: Tensor::from_vec(onehot, (b, c, s, s), &Device::Cpu)?,
        clouds,
    })
}

/// Assembles an unlabeled target batch (no augmentation).
pub fn build_target_batch(
    samples: &[SliceSample],
    order: &[usize],
    cfg: &TrainConfig,
) -> Result<TargetBatch> {
    let refs: Vec<&[f32]> = order.iter().map(|&i| samples[i].image.as_slice()).collect();
    Ok(TargetBatch { images: gray_to_rgb_tensor(&refs, cfg.image_size)? })
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// The generator and all three discriminators with their parameter stores.
/// Every network is always built (checkpoints stay uniform across
/// ablations); disabled ones are simply never run.
pub struct Models {
    pub seg_spec: SegmenterSpec,
    pub d_spec: PatchGanSpec,
    pub pn_spec: PointNetSpec,
    pub g_store: ParamStore,
    pub g: Segmenter,
    pub d1_store: ParamStore,
    pub d1: PatchGan,
    pub d2_store: ParamStore,
    pub d2: PatchGan,
    pub d3_store: ParamStore,
    pub d3: PointNet,
}

impl Models {
    pub fn build(cfg: &TrainConfig) -> Result<Self> {
        let seg_spec = SegmenterSpec {
            in_channels: 3,
            n_classes: cfg.n_classes,
            base_width: cfg.base_width,
            n_points: cfg.n_points,
            image_size: cfg.image_size,
        };
        let d_spec = PatchGanSpec::scaled(cfg.n_classes, cfg.d_width_div);
        let pn_spec = PointNetSpec {
            in_dim: 3,
            width: cfg.pointnet_width,
            feature_transform: cfg.pointnet_feature_transform,
            n_out: 2,
        };
        let mut g_store = ParamStore::new(DType::F32);
        let g = Segmenter::new(&mut g_store, &seg_spec, &mut rng_for(cfg.seed, "init/g"))?;
        let mut d1_store = ParamStore::new(DType::F32);
        let d1 = PatchGan::new(&mut d1_store, &d_spec, &mut rng_for(cfg.seed, "init/d1"))?;
        let mut d2_store = ParamStore::new(DType::F32);
        let d2 = PatchGan::new(&mut d2_store, &d_spec, &mut rng_for(cfg.seed, "init/d2"))?;
        let mut d3_store = ParamStore::new(DType::F32);
        let d3 = PointNet::new(&mut d3_store, &pn_spec, &mut rng_for(cfg.seed, "init/d3"))?;
        Ok(Self {
            seg_spec,
            d_spec,
            pn_spec,
            g_store,
            g,
            d1_store,
            d1,
            d2_store,
            d2,
            d3_store,
            d3,
        })
    }

    pub fn spec_hashes(&self) -> BTreeMap<String, String> {
        [
            ("g".to_string(), spec_hash(&NetSpec::Segmenter(self.seg_spec.clone()))),
            ("d1".to_string(), spec_hash(&NetSpec::PatchGan(self.d_spec.clone()))),
            ("d2".to_string(), spec_hash(&NetSpec::PatchGan(self.d_spec.clone()))),
            ("d3".to_string(), spec_hash(&NetSpec::PointNet(self.pn_spec.clone()))),
        ]
        .into()
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

pub struct Trainer {
    pub cfg: TrainConfig,
    pub models: Models,
    opt_g: Adam,
    opt_d1: SgdMomentum,
    opt_d2: SgdMomentum,
    opt_d3: SgdMomentum,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimization steps.
    pub step: u64,
    pub best_val_dice: f64,
    /// Epoch index that produced `best_val_dice`.
    pub best_epoch: usize,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let models = Models::build(&cfg)?;
        // The cloud head only receives gradients when some loss reads the
        // cloud output; leave its parameters out of the optimizer otherwise.
        let g_vars = if cfg.use_emd || cfg.use_d3 {
            models.g_store.trainable()
        } else {
            models.g_store.trainable_filtered(|n| !n.starts_with("cloud/"))
        };
        let opt_g = Adam::new(g_vars, cfg.lr_at(0), "generator")?;
        let opt_d1 = SgdMomentum::new(models.d1_store.trainable(), cfg.d_lr, cfg.d_momentum, "d1")?;
        let opt_d2 = SgdMomentum::new(models.d2_store.trainable(), cfg.d_lr, cfg.d_momentum, "d2")?;
        let opt_d3 = SgdMomentum::new(models.d3_store.trainable(), cfg.d_lr, cfg.d_momentum, "d3")?;
        Ok(Self {
            cfg,
            models,
            opt_g,
            opt_d1,
            opt_d2,
            opt_d3,
            epoch: 0,
            step: 0,
            best_val_dice: f64::NEG_INFINITY,
            best_epoch: 0,
        })
    }

    /// One alternating update. The generator minimizes the supervised terms
    /// plus the weighted adversarial terms in a single step; each enabled
    /// discriminator then takes one step on detached inputs (source = real,
    /// target = fake). Disabled branches are never evaluated.
    pub fn train_step(&mut self, src: &SourceBatch, tgt: &TargetBatch) -> Result<LossRecord> {
        let cfg = &self.cfg;
        let eps = cfg.weights.eps_clamp;
        let any_adv = cfg.use_d1 || cfg.use_d2 || cfg.use_d3;
        let mut parts = LossParts::default();

        // Generator pass.
        let src_out = self.models.g.forward(&src.images, true)?;
        let mut g_loss = seg_loss(&src_out.prob, &src.onehot, eps)?;
        parts.l_seg = scalar(&g_loss)?;
        if cfg.use_emd {
            let (emd_t, emd_exact) = emd_training_loss(&src_out.cloud, &src.clouds)?;
            parts.l_emd = emd_exact;
            g_loss = (g_loss + emd_t)?;
        }
        let tgt_out = if any_adv {
            let out = self.models.g.forward(&tgt.images, true)?;
            if cfg.use_d1 {
                let d = self.models.d1.forward(&out.prob)?;
                let l = adv_loss(&d, cfg.gan_form, eps)?;
                parts.l_adv[0] = scalar(&l)?;
                g_loss = (g_loss + (l * cfg.weights.lambda_adv[0])?)?;
            }
            if cfg.use_d2 {
                let ent = self_information(&out.prob, eps)?;
                let d = self.models.d2.forward(&ent.map)?;
                let l = adv_loss(&d, cfg.gan_form, eps)?;
                parts.l_adv[1] = scalar(&l)?;
                g_loss = (g_loss + (l * cfg.weights.lambda_adv[1])?)?;
            }
            if cfg.use_d3 {
                // Frozen-statistics forward: the discriminator is not being
                // trained here, only probed for its gradient.
                let probs = self.models.d3.forward(&out.cloud, false)?;
                let sp = PointNet::source_prob(&probs)?;
                let l = adv_loss(&sp, cfg.gan_form, eps)?;
                parts.l_adv[2] = scalar(&l)?;
                g_loss = (g_loss + (l * cfg.weights.lambda_adv[2])?)?;
            }
            Some(out)
        } else {
            None
        };
        let grads = g_loss.backward()?;
        self.opt_g.step(&grads)?;

        // Discriminator passes on detached tensors.
        if let Some(tgt_out) = &tgt_out {
            if cfg.use_d1 {
                let real = self.models.d1.forward(&src_out.prob.detach())?;
                let fake = self.models.d1.forward(&tgt_out.prob.detach())?;
                parts.l_d[0] = scalar(&disc_loss_literal(&fake, &real, eps)?)?;
                let loss = disc_bce(&real, &fake, eps)?;
                let grads = loss.backward()?;
                self.opt_d1.step(&grads)?;
            }
            if cfg.use_d2 {
                let real_map = self_information(&src_out.prob.detach(), eps)?.map;
                let fake_map = self_information(&tgt_out.prob.detach(), eps)?.map;
                let real = self.models.d2.forward(&real_map)?;
                let fake = self.models.d2.forward(&fake_map)?;
                parts.l_d[1] = scalar(&disc_loss_literal(&fake, &real, eps)?)?;
                let loss = disc_bce(&real, &fake, eps)?;
                let grads = loss.backward()?;
                self.opt_d2.step(&grads)?;
            }
            if cfg.use_d3 {
                let real =
                    PointNet::source_prob(&self.models.d3.forward(&src_out.cloud.detach(), true)?)?;
                let fake =
                    PointNet::source_prob(&self.models.d3.forward(&tgt_out.cloud.detach(), true)?)?;
                parts.l_d[2] = scalar(&disc_loss_literal(&fake, &real, eps)?)?;
                let loss = disc_bce(&real, &fake, eps)?;
                let grads = loss.backward()?;
                self.opt_d3.step(&grads)?;
            }
        }

        let total = total_objective(&parts, &cfg.weights)?;
        self.step += 1;
        Ok(LossRecord::new(self.step, &parts, total))
    }

    /// Mean foreground Dice over unaugmented samples, eval-mode forward.
    pub fn source_val_dice(&self, samples: &[SliceSample]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(f64::NAN);
        }
        let s = self.cfg.image_size;
        let mut per_sample = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.cfg.batch_size.max(1)) {
            let refs: Vec<&[f32]> = chunk.iter().map(|sm| sm.image.as_slice()).collect();
            let images = gray_to_rgb_tensor(&refs, s)?;
            let out = self.models.g.forward(&images, false)?;
            let pred: Vec<u32> = out.prob.argmax(1)?.flatten_all()?.to_vec1()?;
            for (k, sm) in chunk.iter().enumerate() {
                let p: Vec<u8> = pred[k * s * s..(k + 1) * s * s]
                    .iter()
                    .map(|&v| v as u8)
                    .collect();
                let d = dice_per_class(&p, &sm.labels, self.cfg.n_classes as u8)?;
                per_sample.push(d.iter().sum::<f64>() / d.len() as f64);
            }
        }
        Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
    }

    fn manifest(&self) -> CheckpointManifest {
        CheckpointManifest {
            format_version: FORMAT_VERSION,
            epoch: self.epoch,
            step: self.step,
            seed: self.cfg.seed,
            weights: self.cfg.weights.clone(),
            spec_hashes: self.models.spec_hashes(),
            config_snapshot: Some(self.cfg.to_text()),
            best_val_dice: if self.best_val_dice.is_finite() {
                Some(self.best_val_dice)
            } else {
                None
            },
            epochs_since_improvement: Some(self.epoch.saturating_sub(self.best_epoch + 1)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut extras = self.opt_g.state("opt/g");
        extras.extend(self.opt_d1.state("opt/d1"));
        extras.extend(self.opt_d2.state("opt/d2"));
        extras.extend(self.opt_d3.state("opt/d3"));
        let m = &self.models;
        save_checkpoint(
            path,
            &self.manifest(),
            &[
                ("g", &m.g_store),
                ("d1", &m.d1_store),
                ("d2", &m.d2_store),
                ("d3", &m.d3_store),
            ],
            &extras,
        )
    }

    /// Rebuilds a trainer from a checkpoint. The architecture implied by
    /// `cfg` must hash-match what was saved.
    pub fn resume(cfg: TrainConfig, path: &Path) -> Result<Self> {
        let mut t = Self::new(cfg)?;
        let (manifest, tensors) = load_checkpoint(path)?;
        for (name, hash) in t.models.spec_hashes() {
            manifest.verify_hash(&name, &hash)?;
        }
        t.models.g_store.load_named(&section(&tensors, "g"))?;
        t.models.d1_store.load_named(&section(&tensors, "d1"))?;
        t.models.d2_store.load_named(&section(&tensors, "d2"))?;
        t.models.d3_store.load_named(&section(&tensors, "d3"))?;
        t.opt_g.load_state("opt/g", &tensors)?;
        t.opt_d1.load_state("opt/d1", &tensors)?;
        t.opt_d2.load_state("opt/d2", &tensors)?;
        t.opt_d3.load_state("opt/d3", &tensors)?;
        t.epoch = manifest.epoch;
        t.step = manifest.step;
        t.best_val_dice = manifest.best_val_dice.unwrap_or(f64::NEG_INFINITY);
        let since = manifest.epochs_since_improvement.unwrap_or(0);
        t.best_epoch = manifest.epoch.saturating_sub(since + 1);
        Ok(t)
    }
}

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

/// One line of the history file: per-epoch loss means plus validation Dice.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub g_lr: f64,
    #[serde(rename = "L_seg")]
    pub l_seg: f64,
    #[serde(rename = "L_emd")]
    pub l_emd: f64,
    #[serde(rename = "L_adv1")]
    pub l_adv1: f64,
    #[serde(rename = "L_adv2")]
    pub l_adv2: f64,
    #[serde(rename = "L_adv3")]
    pub l_adv3: f64,
    #[serde(rename = "L_D1")]
    pub l_d1: f64,
    #[serde(rename = "L_D2")]
    pub l_d2: f64,
    #[serde(rename = "L_D3")]
    pub l_d3: f64,
    pub total: f64,
    #[serde(with = "crate::jsonf::nan_as_null")]
    pub val_dice: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub epochs_run: usize,
    pub best_val_dice: f64,
    pub stopped_early: bool,
    pub epoch_stats: Vec<EpochStats>,
}

/// Loaded, preprocessed training streams.
pub struct TrainData {
    pub src_train: Vec<SliceSample>,
    pub src_val: Vec<SliceSample>,
    pub tgt_train: Vec<SliceSample>,
}

/// Reads a generated dataset and prepares the three streams the loop needs.
/// Target labels are used here once, to center the crops; they are not
/// carried into target batches.
pub fn load_train_data(data_dir: &Path, cfg: &TrainConfig) -> Result<TrainData> {
    let manifest = read_manifest(data_dir)?;
    let src_train_subj = load_subjects(data_dir, "source", &manifest.source.train)?;
    let src_val_subj = load_subjects(data_dir, "source", &manifest.source.val)?;
    let tgt_train_subj = load_subjects(data_dir, "target", &manifest.target.train)?;
    for vol in src_train_subj.iter().chain(&src_val_subj).chain(&tgt_train_subj) {
        if usize::from(vol.n_classes) != cfg.n_classes {
            return Err(CoreError::Dataset(format!(
                "subject {} has {} classes, config expects {}",
                vol.subject_id, vol.n_classes, cfg.n_classes
            )));
        }
    }
    let data = TrainData {
        src_train: prepare_samples(&src_train_subj, cfg.image_size)?,
        src_val: prepare_samples(&src_val_subj, cfg.image_size)?,
        tgt_train: prepare_samples(&tgt_train_subj, cfg.image_size)?,
    };
    if data.src_train.is_empty() || data.tgt_train.is_empty() {
        return Err(CoreError::Dataset("empty training stream".into()));
    }
    Ok(data)
}

fn epoch_order(n: usize, seed: u64, epoch: usize, stream: &str) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, &format!("shuffle/{stream}/e{epoch}"));
    order.shuffle(&mut rng);
    order
}

/// Runs (or resumes) a full training loop, writing `config.txt`,
/// `history.jsonl` and `checkpoint.safetensors` into `out_dir`.
pub fn run_training(
    cfg: &TrainConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let data = load_train_data(data_dir, cfg)?;
    let mut trainer = match resume_from {
        Some(p) => Trainer::resume(cfg.clone(), p)?,
        None => Trainer::new(cfg.clone())?,
    };
    std::fs::write(out_dir.join("config.txt"), cfg.to_text())?;
    let history_path = out_dir.join("history.jsonl");
    let ckpt_path = out_dir.join("checkpoint.safetensors");
    let mut history = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&history_path)?;

    let bs = cfg.batch_size;
    let n_batches = data.src_train.len().min(data.tgt_train.len()) / bs;
    if n_batches == 0 {
        return Err(CoreError::Dataset(format!(
            "streams of {} source / {} target samples cannot fill a batch of {bs}",
            data.src_train.len(),
            data.tgt_train.len()
        )));
    }

    let mut epoch_stats = Vec::new();
    let mut stopped_early = false;
    let start_epoch = trainer.epoch;
    for e in start_epoch..cfg.epochs {
        let t0 = Instant::now();
        trainer.opt_g.lr = cfg.lr_at(e);
        let src_order = epoch_order(data.src_train.len(), cfg.seed, e, "source");
        let tgt_order = epoch_order(data.tgt_train.len(), cfg.seed, e, "target");
        let mut sums = LossParts::default();
        let mut total_sum = 0.0;
        for b in 0..n_batches {
            let src = build_source_batch(&data.src_train, &src_order[b * bs..(b + 1) * bs], cfg, e, b)?;
            let tgt = build_target_batch(&data.tgt_train, &tgt_order[b * bs..(b + 1) * bs], cfg)?;
            let rec = match trainer.train_step(&src, &tgt) {
                Ok(r) => r,
                Err(err) => {
                    // Preserve the faulty state for post-mortem before
                    // aborting.
                    let dump = out_dir.join("abort.safetensors");
                    let _ = trainer.save(&dump);
                    return Err(CoreError::Training(format!(
                        "epoch {e} batch {b}: {err} (state dumped to {})",
                        dump.display()
                    )));
                }
            };
            sums.l_seg += rec.l_seg;
            sums.l_emd += rec.l_emd;
            sums.l_adv[0] += rec.l_adv1;
            sums.l_adv[1] += rec.l_adv2;
            sums.l_adv[2] += rec.l_adv3;
            sums.l_d[0] += rec.l_d1;
            sums.l_d[1] += rec.l_d2;
            sums.l_d[2] += rec.l_d3;
            total_sum += rec.total;
        }
        let nb = n_batches as f64;
        let val_dice = trainer.source_val_dice(&data.src_val)?;
        trainer.epoch = e + 1;
        if val_dice.is_finite() && val_dice > trainer.best_val_dice {
            trainer.best_val_dice = val_dice;
            trainer.best_epoch = e;
        }
        let stats = EpochStats {
            epoch: e,
            g_lr: cfg.lr_at(e),
            l_seg: sums.l_seg / nb,
            l_emd: sums.l_emd / nb,
            l_adv1: sums.l_adv[0] / nb,
            l_adv2: sums.l_adv[1] / nb,
            l_adv3: sums.l_adv[2] / nb,
            l_d1: sums.l_d[0] / nb,
            l_d2: sums.l_d[1] / nb,
            l_d3: sums.l_d[2] / nb,
            total: total_sum / nb,
            val_dice,
            seconds: t0.elapsed().as_secs_f64(),
        };
        writeln!(history, "{}", serde_json::to_string(&stats)?)?;
        epoch_stats.push(stats);

        let last = e + 1 == cfg.epochs;
        let stale = cfg
            .early_stop_patience
            .map(|p| e.saturating_sub(trainer.best_epoch) >= p)
            .unwrap_or(false);
        if (e + 1) % cfg.checkpoint_every == 0 || last || stale {
            trainer.save(&ckpt_path)?;
        }
        if stale {
            stopped_early = true;
            break;
        }
    }
    // Cover runs whose epoch count never hit a checkpoint boundary.
    if !ckpt_path.exists() || stopped_early {
        trainer.save(&ckpt_path)?;
    }
    Ok(TrainOutcome {
        checkpoint: ckpt_path,
        history: history_path,
        epochs_run: trainer.epoch,
        best_val_dice: trainer.best_val_dice,
        stopped_early,
        epoch_stats,
    })
}

// ---------------------------------------------------------------------------
// Ablation grids
// ---------------------------------------------------------------------------

/// One ablation configuration: which branches are on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationArm {
    pub use_d1: bool,
    pub use_d2: bool,
    pub use_d3: bool,
    pub use_emd: bool,
}

impl AblationArm {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_d1 {
            parts.push("d1");
        }
        if self.use_d2 {
            parts.push("d2");
        }
        if self.use_d3 {
            parts.push("d3");
        }
        if self.use_emd {
            parts.push("emd");
        }
        if parts.is_empty() {
            "baseline".to_string()
        } else {
            parts.join("+")
        }
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        cfg.use_d1 = self.use_d1;
        cfg.use_d2 = self.use_d2;
        cfg.use_d3 = self.use_d3;
        cfg.use_emd = self.use_emd;
    }
}

/// Parses a grid like `baseline,d1,d1+d2,d1+d2+d3+emd`. Arms may also be
/// separated by `;`, tokens are case-insensitive, and `none` is accepted as
/// a synonym for `baseline`.
pub fn parse_grid(spec: &str) -> Result<Vec<AblationArm>> {
    let mut arms = Vec::new();
    for arm_text in spec.split([',', ';']) {
        let arm_text = arm_text.trim().to_ascii_lowercase();
        if arm_text.is_empty() {
            return Err(CoreError::Config("empty ablation arm".into()));
        }
        let mut arm =
            AblationArm { use_d1: false, use_d2: false, use_d3: false, use_emd: false };
        if arm_text != "baseline" && arm_text != "none" {
            for tok in arm_text.split('+') {
                match tok.trim() {
                    "d1" => arm.use_d1 = true,
                    "d2" => arm.use_d2 = true,
                    "d3" => arm.use_d3 = true,
                    "emd" => arm.use_emd = true,
                    other => {
                        return Err(CoreError::Config(format!(
                            "unknown ablation token `{other}` (d1, d2, d3, emd, baseline)"
                        )))
                    }
                }
            }
        }
        if arms.contains(&arm) {
            return Err(CoreError::Config(format!("duplicate ablation arm `{arm_text}`")));
        }
        arms.push(arm);
    }
    Ok(arms)
}
