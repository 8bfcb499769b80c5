//! Run configuration: named recipes with frozen constants, a flat
//! `key = value` config-file format, and layered overrides with precedence
//! command line > config file > recipe preset.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::losses::{GanForm, LossWeights};
use crate::preprocess::AugmentPolicy;

/// Named training recipes. Each fixes the published constants; any field can
/// still be overridden afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipe {
    /// Adam lr 0.001 decayed x0.2 every 100 epochs, 600 epochs, batch 16.
    MultiSequence,
    /// Adam lr 0.0002, no decay, early stop after 100 stale epochs.
    CrossModality,
    /// Desk-scale phantom recipe; small widths, few epochs.
    Toy,
}

impl FromStr for Recipe {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi_sequence" => Ok(Self::MultiSequence),
            "cross_modality" => Ok(Self::CrossModality),
            "toy" => Ok(Self::Toy),
            other => Err(CoreError::Config(format!(
                "unknown recipe `{other}` (multi_sequence, cross_modality, toy)"
            ))),
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::MultiSequence => "multi_sequence",
            Self::CrossModality => "cross_modality",
            Self::Toy => "toy",
        };
        f.write_str(s)
    }
}

/// Complete training configuration. Defaults come from a recipe; individual
/// keys can be overridden from a config file or the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub recipe: Recipe,
    pub epochs: usize,
    pub batch_size: usize,
    pub g_lr: f64,
    /// Multiply `g_lr` by `lr_decay_factor` every this many epochs.
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: f64,
    pub d_lr: f64,
    pub d_momentum: f64,
    pub weights: LossWeights,
    pub gan_form: GanForm,
    pub use_d1: bool,
    pub use_d2: bool,
    pub use_d3: bool,
    /// Supervised point-cloud matching loss on the source stream.
    pub use_emd: bool,
    pub aug_policy: AugmentPolicy,
    pub seed: u64,
    pub n_classes: usize,
    /// Network input side; slices are cropped to this around the foreground
    /// centroid.
    pub image_size: usize,
    pub n_points: usize,
    pub base_width: usize,
    /// Patch-discriminator widths are the defaults divided by this.
    pub d_width_div: usize,
    pub pointnet_width: usize,
    pub pointnet_feature_transform: bool,
    pub checkpoint_every: usize,
    /// Stop after this many epochs without source-validation improvement.
    pub early_stop_patience: Option<usize>,
}

impl TrainConfig {
    pub fn from_recipe(recipe: Recipe) -> Self {
        let base = Self {
            recipe,
            epochs: 600,
            batch_size: 16,
            g_lr: 1e-3,
            lr_decay_every: Some(100),
            lr_decay_factor: 0.2,
            d_lr: 2.5e-5,
            d_momentum: 0.9,
            weights: LossWeights::default(),
            gan_form: GanForm::NonSaturating,
            use_d1: true,
            use_d2: true,
            use_d3: true,
            use_emd: true,
            aug_policy: AugmentPolicy::Light,
            seed: 0,
            n_classes: 4,
            image_size: 224,
            n_points: 300,
            base_width: 32,
            d_width_div: 1,
            pointnet_width: 64,
            pointnet_feature_transform: true,
            checkpoint_every: 10,
            early_stop_patience: None,
        };
        match recipe {
            Recipe::MultiSequence => base,
            Recipe::CrossModality => Self {
                g_lr: 2e-4,
                lr_decay_every: None,
                early_stop_patience: Some(100),
                ..base
            },
            Recipe::Toy => Self {
                epochs: 24,
                batch_size: 8,
                g_lr: 1e-3,
                lr_decay_every: None,
                d_lr: 1e-4,
                image_size: 64,
                n_points: 48,
                base_width: 8,
                d_width_div: 8,
                pointnet_width: 16,
                checkpoint_every: 50,
                ..base
            },
        }
    }

    /// Generator learning rate at a given epoch under the decay schedule.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_every {
            Some(every) if every > 0 => {
                self.g_lr * self.lr_decay_factor.powi((epoch / every) as i32)
            }
            _ => self.g_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(CoreError::Config("epochs must be >= 1".into()));
        }
        if self.g_lr <= 0.0 || self.d_lr <= 0.0 {
            return Err(CoreError::Config("learning rates must be > 0".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(CoreError::Config("lr_decay_factor must be in (0, 1]".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(CoreError::Config("checkpoint_every must be >= 1".into()));
        }
        self.weights.validate()?;
        Ok(())
    }

    /// Applies one `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value.parse().map_err(|e| {
                CoreError::Config(format!("key `{key}`: bad value `{value}` ({e})"))
            })
        }
        fn parse_opt(key: &str, value: &str) -> Result<Option<usize>> {
            if value == "none" {
                Ok(None)
            } else {
                parse::<usize>(key, value).map(Some)
            }
        }
        match key {
            "recipe" => {
                return Err(CoreError::Config(
                    "`recipe` must be resolved before other keys; it cannot be \
                     applied as a plain override"
                        .into(),
                ))
            }
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "g_lr" => self.g_lr = parse(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse_opt(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "d_lr" => self.d_lr = parse(key, value)?,
            "d_momentum" => self.d_momentum = parse(key, value)?,
            "lambda_adv1" => self.weights.lambda_adv[0] = parse(key, value)?,
            "lambda_adv2" => self.weights.lambda_adv[1] = parse(key, value)?,
            "lambda_adv3" => self.weights.lambda_adv[2] = parse(key, value)?,
            "lambda_d1" => self.weights.lambda_d[0] = parse(key, value)?,
            "lambda_d2" => self.weights.lambda_d[1] = parse(key, value)?,
            "lambda_d3" => self.weights.lambda_d[2] = parse(key, value)?,
            "eps_clamp" => self.weights.eps_clamp = parse(key, value)?,
            "gan_form" => {
                self.gan_form = match value {
                    "saturating" => GanForm::Saturating,
                    "non_saturating" => GanForm::NonSaturating,
                    other => {
                        return Err(CoreError::Config(format!(
                            "gan_form: `{other}` (saturating, non_saturating)"
                        )))
                    }
                }
            }
            "use_d1" => self.use_d1 = parse(key, value)?,
            "use_d2" => self.use_d2 = parse(key, value)?,
            "use_d3" => self.use_d3 = parse(key, value)?,
            "use_emd" => self.use_emd = parse(key, value)?,
            "aug" => self.aug_policy = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "n_classes" => self.n_classes = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "n_points" => self.n_points = parse(key, value)?,
            "base_width" => self.base_width = parse(key, value)?,
            "d_width_div" => self.d_width_div = parse(key, value)?,
            "pointnet_width" => self.pointnet_width = parse(key, value)?,
            "pointnet_feature_transform" => {
                self.pointnet_feature_transform = parse(key, value)?
            }
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "early_stop_patience" => self.early_stop_patience = parse_opt(key, value)?,
            other => {
                return Err(CoreError::Config(format!("unknown config key `{other}`")))
            }
        }
        Ok(())
    }

    /// All keys as a flat config document (round-trips through [`resolve`]).
    pub fn to_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
        let gan = match self.gan_form {
            GanForm::Saturating => "saturating",
            GanForm::NonSaturating => "non_saturating",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("recipe", self.recipe.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("g_lr", self.g_lr.to_string());
        kv("lr_decay_every", opt(self.lr_decay_every));
        kv("lr_decay_factor", self.lr_decay_factor.to_string());
        kv("d_lr", self.d_lr.to_string());
        kv("d_momentum", self.d_momentum.to_string());
        kv("lambda_adv1", self.weights.lambda_adv[0].to_string());
        kv("lambda_adv2", self.weights.lambda_adv[1].to_string());
        kv("lambda_adv3", self.weights.lambda_adv[2].to_string());
        kv("lambda_d1", self.weights.lambda_d[0].to_string());
        kv("lambda_d2", self.weights.lambda_d[1].to_string());
        kv("lambda_d3", self.weights.lambda_d[2].to_string());
        kv("eps_clamp", self.weights.eps_clamp.to_string());
        kv("gan_form", gan.to_string());
        kv("use_d1", self.use_d1.to_string());
        kv("use_d2", self.use_d2.to_string());
        kv("use_d3", self.use_d3.to_string());
        kv("use_emd", self.use_emd.to_string());
        kv("aug", self.aug_policy.to_string());
        kv("seed", self.seed.to_string());
        kv("n_classes", self.n_classes.to_string());
        kv("image_size", self.image_size.to_string());
        kv("n_points", self.n_points.to_string());
        kv("base_width", self.base_width.to_string());
        kv("d_width_div", self.d_width_div.to_string());
        kv("pointnet_width", self.pointnet_width.to_string());
        kv(
            "pointnet_feature_transform",
            self.pointnet_feature_transform.to_string(),
        );
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("early_stop_patience", opt(self.early_stop_patience));
        s
    }
}

/// A parsed run request: training parameters plus the path keys a config
/// file may carry.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub cfg: TrainConfig,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Parses a flat `key = value` document. `#` starts a comment; blank lines
/// are ignored; duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CoreError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let k = k.trim().to_string();
        let v = v.trim().to_string();
        if k.is_empty() || v.is_empty() {
            return Err(CoreError::Config(format!(
                "line {}: empty key or value",
                lineno + 1
            )));
        }
        if !seen.insert(k.clone()) {
            return Err(CoreError::Config(format!(
                "line {}: duplicate key `{k}`",
                lineno + 1
            )));
        }
        out.push((k, v));
    }
    Ok(out)
}

/// Builds a configuration from an optional config file and command-line
/// overrides. The recipe is looked up first (overrides beat the file, the
/// file beats the `toy` default); every other key is then applied with file
/// keys first and overrides last.
pub fn resolve(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<ResolvedRun> {
    let file_pairs = match file_text {
        Some(t) => parse_kv(t)?,
        None => Vec::new(),
    };
    let find_recipe = |pairs: &[(String, String)]| {
        pairs
            .iter()
            .find(|(k, _)| k == "recipe")
            .map(|(_, v)| v.clone())
    };
    let recipe: Recipe = match find_recipe(overrides).or_else(|| find_recipe(&file_pairs)) {
        Some(name) => name.parse()?,
        None => Recipe::Toy,
    };
    let mut run = ResolvedRun {
        cfg: TrainConfig::from_recipe(recipe),
        data_dir: None,
        out_dir: None,
    };
    for (k, v) in file_pairs.iter().chain(overrides) {
        match k.as_str() {
            "recipe" => {}
            "data_dir" => run.data_dir = Some(PathBuf::from(v)),
            "out_dir" => run.out_dir = Some(PathBuf::from(v)),
            _ => run.cfg.apply(k, v)?,
        }
    }
    run.cfg.validate()?;
    Ok(run)
}
