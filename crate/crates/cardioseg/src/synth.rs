//! Synthetic short-axis cardiac phantom and appearance shift.
//!
//! Subjects are stacks of 2-D slices containing a bright blood pool (class
//! 1), the surrounding myocardial ring (class 2), and a crescent-shaped
//! right-ventricle blob (class 3) on a dark background (class 0). Geometry
//! is jittered per subject and tapers toward the apex (slice 0). A second
//! imaging domain is simulated by a fixed intensity pipeline (gamma, a
//! monotone remap that can invert tissue contrast, blur, noise).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::rng_for;

pub const N_CLASSES: usize = 4;
pub const LV_CLASS: u8 = 1;
pub const MYO_CLASS: u8 = 2;
pub const RV_CLASS: u8 = 3;

/// Geometry and appearance parameters of the phantom generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub image_size: usize,
    pub n_slices: usize,
    /// Blood-pool radius as a fraction of `image_size`.
    pub lv_radius: f64,
    /// Myocardial ring thickness as a fraction of `image_size`.
    pub myo_thickness: f64,
    /// Right-ventricle blob radius as a fraction of `image_size`.
    pub rv_extent: f64,
    /// In-plane scale of slice 0 relative to the last slice; 1.0 disables
    /// the apex-to-base taper.
    pub apex_taper: f64,
    /// Per-class intensity mean, indexed by class id.
    pub intensity_mean: [f64; N_CLASSES],
    /// Per-class intensity standard deviation, indexed by class id.
    pub intensity_std: [f64; N_CLASSES],
    /// Voxel spacing [dz, dy, dx] in millimetres.
    pub spacing: [f64; 3],
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            image_size: 80,
            n_slices: 4,
            lv_radius: 0.14,
            myo_thickness: 0.06,
            rv_extent: 0.12,
            apex_taper: 0.55,
            intensity_mean: [0.18, 0.85, 0.42, 0.75],
            intensity_std: [0.04, 0.04, 0.04, 0.04],
            spacing: [8.0, 1.25, 1.25],
            seed: 0,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(CoreError::InvalidArg("image_size must be >= 16".into()));
        }
        if self.n_slices == 0 {
            return Err(CoreError::InvalidArg("n_slices must be positive".into()));
        }
        if !(0.0 < self.lv_radius && self.lv_radius < 0.5) {
            return Err(CoreError::InvalidArg("lv_radius outside (0, 0.5)".into()));
        }
        if !(0.0 < self.myo_thickness && self.myo_thickness < 0.5) {
            return Err(CoreError::InvalidArg("myo_thickness outside (0, 0.5)".into()));
        }
        if !(0.0 < self.rv_extent && self.rv_extent < 0.5) {
            return Err(CoreError::InvalidArg("rv_extent outside (0, 0.5)".into()));
        }
        if !(0.0 < self.apex_taper && self.apex_taper <= 1.0) {
            return Err(CoreError::InvalidArg("apex_taper outside (0, 1]".into()));
        }
        if self.spacing.iter().any(|&s| s <= 0.0) {
            return Err(CoreError::InvalidArg("spacing must be positive".into()));
        }
        Ok(())
    }
}

/// One subject: an image stack, its label stack, and acquisition metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectVolume {
    pub subject_id: String,
    /// Row-major slices, slice-major order; intensities in [0, 1].
    pub image: Vec<f32>,
    /// Class ids, same layout as `image`.
    pub labels: Vec<u8>,
    pub n_slices: usize,
    pub height: usize,
    pub width: usize,
    /// [dz, dy, dx] in millimetres.
    pub spacing: [f64; 3],
    pub domain: String,
    pub n_classes: u8,
}

impl SubjectVolume {
    pub fn slice_image(&self, s: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.image[s * n..(s + 1) * n]
    }

    pub fn slice_labels(&self, s: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.labels[s * n..(s + 1) * n]
    }
}

/// Generates one phantom subject. Deterministic in (`params`, `subject_id`):
/// per-subject geometry jitter and texture noise come from a stream derived
/// from `params.seed` and the id.
pub fn gen_subject(params: &PhantomParams, subject_id: &str) -> Result<SubjectVolume> {
    params.validate()?;
    let mut rng = rng_for(params.seed, &format!("phantom/{subject_id}"));
    let size = params.image_size;
    let sf = size as f64;
    let n = params.n_slices;

    // Per-subject anatomy jitter. Draw order is fixed; changing it would
    // silently change every generated dataset.
    let lv_r = params.lv_radius * rng.random_range(0.85..1.15);
    let myo_t = params.myo_thickness * rng.random_range(0.9..1.1);
    let rv_r = params.rv_extent * rng.random_range(0.85..1.15);
    let cy = sf * (0.5 + rng.random_range(-0.05..0.05));
    let cx = sf * (0.5 + rng.random_range(-0.05..0.05));
    let rv_angle = std::f64::consts::PI + rng.random_range(-0.35..0.35);

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let plane = size * size;
    let mut image = vec![0.0f32; n * plane];
    let mut labels = vec![0u8; n * plane];

    for s in 0..n {
        let scale = if n > 1 {
            params.apex_taper + (1.0 - params.apex_taper) * s as f64 / (n - 1) as f64
        } else {
            1.0
        };
        let r_lv = lv_r * sf * scale;
        let r_epi = (lv_r + myo_t) * sf * scale;
        let r_rv = rv_r * sf * scale;
        let rv_cy = cy + (r_epi + 0.25 * r_rv) * rv_angle.sin();
        let rv_cx = cx + (r_epi + 0.25 * r_rv) * rv_angle.cos();

        for r in 0..size {
            for c in 0..size {
                let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                let d_rv = ((r as f64 - rv_cy).powi(2) + (c as f64 - rv_cx).powi(2)).sqrt();
                let class = if d < r_lv {
                    LV_CLASS
                } else if d < r_epi {
                    MYO_CLASS
                } else if d_rv < r_rv {
                    RV_CLASS
                } else {
                    0
                };
                labels[s * plane + r * size + c] = class;
            }
        }
        for r in 0..size {
            for c in 0..size {
                let class = labels[s * plane + r * size + c] as usize;
                // Mild horizontal shading keeps the background non-constant.
                let bias = 0.05 * (c as f64 - sf / 2.0) / sf;
                let v = params.intensity_mean[class]
                    + params.intensity_std[class] * noise.sample(&mut rng)
                    + bias;
                image[s * plane + r * size + c] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }

    Ok(SubjectVolume {
        subject_id: subject_id.to_string(),
        image,
        labels,
        n_slices: n,
        height: size,
        width: size,
        spacing: params.spacing,
        domain: "source".to_string(),
        n_classes: N_CLASSES as u8,
    })
}

/// Appearance pipeline that turns a source-domain subject into a simulated
/// target-domain acquisition: gamma, then a monotone piecewise-linear remap,
/// then Gaussian blur, then additive noise; output clipped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShiftConfig {
    pub gamma: f64,
    /// Control points (x, y) with strictly increasing x covering [0, 1];
    /// y values must be monotone (increasing or decreasing, so contrast
    /// inversion is expressible).
    pub remap: Vec<[f64; 2]>,
    pub blur_sigma: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DomainShiftConfig {
    fn default() -> Self {
        Self {
            gamma: 1.6,
            // Inverts tissue contrast: bright blood pools turn dark.
            remap: vec![[0.0, 0.92], [0.45, 0.5], [1.0, 0.08]],
            blur_sigma: 1.0,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl DomainShiftConfig {
    /// No-op pipeline, useful for pipeline-identity tests.
    pub fn identity() -> Self {
        Self {
            gamma: 1.0,
            remap: vec![[0.0, 0.0], [1.0, 1.0]],
            blur_sigma: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 {
            return Err(CoreError::InvalidArg("gamma must be positive".into()));
        }
        if self.remap.len() < 2 {
            return Err(CoreError::InvalidArg("remap needs >= 2 control points".into()));
        }
        for w in self.remap.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(CoreError::InvalidArg(
                    "remap x coordinates must strictly increase".into(),
                ));
            }
        }
        let inc = self.remap.windows(2).all(|w| w[1][1] >= w[0][1]);
        let dec = self.remap.windows(2).all(|w| w[1][1] <= w[0][1]);
        if !inc && !dec {
            return Err(CoreError::InvalidArg("remap y values must be monotone".into()));
        }
        for p in &self.remap {
            if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
                return Err(CoreError::InvalidArg("remap points outside [0,1]".into()));
            }
        }
        if self.blur_sigma < 0.0 || self.noise_std < 0.0 {
            return Err(CoreError::InvalidArg("blur/noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Evaluates the remap at `v`, clamping outside the control range.
    pub fn remap_at(&self, v: f64) -> f64 {
        let pts = &self.remap;
        if v <= pts[0][0] {
            return pts[0][1];
        }
        if v >= pts[pts.len() - 1][0] {
            return pts[pts.len() - 1][1];
        }
        for w in pts.windows(2) {
            if v <= w[1][0] {
                let t = (v - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        pts[pts.len() - 1][1]
    }
}

/// Separable Gaussian blur with replicated edges; kernel radius 3 sigma.
pub fn gaussian_blur(slice: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return slice.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-0.5 * (i as f64 / sigma).powi(2)).exp());
    }
    let ksum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= ksum;
    }

    let mut tmp = vec![0.0f64; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let cc = (c as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * slice[r * w + cc] as f64;
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let rr = (r as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[rr * w + c];
            }
            out[r * w + c] = acc as f32;
        }
    }
    out
}

/// Applies the appearance shift to every slice. Labels are copied untouched
/// and the domain tag becomes "target". Noise is drawn from a stream derived
/// from (`cfg.seed`, subject id), so the shift is deterministic per subject.
pub fn apply_domain_shift(vol: &SubjectVolume, cfg: &DomainShiftConfig) -> Result<SubjectVolume> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &format!("shift/{}", vol.subject_id));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let plane = self_plane(vol);

    let mut image = Vec::with_capacity(vol.image.len());
    for s in 0..vol.n_slices {
        let src = &vol.image[s * plane..(s + 1) * plane];
        let mut slice: Vec<f32> = src
            .iter()
            .map(|&v| {
                let v = f64::from(v).clamp(0.0, 1.0);
                let g = if cfg.gamma == 1.0 { v } else { v.powf(cfg.gamma) };
                cfg.remap_at(g) as f32
            })
            .collect();
        if cfg.blur_sigma > 0.0 {
            slice = gaussian_blur(&slice, vol.height, vol.width, cfg.blur_sigma);
        }
        if cfg.noise_std > 0.0 {
            for v in &mut slice {
                *v = (*v + (cfg.noise_std * noise.sample(&mut rng)) as f32).clamp(0.0, 1.0);
            }
        }
        image.extend_from_slice(&slice);
    }

    Ok(SubjectVolume {
        subject_id: vol.subject_id.clone(),
        image,
        labels: vol.labels.clone(),
        n_slices: vol.n_slices,
        height: vol.height,
        width: vol.width,
        spacing: vol.spacing,
        domain: "target".to_string(),
        n_classes: vol.n_classes,
    })
}

fn self_plane(vol: &SubjectVolume) -> usize {
    vol.height * vol.width
}
