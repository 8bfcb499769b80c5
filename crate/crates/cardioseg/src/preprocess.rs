//! Slice preprocessing and label-preserving augmentation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::synth::gaussian_blur;

const HIST_BINS: usize = 256;

/// Histogram equalization over 256 uniform bins on [0, 1]. The output value
/// of a pixel is cdf(bin(v)) / N, so ranks spread to fill (0, 1] and equal
/// inputs stay equal.
pub fn histogram_equalize(slice: &[f32]) -> Vec<f32> {
    let n = slice.len();
    if n == 0 {
        return Vec::new();
    }
    let bin_of = |v: f32| -> usize {
        ((f64::from(v.clamp(0.0, 1.0)) * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
    };
    let mut hist = [0u64; HIST_BINS];
    for &v in slice {
        hist[bin_of(v)] += 1;
    }
    let mut cdf = [0u64; HIST_BINS];
    let mut acc = 0u64;
    for (c, &h) in cdf.iter_mut().zip(&hist) {
        acc += h;
        *c = acc;
    }
    slice
        .iter()
        .map(|&v| (cdf[bin_of(v)] as f64 / n as f64) as f32)
        .collect()
}

/// Rescales to [0, 1]; a constant slice maps to all zeros.
pub fn minmax_normalize(slice: &[f32]) -> Vec<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in slice {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return vec![0.0; slice.len()];
    }
    slice.iter().map(|&v| (v - lo) / range).collect()
}

/// Cropped image/label pair plus the (row0, col0) window origin.
pub type CropOutput = (Vec<f32>, Vec<u8>, (usize, usize));

/// Crops a `crop x crop` window centred on the foreground centroid of
/// `labels`, clamped to stay inside the image; an empty mask falls back to
/// the centre crop.
pub fn centroid_crop(
    slice: &[f32],
    labels: &[u8],
    h: usize,
    w: usize,
    crop: usize,
) -> Result<CropOutput> {
    if slice.len() != h * w || labels.len() != h * w {
        return Err(CoreError::Shape(format!(
            "slice/labels length {}/{} != {h}x{w}",
            slice.len(),
            labels.len()
        )));
    }
    if crop == 0 || crop > h || crop > w {
        return Err(CoreError::InvalidArg(format!(
            "crop {crop} larger than image {h}x{w}"
        )));
    }
    let (mut cy, mut cx, mut n) = (0.0f64, 0.0f64, 0usize);
    for r in 0..h {
        for c in 0..w {
            if labels[r * w + c] > 0 {
                cy += r as f64;
                cx += c as f64;
                n += 1;
            }
        }
    }
    let (r0, c0) = if n == 0 {
        ((h - crop) / 2, (w - crop) / 2)
    } else {
        cy /= n as f64;
        cx /= n as f64;
        let clampi = |v: f64, max: usize| -> usize {
            (v.round() as i64).clamp(0, max as i64) as usize
        };
        (
            clampi(cy - crop as f64 / 2.0, h - crop),
            clampi(cx - crop as f64 / 2.0, w - crop),
        )
    };
    let mut out_img = Vec::with_capacity(crop * crop);
    let mut out_lab = Vec::with_capacity(crop * crop);
    for r in r0..r0 + crop {
        out_img.extend_from_slice(&slice[r * w + c0..r * w + c0 + crop]);
        out_lab.extend_from_slice(&labels[r * w + c0..r * w + c0 + crop]);
    }
    Ok((out_img, out_lab, (r0, c0)))
}

/// Augmentation strength applied to training slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AugmentPolicy {
    None,
    #[default]
    Light,
    Heavy,
}

impl std::str::FromStr for AugmentPolicy {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "light" => Ok(Self::Light),
            "heavy" => Ok(Self::Heavy),
            other => Err(CoreError::Config(format!("unknown augment policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for AugmentPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Light => "light",
            Self::Heavy => "heavy",
        })
    }
}

fn bilinear(img: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    if y < -0.5 || x < -0.5 || y > h as f64 - 0.5 || x > w as f64 - 0.5 {
        return 0.0;
    }
    let y0 = y.floor();
    let x0 = x.floor();
    let ty = y - y0;
    let tx = x - x0;
    let at = |r: i64, c: i64| -> f64 {
        let r = r.clamp(0, h as i64 - 1) as usize;
        let c = c.clamp(0, w as i64 - 1) as usize;
        f64::from(img[r * w + c])
    };
    let (r0, c0) = (y0 as i64, x0 as i64);
    let v = at(r0, c0) * (1.0 - ty) * (1.0 - tx)
        + at(r0, c0 + 1) * (1.0 - ty) * tx
        + at(r0 + 1, c0) * ty * (1.0 - tx)
        + at(r0 + 1, c0 + 1) * ty * tx;
    v as f32
}

fn nearest(lab: &[u8], h: usize, w: usize, y: f64, x: f64) -> u8 {
    let r = y.round();
    let c = x.round();
    if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
        return 0;
    }
    lab[r as usize * w + c as usize]
}

/// Label-preserving augmentation of a slice/labels pair. Geometric warps use
/// bilinear sampling for the image and nearest-neighbour for labels (so no
/// new class ids can appear); intensity jitter touches the image only. The
/// same `seed` always produces the same output.
pub fn augment(
    slice: &[f32],
    labels: &[u8],
    h: usize,
    w: usize,
    policy: AugmentPolicy,
    seed: u64,
) -> Result<(Vec<f32>, Vec<u8>)> {
    if slice.len() != h * w || labels.len() != h * w {
        return Err(CoreError::Shape("slice/labels size mismatch".into()));
    }
    match policy {
        AugmentPolicy::None => Ok((slice.to_vec(), labels.to_vec())),
        AugmentPolicy::Light => {
            let mut rng = crate::rng::rng_for(seed, "augment/light");
            let choices = [-60.0f64, -30.0, 30.0, 60.0];
            let angle = choices[rng.random_range(0..choices.len())].to_radians();
            Ok(warp_rigid(slice, labels, h, w, angle, 1.0, 0.0, 0.0, None))
        }
        AugmentPolicy::Heavy => {
            let mut rng = crate::rng::rng_for(seed, "augment/heavy");
            let angle = rng.random_range(-45.0f64..45.0).to_radians();
            let scale = rng.random_range(0.9..1.1);
            let ty = rng.random_range(-0.05..0.05) * h as f64;
            let tx = rng.random_range(-0.05..0.05) * w as f64;
            // Smooth elastic displacement: blurred white noise, fixed 2 px
            // amplitude.
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let mut dy: Vec<f32> = (0..h * w).map(|_| normal.sample(&mut rng) as f32).collect();
            let mut dx: Vec<f32> = (0..h * w).map(|_| normal.sample(&mut rng) as f32).collect();
            dy = gaussian_blur(&dy, h, w, 6.0);
            dx = gaussian_blur(&dx, h, w, 6.0);
            let norm = |f: &mut [f32]| {
                let m = f.iter().fold(0.0f32, |a, &b| a.max(b.abs())).max(1e-6);
                for v in f.iter_mut() {
                    *v = *v / m * 2.0;
                }
            };
            norm(&mut dy);
            norm(&mut dx);
            let (mut img, lab) =
                warp_rigid(slice, labels, h, w, angle, scale, ty, tx, Some((&dy, &dx)));
            let gamma = rng.random_range(0.8..1.25);
            let noise_std = 0.01;
            for v in &mut img {
                let g = f64::from(v.clamp(0.0, 1.0)).powf(gamma);
                *v = ((g + noise_std * normal.sample(&mut rng)) as f32).clamp(0.0, 1.0);
            }
            Ok((img, lab))
        }
    }
}

/// Inverse-mapped similarity warp about the image centre with optional added
/// displacement field.
#[allow(clippy::too_many_arguments)]
fn warp_rigid(
    slice: &[f32],
    labels: &[u8],
    h: usize,
    w: usize,
    angle: f64,
    scale: f64,
    ty: f64,
    tx: f64,
    disp: Option<(&[f32], &[f32])>,
) -> (Vec<f32>, Vec<u8>) {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let inv_scale = 1.0 / scale;
    let mut img = vec![0.0f32; h * w];
    let mut lab = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut y = r as f64 - cy - ty;
            let mut x = c as f64 - cx - tx;
            // Inverse rotation + scale.
            let sy = inv_scale * (cos * y + sin * x);
            let sx = inv_scale * (-sin * y + cos * x);
            y = sy + cy;
            x = sx + cx;
            if let Some((dy, dx)) = disp {
                y += f64::from(dy[r * w + c]);
                x += f64::from(dx[r * w + c]);
            }
            img[r * w + c] = bilinear(slice, h, w, y, x);
            lab[r * w + c] = nearest(labels, h, w, y, x);
        }
    }
    (img, lab)
}
