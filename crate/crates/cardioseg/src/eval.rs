//! Segmentation metrics and clinical agreement statistics.
//!
//! Surface distances are exact: boundary voxels are extracted with
//! 6-connectivity (volume edges count as background), and nearest-boundary
//! distances come from a separable exact Euclidean distance transform that
//! honours anisotropic voxel spacing.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{CoreError, Result};

// ---------------------------------------------------------------------------
// Overlap
// ---------------------------------------------------------------------------

/// Dice coefficient of `class` between two label volumes of equal layout.
/// Both empty -> 1.0; exactly one empty -> 0.0.
pub fn dice(pred: &[u8], gt: &[u8], class: u8) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(CoreError::Shape(format!(
            "label buffers differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut np = 0u64;
    let mut ng = 0u64;
    let mut inter = 0u64;
    for (&p, &g) in pred.iter().zip(gt) {
        let ip = p == class;
        let ig = g == class;
        np += u64::from(ip);
        ng += u64::from(ig);
        inter += u64::from(ip && ig);
    }
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * inter as f64 / (np + ng) as f64)
}

/// Dice for every foreground class 1..n_classes.
pub fn dice_per_class(pred: &[u8], gt: &[u8], n_classes: u8) -> Result<Vec<f64>> {
    (1..n_classes).map(|c| dice(pred, gt, c)).collect()
}

// ---------------------------------------------------------------------------
// Surface distances
// ---------------------------------------------------------------------------

/// Hausdorff and average surface distance, in the units of `spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    /// Maximum of the two directed maxima.
    pub hd: f64,
    /// Mean over boundary distances pooled from both directions.
    pub asd: f64,
    /// 95th percentile of the pooled boundary distances.
    pub hd95: f64,
}

/// Boundary voxels of `class`: foreground voxels with at least one
/// face-adjacent background neighbour; out-of-volume counts as background.
fn boundary_mask(labels: &[u8], dims: (usize, usize, usize), class: u8) -> Vec<bool> {
    let (d, h, w) = dims;
    let idx = |z: usize, y: usize, x: usize| (z * h + y) * w + x;
    let fg = |z: i64, y: i64, x: i64| -> bool {
        if z < 0 || y < 0 || x < 0 || z >= d as i64 || y >= h as i64 || x >= w as i64 {
            false
        } else {
            labels[idx(z as usize, y as usize, x as usize)] == class
        }
    };
    let mut out = vec![false; d * h * w];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if labels[idx(z, y, x)] != class {
                    continue;
                }
                let (zi, yi, xi) = (z as i64, y as i64, x as i64);
                let edge = !fg(zi - 1, yi, xi)
                    || !fg(zi + 1, yi, xi)
                    || !fg(zi, yi - 1, xi)
                    || !fg(zi, yi + 1, xi)
                    || !fg(zi, yi, xi - 1)
                    || !fg(zi, yi, xi + 1);
                out[idx(z, y, x)] = edge;
            }
        }
    }
    out
}

/// Finite stand-in for "no site on this line yet". Real squared distances
/// stay many orders of magnitude below it, so the lower envelope is exact
/// for them while the parabola intersections stay finite (no inf - inf).
const FAR: f64 = 1e20;

/// One pass of the exact 1-D squared distance transform (lower envelope of
/// parabolas) with sample step `step`.
fn dt1d(f: &[f64], step: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let pos = |i: usize| i as f64 * step;
    let intersect = |q: usize, p: usize| -> f64 {
        ((f[q] + pos(q).powi(2)) - (f[p] + pos(p).powi(2))) / (2.0 * step * (q - p) as f64)
    };
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k2 = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k2 + 1] < pos(q) {
            k2 += 1;
        }
        *o = (pos(q) - pos(v[k2])).powi(2) + f[v[k2]];
    }
}

/// Exact squared Euclidean distance transform of `sites` over the full grid
/// with voxel spacing [dz, dy, dx].
fn edt_squared(sites: &[bool], dims: (usize, usize, usize), spacing: [f64; 3]) -> Vec<f64> {
    let (d, h, w) = dims;
    let idx = |z: usize, y: usize, x: usize| (z * h + y) * w + x;
    let mut dist: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();

    // x axis.
    for z in 0..d {
        for y in 0..h {
            line.clear();
            line.extend((0..w).map(|x| dist[idx(z, y, x)]));
            dt1d(&line, spacing[2], &mut out);
            for x in 0..w {
                dist[idx(z, y, x)] = out[x];
            }
        }
    }
    // y axis.
    for z in 0..d {
        for x in 0..w {
            line.clear();
            line.extend((0..h).map(|y| dist[idx(z, y, x)]));
            dt1d(&line, spacing[1], &mut out);
            for y in 0..h {
                dist[idx(z, y, x)] = out[y];
            }
        }
    }
    // z axis.
    if d > 1 {
        for y in 0..h {
            for x in 0..w {
                line.clear();
                line.extend((0..d).map(|z| dist[idx(z, y, x)]));
                dt1d(&line, spacing[0], &mut out);
                for z in 0..d {
                    dist[idx(z, y, x)] = out[z];
                }
            }
        }
    }
    dist
}

/// Surface distances of `class` between prediction and ground truth over a
/// (d, h, w) volume. Errors if either boundary is empty; callers attach the
/// subject id for context.
pub fn surface_distances(
    pred: &[u8],
    gt: &[u8],
    dims: (usize, usize, usize),
    spacing: [f64; 3],
    class: u8,
) -> Result<SurfaceDistances> {
    let (d, h, w) = dims;
    let n = d * h * w;
    if pred.len() != n || gt.len() != n {
        return Err(CoreError::Shape(format!(
            "volumes {} / {} != {d}x{h}x{w}",
            pred.len(),
            gt.len()
        )));
    }
    if spacing.iter().any(|&s| s <= 0.0) {
        return Err(CoreError::InvalidArg("spacing must be positive".into()));
    }
    let bp = boundary_mask(pred, dims, class);
    let bg = boundary_mask(gt, dims, class);
    if !bp.iter().any(|&b| b) {
        return Err(CoreError::EmptyMask(format!("prediction has no class {class}")));
    }
    if !bg.iter().any(|&b| b) {
        return Err(CoreError::EmptyMask(format!("ground truth has no class {class}")));
    }
    let d_to_gt = edt_squared(&bg, dims, spacing);
    let d_to_pred = edt_squared(&bp, dims, spacing);

    let mut pooled = Vec::new();
    for i in 0..n {
        if bp[i] {
            pooled.push(d_to_gt[i].sqrt());
        }
    }
    for i in 0..n {
        if bg[i] {
            pooled.push(d_to_pred[i].sqrt());
        }
    }
    let hd = pooled.iter().copied().fold(0.0f64, f64::max);
    let asd = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    // Nearest-rank percentile: smallest value with >= 95% of mass below it.
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let hd95 = sorted[rank - 1];
    Ok(SurfaceDistances { hd, asd, hd95 })
}

// ---------------------------------------------------------------------------
// Slice-position breakdown
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionStats {
    pub region: String,
    pub n_slices: usize,
    /// Slices skipped because the class was absent from both volumes.
    pub n_skipped: usize,
    /// Mean over foreground classes of pooled-over-region Dice.
    pub dice: f64,
    /// Mean over slices and foreground classes of per-slice 2-D Hausdorff
    /// distance; NaN if every slice was skipped.
    #[serde(with = "crate::jsonf::nan_as_null")]
    pub hd: f64,
}

/// Splits the stack into Apex / Mid / Base thirds along z (slice 0 is the
/// apex; remainder slices go to the apex third) and reports Dice and 2-D
/// Hausdorff per region, averaged over foreground classes.
pub fn slicewise_report(
    pred: &[u8],
    gt: &[u8],
    dims: (usize, usize, usize),
    spacing: [f64; 3],
    n_classes: u8,
) -> Result<Vec<RegionStats>> {
    let (d, h, w) = dims;
    if d < 3 {
        return Err(CoreError::InvalidArg(format!(
            "slice-position report needs >= 3 slices, got {d}"
        )));
    }
    let third = d / 3;
    let apex_len = third + d % 3;
    let bounds = [(0, apex_len), (apex_len, apex_len + third), (apex_len + third, d)];
    let names = ["Apex", "Mid", "Base"];
    let plane = h * w;

    let mut out = Vec::with_capacity(3);
    for ((z0, z1), name) in bounds.into_iter().zip(names) {
        let p = &pred[z0 * plane..z1 * plane];
        let g = &gt[z0 * plane..z1 * plane];
        let mut dices = Vec::new();
        for c in 1..n_classes {
            dices.push(dice(p, g, c)?);
        }
        let mut hds = Vec::new();
        let mut skipped = 0usize;
        for z in 0..z1 - z0 {
            let ps = &p[z * plane..(z + 1) * plane];
            let gs = &g[z * plane..(z + 1) * plane];
            for c in 1..n_classes {
                let has_p = ps.contains(&c);
                let has_g = gs.contains(&c);
                if !has_p && !has_g {
                    skipped += 1;
                    continue;
                }
                if !has_p || !has_g {
                    // One side missing entirely: no finite surface distance;
                    // counted as skipped rather than inventing a value.
                    skipped += 1;
                    continue;
                }
                let sd = surface_distances(ps, gs, (1, h, w), spacing, c)?;
                hds.push(sd.hd);
            }
        }
        out.push(RegionStats {
            region: name.to_string(),
            n_slices: z1 - z0,
            n_skipped: skipped,
            dice: dices.iter().sum::<f64>() / dices.len() as f64,
            hd: if hds.is_empty() {
                f64::NAN
            } else {
                hds.iter().sum::<f64>() / hds.len() as f64
            },
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Volumetry and agreement statistics
// ---------------------------------------------------------------------------

/// Volume of `class` in millilitres given voxel spacing in millimetres.
pub fn volume_ml(labels: &[u8], spacing: [f64; 3], class: u8) -> f64 {
    let voxels = labels.iter().filter(|&&l| l == class).count() as f64;
    voxels * spacing[0] * spacing[1] * spacing[2] / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Two-sided p-value of the correlation (t distribution, n-2 dof).
    pub p_value: f64,
    pub n: usize,
}

/// Ordinary least squares of y on x with Pearson r^2 and its two-sided
/// significance. Needs n >= 3 and non-constant x and y.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression> {
    let n = x.len();
    if n != y.len() {
        return Err(CoreError::Shape("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(CoreError::InvalidArg(format!("regression needs n >= 3, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("regression inputs".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(CoreError::InvalidArg("x values are constant".into()));
    }
    if syy == 0.0 {
        return Err(CoreError::InvalidArg("y values are constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = (sxy * sxy) / (sxx * syy);
    let dof = nf - 2.0;
    let p_value = if (1.0 - r2) <= f64::EPSILON {
        0.0
    } else {
        let t = (r2 * dof / (1.0 - r2)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| CoreError::InvalidArg(format!("t distribution: {e}")))?;
        2.0 * (1.0 - dist.cdf(t))
    };
    Ok(Regression { slope, intercept, r2, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub mean_diff: f64,
    /// Sample standard deviation of the differences (n-1 denominator).
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n: usize,
}

/// Bland-Altman agreement of paired measurements: limits of agreement are
/// mean difference +/- 1.96 sample standard deviations.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    let n = a.len();
    if n != b.len() {
        return Err(CoreError::Shape("paired inputs differ in length".into()));
    }
    if n < 2 {
        return Err(CoreError::InvalidArg(format!("need n >= 2 pairs, got {n}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("agreement inputs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    Ok(BlandAltman {
        mean_diff: mean,
        sd_diff: sd,
        loa_low: mean - 1.96 * sd,
        loa_high: mean + 1.96 * sd,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // -- dice ---------------------------------------------------------------

    #[test]
    fn dice_half_overlap() {
        // |A| = |B| = 2 with overlap 1 -> 2*1/(2+2) = 0.5.
        let pred = [1, 1, 0, 0];
        let gt = [1, 0, 1, 0];
        assert_eq!(dice(&pred, &gt, 1).unwrap(), 0.5);
    }

    #[test]
    fn dice_empty_conventions() {
        let empty = [0u8; 4];
        let some = [1u8, 0, 0, 0];
        assert_eq!(dice(&empty, &empty, 1).unwrap(), 1.0);
        assert_eq!(dice(&some, &empty, 1).unwrap(), 0.0);
        assert_eq!(dice(&empty, &some, 1).unwrap(), 0.0);
    }

    #[test]
    fn dice_is_symmetric() {
        let mut rng = crate::rng::rng_for(31, "dice-sym");
        use rand::Rng;
        let a: Vec<u8> = (0..512).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<u8> = (0..512).map(|_| rng.random_range(0..3)).collect();
        for c in 1..3 {
            assert_eq!(dice(&a, &b, c).unwrap(), dice(&b, &a, c).unwrap());
        }
    }

    #[test]
    fn dice_perfect_match_is_one() {
        let a = [0u8, 1, 2, 1, 0, 2];
        for c in 1..3 {
            assert_eq!(dice(&a, &a, c).unwrap(), 1.0);
        }
    }

    // -- surface distances ----------------------------------------------------

    fn single_voxel_vol(dims: (usize, usize, usize), at: (usize, usize, usize)) -> Vec<u8> {
        let (d, h, w) = dims;
        let mut v = vec![0u8; d * h * w];
        v[(at.0 * h + at.1) * w + at.2] = 1;
        v
    }

    #[test]
    fn single_voxels_three_apart_with_spacing_two() {
        let dims = (8, 8, 8);
        let a = single_voxel_vol(dims, (2, 4, 4));
        let b = single_voxel_vol(dims, (5, 4, 4));
        let sd = surface_distances(&a, &b, dims, [2.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(sd.hd, 6.0);
        assert_eq!(sd.asd, 6.0);
        assert_eq!(sd.hd95, 6.0);
    }

    #[test]
    fn identical_masks_have_zero_distance() {
        let dims = (4, 6, 6);
        let mut v = vec![0u8; 4 * 6 * 6];
        for z in 1..3 {
            for y in 2..5 {
                for x in 2..5 {
                    v[(z * 6 + y) * 6 + x] = 1;
                }
            }
        }
        let sd = surface_distances(&v, &v, dims, [1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(sd.hd, 0.0);
        assert_eq!(sd.asd, 0.0);
    }

    #[test]
    fn hd_at_least_asd_and_empty_errors() {
        let dims = (5, 5, 5);
        let a = single_voxel_vol(dims, (1, 1, 1));
        let empty = vec![0u8; 125];
        assert!(matches!(
            surface_distances(&a, &empty, dims, [1.0; 3], 1),
            Err(CoreError::EmptyMask(_))
        ));
        let mut b = single_voxel_vol(dims, (3, 3, 3));
        let idx = |z: usize, y: usize, x: usize| (z * 5 + y) * 5 + x;
        b[idx(1, 1, 2)] = 1;
        let sd = surface_distances(&a, &b, dims, [1.0; 3], 1).unwrap();
        assert!(sd.hd >= sd.asd);
        assert!(sd.hd >= sd.hd95);
    }

    #[test]
    fn edt_matches_brute_force_on_random_volume() {
        let mut rng = crate::rng::rng_for(33, "edt");
        use rand::Rng;
        let dims = (5, 6, 7);
        let (d, h, w) = dims;
        let sites: Vec<bool> = (0..d * h * w).map(|_| rng.random::<f64>() < 0.1).collect();
        if !sites.iter().any(|&s| s) {
            return;
        }
        let spacing = [2.0, 1.5, 1.0];
        let fast = edt_squared(&sites, dims, spacing);
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let mut best = f64::INFINITY;
                    for zz in 0..d {
                        for yy in 0..h {
                            for xx in 0..w {
                                if sites[(zz * h + yy) * w + xx] {
                                    let dz = (z as f64 - zz as f64) * spacing[0];
                                    let dy = (y as f64 - yy as f64) * spacing[1];
                                    let dx = (x as f64 - xx as f64) * spacing[2];
                                    best = best.min(dz * dz + dy * dy + dx * dx);
                                }
                            }
                        }
                    }
                    let got = fast[(z * h + y) * w + x];
                    assert!(
                        (got - best).abs() <= 1e-9,
                        "({z},{y},{x}): {got} vs {best}"
                    );
                }
            }
        }
    }

    // -- slicewise -------------------------------------------------------------

    #[test]
    fn slice_thirds_nine_and_ten() {
        let mk = |d: usize| -> Vec<u8> {
            let mut v = vec![0u8; d * 16];
            for z in 0..d {
                for i in 4..8 {
                    v[z * 16 + i] = 1;
                }
            }
            v
        };
        let v9 = mk(9);
        let r = slicewise_report(&v9, &v9, (9, 4, 4), [1.0; 3], 2).unwrap();
        assert_eq!(
            r.iter().map(|s| s.n_slices).collect::<Vec<_>>(),
            vec![3, 3, 3]
        );
        let v10 = mk(10);
        let r = slicewise_report(&v10, &v10, (10, 4, 4), [1.0; 3], 2).unwrap();
        assert_eq!(
            r.iter().map(|s| s.n_slices).collect::<Vec<_>>(),
            vec![4, 3, 3]
        );
        assert_eq!(r[0].region, "Apex");
        assert!(r.iter().all(|s| s.dice == 1.0 && s.hd == 0.0));
    }

    #[test]
    fn slicewise_skips_absent_class_slices() {
        let (d, h, w) = (6, 4, 4);
        let mut v = vec![0u8; d * h * w];
        // Foreground only in the last two slices (Base third).
        for z in 4..6 {
            for i in 5..9 {
                v[z * h * w + i] = 1;
            }
        }
        let r = slicewise_report(&v, &v, (d, h, w), [1.0; 3], 2).unwrap();
        assert_eq!(r[0].n_skipped, 2);
        assert!(r[0].hd.is_nan());
        assert_eq!(r[2].n_skipped, 0);
        assert_eq!(r[2].dice, 1.0);
    }

    #[test]
    fn slicewise_needs_three_slices() {
        let v = vec![0u8; 2 * 4];
        assert!(slicewise_report(&v, &v, (2, 2, 2), [1.0; 3], 2).is_err());
    }

    // -- volume -------------------------------------------------------------------

    #[test]
    fn volume_in_millilitres() {
        let labels = vec![1u8; 1000];
        // 1000 voxels of 8 mm^3 = 8 ml.
        assert_eq!(volume_ml(&labels, [2.0, 2.0, 2.0], 1), 8.0);
        assert_eq!(volume_ml(&labels, [2.0, 2.0, 2.0], 2), 0.0);
    }

    // -- regression ------------------------------------------------------------------

    #[test]
    fn regression_five_point_reference() {
        // Hand-worked via the normal equations:
        //   x = [1..5], y = [2.2, 2.8, 4.5, 4.9, 6.1]
        //   Sxx = 10, Sxy = 9.9, Syy = 10.10
        //   slope = 0.99, intercept = 4.1 - 0.99*3 = 1.13
        //   r^2 = 9.9^2 / (10 * 10.10) = 0.9703960396039604
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.2, 2.8, 4.5, 4.9, 6.1];
        let r = linear_regression(&x, &y).unwrap();
        assert!((r.slope - 0.99).abs() <= 1e-9);
        assert!((r.intercept - 1.13).abs() <= 1e-9);
        assert!((r.r2 - 0.9703960396039604).abs() <= 1e-9);
        // Closed-form t CDF for 3 dof: F(t) = 1/2 + (atan(u) + u/(1+u^2))/pi
        // with u = t/sqrt(3); independent of the library route.
        let t = (r.r2 * 3.0 / (1.0 - r.r2)).sqrt();
        let u = t / 3.0f64.sqrt();
        let cdf = 0.5 + (u.atan() + u / (1.0 + u * u)) / std::f64::consts::PI;
        let p_expect = 2.0 * (1.0 - cdf);
        assert!(
            (r.p_value - p_expect).abs() <= 1e-9,
            "{} vs {}",
            r.p_value,
            p_expect
        );
    }

    #[test]
    fn regression_perfect_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let r = linear_regression(&x, &y).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!((r.intercept - 1.0).abs() < 1e-12);
        assert_eq!(r.r2, 1.0);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn regression_rejects_degenerate() {
        assert!(linear_regression(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(linear_regression(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(linear_regression(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).is_err());
        assert!(linear_regression(&[1.0, 2.0, f64::NAN], &[1.0, 2.0, 3.0]).is_err());
    }

    // -- agreement ----------------------------------------------------------------------

    #[test]
    fn bland_altman_symmetric_two_pair_reference() {
        // Differences {-1, +1}: mean 0, sd = sqrt(2), limits +/- 1.96*sqrt(2).
        let a = [10.0, 12.0];
        let b = [11.0, 11.0];
        let r = bland_altman(&a, &b).unwrap();
        assert_eq!(r.mean_diff, 0.0);
        assert!((r.sd_diff - 2.0f64.sqrt()).abs() <= 1e-12);
        let lim = 1.96 * 2.0f64.sqrt();
        assert!((r.loa_high - lim).abs() <= 1e-9);
        assert!((r.loa_low + lim).abs() <= 1e-9);
    }

    #[test]
    fn bland_altman_identical_pairs() {
        let a = [1.0, 2.0, 3.0];
        let r = bland_altman(&a, &a).unwrap();
        assert_eq!(r.mean_diff, 0.0);
        assert_eq!(r.sd_diff, 0.0);
        assert_eq!((r.loa_low, r.loa_high), (0.0, 0.0));
    }

    #[test]
    fn bland_altman_needs_two_pairs() {
        assert!(bland_altman(&[1.0], &[2.0]).is_err());
    }
}
