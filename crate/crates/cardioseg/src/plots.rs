//! Plot emission: SVG charts (scatter with fit, agreement plot, box plot)
//! drawn directly as markup, and PNG slice overlays via the `image` crate.
//!
//! The charts are deliberately simple and dependency-free; exact fidelity to
//! any plotting package is a non-goal, legibility and determinism are.

use std::path::Path;

use crate::error::{CoreError, Result};
use crate::eval::{BlandAltman, Regression};
use crate::report::{entropy_image, MetricsReport, SubjectPrediction};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 46.0;

/// Maps a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(mut d0: f64, mut d1: f64, p0: f64, p1: f64) -> Self {
        if !d0.is_finite() || !d1.is_finite() {
            d0 = 0.0;
            d1 = 1.0;
        }
        if (d1 - d0).abs() < 1e-12 {
            let pad = if d0.abs() > 1e-12 { d0.abs() * 0.1 } else { 1.0 };
            d0 -= pad;
            d1 += pad;
        } else {
            let pad = (d1 - d0) * 0.06;
            d0 -= pad;
            d1 += pad;
        }
        Self { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    /// Round tick positions covering the padded domain.
    fn ticks(&self) -> Vec<f64> {
        let span = self.d1 - self.d0;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.abs().log10().floor());
        let norm = raw / mag;
        let step = if norm < 1.5 {
            mag
        } else if norm < 3.5 {
            2.0 * mag
        } else if norm < 7.5 {
            5.0 * mag
        } else {
            10.0 * mag
        };
        let mut t = (self.d0 / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.d1 + step * 1e-9 {
            out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else if a >= 0.01 || a == 0.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.1e}")
    }
    .trim_end_matches('0')
    .trim_end_matches('.')
    .to_string()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Incremental SVG document builder.
struct Svg {
    body: String,
}

impl Svg {
    fn new() -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"11\">\n"
        ));
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        Self { body }
    }

    #[allow(clippy::too_many_arguments)]
    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dash: &str) {
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{dash}\"")
        };
        self.body.push_str(&format!(
            "<line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" \
             stroke=\"{stroke}\" stroke-width=\"{width}\"{dash_attr}/>\n"
        ));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"{r}\" fill=\"{fill}\" fill-opacity=\"0.75\"/>\n"
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" \
             fill=\"{fill}\" stroke=\"{stroke}\"/>\n"
        ));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{}</text>\n",
            esc(s)
        ));
    }

    /// Axes, ticks, labels and title for a standard x/y chart.
    fn frame(&mut self, xs: &Scale, ys: &Scale, title: &str, xlabel: &str, ylabel: &str) {
        self.line(MARGIN_L, HEIGHT - MARGIN_B, WIDTH - MARGIN_R, HEIGHT - MARGIN_B, "black", 1.0, "");
        self.line(MARGIN_L, MARGIN_T, MARGIN_L, HEIGHT - MARGIN_B, "black", 1.0, "");
        for t in xs.ticks() {
            let px = xs.at(t);
            self.line(px, HEIGHT - MARGIN_B, px, HEIGHT - MARGIN_B + 4.0, "black", 1.0, "");
            self.text(px, HEIGHT - MARGIN_B + 16.0, "middle", &fmt_tick(t));
        }
        for t in ys.ticks() {
            let py = ys.at(t);
            self.line(MARGIN_L - 4.0, py, MARGIN_L, py, "black", 1.0, "");
            self.text(MARGIN_L - 7.0, py + 3.5, "end", &fmt_tick(t));
        }
        self.text((MARGIN_L + WIDTH - MARGIN_R) / 2.0, 18.0, "middle", title);
        self.text(
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 10.0,
            "middle",
            xlabel,
        );
        self.body.push_str(&format!(
            "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            esc(ylabel)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Scatter of paired values with an optional least-squares line.
pub fn scatter_with_fit(
    path: &Path,
    xs: &[f64],
    ys: &[f64],
    fit: Option<&Regression>,
    title: &str,
    xlabel: &str,
    ylabel: &str,
) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(CoreError::Shape("scatter inputs differ in length".into()));
    }
    let (xmin, xmax) = min_max(xs);
    let (ymin, ymax) = min_max(ys);
    let sx = Scale::new(xmin, xmax, MARGIN_L, WIDTH - MARGIN_R);
    let sy = Scale::new(ymin, ymax, HEIGHT - MARGIN_B, MARGIN_T);
    let mut svg = Svg::new();
    svg.frame(&sx, &sy, title, xlabel, ylabel);
    if let Some(r) = fit {
        let y0 = r.intercept + r.slope * sx.d0;
        let y1 = r.intercept + r.slope * sx.d1;
        svg.line(sx.at(sx.d0), sy.at(y0), sx.at(sx.d1), sy.at(y1), "#c0392b", 1.5, "");
        svg.text(
            WIDTH - MARGIN_R - 4.0,
            MARGIN_T + 14.0,
            "end",
            &format!("y = {:.3}x + {:.2}, r2 = {:.3}", r.slope, r.intercept, r.r2),
        );
    }
    for (&x, &y) in xs.iter().zip(ys) {
        svg.circle(sx.at(x), sy.at(y), 3.0, "#2c5f8a");
    }
    std::fs::write(path, svg.finish())?;
    Ok(())
}

/// Agreement plot: pair means against differences, with bias and limits.
pub fn agreement_plot(
    path: &Path,
    a: &[f64],
    b: &[f64],
    ba: &BlandAltman,
    title: &str,
) -> Result<()> {
    if a.len() != b.len() {
        return Err(CoreError::Shape("agreement inputs differ in length".into()));
    }
    let means: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (xmin, xmax) = min_max(&means);
    let lo = diffs.iter().cloned().fold(ba.loa_low, f64::min);
    let hi = diffs.iter().cloned().fold(ba.loa_high, f64::max);
    let sx = Scale::new(xmin, xmax, MARGIN_L, WIDTH - MARGIN_R);
    let sy = Scale::new(lo, hi, HEIGHT - MARGIN_B, MARGIN_T);
    let mut svg = Svg::new();
    svg.frame(&sx, &sy, title, "mean of pair (ml)", "difference (ml)");
    for (v, dash, color) in [
        (ba.mean_diff, "", "#c0392b"),
        (ba.loa_low, "5,4", "#7f8c8d"),
        (ba.loa_high, "5,4", "#7f8c8d"),
    ] {
        svg.line(MARGIN_L, sy.at(v), WIDTH - MARGIN_R, sy.at(v), color, 1.2, dash);
        svg.text(WIDTH - MARGIN_R - 4.0, sy.at(v) - 4.0, "end", &fmt_tick(v));
    }
    for (&m, &d) in means.iter().zip(&diffs) {
        svg.circle(sx.at(m), sy.at(d), 3.0, "#2c5f8a");
    }
    std::fs::write(path, svg.finish())?;
    Ok(())
}

/// Five-number summary with 1.5*IQR whiskers; extremes beyond become dots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

/// Linear-interpolation quantile of a sorted slice, q in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn box_stats(values: &[f64]) -> Option<(BoxStats, Vec<f64>)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.iter().cloned().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_low = sorted.iter().cloned().find(|&v| v >= lo_fence).unwrap_or(q1);
    let whisker_high = sorted
        .iter()
        .rev()
        .cloned()
        .find(|&v| v <= hi_fence)
        .unwrap_or(q3);
    let outliers = sorted
        .iter()
        .cloned()
        .filter(|&v| v < lo_fence || v > hi_fence)
        .collect();
    Some((BoxStats { q1, median, q3, whisker_low, whisker_high }, outliers))
}

/// One box per named group.
pub fn boxplot(
    path: &Path,
    groups: &[(String, Vec<f64>)],
    title: &str,
    ylabel: &str,
) -> Result<()> {
    let drawn: Vec<(&str, BoxStats, Vec<f64>)> = groups
        .iter()
        .filter_map(|(name, vals)| box_stats(vals).map(|(b, o)| (name.as_str(), b, o)))
        .collect();
    if drawn.is_empty() {
        return Err(CoreError::InvalidArg("no finite values to box-plot".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, b, outs) in &drawn {
        lo = lo.min(b.whisker_low);
        hi = hi.max(b.whisker_high);
        for &o in outs {
            lo = lo.min(o);
            hi = hi.max(o);
        }
    }
    let sy = Scale::new(lo, hi, HEIGHT - MARGIN_B, MARGIN_T);
    let sx = Scale::new(0.0, drawn.len() as f64, MARGIN_L, WIDTH - MARGIN_R);
    let mut svg = Svg::new();
    svg.frame(&sx, &sy, title, "", ylabel);
    let slot = (sx.at(1.0) - sx.at(0.0)).abs();
    let half = (slot * 0.3).min(26.0);
    for (i, (name, b, outs)) in drawn.iter().enumerate() {
        let cx = sx.at(i as f64 + 0.5);
        svg.line(cx, sy.at(b.whisker_low), cx, sy.at(b.q1), "black", 1.0, "");
        svg.line(cx, sy.at(b.q3), cx, sy.at(b.whisker_high), "black", 1.0, "");
        svg.line(cx - half * 0.6, sy.at(b.whisker_low), cx + half * 0.6, sy.at(b.whisker_low), "black", 1.0, "");
        svg.line(cx - half * 0.6, sy.at(b.whisker_high), cx + half * 0.6, sy.at(b.whisker_high), "black", 1.0, "");
        svg.rect(
            cx - half,
            sy.at(b.q3),
            2.0 * half,
            (sy.at(b.q1) - sy.at(b.q3)).abs().max(0.5),
            "#d7e5f0",
            "black",
        );
        svg.line(cx - half, sy.at(b.median), cx + half, sy.at(b.median), "#c0392b", 1.5, "");
        for &o in outs {
            svg.circle(cx, sy.at(o), 2.0, "#7f8c8d");
        }
        svg.text(cx, HEIGHT - MARGIN_B + 16.0, "middle", name);
    }
    std::fs::write(path, svg.finish())?;
    Ok(())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

// ---------------------------------------------------------------------------
// PNG overlays
// ---------------------------------------------------------------------------

/// Label colors: LV red, myocardium green, RV blue, further classes cycled.
fn class_color(class: u8) -> [u8; 3] {
    match class {
        1 => [224, 64, 64],
        2 => [72, 200, 96],
        3 => [72, 120, 232],
        other => {
            let k = u32::from(other);
            [
                ((k * 97) % 200 + 40) as u8,
                ((k * 57) % 200 + 40) as u8,
                ((k * 37) % 200 + 40) as u8,
            ]
        }
    }
}

fn gray(v: f32) -> [u8; 3] {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [g, g, g]
}

fn blend(base: [u8; 3], tint: [u8; 3], alpha: f32) -> [u8; 3] {
    let mut out = [0u8; 3];
    for i in 0..3 {
        out[i] = (f32::from(base[i]) * (1.0 - alpha) + f32::from(tint[i]) * alpha).round() as u8;
    }
    out
}

/// Black -> red -> yellow -> white ramp for uncertainty maps.
fn heat(v: f32) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0) * 3.0;
    let r = (v.min(1.0) * 255.0) as u8;
    let g = ((v - 1.0).clamp(0.0, 1.0) * 255.0) as u8;
    let b = ((v - 2.0).clamp(0.0, 1.0) * 255.0) as u8;
    [r, g, b]
}

/// Writes a four-panel overlay for one slice: input, reference labels,
/// predicted labels, self-information heat map.
pub fn slice_overlay_png(
    path: &Path,
    image: &[f32],
    gt: &[u8],
    pred: &[u8],
    entropy: &[f32],
    size: usize,
) -> Result<()> {
    let n = size * size;
    if image.len() != n || gt.len() != n || pred.len() != n || entropy.len() != n {
        return Err(CoreError::Shape(format!(
            "overlay buffers must all be {n} elements for size {size}"
        )));
    }
    let gap = 2u32;
    let s = size as u32;
    let total_w = 4 * s + 3 * gap;
    let mut img = image::RgbImage::from_pixel(total_w, s, image::Rgb([255, 255, 255]));
    let e_max = entropy.iter().cloned().fold(0.0f32, f32::max).max(1e-6);
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let base = gray(image[i]);
            let gt_px = if gt[i] == 0 {
                base
            } else {
                blend(base, class_color(gt[i]), 0.55)
            };
            let pr_px = if pred[i] == 0 {
                base
            } else {
                blend(base, class_color(pred[i]), 0.55)
            };
            let en_px = heat(entropy[i] / e_max);
            let (x, y) = (x as u32, y as u32);
            img.put_pixel(x, y, image::Rgb(base));
            img.put_pixel(s + gap + x, y, image::Rgb(gt_px));
            img.put_pixel(2 * (s + gap) + x, y, image::Rgb(pr_px));
            img.put_pixel(3 * (s + gap) + x, y, image::Rgb(en_px));
        }
    }
    img.save(path).map_err(|e| CoreError::InvalidArg(format!("png write failed: {e}")))?;
    Ok(())
}

/// Emits the full plot set for a report into `out_dir`.
pub fn write_all(
    report: &MetricsReport,
    preds: &[SubjectPrediction],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let gt_vols: Vec<f64> = report.subjects.iter().map(|s| s.lv_volume_gt_ml).collect();
    let pred_vols: Vec<f64> = report.subjects.iter().map(|s| s.lv_volume_pred_ml).collect();
    if !gt_vols.is_empty() {
        scatter_with_fit(
            &out_dir.join("volume_regression.svg"),
            &gt_vols,
            &pred_vols,
            report.volume_regression.as_ref(),
            "LV volume: predicted vs reference",
            "reference volume (ml)",
            "predicted volume (ml)",
        )?;
    }
    if let Some(ba) = &report.volume_bland_altman {
        agreement_plot(
            &out_dir.join("volume_bland_altman.svg"),
            &pred_vols,
            &gt_vols,
            ba,
            "LV volume agreement",
        )?;
    }
    let emd_groups: Vec<(String, Vec<f64>)> = report
        .subjects
        .iter()
        .filter(|s| !s.emd_per_slice.is_empty())
        .map(|s| (s.subject_id.clone(), s.emd_per_slice.clone()))
        .collect();
    if !emd_groups.is_empty() {
        boxplot(
            &out_dir.join("emd_boxplot.svg"),
            &emd_groups,
            "point-cloud EMD per slice",
            "EMD",
        )?;
    }
    let overlay_dir = out_dir.join("overlays");
    std::fs::create_dir_all(&overlay_dir)?;
    for p in preds.iter().take(4) {
        let k = p.n_slices / 2;
        let n_classes = p.prob_slices[k].len() / (p.size * p.size);
        let ent = entropy_image(&p.prob_slices[k], n_classes, p.size)?;
        let n = p.size * p.size;
        slice_overlay_png(
            &overlay_dir.join(format!("{}_slice{}.png", p.subject_id, k)),
            &p.image_slices[k],
            &p.gt_labels[k * n..(k + 1) * n],
            &p.pred_labels[k * n..(k + 1) * n],
            &ent,
            p.size,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[7.0], 0.4), 7.0);
    }

    #[test]
    fn box_stats_flags_outliers() {
        let mut vals: Vec<f64> = (1..=9).map(f64::from).collect();
        vals.push(100.0);
        let (b, outs) = box_stats(&vals).unwrap();
        assert_eq!(outs, vec![100.0]);
        assert!(b.whisker_high <= 9.0 + 1e-12);
        assert!(b.q1 < b.median && b.median < b.q3);
        assert!(box_stats(&[]).is_none());
        assert!(box_stats(&[f64::NAN]).is_none());
    }

    #[test]
    fn scatter_and_fit_render() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.svg");
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 1.9, 3.2, 3.9];
        let fit = crate::eval::linear_regression(&xs, &ys).unwrap();
        scatter_with_fit(&path, &xs, &ys, Some(&fit), "t", "x", "y").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert_eq!(text.matches("<circle").count(), 4);
        assert!(text.contains("r2 ="));
        assert!(text.ends_with("</svg>\n"));
    }

    #[test]
    fn agreement_plot_renders_reference_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ba.svg");
        let a = [10.0, 12.0, 9.0, 11.0];
        let b = [9.5, 12.5, 9.2, 10.4];
        let ba = crate::eval::bland_altman(&a, &b).unwrap();
        agreement_plot(&path, &a, &b, &ba, "agreement").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("stroke-dasharray"));
        assert_eq!(text.matches("<circle").count(), 4);
    }

    #[test]
    fn boxplot_renders_one_box_per_group() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("box.svg");
        let groups = vec![
            ("a".to_string(), vec![1.0, 2.0, 3.0, 2.5]),
            ("b".to_string(), vec![4.0, 5.0, 6.0]),
        ];
        boxplot(&path, &groups, "boxes", "value").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(">a<") && text.contains(">b<"));
        assert!(boxplot(&path, &[], "t", "y").is_err());
    }

    #[test]
    fn overlay_png_has_four_panels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overlay.png");
        let size = 8;
        let n = size * size;
        let image: Vec<f32> = (0..n).map(|i| i as f32 / n as f32).collect();
        let mut gt = vec![0u8; n];
        gt[9] = 1;
        gt[10] = 2;
        let mut pred = vec![0u8; n];
        pred[9] = 1;
        pred[18] = 3;
        let entropy: Vec<f32> = (0..n).map(|i| (i % 7) as f32 * 0.1).collect();
        slice_overlay_png(&path, &image, &gt, &pred, &entropy, size).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.width(), 4 * 8 + 3 * 2);
        assert_eq!(img.height(), 8);
        let bad = slice_overlay_png(&path, &image, &gt, &pred, &entropy[..n - 1], size);
        assert!(bad.is_err());
    }

    #[test]
    fn heat_ramp_endpoints() {
        assert_eq!(heat(0.0), [0, 0, 0]);
        assert_eq!(heat(1.0), [255, 255, 255]);
        let mid = heat(0.34);
        assert!(mid[0] > 200 && mid[1] < 40 && mid[2] == 0);
    }
}
