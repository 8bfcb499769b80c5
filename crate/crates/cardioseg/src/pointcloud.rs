//! Surface point clouds from segmentation masks, and exact set distances.
//!
//! A ground-truth cloud for one short-axis slice is built by tracing the
//! foreground iso-contour (marching squares with sub-pixel interpolation),
//! resampling to a fixed budget with farthest point sampling, and lifting
//! into normalized 3-D coordinates where z encodes the slice position.
//!
//! The earth mover's distance between equal-size clouds is solved exactly
//! with an O(n^3) assignment solver; a factorial-time brute-force solver is
//! kept as an independent cross-check for small n.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Coordinate convention carried by a [`PointCloud`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// x = col/(W-1), y = row/(H-1), z = slice/(n_slices-1); all in [0, 1].
    CropNormalized,
}

/// A set of 3-D points with a declared coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points, frame: Frame::CropNormalized }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Optimal one-to-one correspondence between two equal-size clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `perm[i]` is the index in the second cloud matched to point `i`.
    pub perm: Vec<usize>,
    /// Total matched Euclidean distance.
    pub cost: f64,
}

fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn check_finite(cloud: &PointCloud, name: &str) -> Result<()> {
    for p in &cloud.points {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite(format!("point cloud `{name}`")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Contour extraction
// ---------------------------------------------------------------------------

/// Edge of the pixel-center lattice, identified in padded-grid coordinates so
/// each iso-crossing has exactly one id shared by the two adjacent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeId {
    /// Between pixel centers (r, c) and (r, c+1); indices shifted by +1.
    H(usize, usize),
    /// Between pixel centers (r, c) and (r+1, c); indices shifted by +1.
    V(usize, usize),
}

/// Traces the iso-contour of `mask` (values > 0 are foreground) at level
/// `iso` using marching squares on the pixel-center lattice. Pixels outside
/// the image count as background, so shapes touching the border still close.
///
/// Returns a list of closed loops; each loop is ordered along the contour
/// (the closing point is not repeated). Points are `[x, y]` in pixel units
/// where pixel (row r, col c) has center (x=c, y=r); crossings sit sub-pixel
/// via linear interpolation, which for a binary mask is the edge midpoint.
pub fn mask_to_contour(mask: &[u8], h: usize, w: usize, iso: f64) -> Result<Vec<Vec<[f64; 2]>>> {
    if mask.len() != h * w {
        return Err(CoreError::Shape(format!(
            "mask length {} != {h}x{w}",
            mask.len()
        )));
    }
    if !(0.0..1.0).contains(&iso) {
        return Err(CoreError::InvalidArg(format!("iso level {iso} outside (0, 1)")));
    }
    if mask.iter().all(|&v| v == 0) {
        return Err(CoreError::EmptyMask("mask has no foreground".into()));
    }

    // Padded value lookup: out-of-bounds pixels are background (0).
    let val = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
            0.0
        } else {
            f64::from(mask[r as usize * w + c as usize] > 0)
        }
    };

    // Directed segments, one per cell crossing: from-edge -> to-edge.
    let mut next: HashMap<EdgeId, EdgeId> = HashMap::new();
    let mut pts: HashMap<EdgeId, [f64; 2]> = HashMap::new();

    let interp = |v0: f64, v1: f64| (iso - v0) / (v1 - v0);

    for r in -1..h as i64 {
        for c in -1..w as i64 {
            let v_tl = val(r, c);
            let v_tr = val(r, c + 1);
            let v_br = val(r + 1, c + 1);
            let v_bl = val(r + 1, c);
            let idx = (usize::from(v_tl >= iso) << 3)
                | (usize::from(v_tr >= iso) << 2)
                | (usize::from(v_br >= iso) << 1)
                | usize::from(v_bl >= iso);
            if idx == 0 || idx == 15 {
                continue;
            }

            // Edge ids in padded coordinates (+1 shift keeps indices unsigned).
            let (ru, cu) = ((r + 1) as usize, (c + 1) as usize);
            let top = EdgeId::H(ru, cu);
            let bottom = EdgeId::H(ru + 1, cu);
            let left = EdgeId::V(ru, cu);
            let right = EdgeId::V(ru, cu + 1);

            let rf = r as f64;
            let cf = c as f64;
            let p_top = [cf + interp(v_tl, v_tr), rf];
            let p_bottom = [cf + interp(v_bl, v_br), rf + 1.0];
            let p_left = [cf, rf + interp(v_tl, v_bl)];
            let p_right = [cf + 1.0, rf + interp(v_tr, v_br)];

            // Segments oriented so the foreground side is consistent across
            // neighbouring cells; saddles are disambiguated by the cell mean.
            let mut segs: Vec<(EdgeId, [f64; 2], EdgeId, [f64; 2])> = Vec::with_capacity(2);
            let mut push = |a: EdgeId, pa: [f64; 2], b: EdgeId, pb: [f64; 2]| {
                segs.push((a, pa, b, pb));
            };
            match idx {
                1 => push(left, p_left, bottom, p_bottom),
                2 => push(bottom, p_bottom, right, p_right),
                3 => push(left, p_left, right, p_right),
                4 => push(right, p_right, top, p_top),
                6 => push(bottom, p_bottom, top, p_top),
                7 => push(left, p_left, top, p_top),
                8 => push(top, p_top, left, p_left),
                9 => push(top, p_top, bottom, p_bottom),
                11 => push(top, p_top, right, p_right),
                12 => push(right, p_right, left, p_left),
                13 => push(right, p_right, bottom, p_bottom),
                14 => push(bottom, p_bottom, left, p_left),
                5 => {
                    // tr + bl foreground.
                    if (v_tl + v_tr + v_br + v_bl) / 4.0 >= iso {
                        push(left, p_left, top, p_top);
                        push(right, p_right, bottom, p_bottom);
                    } else {
                        push(right, p_right, top, p_top);
                        push(left, p_left, bottom, p_bottom);
                    }
                }
                10 => {
                    // tl + br foreground.
                    if (v_tl + v_tr + v_br + v_bl) / 4.0 >= iso {
                        push(top, p_top, right, p_right);
                        push(bottom, p_bottom, left, p_left);
                    } else {
                        push(top, p_top, left, p_left);
                        push(bottom, p_bottom, right, p_right);
                    }
                }
                _ => unreachable!("cases 0 and 15 are skipped"),
            }
            for (a, pa, b, pb) in segs {
                next.insert(a, b);
                pts.insert(a, pa);
                pts.insert(b, pb);
            }
        }
    }

    // Chain directed segments into closed loops.
    let mut loops = Vec::new();
    let mut starts: Vec<EdgeId> = next.keys().copied().collect();
    // Deterministic traversal order regardless of hash-map iteration.
    starts.sort_by_key(|e| match *e {
        EdgeId::H(r, c) => (r, c, 0u8),
        EdgeId::V(r, c) => (r, c, 1u8),
    });
    let mut visited: HashMap<EdgeId, bool> = HashMap::new();
    for start in starts {
        if visited.get(&start).copied().unwrap_or(false) {
            continue;
        }
        let mut loop_pts = Vec::new();
        let mut cur = start;
        loop {
            visited.insert(cur, true);
            loop_pts.push(pts[&cur]);
            cur = *next.get(&cur).ok_or_else(|| {
                CoreError::InvalidArg("open contour chain; inconsistent segment table".into())
            })?;
            if cur == start {
                break;
            }
        }
        loops.push(loop_pts);
    }
    Ok(loops)
}

/// Resamples a closed polyline at `m` points, uniformly spaced in arc
/// length, starting at the first vertex.
fn resample_cyclic(pts: &[[f64; 2]], m: usize) -> Vec<[f64; 2]> {
    let n = pts.len();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let seg_len: Vec<f64> = (0..n)
        .map(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .collect();
    let total: f64 = seg_len.iter().sum();
    if total <= f64::EPSILON {
        return (0..m).map(|i| pts[i % n]).collect();
    }
    let mut out = Vec::with_capacity(m);
    let mut seg = 0usize;
    let mut seg_start = 0.0f64;
    for k in 0..m {
        let s = total * k as f64 / m as f64;
        while seg + 1 < n && s >= seg_start + seg_len[seg] {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let t = if seg_len[seg] > 0.0 { (s - seg_start) / seg_len[seg] } else { 0.0 };
        let a = pts[seg];
        let b = pts[(seg + 1) % n];
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

/// Greedy farthest point sampling. The first selected point is index 0 and
/// distance ties are broken toward the lowest index, so the output is fully
/// deterministic.
///
/// Returns the indices of the `k` selected points in selection order.
pub fn farthest_point_sample(points: &[[f64; 3]], k: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(CoreError::InvalidArg(format!(
            "sample size {k} outside 1..={n}"
        )));
    }
    let mut selected = Vec::with_capacity(k);
    selected.push(0usize);
    // Squared distances preserve the ordering used for selection.
    let d2 = |a: [f64; 3], b: [f64; 3]| {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };
    let mut best: Vec<f64> = points.iter().map(|&p| d2(p, points[0])).collect();
    for _ in 1..k {
        let mut arg = 0usize;
        let mut max = f64::NEG_INFINITY;
        for (i, &d) in best.iter().enumerate() {
            if d > max {
                max = d;
                arg = i;
            }
        }
        selected.push(arg);
        for (i, b) in best.iter_mut().enumerate() {
            let d = d2(points[i], points[arg]);
            if d < *b {
                *b = d;
            }
        }
    }
    Ok(selected)
}

/// Builds the ground-truth surface cloud for one slice: trace the foreground
/// contour, resample up by cyclic arc-length interpolation if it has fewer
/// than `n_points` vertices, pick exactly `n_points` by farthest point
/// sampling, and normalize into the unit cube with z = slice position.
pub fn make_gt_pointcloud(
    labels: &[u8],
    h: usize,
    w: usize,
    slice_index: usize,
    n_slices: usize,
    n_points: usize,
) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(CoreError::InvalidArg("n_points must be positive".into()));
    }
    if n_slices == 0 || slice_index >= n_slices {
        return Err(CoreError::InvalidArg(format!(
            "slice {slice_index} outside volume of {n_slices} slices"
        )));
    }
    if h < 2 || w < 2 {
        return Err(CoreError::Shape("slice must be at least 2x2".into()));
    }
    let loops = mask_to_contour(labels, h, w, 0.5)?;
    let total: usize = loops.iter().map(Vec::len).sum();

    let flat: Vec<[f64; 2]> = if total < n_points {
        // Distribute the budget across loops proportionally to perimeter,
        // largest-remainder rounding, at least one point per loop.
        let perims: Vec<f64> = loops
            .iter()
            .map(|l| {
                (0..l.len())
                    .map(|i| {
                        let a = l[i];
                        let b = l[(i + 1) % l.len()];
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .sum()
            })
            .collect();
        let ptotal: f64 = perims.iter().sum();
        let mut counts: Vec<usize> = perims
            .iter()
            .map(|&p| {
                if ptotal > 0.0 {
                    ((n_points as f64 * p / ptotal).floor() as usize).max(1)
                } else {
                    1
                }
            })
            .collect();
        let mut sum: usize = counts.iter().sum();
        let largest = perims
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        while sum < n_points {
            counts[largest] += 1;
            sum += 1;
        }
        while sum > n_points {
            if counts[largest] > 1 {
                counts[largest] -= 1;
                sum -= 1;
            } else {
                break;
            }
        }
        loops
            .iter()
            .zip(&counts)
            .flat_map(|(l, &m)| resample_cyclic(l, m))
            .collect()
    } else {
        loops.into_iter().flatten().collect()
    };

    let z = if n_slices > 1 {
        slice_index as f64 / (n_slices - 1) as f64
    } else {
        0.0
    };
    let pts3: Vec<[f64; 3]> = flat.iter().map(|p| [p[0], p[1], z]).collect();
    let idx = if pts3.len() > n_points {
        farthest_point_sample(&pts3, n_points)?
    } else {
        (0..pts3.len()).collect()
    };
    // Border-touching shapes cross half a pixel outside the lattice; clamp
    // so the declared [0,1] frame holds.
    let points = idx
        .into_iter()
        .map(|i| {
            let p = pts3[i];
            [
                (p[0] / (w - 1) as f64).clamp(0.0, 1.0),
                (p[1] / (h - 1) as f64).clamp(0.0, 1.0),
                p[2],
            ]
        })
        .collect();
    Ok(PointCloud::new(points))
}

// ---------------------------------------------------------------------------
// Exact earth mover's distance
// ---------------------------------------------------------------------------

/// Solves the square assignment problem exactly in O(n^3) time with the
/// shortest augmenting path method on dual potentials.
///
/// `cost(i, j)` must be finite; returns (row -> column permutation, total).
fn solve_assignment(n: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<usize>, f64) {
    const NONE: usize = usize::MAX;
    // Column n is the virtual start of each augmenting search.
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n + 1];
    let mut row_at = vec![NONE; n + 1];
    let mut way = vec![n; n];

    for i in 0..n {
        row_at[n] = i;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_at[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = NONE;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_at[j]] += delta;
                    v[j] -= delta;
                } else if j < n {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_at[j0] == NONE {
                break;
            }
        }
        while j0 != n {
            let j1 = way[j0];
            row_at[j0] = row_at[j1];
            j0 = j1;
        }
    }

    let mut perm = vec![0usize; n];
    for j in 0..n {
        perm[row_at[j]] = j;
    }
    let total = (0..n).map(|i| cost(i, perm[i])).sum();
    (perm, total)
}

fn check_pair(a: &PointCloud, b: &PointCloud) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::InvalidArg("point clouds must be non-empty".into()));
    }
    if a.len() != b.len() {
        return Err(CoreError::Shape(format!(
            "cloud sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;
    Ok(a.len())
}

/// Exact earth mover's distance between equal-size clouds: the minimum, over
/// one-to-one correspondences, of the summed Euclidean distances.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<Matching> {
    let n = check_pair(a, b)?;
    // Dense distance matrix: the solver visits entries O(n) times each.
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = euclid(a.points[i], b.points[j]);
        }
    }
    let (perm, cost) = solve_assignment(n, |i, j| d[i * n + j]);
    Ok(Matching { perm, cost })
}

/// Brute-force earth mover's distance over all n! permutations.
///
/// Independent cross-check for [`emd`]; refuses n > 8.
pub fn emd_bruteforce(a: &PointCloud, b: &PointCloud) -> Result<Matching> {
    let n = check_pair(a, b)?;
    if n > 8 {
        return Err(CoreError::InvalidArg(format!(
            "brute force limited to n <= 8, got {n}"
        )));
    }
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = euclid(a.points[i], b.points[j]);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best = f64::INFINITY;
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let eval = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| d[i * n + j]).sum() };
    let mut cur = eval(&perm);
    if cur < best {
        best = cur;
        best_perm.copy_from_slice(&perm);
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            cur = eval(&perm);
            if cur < best {
                best = cur;
                best_perm.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(Matching { perm: best_perm, cost: best })
}

/// Gradient of the earth mover's distance with respect to the first cloud's
/// coordinates, holding the optimal matching fixed: for matched pair (x, y)
/// the gradient is (x - y)/||x - y||, and zero for coincident pairs.
pub fn emd_gradient(a: &PointCloud, b: &PointCloud) -> Result<Vec<[f64; 3]>> {
    const COINCIDENT: f64 = 1e-12;
    let m = emd(a, b)?;
    let grads = a
        .points
        .iter()
        .zip(&m.perm)
        .map(|(&x, &j)| {
            let y = b.points[j];
            let d = euclid(x, y);
            if d <= COINCIDENT {
                [0.0; 3]
            } else {
                [(x[0] - y[0]) / d, (x[1] - y[1]) / d, (x[2] - y[2]) / d]
            }
        })
        .collect();
    Ok(grads)
}

/// Chamfer distance: sum of the two directed mean nearest-neighbour
/// distances. Clouds may differ in size but must be non-empty.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::InvalidArg("point clouds must be non-empty".into()));
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;
    let directed = |from: &PointCloud, to: &PointCloud| -> f64 {
        let s: f64 = from
            .points
            .iter()
            .map(|&p| {
                to.points
                    .iter()
                    .map(|&q| euclid(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        s / from.len() as f64
    };
    Ok(directed(a, b) + directed(b, a))
}

// ---------------------------------------------------------------------------
// Text serialization: one `x y z` triple per line, 9 significant digits.
// ---------------------------------------------------------------------------

/// Renders a cloud in the interchange text format.
pub fn to_xyz_text(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 48);
    for p in &cloud.points {
        s.push_str(&format!("{:.8e} {:.8e} {:.8e}\n", p[0], p[1], p[2]));
    }
    s
}

/// Parses the interchange text format produced by [`to_xyz_text`].
pub fn from_xyz_text(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut p = [0.0f64; 3];
        for v in &mut p {
            let tok = it.next().ok_or_else(|| {
                CoreError::InvalidArg(format!("line {}: expected 3 coordinates", lineno + 1))
            })?;
            *v = tok.parse::<f64>().map_err(|e| {
                CoreError::InvalidArg(format!("line {}: {e}", lineno + 1))
            })?;
        }
        if it.next().is_some() {
            return Err(CoreError::InvalidArg(format!(
                "line {}: more than 3 coordinates",
                lineno + 1
            )));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn write_xyz(cloud: &PointCloud, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_xyz_text(cloud))?;
    Ok(())
}

pub fn read_xyz(path: &std::path::Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    from_xyz_text(&text)
}
