//! Perception tasks run against the simulated sensors: corner detection on
//! intensity images and on event streams, detection scoring, window-based
//! optical flow, and angular-velocity extraction from a flow field.

use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evs::EventStream;
use crate::plane::{Grid, Plane};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub t_us: Option<u64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShiTomasiParams {
    pub max_corners: usize,
    /// Keep maxima scoring at least this fraction of the strongest response.
    pub quality_level: f64,
    /// Greedy suppression radius between kept corners, px.
    pub min_distance: f64,
}

impl Default for ShiTomasiParams {
    fn default() -> Self {
        ShiTomasiParams { max_corners: 500, quality_level: 0.35, min_distance: 5.0 }
    }
}

const WINDOW_SIGMA: f64 = 1.5;
const WINDOW_RADIUS: usize = 3;
// gradient border plus window radius
const RESPONSE_INSET: usize = WINDOW_RADIUS + 1;

fn gaussian_kernel() -> [f64; 2 * WINDOW_RADIUS + 1] {
    let mut k = [0.0; 2 * WINDOW_RADIUS + 1];
    let mut sum = 0.0;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - WINDOW_RADIUS as f64;
        *w = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *w;
    }
    for w in &mut k {
        *w /= sum;
    }
    k
}

fn gaussian_blur(img: &Plane) -> Plane {
    separable_blur(img, &gaussian_kernel())
}

fn gaussian_blur_sigma(img: &Plane, sigma: f64) -> Plane {
    let r = (3.0 * sigma).ceil() as usize;
    let mut k = vec![0.0; 2 * r + 1];
    let mut sum = 0.0;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - r as f64;
        *w = (-d * d / (2.0 * sigma * sigma)).exp();
        sum += *w;
    }
    for w in &mut k {
        *w /= sum;
    }
    separable_blur(img, &k)
}

fn separable_blur(img: &Plane, k: &[f64]) -> Plane {
    let r = (k.len() / 2) as isize;
    let horiz = Plane::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for (i, w) in k.iter().enumerate() {
            acc += w * img.get_clamped(x as isize + i as isize - r, y as isize);
        }
        acc
    });
    Plane::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for (i, w) in k.iter().enumerate() {
            acc += w * horiz.get_clamped(x as isize, y as isize + i as isize - r);
        }
        acc
    })
}

/// Central-difference gradients, one-sided at the borders.
fn central_gradients(img: &Plane) -> (Plane, Plane) {
    let w = img.width();
    let h = img.height();
    let gx = Plane::from_fn(w, h, |x, y| {
        match x {
            0 => img.get(1.min(w - 1), y) - img.get(0, y),
            _ if x == w - 1 => img.get(x, y) - img.get(x - 1, y),
            _ => 0.5 * (img.get(x + 1, y) - img.get(x - 1, y)),
        }
    });
    let gy = Plane::from_fn(w, h, |x, y| {
        match y {
            0 => img.get(x, 1.min(h - 1)) - img.get(x, 0),
            _ if y == h - 1 => img.get(x, y) - img.get(x, y - 1),
            _ => 0.5 * (img.get(x, y + 1) - img.get(x, y - 1)),
        }
    });
    (gx, gy)
}

fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    0.5 * ((a + c) - ((a - c) * (a - c) + 4.0 * b * b).sqrt())
}

/// Minimum-eigenvalue corner response of the Gaussian-windowed structure
/// tensor, zeroed inside the border band where the window hangs off the
/// image.
fn corner_response(img: &Plane) -> Plane {
    let (gx, gy) = central_gradients(img);
    let xx = gaussian_blur(&Plane::from_fn(img.width(), img.height(), |x, y| {
        gx.get(x, y) * gx.get(x, y)
    }));
    let xy = gaussian_blur(&Plane::from_fn(img.width(), img.height(), |x, y| {
        gx.get(x, y) * gy.get(x, y)
    }));
    let yy = gaussian_blur(&Plane::from_fn(img.width(), img.height(), |x, y| {
        gy.get(x, y) * gy.get(x, y)
    }));
    let w = img.width();
    let h = img.height();
    Plane::from_fn(w, h, |x, y| {
        if x < RESPONSE_INSET || y < RESPONSE_INSET || x + RESPONSE_INSET >= w || y + RESPONSE_INSET >= h
        {
            0.0
        } else {
            min_eigenvalue(xx.get(x, y), xy.get(x, y), yy.get(x, y))
        }
    })
}

/// One-dimensional quadratic peak refinement, clamped to one pixel.
fn subpixel_offset(lo: f64, mid: f64, hi: f64) -> f64 {
    let denom = lo - 2.0 * mid + hi;
    if denom < 0.0 {
        (0.5 * (lo - hi) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Good-features-to-track corners: structure tensor over a Gaussian window,
/// minimum eigenvalue score, quality gate relative to the strongest
/// response, then greedy distance suppression strongest-first. Output is
/// ordered by score descending with row-major tie-breaking.
pub fn shi_tomasi(img: &Plane, params: &ShiTomasiParams) -> Vec<Corner> {
    if img.width() < 2 * RESPONSE_INSET || img.height() < 2 * RESPONSE_INSET {
        return Vec::new();
    }
    let resp = corner_response(img);
    let (_, global_max) = resp.min_max();
    if !(global_max > 1e-12) {
        return Vec::new();
    }
    let threshold = params.quality_level * global_max;

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in RESPONSE_INSET..img.height() - RESPONSE_INSET {
        for x in RESPONSE_INSET..img.width() - RESPONSE_INSET {
            let v = resp.get(x, y);
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if resp.get_clamped(x as isize + dx, y as isize + dy) > v {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                candidates.push((v, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let mut kept: Vec<Corner> = Vec::new();
    let min_d2 = params.min_distance * params.min_distance;
    for (score, x, y) in candidates {
        let cx = x as f64
            + subpixel_offset(resp.get(x - 1, y), resp.get(x, y), resp.get(x + 1, y));
        let cy = y as f64
            + subpixel_offset(resp.get(x, y - 1), resp.get(x, y), resp.get(x, y + 1));
        let crowded = kept
            .iter()
            .any(|k| (k.x - cx) * (k.x - cx) + (k.y - cy) * (k.y - cy) < min_d2);
        if !crowded {
            kept.push(Corner { x: cx, y: cy, score, t_us: None });
            if kept.len() >= params.max_corners {
                break;
            }
        }
    }
    kept
}

// Ring offsets around the probed pixel, in contiguous circular order.
const CIRCLE3: [(i32, i32); 16] = [
    (3, 0), (3, 1), (2, 2), (1, 3), (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3), (0, -3), (1, -3), (2, -2), (3, -1),
];
const CIRCLE4: [(i32, i32); 20] = [
    (4, 0), (4, 1), (3, 2), (2, 3), (1, 4), (0, 4), (-1, 4), (-2, 3), (-3, 2), (-4, 1),
    (-4, 0), (-4, -1), (-3, -2), (-2, -3), (-1, -4), (0, -4), (1, -4), (2, -3), (3, -2), (4, -1),
];

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ArcParams {
    pub min_arc3: usize,
    pub max_arc3: usize,
    pub min_arc4: usize,
    pub max_arc4: usize,
    /// Pixels from each image edge where detection is skipped.
    pub border: usize,
}

impl Default for ArcParams {
    fn default() -> Self {
        ArcParams { min_arc3: 3, max_arc3: 6, min_arc4: 4, max_arc4: 8, border: 4 }
    }
}

/// Latest-timestamp map for one polarity. Stamps are stored shifted by one
/// so that zero always reads as "never fired".
struct Sae {
    width: usize,
    t: Vec<u64>,
}

impl Sae {
    fn new(width: usize, height: usize) -> Self {
        Sae { width, t: vec![0; width * height] }
    }

    fn stamp(&mut self, x: usize, y: usize, t_us: u64) {
        self.t[y * self.width + x] = t_us + 1;
    }

    fn at(&self, x: i32, y: i32) -> u64 {
        self.t[y as usize * self.width + x as usize]
    }
}

fn ring_values<const N: usize>(sae: &Sae, x: usize, y: usize, ring: &[(i32, i32); N]) -> [u64; N] {
    let mut vals = [0u64; N];
    for (v, &(dx, dy)) in vals.iter_mut().zip(ring.iter()) {
        *v = sae.at(x as i32 + dx, y as i32 + dy);
    }
    vals
}

fn freshest_index(vals: &[u64]) -> usize {
    let mut idx = 0;
    let mut best = 0u64;
    for (i, &v) in vals.iter().enumerate() {
        if v > best {
            best = v;
            idx = i;
        }
    }
    idx
}

/// Length of the arc of freshest timestamps around the ring, grown from the
/// newest element: at each step the fresher of the two frontier neighbors
/// joins, and the arc extends whenever the joining value is no older than
/// the oldest already inside.
fn freshest_arc_len(vals: &[u64], min_arc: usize, newest_idx: usize) -> usize {
    let dim = vals.len();
    let mut cw = (newest_idx + 1) % dim;
    let mut ccw = (newest_idx + dim - 1) % dim;
    let mut cw_val = vals[cw];
    let mut ccw_val = vals[ccw];
    let mut cw_oldest = cw_val;
    let mut ccw_oldest = ccw_val;
    let mut segment_oldest = u64::MAX;

    for _ in 1..min_arc {
        if cw_val > ccw_val {
            segment_oldest = segment_oldest.min(cw_oldest);
            cw = (cw + 1) % dim;
            cw_val = vals[cw];
            cw_oldest = cw_oldest.min(cw_val);
        } else {
            segment_oldest = segment_oldest.min(ccw_oldest);
            ccw = (ccw + dim - 1) % dim;
            ccw_val = vals[ccw];
            ccw_oldest = ccw_oldest.min(ccw_val);
        }
    }

    let mut arc_len = min_arc;
    for iteration in min_arc..dim {
        if cw_val > ccw_val {
            if cw_val >= segment_oldest {
                arc_len = iteration + 1;
                segment_oldest = segment_oldest.min(cw_oldest);
            }
            cw = (cw + 1) % dim;
            cw_val = vals[cw];
            cw_oldest = cw_oldest.min(cw_val);
        } else {
            if ccw_val >= segment_oldest {
                arc_len = iteration + 1;
                segment_oldest = segment_oldest.min(ccw_oldest);
            }
            ccw = (ccw + dim - 1) % dim;
            ccw_val = vals[ccw];
            ccw_oldest = ccw_oldest.min(ccw_val);
        }
    }
    arc_len
}

fn arc_in_bounds(len: usize, dim: usize, min_arc: usize, max_arc: usize) -> bool {
    let complement = dim - len;
    (len >= min_arc && len <= max_arc) || (complement >= min_arc && complement <= max_arc)
}

fn is_corner_at(sae: &Sae, x: usize, y: usize, params: &ArcParams) -> bool {
    let v3 = ring_values(sae, x, y, &CIRCLE3);
    let len3 = freshest_arc_len(&v3, params.min_arc3, freshest_index(&v3));
    if !arc_in_bounds(len3, CIRCLE3.len(), params.min_arc3, params.max_arc3) {
        return false;
    }
    let v4 = ring_values(sae, x, y, &CIRCLE4);
    let len4 = freshest_arc_len(&v4, params.min_arc4, freshest_index(&v4));
    arc_in_bounds(len4, CIRCLE4.len(), params.min_arc4, params.max_arc4)
}

#[derive(Clone, Debug, Default)]
pub struct ArcDetections {
    pub corners: Vec<Corner>,
    /// Events discarded for being outside the stream's stated resolution.
    pub rejected: usize,
}

/// Streams events through per-polarity latest-timestamp maps and flags an
/// event as a corner when the freshest arc on both rings around it stays
/// inside the configured length bounds (or its complement does).
pub fn arc_corner_detect(stream: &EventStream, params: &ArcParams) -> ArcDetections {
    let w = stream.width;
    let h = stream.height;
    let mut sae_pos = Sae::new(w, h);
    let mut sae_neg = Sae::new(w, h);
    let mut out = ArcDetections::default();
    if w <= 2 * params.border || h <= 2 * params.border {
        out.rejected = stream.len();
        return out;
    }
    for e in &stream.events {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= w || y >= h {
            out.rejected += 1;
            continue;
        }
        let sae = if e.polarity > 0 { &mut sae_pos } else { &mut sae_neg };
        sae.stamp(x, y, e.t_us);
        if x < params.border || x >= w - params.border || y < params.border || y >= h - params.border
        {
            continue;
        }
        if is_corner_at(sae, x, y, params) {
            out.corners.push(Corner {
                x: x as f64,
                y: y as f64,
                score: e.t_us as f64,
                t_us: Some(e.t_us),
            });
        }
    }
    out
}

/// Greedy thinning: corners are visited newest first when timestamped
/// (strongest first otherwise) and kept only when no already-kept corner
/// lies within the Chebyshev radius.
pub fn dedup_corners(corners: &[Corner], radius: f64) -> Vec<Corner> {
    let mut order: Vec<&Corner> = corners.iter().collect();
    let timestamped = !corners.is_empty() && corners.iter().all(|c| c.t_us.is_some());
    order.sort_by(|a, b| {
        let primary = if timestamped {
            b.t_us.cmp(&a.t_us)
        } else {
            std::cmp::Ordering::Equal
        };
        primary
            .then(b.score.total_cmp(&a.score))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    let mut kept: Vec<Corner> = Vec::new();
    for c in order {
        let crowded = kept
            .iter()
            .any(|k| (k.x - c.x).abs().max((k.y - c.y).abs()) <= radius);
        if !crowded {
            kept.push(*c);
        }
    }
    kept
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub n_matched: usize,
    pub n_detected: usize,
    pub n_gt: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when there were no detections, making precision a convention
    /// rather than a ratio.
    pub precision_defined: bool,
}

/// One-to-one greedy nearest-neighbor matching within `radius`, closest
/// pairs first, ties broken toward the stronger detection.
pub fn match_corners(detected: &[Corner], gt: &[(f64, f64)], radius: f64) -> MatchResult {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, &(gx, gy)) in gt.iter().enumerate() {
            let dist = ((d.x - gx).powi(2) + (d.y - gy).powi(2)).sqrt();
            if dist <= radius {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(detected[b.1].score.total_cmp(&detected[a.1].score))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut det_used = vec![false; detected.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut n_matched = 0;
    for (_, i, j) in pairs {
        if !det_used[i] && !gt_used[j] {
            det_used[i] = true;
            gt_used[j] = true;
            n_matched += 1;
        }
    }
    let n_detected = detected.len();
    let n_gt = gt.len();
    let precision_defined = n_detected > 0;
    let precision = if precision_defined { n_matched as f64 / n_detected as f64 } else { 0.0 };
    let recall = if n_gt > 0 { n_matched as f64 / n_gt as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MatchResult { n_matched, n_detected, n_gt, precision, recall, f1, precision_defined }
}

#[derive(Clone, Debug)]
pub struct FlowField {
    pub vx: Plane,
    pub vy: Plane,
    pub valid: Grid<bool>,
}

impl FlowField {
    pub fn invalid(width: usize, height: usize) -> Self {
        FlowField {
            vx: Plane::zeros(width, height),
            vy: Plane::zeros(width, height),
            valid: Grid::filled(width, height, false),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        if self.valid.get(x, y) {
            Some((self.vx.get(x, y), self.vy.get(x, y)))
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|&&v| v).count()
    }

    /// Binary layout: magic "BVFL", width, height (u32 LE), a row-major
    /// validity bitmap (8 pixels per byte, LSB first), then the vx and vy
    /// planes as f64 LE.
    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        w.write_all(b"BVFL")?;
        w.write_all(&(self.vx.width() as u32).to_le_bytes())?;
        w.write_all(&(self.vx.height() as u32).to_le_bytes())?;
        let mut byte = 0u8;
        for (i, &v) in self.valid.data().iter().enumerate() {
            if v {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                w.write_all(&[byte])?;
                byte = 0;
            }
        }
        if self.valid.data().len() % 8 != 0 {
            w.write_all(&[byte])?;
        }
        for &v in self.vx.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in self.vy.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"BVFL" {
            return Err(Error::parse("not a flow file"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let width = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let height = u32::from_le_bytes(u32buf) as usize;
        let n = width
            .checked_mul(height)
            .filter(|&n| n > 0 && n <= (1 << 28))
            .ok_or_else(|| Error::parse("bad flow dimensions"))?;
        let mut bits = vec![0u8; (n + 7) / 8];
        r.read_exact(&mut bits)?;
        let valid = Grid::from_fn(width, height, |x, y| {
            let i = y * width + x;
            bits[i / 8] & (1 << (i % 8)) != 0
        });
        let mut read_plane = || -> Result<Plane> {
            let mut data = vec![0.0f64; n];
            let mut buf = [0u8; 8];
            for v in &mut data {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            Ok(Plane::from_vec(width, height, data))
        };
        let vx = read_plane()?;
        let vy = read_plane()?;
        Ok(FlowField { vx, vy, valid })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FlowParams {
    /// Half-width of the square least-squares neighborhood.
    pub half_window: usize,
    /// Validity gate: structure-tensor min eigenvalue relative to the
    /// image-wide maximum.
    pub min_eig_frac: f64,
    /// Absolute eigenvalue floor; rejects everything on a featureless
    /// input where the relative gate would pass noise.
    pub min_eig_abs: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { half_window: 2, min_eig_frac: 0.05, min_eig_abs: 1e-12 }
    }
}

/// Windowed least squares on the brightness-constancy residual
/// gx*vx + gy*vy + didt = 0. Pixels whose neighborhood structure tensor is
/// near-singular (aperture problem) are masked invalid.
pub fn ls_flow(gx: &Plane, gy: &Plane, didt: &Plane, params: &FlowParams) -> FlowField {
    let w = gx.width();
    let h = gx.height();
    let r = params.half_window as isize;
    let mut a11 = Plane::zeros(w, h);
    let mut a12 = Plane::zeros(w, h);
    let mut a22 = Plane::zeros(w, h);
    let mut b1 = Plane::zeros(w, h);
    let mut b2 = Plane::zeros(w, h);
    let mut eig = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let (xx, yy) = (xx as usize, yy as usize);
                    let px = gx.get(xx, yy);
                    let py = gy.get(xx, yy);
                    let pt = didt.get(xx, yy);
                    sxx += px * px;
                    sxy += px * py;
                    syy += py * py;
                    sxt += px * pt;
                    syt += py * pt;
                }
            }
            a11.set(x, y, sxx);
            a12.set(x, y, sxy);
            a22.set(x, y, syy);
            b1.set(x, y, -sxt);
            b2.set(x, y, -syt);
            eig.set(x, y, min_eigenvalue(sxx, sxy, syy));
        }
    }
    let (_, eig_max) = eig.min_max();
    let gate = (params.min_eig_frac * eig_max).max(params.min_eig_abs);
    let mut field = FlowField::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let lm = eig.get(x, y);
            if lm < gate {
                continue;
            }
            let (sxx, sxy, syy) = (a11.get(x, y), a12.get(x, y), a22.get(x, y));
            let det = sxx * syy - sxy * sxy;
            if det.abs() < 1e-300 {
                continue;
            }
            let (r1, r2) = (b1.get(x, y), b2.get(x, y));
            field.vx.set(x, y, (syy * r1 - sxy * r2) / det);
            field.vy.set(x, y, (sxx * r2 - sxy * r1) / det);
            field.valid.set(x, y, true);
        }
    }
    field
}

/// Componentwise median across per-pair fields; a pixel stays valid when
/// at least half of the pairs measured it.
pub fn median_flow(fields: &[FlowField]) -> FlowField {
    let first = &fields[0];
    let w = first.vx.width();
    let h = first.vx.height();
    let need = (fields.len() + 1) / 2;
    let mut out = FlowField::invalid(w, h);
    let mut xs: Vec<f64> = Vec::with_capacity(fields.len());
    let mut ys: Vec<f64> = Vec::with_capacity(fields.len());
    for y in 0..h {
        for x in 0..w {
            xs.clear();
            ys.clear();
            for f in fields {
                if let Some((vx, vy)) = f.get(x, y) {
                    xs.push(vx);
                    ys.push(vy);
                }
            }
            if xs.len() >= need {
                out.vx.set(x, y, median_of(&mut xs));
                out.vy.set(x, y, median_of(&mut ys));
                out.valid.set(x, y, true);
            }
        }
    }
    out
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Smoothing of the per-frame gradient and rate planes before the
/// least-squares solve; spreads the quantizer residual, which is too
/// correlated frame to frame for the temporal median to remove.
const AOP_SMOOTH_SIGMA: f64 = 1.5;

/// Flow from a window of difference-sensor frames. Two differencing
/// schemes run side by side: the one-frame temporal difference paired
/// with midpoint gradients overshoots the speed by (k delta)^2/12 at
/// spatial frequency k and per-frame displacement delta, and the
/// centered two-frame difference paired with that frame's own gradients
/// undershoots by (k delta)^2/6. The 2:1 blend cancels the quadratic
/// term, which otherwise costs several percent near two pixels per
/// frame. Per-pair fields are median-combined before blending.
pub fn flow_from_aop(
    seq: &crate::aop::AopSequence,
    frames: std::ops::Range<usize>,
    params: &FlowParams,
) -> Result<FlowField> {
    if frames.end > seq.frames.len() || frames.end - frames.start < 2 {
        return Err(Error::config("flow needs at least two frames in range"));
    }
    let step = seq.config.step();
    let fps = seq.config.fps;
    let (w, h) = (seq.width, seq.height);
    let grads: Vec<_> = seq.frames[frames.clone()]
        .iter()
        .map(|f| crate::aop::sd_to_gradient(f, &seq.config))
        .collect::<Result<_>>()?;
    let rates: Vec<Plane> = seq.frames[frames.clone()]
        .iter()
        .map(|f| {
            gaussian_blur_sigma(
                &Plane::from_fn(w, h, |x, y| f.td.get(x, y) as f64 * step * fps),
                AOP_SMOOTH_SIGMA,
            )
        })
        .collect();
    let gxs: Vec<Plane> =
        grads.iter().map(|g| gaussian_blur_sigma(&g.gx, AOP_SMOOTH_SIGMA)).collect();
    let gys: Vec<Plane> =
        grads.iter().map(|g| gaussian_blur_sigma(&g.gy, AOP_SMOOTH_SIGMA)).collect();
    let n = grads.len();
    let mut mid_fields = Vec::new();
    for k in 1..n {
        let gx = Plane::from_fn(w, h, |x, y| 0.5 * (gxs[k - 1].get(x, y) + gxs[k].get(x, y)));
        let gy = Plane::from_fn(w, h, |x, y| 0.5 * (gys[k - 1].get(x, y) + gys[k].get(x, y)));
        mid_fields.push(ls_flow(&gx, &gy, &rates[k], params));
    }
    let mid = median_flow(&mid_fields);
    if n < 3 {
        return Ok(mid);
    }
    let mut cen_fields = Vec::new();
    for k in 1..n - 1 {
        let didt = Plane::from_fn(w, h, |x, y| 0.5 * (rates[k].get(x, y) + rates[k + 1].get(x, y)));
        cen_fields.push(ls_flow(&gxs[k], &gys[k], &didt, params));
    }
    let cen = median_flow(&cen_fields);
    let mut out = FlowField::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            if let (Some((mx, my)), Some((cx, cy))) = (mid.get(x, y), cen.get(x, y)) {
                out.vx.set(x, y, (2.0 * mx + cx) / 3.0);
                out.vy.set(x, y, (2.0 * my + cy) / 3.0);
                out.valid.set(x, y, true);
            }
        }
    }
    Ok(out)
}

/// Count images are near-impulsive (an edge crossing lights a one or two
/// pixel wide trail), and differencing that sharp a signal on the pixel
/// grid inflates the least-squares speed by tens of percent. Blurring to
/// this scale restores the band limit the derivative stencils assume.
const COUNT_SMOOTH_SIGMA: f64 = 2.5;

/// Flow from an event stream alone: events are binned into fixed-angle
/// windows, consecutive window count images play the role of frames, and
/// the same least-squares core runs on their difference. Gradients come
/// from the average of the two count images.
pub fn flow_from_events(
    stream: &EventStream,
    rpm_nominal: f64,
    window_deg: f64,
    params: &FlowParams,
) -> Result<FlowField> {
    if stream.events.is_empty() {
        return Ok(FlowField::invalid(stream.width, stream.height));
    }
    let slices = crate::calib::slice_by_angle(stream, rpm_nominal, window_deg)?;
    if slices.len() < 2 {
        return Err(Error::InsufficientEvents { have: stream.len(), need: stream.len() + 1 });
    }
    let dt_w = window_deg / (6.0 * rpm_nominal.abs());
    let images: Vec<Plane> = slices
        .iter()
        .map(|s| {
            let mut img = Plane::zeros(stream.width, stream.height);
            for e in &s.events {
                let i = (e.x as usize, e.y as usize);
                img.set(i.0, i.1, img.get(i.0, i.1) + 1.0);
            }
            gaussian_blur_sigma(&img, COUNT_SMOOTH_SIGMA)
        })
        .collect();
    let mut fields = Vec::new();
    for pair in images.windows(2) {
        let mean = Plane::from_fn(stream.width, stream.height, |x, y| {
            0.5 * (pair[0].get(x, y) + pair[1].get(x, y))
        });
        let (gx, gy) = central_gradients(&mean);
        let didt = Plane::from_fn(stream.width, stream.height, |x, y| {
            (pair[1].get(x, y) - pair[0].get(x, y)) / dt_w
        });
        fields.push(ls_flow(&gx, &gy, &didt, params));
    }
    Ok(median_flow(&fields))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AnnulusParams {
    pub r_in: f64,
    pub r_out: f64,
    pub min_support: usize,
}

impl AnnulusParams {
    /// The 40-50% band of a pattern radius, where tangential speed is well
    /// above the noise floor but perspective distortion is still mild.
    pub fn for_radius(pattern_radius: f64) -> Self {
        AnnulusParams { r_in: 0.40 * pattern_radius, r_out: 0.50 * pattern_radius, min_support: 50 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AngularSpeedEstimate {
    pub omega_hat: f64,
    pub n_valid: usize,
    pub abs_error: Option<f64>,
    /// Relative error vs ground truth; None when the truth is zero.
    pub rel_error: Option<f64>,
}

/// Median over annulus pixels of the tangential flow component divided by
/// radius. The median tolerates a sizable fraction of corrupt pixels.
pub fn angular_speed_from_flow(
    flow: &FlowField,
    center: (f64, f64),
    params: &AnnulusParams,
    omega_gt: Option<f64>,
) -> Result<AngularSpeedEstimate> {
    let mut samples = Vec::new();
    for y in 0..flow.vx.height() {
        for x in 0..flow.vx.width() {
            let rx = x as f64 - center.0;
            let ry = y as f64 - center.1;
            let r = (rx * rx + ry * ry).sqrt();
            if r < params.r_in || r > params.r_out {
                continue;
            }
            if let Some((vx, vy)) = flow.get(x, y) {
                samples.push((vy * rx - vx * ry) / (r * r));
            }
        }
    }
    if samples.len() < params.min_support {
        return Err(Error::InsufficientSupport(format!(
            "{} valid annulus pixels, need {}",
            samples.len(),
            params.min_support
        )));
    }
    let n_valid = samples.len();
    let omega_hat = median_of(&mut samples);
    let abs_error = omega_gt.map(|g| (omega_hat - g).abs());
    let rel_error = omega_gt
        .filter(|g| g.abs() > 0.0)
        .map(|g| (omega_hat - g).abs() / g.abs());
    Ok(AngularSpeedEstimate { omega_hat, n_valid, abs_error, rel_error })
}

/// Copy of the image with each corner stamped as a 3x3 dot at the image
/// maximum, for quick visual inspection.
pub fn corner_overlay(img: &Plane, corners: &[Corner]) -> Plane {
    let (_, hi) = img.min_max();
    let mark = if hi > 0.0 { hi } else { 1.0 };
    let mut out = img.clone();
    for c in corners {
        let cx = c.x.round() as isize;
        let cy = c.y.round() as isize;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < out.width() && (y as usize) < out.height() {
                    out.set(x as usize, y as usize, mark);
                }
            }
        }
    }
    out
}
