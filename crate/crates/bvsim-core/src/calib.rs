//! Rotation calibration from event streams: slice the stream by turntable
//! angle, warp each slice's events back to a reference time about the
//! rotation center, and score candidate angular velocities by the warped
//! image's variance. The variance peaks when the warp matches the true
//! rotation, because each edge's events then pile onto the same pixels.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::evs::{Event, EventStream};
use crate::geometry::Homography;
use crate::pgm;
use crate::plane::Plane;

#[derive(Clone, Debug, PartialEq)]
pub struct EventSlice {
    pub t_start_us: u64,
    pub t_end_us: u64,
    pub events: Vec<Event>,
}

impl EventSlice {
    pub fn t_mid_us(&self) -> u64 {
        self.t_start_us + (self.t_end_us - self.t_start_us) / 2
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Cuts the stream into windows each spanning `window_deg` of rotation:
/// dt = window_deg / (6 * rpm) seconds, since the table turns 6*rpm degrees
/// per second. Windows tile the stream span exactly; trailing events land
/// in the last window.
pub fn slice_by_angle(stream: &EventStream, rpm: f64, window_deg: f64) -> Result<Vec<EventSlice>> {
    if !(rpm.abs() > 0.0) || !rpm.is_finite() {
        return Err(Error::config("slicing by angle needs a nonzero rpm"));
    }
    if !(window_deg > 0.0) || !window_deg.is_finite() {
        return Err(Error::config("window_deg must be positive"));
    }
    let dt_us = window_deg / (6.0 * rpm.abs()) * 1e6;
    let span_us = stream.t_end_us.saturating_sub(stream.t_start_us) as f64;
    if span_us <= 0.0 {
        return Ok(Vec::new());
    }
    let n = (span_us / dt_us).ceil().max(1.0) as usize;
    let t0 = stream.t_start_us;
    let bound = |k: usize| -> u64 {
        if k >= n {
            stream.t_end_us
        } else {
            t0 + (k as f64 * dt_us).round() as u64
        }
    };
    let mut slices: Vec<EventSlice> = (0..n)
        .map(|k| EventSlice { t_start_us: bound(k), t_end_us: bound(k + 1), events: Vec::new() })
        .collect();
    for &e in &stream.events {
        let k = (((e.t_us - t0) as f64 / dt_us).floor() as usize).min(n - 1);
        slices[k].events.push(e);
    }
    Ok(slices)
}

/// How to build an image of warped events.
#[derive(Clone, Debug)]
pub struct WarpSetup {
    pub width: usize,
    pub height: usize,
    /// Rotation rate to compensate, rad/s; positive matches the scene's
    /// positive spin direction.
    pub omega: f64,
    /// Rotation center in the warp frame.
    pub center: (f64, f64),
    pub t_ref_us: u64,
    /// Signed accumulation adds polarity; unsigned counts every event.
    pub signed: bool,
    /// Applied to event coordinates before the rotation, e.g. the inverse
    /// scene homography to undo perspective first.
    pub pre_transform: Option<Homography>,
}

/// Image of warped events plus the bookkeeping needed to interpret it.
#[derive(Clone, Debug)]
pub struct Iwe {
    pub grid: Plane,
    pub t_ref_us: u64,
    pub omega: f64,
    pub center: (f64, f64),
    /// Events whose warped footprint fell entirely off the grid.
    pub oob: usize,
}

impl Iwe {
    /// 16-bit PGM with the value scale recorded in a sidecar file.
    pub fn write_pgm16(&self, path: &Path) -> Result<f64> {
        pgm::write_pgm16_scaled(path, &self.grid)
    }
}

/// Rotates each event about the center by -omega * (t - t_ref) and splats
/// it bilinearly. An event at t_ref is untouched.
pub fn warp_events(slice: &EventSlice, setup: &WarpSetup) -> Iwe {
    let pts = event_points(slice, setup);
    warp_points(&pts, setup, setup.omega)
}

/// (dt seconds from t_ref, x, y, weight) with the pre-transform applied.
fn event_points(slice: &EventSlice, setup: &WarpSetup) -> Vec<(f64, f64, f64, f64)> {
    slice
        .events
        .iter()
        .map(|e| {
            let dt = (e.t_us as i64 - setup.t_ref_us as i64) as f64 * 1e-6;
            let (x, y) = match &setup.pre_transform {
                Some(h) => h.apply(e.x as f64, e.y as f64),
                None => (e.x as f64, e.y as f64),
            };
            let w = if setup.signed { e.polarity as f64 } else { 1.0 };
            (dt, x, y, w)
        })
        .collect()
}

fn warp_points(pts: &[(f64, f64, f64, f64)], setup: &WarpSetup, omega: f64) -> Iwe {
    let (cx, cy) = setup.center;
    let mut grid = Plane::zeros(setup.width, setup.height);
    let mut oob = 0usize;
    for &(dt, x, y, w) in pts {
        let (s, c) = (-omega * dt).sin_cos();
        let dx = x - cx;
        let dy = y - cy;
        let wx = cx + c * dx - s * dy;
        let wy = cy + s * dx + c * dy;
        if !grid.splat_bilinear(wx, wy, w) {
            oob += 1;
        }
    }
    Iwe { grid, t_ref_us: setup.t_ref_us, omega, center: setup.center, oob }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CmaxSearch {
    pub omega_lo: f64,
    pub omega_hi: f64,
    /// Coarse grid points across [omega_lo, omega_hi].
    pub coarse_steps: usize,
    /// Golden-section bracket width at which to stop, relative to the
    /// larger of the best estimate's magnitude and 1% of the search span.
    pub rel_tol: f64,
    /// Peak-to-mean variance ratio under which the result is flagged as
    /// low confidence (flat objective).
    pub flat_ratio: f64,
}

impl CmaxSearch {
    pub fn new(omega_lo: f64, omega_hi: f64) -> Self {
        CmaxSearch { omega_lo, omega_hi, coarse_steps: 33, rel_tol: 1e-4, flat_ratio: 1.05 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CmaxResult {
    pub omega: f64,
    pub variance: f64,
    /// Peak-to-mean variance ratio over the coarse grid.
    pub confidence: f64,
    pub low_confidence: bool,
    pub evaluations: usize,
}

/// Grid-then-golden-section search for the rotation rate that maximizes
/// the variance of the warped-event image.
pub fn estimate_omega_cmax(
    slice: &EventSlice,
    setup: &WarpSetup,
    search: &CmaxSearch,
) -> Result<CmaxResult> {
    if slice.is_empty() {
        return Err(Error::InsufficientEvents { have: 0, need: 1 });
    }
    if !(search.omega_hi > search.omega_lo) {
        return Err(Error::config("cmax search interval is empty"));
    }
    if search.coarse_steps < 3 {
        return Err(Error::config("cmax needs at least 3 coarse steps"));
    }
    let pts = event_points(slice, setup);
    let mut levers: Vec<f64> = pts
        .iter()
        .map(|&(dt, x, y, _)| {
            let dx = x - setup.center.0;
            let dy = y - setup.center.1;
            (dx * dx + dy * dy).sqrt() * dt.abs()
        })
        .collect();
    levers.sort_by(f64::total_cmp);
    let lever = levers[levers.len() / 2];
    // Below this speed the median event is displaced under a pixel, so the
    // warp degenerates toward the raw histogram, whose grid alignment
    // inflates the variance regardless of any motion in the data. Such
    // points still compete for the argmax but say nothing about flatness.
    let degenerate = |omega: f64| omega.abs() * lever < 1.0;

    let mut evaluations = 0usize;
    let mut best_seen = (f64::NAN, f64::NEG_INFINITY);
    let mut objective = |omega: f64| -> f64 {
        evaluations += 1;
        let v = warp_points(&pts, setup, omega).grid.variance();
        if v > best_seen.1 {
            best_seen = (omega, v);
        }
        v
    };

    let n = search.coarse_steps;
    let step = (search.omega_hi - search.omega_lo) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    let mut flat_best = f64::NEG_INFINITY;
    let mut flat_sum = 0.0;
    let mut flat_n = 0usize;
    for i in 0..n {
        let omega = search.omega_lo + i as f64 * step;
        let v = objective(omega);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
        if !degenerate(omega) {
            flat_sum += v;
            flat_n += 1;
            if v > flat_best {
                flat_best = v;
            }
        }
    }
    let confidence = if flat_n > 0 && flat_sum > 0.0 {
        flat_best * flat_n as f64 / flat_sum
    } else {
        1.0
    };
    let low_confidence = confidence < search.flat_ratio;

    let mut a = search.omega_lo + best_i.saturating_sub(1) as f64 * step;
    let mut b = (search.omega_lo + (best_i + 1) as f64 * step).min(search.omega_hi);
    let tol = search.rel_tol
        * (search.omega_lo + best_i as f64 * step)
            .abs()
            .max(0.01 * (search.omega_hi - search.omega_lo));

    // golden-section interior points
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1);
        }
    }
    objective(0.5 * (a + b));
    // the objective is noisy at the sub-pixel scale, so the midpoint of the
    // final bracket can score below points already visited
    let (omega, variance) = best_seen;
    Ok(CmaxResult { omega, variance, confidence, low_confidence, evaluations })
}

/// Resamples an image so output pixel p takes the source value at h(p):
/// the forward map h sends corrected coordinates to source coordinates.
/// Undoing a scene homography H therefore passes H itself here.
pub fn correct_plane(h: &Homography, img: &Plane, fill: f64) -> Result<Plane> {
    h.inverse()?.warp_plane(img, img.width(), img.height(), fill)
}

/// Maps corner or feature positions through a homography.
pub fn transform_points(h: &Homography, pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pts.iter().map(|&(x, y)| h.apply(x, y)).collect()
}
