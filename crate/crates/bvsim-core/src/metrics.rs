//! Image sharpness and edge-quality measures used to compare sensor
//! configurations across a sweep. All of them operate on a single plane;
//! cross-run normalization lives at the end of the module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThicknessParams {
    /// Angular sampling step along the measurement circle, degrees.
    pub step_deg: f64,
    /// Fraction of the peak at which the edge is considered to end.
    pub floor_frac: f64,
    /// Peak must exceed this multiple of the profile median, otherwise
    /// there is no edge to measure.
    pub min_peak_ratio: f64,
}

impl Default for ThicknessParams {
    fn default() -> Self {
        ThicknessParams { step_deg: 0.25, floor_frac: 0.05, min_peak_ratio: 3.0 }
    }
}

/// Width of the brightest edge crossing a circle of `radius_px` around
/// `center`, in pixels of arc length.
///
/// The image is sampled bilinearly along the circle, the walk descends
/// from the profile peak in both angular directions until the value drops
/// below `floor_frac` of the peak, and each crossing is refined by linear
/// interpolation between samples. A profile whose peak does not clear the
/// median by `min_peak_ratio` has no measurable edge.
pub fn edge_thickness(
    img: &Plane,
    center: (f64, f64),
    radius_px: f64,
    params: &ThicknessParams,
) -> Result<f64> {
    if !(radius_px > 0.0) {
        return Err(Error::config("thickness radius must be positive"));
    }
    if !(params.step_deg > 0.0 && params.step_deg <= 90.0) {
        return Err(Error::config("thickness step must be in (0, 90] degrees"));
    }
    let n = (360.0 / params.step_deg).round() as usize;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let profile: Vec<f64> = (0..n)
        .map(|i| {
            let th = i as f64 * step;
            img.sample_bilinear(center.0 + radius_px * th.cos(), center.1 + radius_px * th.sin())
        })
        .collect();

    let (peak_i, &peak) = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("profile is nonempty");
    let mut sorted = profile.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
    if !(peak > 0.0) || peak < params.min_peak_ratio * median.max(0.0) {
        return Err(Error::NoEdge { peak, median });
    }

    let level = params.floor_frac * peak;
    // angular extent on one side of the peak, in units of `step`
    let reach = |dir: isize| -> f64 {
        let mut prev = peak;
        for k in 1..n {
            let idx = (peak_i as isize + dir * k as isize).rem_euclid(n as isize) as usize;
            let v = profile[idx];
            if v < level {
                let frac = if prev > v { (prev - level) / (prev - v) } else { 1.0 };
                return (k - 1) as f64 + frac;
            }
            prev = v;
        }
        n as f64 // never dropped below: the whole circle is edge
    };
    let extent = (reach(1) + reach(-1)).min(n as f64);
    Ok(extent * step * radius_px)
}

/// Sum of squared pixel values.
pub fn tss(img: &Plane) -> f64 {
    img.data().iter().map(|v| v * v).sum()
}

/// Population variance of pixel values.
pub fn variance(img: &Plane) -> f64 {
    img.variance()
}

/// Gradient magnitude from central differences, one-sided at borders,
/// so a unit ramp scores exactly 1 everywhere.
pub fn gradient_magnitude(img: &Plane) -> Plane {
    let w = img.width();
    let h = img.height();
    Plane::from_fn(w, h, |x, y| {
        let gx = match x {
            0 => img.get(1.min(w - 1), y) - img.get(0, y),
            _ if x == w - 1 => img.get(x, y) - img.get(x - 1, y),
            _ => 0.5 * (img.get(x + 1, y) - img.get(x - 1, y)),
        };
        let gy = match y {
            0 => img.get(x, 1.min(h - 1)) - img.get(x, 0),
            _ if y == h - 1 => img.get(x, y) - img.get(x, y - 1),
            _ => 0.5 * (img.get(x, y + 1) - img.get(x, y - 1)),
        };
        (gx * gx + gy * gy).sqrt()
    })
}

/// Mean squared gradient magnitude.
pub fn gradient_mean_sq(img: &Plane) -> f64 {
    let gm = gradient_magnitude(img);
    gm.data().iter().map(|v| v * v).sum::<f64>() / gm.data().len() as f64
}

/// Variance of the gradient magnitude image.
pub fn gradient_variance(img: &Plane) -> f64 {
    gradient_magnitude(img).variance()
}

/// Divides each value by the value at the smallest key, so the series
/// reads as "fraction of the baseline". A missing or zero baseline makes
/// every entry None.
pub fn normalize_by_first<K: PartialOrd + Copy>(rows: &[(K, f64)]) -> Vec<(K, Option<f64>)> {
    let base = rows
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .map(|&(_, v)| v);
    rows.iter()
        .map(|&(k, v)| {
            let norm = match base {
                Some(b) if b.abs() > 0.0 && b.is_finite() => Some(v / b),
                _ => None,
            };
            (k, norm)
        })
        .collect()
}
