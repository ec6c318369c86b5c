//! Difference-plane sensor (AOP) and its companion frame path (COP).
//!
//! AOP frames carry three quantized planes per tick: a temporal difference
//! against the previous frame and two spatial differences along diagonal
//! offsets. All values are normalized intensity (irradiance / illuminance)
//! so quantization is relative to a full scale of 1. The COP path
//! integrates intensity over an exposure window with enough sub-samples
//! that motion inside the window is resolved, which is exactly what makes
//! it blur.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::{Grid, Plane};
use crate::recon::GradientField;
use crate::scene::IntensitySource;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AopConfig {
    pub fps: f64,
    /// Quantizer resolution in bits; values clamp at +/-(2^bits - 1).
    pub quant_bits: u32,
    /// Quantizer step in normalized intensity. None picks full scale over
    /// the positive code range, 1 / (2^bits - 1).
    pub quant_step: Option<f64>,
    /// Spatial-difference offsets: plane d holds I(x,y) - I(x-dx, y-dy).
    /// The pair must span the plane; anti-parallel offsets are rejected.
    pub sd_dirs: [(i32, i32); 2],
    /// Reserved for future noise models; keeps runs labelled.
    pub seed: u64,
}

impl Default for AopConfig {
    fn default() -> Self {
        AopConfig {
            fps: 1515.0,
            quant_bits: 7,
            quant_step: None,
            sd_dirs: [(1, 1), (-1, 1)],
            seed: 1,
        }
    }
}

impl AopConfig {
    /// Full-rate preset (bright scenes).
    pub fn high_speed() -> Self {
        AopConfig::default()
    }

    /// Half-rate preset for dim scenes (longer integration per tick).
    pub fn low_light() -> Self {
        AopConfig { fps: 757.0, ..AopConfig::default() }
    }

    pub fn step(&self) -> f64 {
        self.quant_step
            .unwrap_or_else(|| 1.0 / (self.code_max() as f64))
    }

    pub fn code_max(&self) -> i32 {
        (1i32 << self.quant_bits) - 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::config("aop fps must be positive"));
        }
        if !(2..=12).contains(&self.quant_bits) {
            return Err(Error::config("aop quant_bits must be in 2..=12"));
        }
        if let Some(s) = self.quant_step {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config("aop quant_step must be positive"));
            }
        }
        let [(ax, ay), (bx, by)] = self.sd_dirs;
        if ax == 0 && ay == 0 || bx == 0 && by == 0 {
            return Err(Error::config("sd offsets must be nonzero"));
        }
        let det = (ax * by - ay * bx) as f64;
        if det == 0.0 {
            return Err(Error::config(
                "sd offsets are parallel and cannot span the image plane; \
                 use linearly independent directions such as (1,1) and (-1,1)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AopFrame {
    /// Frame time in seconds.
    pub t: f64,
    pub td: Grid<i16>,
    pub sd_a: Grid<i16>,
    pub sd_b: Grid<i16>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AopSequence {
    pub width: usize,
    pub height: usize,
    pub config: AopConfig,
    pub t0: f64,
    pub frames: Vec<AopFrame>,
}

impl AopSequence {
    pub fn step(&self) -> f64 {
        self.config.step()
    }
}

#[inline]
fn quantize(v: f64, step: f64, code_max: i32) -> i16 {
    let q = (v / step).round();
    q.clamp(-(code_max as f64), code_max as f64) as i16
}

/// Samples AOP frames at fps over [t0, t1]. The first frame has a zero
/// temporal difference (nothing precedes it); spatial differences with an
/// out-of-bounds neighbor are zero.
pub fn sample_aop<S: IntensitySource>(
    source: &S,
    cfg: &AopConfig,
    t0: f64,
    t1: f64,
) -> Result<AopSequence> {
    cfg.validate()?;
    if !(t1 - t0 >= 1.0 / cfg.fps) {
        return Err(Error::config(format!(
            "window [{t0}, {t1}] shorter than one frame at {} fps",
            cfg.fps
        )));
    }
    let width = source.width();
    let height = source.height();
    let step = cfg.step();
    let code_max = cfg.code_max();
    let n_frames = ((t1 - t0) * cfg.fps).floor() as usize + 1;

    let mut frames = Vec::with_capacity(n_frames);
    let mut prev: Option<Plane> = None;
    for k in 0..n_frames {
        let t = t0 + k as f64 / cfg.fps;
        let img = render_normalized(source, t);
        let td = match &prev {
            None => Grid::filled(width, height, 0i16),
            Some(p) => Grid::from_fn(width, height, |x, y| {
                quantize(img.get(x, y) - p.get(x, y), step, code_max)
            }),
        };
        let sd_a = spatial_diff(&img, cfg.sd_dirs[0], step, code_max);
        let sd_b = spatial_diff(&img, cfg.sd_dirs[1], step, code_max);
        frames.push(AopFrame { t, td, sd_a, sd_b });
        prev = Some(img);
    }

    Ok(AopSequence { width, height, config: *cfg, t0, frames })
}

fn render_normalized<S: IntensitySource>(source: &S, t: f64) -> Plane {
    let inv = 1.0 / source.illuminance();
    Plane::from_fn(source.width(), source.height(), |x, y| {
        source.irradiance(x as f64, y as f64, t) * inv
    })
}

fn spatial_diff(img: &Plane, (dx, dy): (i32, i32), step: f64, code_max: i32) -> Grid<i16> {
    let w = img.width() as i32;
    let h = img.height() as i32;
    Grid::from_fn(img.width(), img.height(), |x, y| {
        let nx = x as i32 - dx;
        let ny = y as i32 - dy;
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            0
        } else {
            quantize(
                img.get(x, y) - img.get(nx as usize, ny as usize),
                step,
                code_max,
            )
        }
    })
}

/// Recovers a per-pixel intensity gradient from one frame's two spatial
/// difference planes by solving the 2x2 direction system.
///
/// Each plane samples the directional derivative midway along its offset,
/// so the raw solve sits off pixel centers. For the default orthogonal
/// diagonals the two planes recombine exactly into forward differences on
/// the edge midpoints of the 5-point stencil. Other offset pairs get a
/// first-order bilinear re-centering instead.
pub fn sd_to_gradient(frame: &AopFrame, cfg: &AopConfig) -> Result<GradientField> {
    cfg.validate()?;
    let step = cfg.step();
    let w = frame.sd_a.width();
    let h = frame.sd_a.height();
    let [(ax, ay), (bx, by)] = cfg.sd_dirs;
    let det = (ax * by - ay * bx) as f64;

    // g = M^-1 sd with M rows = offsets
    let inv = [
        by as f64 / det,
        -(ay as f64) / det,
        -(bx as f64) / det,
        ax as f64 / det,
    ];
    let gx_raw = Plane::from_fn(w, h, |x, y| {
        let a = frame.sd_a.get(x, y) as f64 * step;
        let b = frame.sd_b.get(x, y) as f64 * step;
        inv[0] * a + inv[1] * b
    });
    let gy_raw = Plane::from_fn(w, h, |x, y| {
        let a = frame.sd_a.get(x, y) as f64 * step;
        let b = frame.sd_b.get(x, y) as f64 * step;
        inv[2] * a + inv[3] * b
    });

    let default_dirs = (ax, ay) == (1, 1) && (bx, by) == (-1, 1);
    let (gx, gy) = if default_dirs {
        // sd_a(x+1,y+1) - sd_b(x,y+1) telescopes to the sum of the forward
        // x-differences on rows y and y+1, and the + combination likewise
        // to forward y-differences on columns x and x+1; both sit at the
        // cell center (x+.5, y+.5). Averaging the two adjacent cells puts
        // the result exactly on the edge midpoints the divergence stencil
        // reads from, smoothing only along the edge direction.
        let va = |x: isize, y: isize| -> f64 {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                frame.sd_a.get(x as usize, y as usize) as f64 * step
            }
        };
        let vb = |x: isize, y: isize| -> f64 {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                frame.sd_b.get(x as usize, y as usize) as f64 * step
            }
        };
        let cell_gx = |x: isize, y: isize| 0.5 * (va(x + 1, y + 1) - vb(x, y + 1));
        let cell_gy = |x: isize, y: isize| 0.5 * (va(x + 1, y + 1) + vb(x, y + 1));
        let gx = Plane::from_fn(w, h, |x, y| {
            if x + 1 >= w {
                return 0.0; // no flux past the boundary
            }
            let (xi, yi) = (x as isize, y as isize);
            if y == 0 {
                cell_gx(xi, 0)
            } else if y == h - 1 {
                cell_gx(xi, yi - 1)
            } else {
                0.5 * (cell_gx(xi, yi - 1) + cell_gx(xi, yi))
            }
        });
        let gy = Plane::from_fn(w, h, |x, y| {
            if y + 1 >= h {
                return 0.0;
            }
            let (xi, yi) = (x as isize, y as isize);
            if x == 0 {
                cell_gy(0, yi)
            } else if x == w - 1 {
                cell_gy(xi - 1, yi)
            } else {
                0.5 * (cell_gy(xi - 1, yi) + cell_gy(xi, yi))
            }
        });
        (gx, gy)
    } else {
        // stencil centroid sits at -offset/2 averaged over both planes
        let ox = (ax + bx) as f64 / 4.0;
        let oy = (ay + by) as f64 / 4.0;
        let gx = Plane::from_fn(w, h, |x, y| gx_raw.sample_bilinear(x as f64 + ox, y as f64 + oy));
        let gy = Plane::from_fn(w, h, |x, y| gy_raw.sample_bilinear(x as f64 + ox, y as f64 + oy));
        (gx, gy)
    };
    Ok(GradientField::new(gx, gy))
}

/// Magnitude of the SD-derived gradient; the edge image used by the
/// sharpness metrics.
pub fn sd_magnitude(frame: &AopFrame, cfg: &AopConfig) -> Result<Plane> {
    let g = sd_to_gradient(frame, cfg)?;
    Ok(Plane::from_fn(g.gx.width(), g.gx.height(), |x, y| {
        g.gx.get(x, y).hypot(g.gy.get(x, y))
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopConfig {
    pub fps: f64,
    /// Exposure in seconds, at most 1/fps.
    pub exposure_s: f64,
    pub quant_bits: u32,
}

impl Default for CopConfig {
    fn default() -> Self {
        CopConfig { fps: 100.0, exposure_s: 4e-3, quant_bits: 8 }
    }
}

impl CopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::config("cop fps must be positive"));
        }
        if !(self.exposure_s > 0.0) || self.exposure_s > 1.0 / self.fps {
            return Err(Error::config(format!(
                "cop exposure {} s must be in (0, 1/fps = {} s]",
                self.exposure_s,
                1.0 / self.fps
            )));
        }
        if !(2..=16).contains(&self.quant_bits) {
            return Err(Error::config("cop quant_bits must be in 2..=16"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CopFrame {
    /// Exposure start, seconds.
    pub t: f64,
    pub exposure_s: f64,
    /// Quantized normalized intensity in [0, 1].
    pub intensity: Plane,
}

/// Integrates intensity over each exposure window with midpoint
/// sub-samples: at least 8, and enough that the scene moves less than half
/// a pixel between consecutive sub-samples.
pub fn sample_cop<S: IntensitySource>(
    source: &S,
    cfg: &CopConfig,
    peak_speed_px_s: f64,
    t0: f64,
    t1: f64,
) -> Result<Vec<CopFrame>> {
    cfg.validate()?;
    if !(t1 - t0 >= 1.0 / cfg.fps) {
        return Err(Error::config("cop window shorter than one frame"));
    }
    let n_frames = ((t1 - t0) * cfg.fps).floor() as usize + 1;
    let n_sub = ((peak_speed_px_s * cfg.exposure_s / 0.5).ceil() as usize).max(8);
    let levels = ((1u32 << cfg.quant_bits) - 1) as f64;
    let inv_lux = 1.0 / source.illuminance();
    let w = source.width();
    let h = source.height();

    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = t0 + k as f64 / cfg.fps;
        let mut acc = Plane::zeros(w, h);
        for s in 0..n_sub {
            let ts = t + (s as f64 + 0.5) * cfg.exposure_s / n_sub as f64;
            for y in 0..h {
                for x in 0..w {
                    let v = source.irradiance(x as f64, y as f64, ts) * inv_lux;
                    acc.set(x, y, acc.get(x, y) + v);
                }
            }
        }
        let intensity = acc.map(|v| ((v / n_sub as f64).clamp(0.0, 1.0) * levels).round() / levels);
        frames.push(CopFrame { t, exposure_s: cfg.exposure_s, intensity });
    }
    Ok(frames)
}

const AOP_MAGIC: &[u8; 4] = b"AOPB";
const AOP_VERSION: u32 = 1;

/// Binary AOP container: header (magic, version, W, H, fps, quant_bits,
/// quant_step, sd offsets, t0 in us, frame count) followed by per-frame
/// raw little-endian i16 planes in td, sd_a, sd_b order.
pub fn write_aop(path: &Path, seq: &AopSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(AOP_MAGIC)?;
    w.write_all(&AOP_VERSION.to_le_bytes())?;
    w.write_all(&(seq.width as u32).to_le_bytes())?;
    w.write_all(&(seq.height as u32).to_le_bytes())?;
    w.write_all(&seq.config.fps.to_le_bytes())?;
    w.write_all(&seq.config.quant_bits.to_le_bytes())?;
    w.write_all(&seq.step().to_le_bytes())?;
    for (dx, dy) in seq.config.sd_dirs {
        w.write_all(&dx.to_le_bytes())?;
        w.write_all(&dy.to_le_bytes())?;
    }
    w.write_all(&((seq.t0 * 1e6).round() as u64).to_le_bytes())?;
    w.write_all(&(seq.frames.len() as u32).to_le_bytes())?;
    for f in &seq.frames {
        for plane in [&f.td, &f.sd_a, &f.sd_b] {
            let mut buf = Vec::with_capacity(plane.data().len() * 2);
            for &v in plane.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn read_aop(path: &Path) -> Result<AopSequence> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::parse("truncated AOP file"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != AOP_MAGIC {
        return Err(Error::parse("not an AOP file"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != AOP_VERSION {
        return Err(Error::parse(format!("unsupported AOP version {version}")));
    }
    let width = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let fps = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let quant_bits = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    let quant_step = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let mut sd_dirs = [(0i32, 0i32); 2];
    for d in &mut sd_dirs {
        d.0 = i32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        d.1 = i32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    }
    let t0 = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as f64 * 1e-6;
    let n_frames = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let cfg = AopConfig {
        fps,
        quant_bits,
        quant_step: Some(quant_step),
        sd_dirs,
        seed: 0,
    };
    cfg.validate()?;
    let plane_bytes = width * height * 2;
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let mut planes = Vec::with_capacity(3);
        for _ in 0..3 {
            let raw = take(&mut pos, plane_bytes)?;
            let data: Vec<i16> = raw
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
            planes.push(Grid::from_vec(width, height, data));
        }
        let sd_b = planes.pop().unwrap();
        let sd_a = planes.pop().unwrap();
        let td = planes.pop().unwrap();
        frames.push(AopFrame { t: t0 + k as f64 / fps, td, sd_a, sd_b });
    }
    Ok(AopSequence { width, height, config: cfg, t0, frames })
}
