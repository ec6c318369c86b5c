//! Procedural turntable scenes.
//!
//! A pattern lives on a continuous plane, spins about a center at a fixed
//! rate, and is viewed through a homography. Because the pattern is
//! analytic rather than a raster, the scene can be sampled at any time
//! without temporal aliasing; reflectance edges are smoothed over a small
//! configurable width so log intensity stays continuous in time, which the
//! event simulator's step-size control depends on.
//!
//! Coordinates: pixel centers sit at integer positions, x grows rightward,
//! y grows downward. Pattern-plane coordinates coincide with sensor
//! coordinates under the identity homography.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::plane::{Grid, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// A straight bar through the rotation center.
    RadialLine,
    /// Alternating squares in a centered block; corner-rich.
    CheckerGrid,
    /// Random binary module grid, the densest texture.
    QrLike,
    /// Isolated squares on a sparse lattice.
    CornerGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Feature size in pattern units: line width, checker square side,
    /// module side, or corner-cell pitch.
    pub feature_scale: f64,
    /// Reflectance levels in [0, 1] the pattern draws from. RadialLine uses
    /// the first; grids alternate or sample the full list.
    pub contrast_levels: Vec<f64>,
    /// Modules per side for QrLike (odd keeps a center module).
    pub qr_modules: u32,
    /// Squares per side for CheckerGrid.
    pub checker_squares: u32,
    pub seed: u64,
    /// Reflectance outside the pattern footprint and beyond the disc.
    pub background: f64,
    /// Width of the smooth reflectance transition across edges, in pattern
    /// units. Must be positive: a hard edge would make log intensity jump
    /// instantaneously and no finite simulation step could track it.
    pub edge_width: f64,
}

impl PatternSpec {
    pub fn new(kind: PatternKind) -> Self {
        PatternSpec {
            kind,
            feature_scale: match kind {
                PatternKind::RadialLine => 3.0,
                PatternKind::CheckerGrid => 36.0,
                PatternKind::QrLike => 6.0,
                PatternKind::CornerGrid => 24.0,
            },
            contrast_levels: vec![0.05, 0.95],
            qr_modules: 37,
            checker_squares: 4,
            seed: 7,
            background: 0.5,
            edge_width: 2.0,
        }
    }

    /// Flat reflectance everywhere; produces no contrast and no events.
    pub fn uniform(level: f64) -> Self {
        let mut p = PatternSpec::new(PatternKind::CheckerGrid);
        p.contrast_levels = vec![level, level];
        p.background = level;
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.contrast_levels.is_empty() {
            return Err(Error::config("pattern needs at least one contrast level"));
        }
        for &l in &self.contrast_levels {
            if !(0.0..=1.0).contains(&l) || !l.is_finite() {
                return Err(Error::config(format!("contrast level {l} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(Error::config("background reflectance outside [0, 1]"));
        }
        if !(self.feature_scale > 0.0) || !self.feature_scale.is_finite() {
            return Err(Error::config("feature_scale must be positive"));
        }
        if !(self.edge_width > 0.0) || !self.edge_width.is_finite() {
            return Err(Error::config("edge_width must be positive"));
        }
        if matches!(self.kind, PatternKind::QrLike) {
            if self.contrast_levels.len() < 2 {
                return Err(Error::config("qr_like needs at least two contrast levels"));
            }
            if self.qr_modules < 3 {
                return Err(Error::config("qr_like needs at least 3 modules per side"));
            }
        }
        if matches!(self.kind, PatternKind::CheckerGrid) {
            if self.contrast_levels.len() < 2 {
                return Err(Error::config("checker_grid needs two contrast levels"));
            }
            if self.checker_squares < 2 {
                return Err(Error::config("checker_grid needs at least 2 squares per side"));
            }
        }
        Ok(())
    }

    /// Narrowest flat run of reflectance, used to bound simulation steps so
    /// no feature can be stepped over unseen.
    pub fn min_plateau(&self) -> f64 {
        match self.kind {
            PatternKind::RadialLine | PatternKind::CheckerGrid | PatternKind::QrLike => {
                self.feature_scale
            }
            PatternKind::CornerGrid => 0.3 * self.feature_scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurntableTrajectory {
    pub rpm: f64,
    /// Rotation center in pattern-plane coordinates.
    pub center: (f64, f64),
    pub theta0: f64,
}

impl TurntableTrajectory {
    pub fn new(rpm: f64, center: (f64, f64)) -> Self {
        TurntableTrajectory { rpm, center, theta0: 0.0 }
    }

    #[inline]
    pub fn omega(&self) -> f64 {
        self.rpm * std::f64::consts::TAU / 60.0
    }

    /// theta(t) = theta0 + omega * t, evaluated directly from t so repeated
    /// queries cannot accumulate drift.
    #[inline]
    pub fn theta(&self, t: f64) -> f64 {
        self.theta0 + self.omega() * t
    }

    pub fn period(&self) -> f64 {
        if self.rpm == 0.0 {
            f64::INFINITY
        } else {
            60.0 / self.rpm.abs()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneModel {
    pub pattern: PatternSpec,
    pub trajectory: TurntableTrajectory,
    /// Scene illuminance in lux; irradiance = illuminance x reflectance.
    pub illuminance: f64,
    /// Pattern plane to sensor plane.
    pub homography: Homography,
    pub width: usize,
    pub height: usize,
    /// Turntable disc radius in pattern units.
    pub disc_radius: f64,
    inv_homography: Homography,
    /// QrLike module values, row-major, precomputed from the seed.
    modules: Option<Grid<f64>>,
}

impl SceneModel {
    pub fn new(
        pattern: PatternSpec,
        trajectory: TurntableTrajectory,
        illuminance: f64,
        homography: Homography,
        width: usize,
        height: usize,
        disc_radius: f64,
    ) -> Result<Self> {
        pattern.validate()?;
        if !(illuminance > 0.0) || !illuminance.is_finite() {
            return Err(Error::config("illuminance must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::config("sensor dimensions must be nonzero"));
        }
        if !(disc_radius > 0.0) {
            return Err(Error::config("disc radius must be positive"));
        }
        let inv_homography = homography.inverse()?;
        let modules = match pattern.kind {
            PatternKind::QrLike => {
                let n = pattern.qr_modules as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(pattern.seed);
                let levels = pattern.contrast_levels.clone();
                Some(Grid::from_fn(n, n, |_, _| {
                    levels[rng.gen_range(0..levels.len())]
                }))
            }
            _ => None,
        };
        Ok(SceneModel {
            pattern,
            trajectory,
            illuminance,
            homography,
            width,
            height,
            disc_radius,
            inv_homography,
            modules,
        })
    }

    /// Standard setup: sensor-centered disc of radius 0.45 x min(W, H),
    /// identity homography.
    pub fn with_defaults(pattern: PatternSpec, rpm: f64, illuminance: f64, width: usize, height: usize) -> Result<Self> {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let disc = 0.45 * width.min(height) as f64;
        SceneModel::new(
            pattern,
            TurntableTrajectory::new(rpm, (cx, cy)),
            illuminance,
            Homography::identity(),
            width,
            height,
            disc,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        self.trajectory.center
    }

    /// Rotation center as seen on the sensor.
    pub fn sensor_center(&self) -> (f64, f64) {
        let (cx, cy) = self.trajectory.center;
        self.homography.apply(cx, cy)
    }

    /// Irradiance at sensor position (x, y) at time t: illuminance times
    /// the reflectance of the pattern point found by undoing the homography
    /// and the rotation. Points beyond the disc see the background.
    pub fn irradiance_at(&self, x: f64, y: f64, t: f64) -> f64 {
        let (px, py) = self.inv_homography.apply(x, y);
        let (cx, cy) = self.trajectory.center;
        let dx = px - cx;
        let dy = py - cy;
        let (s, c) = self.trajectory.theta(t).sin_cos();
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        self.illuminance * self.reflectance_local(lx, ly)
    }

    /// Reflectance in the pattern's own (rotating) frame, origin at the
    /// rotation center.
    pub fn reflectance_local(&self, lx: f64, ly: f64) -> f64 {
        let r = (lx * lx + ly * ly).sqrt();
        let ew = self.pattern.edge_width;
        if r >= self.disc_radius + ew {
            return self.pattern.background;
        }
        let v = match self.pattern.kind {
            PatternKind::RadialLine => {
                let half = 0.5 * self.pattern.feature_scale;
                let line = self.pattern.contrast_levels[0];
                mix(line, self.pattern.background, edge_blend(ly.abs() - half, ew))
            }
            PatternKind::CheckerGrid => {
                let n = self.pattern.checker_squares as i64;
                let l0 = self.pattern.contrast_levels[0];
                let l1 = self.pattern.contrast_levels[1];
                let bg = self.pattern.background;
                self.grid_sample(lx, ly, n, |i, j| {
                    if i < 0 || j < 0 || i >= n || j >= n {
                        bg
                    } else if (i + j) % 2 == 0 {
                        l0
                    } else {
                        l1
                    }
                })
            }
            PatternKind::QrLike => {
                let grid = self.modules.as_ref().unwrap();
                let n = grid.width() as i64;
                let bg = self.pattern.background;
                self.grid_sample(lx, ly, n, |i, j| {
                    if i < 0 || j < 0 || i >= n || j >= n {
                        bg
                    } else {
                        grid.get(i as usize, j as usize)
                    }
                })
            }
            PatternKind::CornerGrid => self.corner_grid_sample(lx, ly),
        };
        // fade to background at the disc rim
        mix(v, self.pattern.background, edge_blend(r - self.disc_radius, ew))
    }

    /// Smoothed lookup of an N x N module grid centered at the origin.
    /// Interpolates between the four nearest module centers with a blend
    /// that stays flat inside a module and ramps only within edge_width of
    /// a boundary; boundaries sit at integer multiples of feature_scale.
    fn grid_sample(&self, lx: f64, ly: f64, n: i64, value: impl Fn(i64, i64) -> f64) -> f64 {
        let fs = self.pattern.feature_scale;
        let span = (self.pattern.edge_width / fs).min(1.0);
        let half = n as f64 / 2.0;
        let ux = lx / fs + half - 0.5; // continuous module-center coordinate
        let uy = ly / fs + half - 0.5;
        let ix = ux.floor();
        let iy = uy.floor();
        let tx = boundary_blend(ux - ix, span);
        let ty = boundary_blend(uy - iy, span);
        let (i0, j0) = (ix as i64, iy as i64);
        let v00 = value(i0, j0);
        let v10 = value(i0 + 1, j0);
        let v01 = value(i0, j0 + 1);
        let v11 = value(i0 + 1, j0 + 1);
        mix(mix(v00, v10, tx), mix(v01, v11, tx), ty)
    }

    fn corner_grid_sample(&self, lx: f64, ly: f64) -> f64 {
        let fs = self.pattern.feature_scale;
        let ew = self.pattern.edge_width;
        let half_square = 0.35 * fs;
        // only cells whose center clears the rim carry a square
        let ci = (lx / fs).round();
        let cj = (ly / fs).round();
        let ccx = ci * fs;
        let ccy = cj * fs;
        if (ccx * ccx + ccy * ccy).sqrt() + half_square * std::f64::consts::SQRT_2
            > 0.9 * self.disc_radius
        {
            return self.pattern.background;
        }
        let d = (lx - ccx).abs().max((ly - ccy).abs());
        mix(
            self.pattern.contrast_levels[0],
            self.pattern.background,
            edge_blend(d - half_square, ew),
        )
    }

    /// Scene velocity of the content under sensor position (x, y): the
    /// rotation field pushed through the homography Jacobian, in px/s.
    /// None marks the no-motion region beyond the disc (distinct from a
    /// true zero at the rotation center).
    pub fn gt_flow(&self, x: f64, y: f64, t: f64) -> Option<(f64, f64)> {
        let _ = t; // constant-rate turntable: the field itself is static
        let (px, py) = self.inv_homography.apply(x, y);
        let (cx, cy) = self.trajectory.center;
        let dx = px - cx;
        let dy = py - cy;
        if (dx * dx + dy * dy).sqrt() > self.disc_radius {
            return None;
        }
        let w = self.trajectory.omega();
        let vx = -w * dy;
        let vy = w * dx;
        let j = self.homography.jacobian(px, py);
        Some((j[0] * vx + j[1] * vy, j[2] * vx + j[3] * vy))
    }

    /// Normalized reference render at time t on the sensor grid: reflectance
    /// through homography and rotation, values in [0, 1].
    pub fn render_reference(&self, t: f64) -> Plane {
        let inv_lux = 1.0 / self.illuminance;
        Plane::from_fn(self.width, self.height, |x, y| {
            self.irradiance_at(x as f64, y as f64, t) * inv_lux
        })
    }

    /// Fronto-parallel render of the unrotated pattern on the sensor grid
    /// (homography and spin ignored). Pixel coordinates equal pattern-plane
    /// coordinates here.
    pub fn render_pattern_plane(&self) -> Plane {
        let (cx, cy) = self.trajectory.center;
        Plane::from_fn(self.width, self.height, |x, y| {
            self.reflectance_local(x as f64 - cx, y as f64 - cy)
        })
    }

    /// Detects corners of the static pattern with the standard detector and
    /// returns their pattern-plane positions.
    pub fn gt_corners(&self) -> Vec<(f64, f64)> {
        let img = self.render_pattern_plane();
        let params = crate::tasks::ShiTomasiParams::default();
        crate::tasks::shi_tomasi(&img, &params)
            .into_iter()
            .map(|c| (c.x, c.y))
            .collect()
    }

    /// Pattern-plane corner positions advanced to time t and projected to
    /// the sensor.
    pub fn project_corners(&self, corners: &[(f64, f64)], t: f64) -> Vec<(f64, f64)> {
        let (cx, cy) = self.trajectory.center;
        let (s, c) = self.trajectory.theta(t).sin_cos();
        corners
            .iter()
            .map(|&(px, py)| {
                let dx = px - cx;
                let dy = py - cy;
                let rx = cx + c * dx - s * dy;
                let ry = cy + s * dx + c * dy;
                self.homography.apply(rx, ry)
            })
            .collect()
    }
}

#[inline]
fn mix(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[inline]
fn smoothstep01(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// 0 well inside the feature, 1 well outside, smooth over `width` centered
/// on the edge (d = signed distance past the edge).
#[inline]
fn edge_blend(d: f64, width: f64) -> f64 {
    smoothstep01(d / width + 0.5)
}

/// Blend fraction between two adjacent module centers: flat at 0/1 inside
/// the modules, smooth ramp of relative width `span` around the boundary
/// at t = 0.5.
#[inline]
fn boundary_blend(t: f64, span: f64) -> f64 {
    smoothstep01((t - 0.5) / span + 0.5)
}

/// Anything the sensor front ends can film. `SceneModel` is the canonical
/// implementation; tests substitute analytic fields (flashes, sinusoids).
pub trait IntensitySource: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// Linear irradiance at pixel-center coordinates, any time.
    fn irradiance(&self, x: f64, y: f64, t: f64) -> f64;
    /// Reference illuminance used for normalization and bandwidth lookup.
    fn illuminance(&self) -> f64;
    /// Upper bound on a time step near (x, y) that cannot skip an entire
    /// scene feature. Infinity means the signal is slow everywhere.
    fn max_step(&self, _x: f64, _y: f64) -> f64 {
        f64::INFINITY
    }
}

impl IntensitySource for SceneModel {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn irradiance(&self, x: f64, y: f64, t: f64) -> f64 {
        self.irradiance_at(x, y, t)
    }

    fn illuminance(&self) -> f64 {
        self.illuminance
    }

    fn max_step(&self, x: f64, y: f64) -> f64 {
        let w = self.trajectory.omega().abs();
        if w == 0.0 {
            return f64::INFINITY;
        }
        let (px, py) = self.inv_homography.apply(x, y);
        let (cx, cy) = self.trajectory.center;
        let r = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
        if r < 1e-9 {
            return f64::INFINITY;
        }
        // a pixel outside the disc only ever sees background
        if r > self.disc_radius + self.pattern.edge_width {
            return f64::INFINITY;
        }
        self.pattern.min_plateau() / (2.0 * w * r)
    }
}
