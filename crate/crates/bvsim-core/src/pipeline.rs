//! Per-cell orchestration: one cell is a (sensor, rpm, lux) combination.
//! `simulate_cell` produces the sensor's raw data, `analyze_cell` turns it
//! into a metrics row, and the manifest helpers persist the data so the
//! two halves can run in separate invocations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aop::{self, AopSequence, CopFrame};
use crate::calib::{self, CmaxSearch, EventSlice, WarpSetup};
use crate::config::{config_hash, fnv1a64, EventsFormat, RunConfig, SensorBlock, SensorKind};
use crate::error::{Error, Result};
use crate::evs::{self, Event, EventStream};
use crate::geometry::Homography;
use crate::metrics::{self, ThicknessParams};
use crate::pgm;
use crate::plane::Plane;
use crate::recon;
use crate::scene::SceneModel;
use crate::tasks::{self, AnnulusParams, ArcParams, Corner, FlowParams, ShiTomasiParams};

/// Corners closer than this to the image border are outside every
/// detector's support window, so they are excluded from evaluation on
/// both the ground-truth and the detection side.
const EVAL_INSET: f64 = 8.0;
/// Flow windows per cell; more average down noise but stretch the
/// simulated span.
const FLOW_WINDOWS: usize = 9;
/// Corner-matching windows per cell.
const CORNER_WINDOWS: usize = 6;
/// Difference frames used for corner matching.
const AOP_TASK_FRAMES: usize = 4;
/// Frames handed to the flow solver (one fewer pairs).
const AOP_FLOW_FRAMES: usize = 10;
/// Structure metrics average over frames spread across this much rotation.
/// Consecutive frames alone would compare different raster alignments of
/// the pattern between slow and fast cells, which reads as a phantom speed
/// trend on a sensor that has no motion blur.
const AOP_STRUCT_SPAN_DEG: f64 = 90.0;
const AOP_STRUCT_SAMPLES: usize = 8;
/// Bounds the simulated sequence at very low speeds, where a quarter turn
/// would take thousands of frames; coverage shrinks instead.
const AOP_STRUCT_MAX_FRAMES: usize = 384;
/// Edge response measured at this fraction of the pattern radius.
const RING_FRAC: f64 = 0.9;
/// CMax search bracket around the commanded speed.
const CMAX_BRACKET: f64 = 0.3;

/// Frames needed to cover the structure-metric rotation span.
fn aop_struct_span(rpm: f64, fps: f64) -> usize {
    if rpm <= 0.0 {
        return 1;
    }
    let frames = (AOP_STRUCT_SPAN_DEG / (6.0 * rpm) * fps).ceil() as usize;
    frames.clamp(1, AOP_STRUCT_MAX_FRAMES)
}

pub fn cell_seed(master: u64, sensor_id: &str, rpm: f64, lux: f64) -> u64 {
    fnv1a64(format!("{master}/{sensor_id}/{rpm:.6}/{lux:.6}").as_bytes())
}

/// Directory name for one cell, safe for any sensor id.
pub fn cell_dir_name(sensor_id: &str, rpm: f64, lux: f64) -> String {
    let safe: String = sensor_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}_rpm{rpm}_lux{lux}")
}

/// Timing of one cell: a warm-up revolution (clipped when the configured
/// duration is shorter), then the analysis span holding the metric slice
/// and the task windows.
#[derive(Clone, Copy, Debug)]
pub struct CellPlan {
    pub warm: f64,
    pub warm_us: u64,
    /// Simulation bounds in seconds; t0 < warm leaves room for detector
    /// state to settle before the first analysis window.
    pub t0: f64,
    pub t1: f64,
    pub slice_s: f64,
    pub flow_win_s: f64,
    pub n_corner_windows: usize,
    pub n_flow_windows: usize,
    /// Analysis frames for difference sensors (frame 0 excluded).
    pub aop_frames: usize,
}

impl CellPlan {
    pub fn new(cfg: &RunConfig, sensor: &SensorBlock, rpm: f64) -> CellPlan {
        let period = 60.0 / rpm;
        let warm = period * (cfg.sweep.revolutions - 1.0).clamp(0.0, 1.0);
        let avail = cfg.sweep.revolutions * period - warm;
        let slice_s = (cfg.sweep.window_deg / (6.0 * rpm)).min(avail);
        let flow_win_s = cfg.sweep.flow_window_deg / (6.0 * rpm);

        let fit = (avail / flow_win_s).floor() as usize;
        let n_corner_windows = CORNER_WINDOWS.min(fit).max(1);
        let n_flow_windows = FLOW_WINDOWS.min(fit).max(2);

        let mut span = slice_s;
        if cfg.tasks.corners {
            span = span.max(n_corner_windows as f64 * flow_win_s);
        }
        if cfg.tasks.flow {
            span = span.max(n_flow_windows as f64 * flow_win_s);
        }
        span = span.min(avail.max(slice_s));

        let fps = sensor.fps.unwrap_or(match sensor.kind {
            SensorKind::Aop => 1515.0,
            _ => 100.0,
        });
        let aop_frames = match sensor.kind {
            SensorKind::Aop => {
                let mut want =
                    AOP_TASK_FRAMES.max(if cfg.tasks.flow { AOP_FLOW_FRAMES - 1 } else { 1 });
                if cfg.tasks.structure {
                    want = want.max(aop_struct_span(rpm, fps));
                }
                want.min(((avail * fps).floor() as usize).saturating_sub(1)).max(1)
            }
            _ => 1,
        };

        let (t0, t1) = match sensor.kind {
            SensorKind::Evs => (warm - slice_s.min(warm), warm + span),
            SensorKind::Aop => (warm, warm + (aop_frames as f64 + 0.5) / fps),
            SensorKind::Cop => (warm, warm + 1.25 / fps),
        };
        CellPlan {
            warm,
            warm_us: (warm * 1e6).round() as u64,
            t0,
            t1,
            slice_s,
            flow_win_s,
            n_corner_windows,
            n_flow_windows,
            aop_frames,
        }
    }

    fn flow_win_us(&self) -> f64 {
        self.flow_win_s * 1e6
    }

    /// k-th task window boundary, µs, mirroring the slicing arithmetic.
    fn window_bound(&self, k: usize) -> u64 {
        self.warm_us + (k as f64 * self.flow_win_us()).round() as u64
    }
}

/// Raw per-cell sensor output.
#[derive(Clone, Debug)]
pub enum CellData {
    Events {
        /// Post-crop, pre-saturation count inside the analysis span.
        pre_cap: usize,
        stream: EventStream,
        origin: (u16, u16),
    },
    Aop(AopSequence),
    Cop(Vec<CopFrame>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CellMetrics {
    pub event_rate: Option<f64>,
    pub drop_fraction: Option<f64>,
    pub omega_gt: f64,
    pub omega_est: Option<f64>,
    pub omega_rel_err: Option<f64>,
    pub omega_low_confidence: Option<bool>,
    pub thickness_px: Option<f64>,
    pub tss: Option<f64>,
    pub gm: Option<f64>,
    pub var: Option<f64>,
    pub gradvar: Option<f64>,
    pub n_detected: Option<usize>,
    pub n_gt: Option<usize>,
    pub n_matched: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub omega_flow: Option<f64>,
    pub flow_rel_err: Option<f64>,
    pub flow_valid_frac: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub rpm: f64,
    pub lux: f64,
    pub seed: u64,
    pub metrics: CellMetrics,
    /// Tasks that could not produce a number, with the reason.
    pub notes: Vec<String>,
}

pub fn simulate_cell(
    cfg: &RunConfig,
    sensor: &SensorBlock,
    rpm: f64,
    lux: f64,
) -> Result<CellData> {
    let scene = cfg.scene.scene_model(rpm, lux)?;
    let seed = cell_seed(cfg.seed, &sensor.id, rpm, lux);
    let plan = CellPlan::new(cfg, sensor, rpm);
    match sensor.kind {
        SensorKind::Evs => {
            let ecfg = sensor.evs_config(seed)?;
            let raw = evs::simulate_events(&scene, &ecfg, plan.t0, plan.t1)?;
            let (cropped, origin) = match ecfg.roi {
                Some(roi) => (evs::apply_roi(&raw, roi)?, (roi.x, roi.y)),
                None => (raw, (0, 0)),
            };
            let pre_cap = events_between(&cropped, plan.warm_us, u64::MAX).len();
            let stream = match ecfg.rate_cap {
                Some(cap) => evs::apply_rate_saturation(
                    &cropped,
                    cap,
                    ecfg.saturation_window_us,
                    ecfg.drop_policy,
                    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
                )?,
                None => cropped,
            };
            Ok(CellData::Events { pre_cap, stream, origin })
        }
        SensorKind::Aop => {
            let acfg = sensor.aop_config(seed)?;
            Ok(CellData::Aop(aop::sample_aop(&scene, &acfg, plan.t0, plan.t1)?))
        }
        SensorKind::Cop => {
            let ccfg = sensor.cop_config()?;
            let peak = scene.trajectory.omega().abs() * scene.disc_radius;
            Ok(CellData::Cop(aop::sample_cop(&scene, &ccfg, peak, plan.t0, plan.t1)?))
        }
    }
}

pub fn analyze_cell(
    cfg: &RunConfig,
    sensor: &SensorBlock,
    rpm: f64,
    lux: f64,
    data: &CellData,
) -> Result<CellResult> {
    let scene = cfg.scene.scene_model(rpm, lux)?;
    let plan = CellPlan::new(cfg, sensor, rpm);
    let mut metrics = CellMetrics { omega_gt: scene.trajectory.omega(), ..Default::default() };
    let mut notes = Vec::new();
    match data {
        CellData::Events { pre_cap, stream, origin } => {
            analyze_events(cfg, &scene, &plan, *pre_cap, stream, *origin, &mut metrics, &mut notes)?;
        }
        CellData::Aop(seq) => analyze_aop(cfg, &scene, seq, &mut metrics, &mut notes)?,
        CellData::Cop(frames) => analyze_cop(cfg, &scene, frames, &mut metrics, &mut notes)?,
    }
    Ok(CellResult {
        sensor_id: sensor.id.clone(),
        kind: sensor.kind,
        rpm,
        lux,
        seed: cell_seed(cfg.seed, &sensor.id, rpm, lux),
        metrics,
        notes,
    })
}

/// Simulate, optionally persist, analyze.
pub fn run_cell(
    cfg: &RunConfig,
    sensor: &SensorBlock,
    rpm: f64,
    lux: f64,
    cell_dir: Option<&Path>,
) -> Result<CellResult> {
    let data = simulate_cell(cfg, sensor, rpm, lux)?;
    if let Some(dir) = cell_dir {
        write_cell(cfg, sensor, rpm, lux, &data, dir)?;
    }
    analyze_cell(cfg, sensor, rpm, lux, &data)
}

fn events_between(stream: &EventStream, a: u64, b: u64) -> &[Event] {
    let lo = stream.events.partition_point(|e| e.t_us < a);
    let hi = stream.events.partition_point(|e| e.t_us < b);
    &stream.events[lo..hi]
}

fn sub_stream(stream: &EventStream, a: u64, b: u64) -> EventStream {
    EventStream {
        width: stream.width,
        height: stream.height,
        t_start_us: a,
        t_end_us: b,
        events: events_between(stream, a, b).to_vec(),
        provenance: stream.provenance.clone(),
    }
}

/// Pattern corners carried to time t by the turntable alone, before any
/// perspective. This is the ground truth in the pattern plane.
fn rotated_gt(scene: &SceneModel, t: f64) -> Vec<(f64, f64)> {
    let (cx, cy) = scene.center();
    let (s, c) = scene.trajectory.theta(t).sin_cos();
    scene
        .gt_corners()
        .iter()
        .map(|&(x, y)| {
            let dx = x - cx;
            let dy = y - cy;
            (cx + c * dx - s * dy, cy + s * dx + c * dy)
        })
        .collect()
}

fn in_eval_region(x: f64, y: f64, w: usize, h: usize) -> bool {
    x >= EVAL_INSET
        && y >= EVAL_INSET
        && x <= w as f64 - 1.0 - EVAL_INSET
        && y <= h as f64 - 1.0 - EVAL_INSET
}

/// Micro-averaged precision/recall over all matching windows.
#[derive(Default)]
struct MatchSums {
    matched: usize,
    detected: usize,
    gt: usize,
}

impl MatchSums {
    fn add(&mut self, r: &tasks::MatchResult) {
        self.matched += r.n_matched;
        self.detected += r.n_detected;
        self.gt += r.n_gt;
    }

    fn fill(&self, m: &mut CellMetrics) {
        let p = if self.detected > 0 { self.matched as f64 / self.detected as f64 } else { 0.0 };
        let r = if self.gt > 0 { self.matched as f64 / self.gt as f64 } else { 0.0 };
        m.n_matched = Some(self.matched);
        m.n_detected = Some(self.detected);
        m.n_gt = Some(self.gt);
        m.precision = Some(p);
        m.recall = Some(r);
        m.f1 = Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
    }
}

#[allow(clippy::too_many_arguments)]
fn analyze_events(
    cfg: &RunConfig,
    scene: &SceneModel,
    plan: &CellPlan,
    pre_cap: usize,
    stream: &EventStream,
    origin: (u16, u16),
    m: &mut CellMetrics,
    notes: &mut Vec<String>,
) -> Result<()> {
    let omega = scene.trajectory.omega();
    let origin_f = (origin.0 as f64, origin.1 as f64);
    let span_events = events_between(stream, plan.warm_us, u64::MAX).len();
    let span_s = plan.t1 - plan.warm;
    if span_s > 0.0 {
        m.event_rate = Some(span_events as f64 / span_s);
    }
    m.drop_fraction = Some(if pre_cap > 0 { 1.0 - span_events as f64 / pre_cap as f64 } else { 0.0 });

    // Warp into the pattern plane: undo the crop offset, then the scene
    // homography; the rotation compensation happens about the pattern
    // center.
    let to_pattern = scene
        .homography
        .inverse()?
        .compose(&Homography::translation(origin_f.0, origin_f.1));
    let slice_us = (plan.slice_s * 1e6).round() as u64;
    let slice = EventSlice {
        t_start_us: plan.warm_us,
        t_end_us: plan.warm_us + slice_us,
        events: events_between(stream, plan.warm_us, plan.warm_us + slice_us).to_vec(),
    };
    let setup = WarpSetup {
        width: scene.width,
        height: scene.height,
        omega,
        center: scene.center(),
        t_ref_us: slice.t_mid_us(),
        signed: false,
        pre_transform: (!to_pattern.is_identity()).then_some(to_pattern),
    };

    if cfg.tasks.thickness || cfg.tasks.structure {
        let iwe = calib::warp_events(&slice, &setup);
        if cfg.tasks.thickness {
            let ring = RING_FRAC * scene.disc_radius;
            match metrics::edge_thickness(&iwe.grid, scene.center(), ring, &ThicknessParams::default()) {
                Ok(t) => m.thickness_px = Some(t),
                Err(e) => notes.push(format!("thickness: {e}")),
            }
        }
        if cfg.tasks.structure {
            m.tss = Some(metrics::tss(&iwe.grid));
            m.gm = Some(metrics::gradient_mean_sq(&iwe.grid));
            m.var = Some(metrics::variance(&iwe.grid));
            m.gradvar = Some(metrics::gradient_variance(&iwe.grid));
        }
    }

    let search = CmaxSearch::new(omega * (1.0 - CMAX_BRACKET), omega * (1.0 + CMAX_BRACKET));
    match calib::estimate_omega_cmax(&slice, &setup, &search) {
        Ok(r) => {
            m.omega_est = Some(r.omega);
            m.omega_rel_err = Some((r.omega - omega).abs() / omega.abs());
            m.omega_low_confidence = Some(r.low_confidence);
        }
        Err(e) => notes.push(format!("cmax: {e}")),
    }

    if cfg.tasks.corners {
        let dets = tasks::arc_corner_detect(stream, &ArcParams::default());
        let mut sums = MatchSums::default();
        for k in 0..plan.n_corner_windows {
            let (a, b) = (plan.window_bound(k), plan.window_bound(k + 1));
            let in_window: Vec<Corner> = dets
                .corners
                .iter()
                .filter(|c| c.t_us.map_or(false, |t| t >= a && t < b))
                .cloned()
                .collect();
            let kept: Vec<Corner> = tasks::dedup_corners(&in_window, cfg.tasks.dedup_radius)
                .into_iter()
                .filter(|c| in_eval_region(c.x, c.y, stream.width, stream.height))
                .collect();
            let t_mid = (a + (b - a) / 2) as f64 * 1e-6;
            let gt: Vec<(f64, f64)> = scene
                .project_corners(&scene.gt_corners(), t_mid)
                .into_iter()
                .map(|(x, y)| (x - origin_f.0, y - origin_f.1))
                .filter(|&(x, y)| in_eval_region(x, y, stream.width, stream.height))
                .collect();
            sums.add(&tasks::match_corners(&kept, &gt, cfg.tasks.match_radius));
        }
        sums.fill(m);
    }

    if cfg.tasks.flow {
        let flow_end = plan.warm_us + (plan.n_flow_windows as f64 * plan.flow_win_us()).floor() as u64;
        let sub = sub_stream(stream, plan.warm_us, flow_end);
        match tasks::flow_from_events(&sub, scene.trajectory.rpm, cfg.sweep.flow_window_deg, &FlowParams::default())
        {
            Ok(field) => {
                m.flow_valid_frac =
                    Some(field.valid_count() as f64 / (stream.width * stream.height) as f64);
                let (scx, scy) = scene.sensor_center();
                let center = (scx - origin_f.0, scy - origin_f.1);
                match tasks::angular_speed_from_flow(
                    &field,
                    center,
                    &AnnulusParams::for_radius(scene.disc_radius),
                    Some(omega),
                ) {
                    Ok(est) => {
                        m.omega_flow = Some(est.omega_hat);
                        m.flow_rel_err = est.rel_error.or(est.abs_error);
                    }
                    Err(e) => notes.push(format!("flow: {e}")),
                }
            }
            Err(e) => notes.push(format!("flow: {e}")),
        }
    }
    Ok(())
}

fn analyze_aop(
    cfg: &RunConfig,
    scene: &SceneModel,
    seq: &AopSequence,
    m: &mut CellMetrics,
    notes: &mut Vec<String>,
) -> Result<()> {
    let omega = scene.trajectory.omega();
    let n = seq.frames.len();
    if n < 2 {
        notes.push("aop: not enough frames".into());
        return Ok(());
    }
    let task_frames = AOP_TASK_FRAMES.min(n - 1);
    let tilted = !scene.homography.is_identity();
    // Frame 0 only primes the temporal difference.
    let flatten = |img: &Plane| -> Result<Plane> {
        if tilted {
            calib::correct_plane(&scene.homography, img, 0.0)
        } else {
            Ok(img.clone())
        }
    };

    if cfg.tasks.thickness || cfg.tasks.structure {
        let span_end = aop_struct_span(scene.trajectory.rpm, seq.config.fps).min(n - 1).max(1);
        let count = if cfg.tasks.structure { AOP_STRUCT_SAMPLES.min(span_end) } else { 1 };
        let mut acc = [0.0f64; 4];
        for i in 0..count {
            let k = if count == 1 {
                1
            } else {
                1 + (i as f64 * (span_end - 1) as f64 / (count - 1) as f64).round() as usize
            };
            let mag = flatten(&aop::sd_magnitude(&seq.frames[k], &seq.config)?)?;
            if i == 0 && cfg.tasks.thickness {
                let ring = RING_FRAC * scene.disc_radius;
                match metrics::edge_thickness(&mag, scene.center(), ring, &ThicknessParams::default()) {
                    Ok(t) => m.thickness_px = Some(t),
                    Err(e) => notes.push(format!("thickness: {e}")),
                }
            }
            acc[0] += metrics::tss(&mag);
            acc[1] += metrics::gradient_mean_sq(&mag);
            acc[2] += metrics::variance(&mag);
            acc[3] += metrics::gradient_variance(&mag);
        }
        if cfg.tasks.structure {
            let inv = 1.0 / count as f64;
            m.tss = Some(acc[0] * inv);
            m.gm = Some(acc[1] * inv);
            m.var = Some(acc[2] * inv);
            m.gradvar = Some(acc[3] * inv);
        }
    }

    if cfg.tasks.corners {
        let mut sums = MatchSums::default();
        for k in 1..=task_frames {
            let grad = aop::sd_to_gradient(&seq.frames[k], &seq.config)?;
            let (img, _) = recon::poisson_reconstruct(&grad, 0.5)?;
            let img = flatten(&img)?;
            let dets: Vec<Corner> =
                tasks::dedup_corners(&tasks::shi_tomasi(&img, &ShiTomasiParams::default()), cfg.tasks.dedup_radius)
                    .into_iter()
                    .filter(|c| in_eval_region(c.x, c.y, seq.width, seq.height))
                    .collect();
            let gt: Vec<(f64, f64)> = rotated_gt(scene, seq.frames[k].t)
                .into_iter()
                .filter(|&(x, y)| in_eval_region(x, y, seq.width, seq.height))
                .collect();
            sums.add(&tasks::match_corners(&dets, &gt, cfg.tasks.match_radius));
        }
        sums.fill(m);
    }

    if cfg.tasks.flow {
        let hi = AOP_FLOW_FRAMES.min(n);
        match tasks::flow_from_aop(seq, 0..hi, &FlowParams::default()) {
            Ok(field) => {
                m.flow_valid_frac =
                    Some(field.valid_count() as f64 / (seq.width * seq.height) as f64);
                match tasks::angular_speed_from_flow(
                    &field,
                    scene.sensor_center(),
                    &AnnulusParams::for_radius(scene.disc_radius),
                    Some(omega),
                ) {
                    Ok(est) => {
                        m.omega_flow = Some(est.omega_hat);
                        m.flow_rel_err = est.rel_error.or(est.abs_error);
                    }
                    Err(e) => notes.push(format!("flow: {e}")),
                }
            }
            Err(e) => notes.push(format!("flow: {e}")),
        }
    }
    Ok(())
}

fn analyze_cop(
    cfg: &RunConfig,
    scene: &SceneModel,
    frames: &[CopFrame],
    m: &mut CellMetrics,
    notes: &mut Vec<String>,
) -> Result<()> {
    let Some(frame) = frames.first() else {
        notes.push("cop: no frames".into());
        return Ok(());
    };
    let tilted = !scene.homography.is_identity();
    let img = if tilted {
        let mut vals: Vec<f64> = frame.intensity.data().to_vec();
        vals.sort_by(f64::total_cmp);
        let med = vals[vals.len() / 2];
        calib::correct_plane(&scene.homography, &frame.intensity, med)?
    } else {
        frame.intensity.clone()
    };

    if cfg.tasks.thickness {
        // gradient magnitude turns the frame into an edge response, same as the
        // spatial-difference magnitude used for frame-based difference sensors
        let edges = metrics::gradient_magnitude(&img);
        let ring = RING_FRAC * scene.disc_radius;
        match metrics::edge_thickness(&edges, scene.center(), ring, &ThicknessParams::default()) {
            Ok(t) => m.thickness_px = Some(t),
            Err(e) => notes.push(format!("thickness: {e}")),
        }
    }
    if cfg.tasks.structure {
        m.tss = Some(metrics::tss(&img));
        m.gm = Some(metrics::gradient_mean_sq(&img));
        m.var = Some(metrics::variance(&img));
        m.gradvar = Some(metrics::gradient_variance(&img));
    }
    if cfg.tasks.corners {
        let dets: Vec<Corner> =
            tasks::dedup_corners(&tasks::shi_tomasi(&img, &ShiTomasiParams::default()), cfg.tasks.dedup_radius)
                .into_iter()
                .filter(|c| in_eval_region(c.x, c.y, img.width(), img.height()))
                .collect();
        let t_mid = frame.t + 0.5 * frame.exposure_s;
        let gt: Vec<(f64, f64)> = rotated_gt(scene, t_mid)
            .into_iter()
            .filter(|&(x, y)| in_eval_region(x, y, img.width(), img.height()))
            .collect();
        let mut sums = MatchSums::default();
        sums.add(&tasks::match_corners(&dets, &gt, cfg.tasks.match_radius));
        sums.fill(m);
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellManifest {
    pub schema: u32,
    pub sensor_id: String,
    pub kind: SensorKind,
    pub rpm: f64,
    pub lux: f64,
    /// Hex, because TOML integers cap at i64 and cell seeds use the full u64 range.
    pub seed: String,
    pub config_hash: String,
    pub width: usize,
    pub height: usize,
    pub origin: [u16; 2],
    pub pre_cap_count: usize,
    pub events_file: Option<String>,
    pub events_format: Option<EventsFormat>,
    pub aop_file: Option<String>,
    pub cop_files: Vec<String>,
    /// Frame start and exposure, seconds, aligned with cop_files.
    pub cop_times: Vec<[f64; 2]>,
}

pub fn write_cell(
    cfg: &RunConfig,
    sensor: &SensorBlock,
    rpm: f64,
    lux: f64,
    data: &CellData,
    dir: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = CellManifest {
        schema: 1,
        sensor_id: sensor.id.clone(),
        kind: sensor.kind,
        rpm,
        lux,
        seed: format!("{:016x}", cell_seed(cfg.seed, &sensor.id, rpm, lux)),
        config_hash: format!("{:016x}", config_hash(cfg)),
        width: 0,
        height: 0,
        origin: [0, 0],
        pre_cap_count: 0,
        events_file: None,
        events_format: None,
        aop_file: None,
        cop_files: Vec::new(),
        cop_times: Vec::new(),
    };
    match data {
        CellData::Events { pre_cap, stream, origin } => {
            manifest.width = stream.width;
            manifest.height = stream.height;
            manifest.origin = [origin.0, origin.1];
            manifest.pre_cap_count = *pre_cap;
            let format = match cfg.output.events {
                // A simulate run that persists nothing would be pointless.
                EventsFormat::None => EventsFormat::Bin,
                f => f,
            };
            let name = match format {
                EventsFormat::Csv => {
                    evs::write_events_csv(&dir.join("events.csv"), stream)?;
                    "events.csv"
                }
                _ => {
                    evs::write_events_bin(&dir.join("events.bin"), stream)?;
                    "events.bin"
                }
            };
            manifest.events_file = Some(name.into());
            manifest.events_format = Some(format);
        }
        CellData::Aop(seq) => {
            manifest.width = seq.width;
            manifest.height = seq.height;
            aop::write_aop(&dir.join("frames.aop"), seq)?;
            manifest.aop_file = Some("frames.aop".into());
        }
        CellData::Cop(frames) => {
            for (k, f) in frames.iter().enumerate() {
                let name = format!("frame_{k:03}.pgm");
                pgm::write_pgm8(&dir.join(&name), &f.intensity)?;
                manifest.cop_files.push(name);
                manifest.cop_times.push([f.t, f.exposure_s]);
                if let Some(first) = frames.first() {
                    manifest.width = first.intensity.width();
                    manifest.height = first.intensity.height();
                }
            }
        }
    }
    let path = dir.join("manifest.toml");
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::config(format!("manifest serialization: {e}")))?;
    fs::write(&path, text)?;
    Ok(path)
}

pub fn read_cell(dir: &Path) -> Result<(CellManifest, CellData)> {
    let text = fs::read_to_string(dir.join("manifest.toml"))?;
    let manifest: CellManifest =
        toml::from_str(&text).map_err(|e| Error::parse(format!("{}: {e}", dir.display())))?;
    let data = match manifest.kind {
        SensorKind::Evs => {
            let name = manifest
                .events_file
                .as_deref()
                .ok_or_else(|| Error::parse("manifest lists no events file"))?;
            let path = dir.join(name);
            let stream = match manifest.events_format {
                Some(EventsFormat::Csv) => {
                    evs::read_events_csv(&path, manifest.width, manifest.height)?
                }
                _ => evs::read_events_bin(&path, manifest.width, manifest.height)?,
            };
            CellData::Events {
                pre_cap: manifest.pre_cap_count,
                stream,
                origin: (manifest.origin[0], manifest.origin[1]),
            }
        }
        SensorKind::Aop => {
            let name = manifest
                .aop_file
                .as_deref()
                .ok_or_else(|| Error::parse("manifest lists no frame file"))?;
            CellData::Aop(aop::read_aop(&dir.join(name))?)
        }
        SensorKind::Cop => {
            let mut frames = Vec::new();
            for (name, times) in manifest.cop_files.iter().zip(&manifest.cop_times) {
                frames.push(CopFrame {
                    t: times[0],
                    exposure_s: times[1],
                    intensity: pgm::read_pgm(&dir.join(name))?,
                });
            }
            CellData::Cop(frames)
        }
    };
    Ok((manifest, data))
}

/// Quick-look image for one cell: warped events, difference-edge
/// magnitude, or the plain frame.
pub fn emit_cell_image(
    cfg: &RunConfig,
    sensor: &SensorBlock,
    rpm: f64,
    lux: f64,
    data: &CellData,
    dir: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let scene = cfg.scene.scene_model(rpm, lux)?;
    let plan = CellPlan::new(cfg, sensor, rpm);
    match data {
        CellData::Events { stream, origin, .. } => {
            let to_pattern = scene
                .homography
                .inverse()?
                .compose(&Homography::translation(origin.0 as f64, origin.1 as f64));
            let slice_us = (plan.slice_s * 1e6).round() as u64;
            let slice = EventSlice {
                t_start_us: plan.warm_us,
                t_end_us: plan.warm_us + slice_us,
                events: events_between(stream, plan.warm_us, plan.warm_us + slice_us).to_vec(),
            };
            let setup = WarpSetup {
                width: scene.width,
                height: scene.height,
                omega: scene.trajectory.omega(),
                center: scene.center(),
                t_ref_us: slice.t_mid_us(),
                signed: false,
                pre_transform: (!to_pattern.is_identity()).then_some(to_pattern),
            };
            let path = dir.join("iwe.pgm");
            calib::warp_events(&slice, &setup).write_pgm16(&path)?;
            Ok(path)
        }
        CellData::Aop(seq) => {
            let k = 1.min(seq.frames.len() - 1);
            let mag = aop::sd_magnitude(&seq.frames[k], &seq.config)?;
            let path = dir.join("edge.pgm");
            pgm::write_pgm16_scaled(&path, &mag)?;
            Ok(path)
        }
        CellData::Cop(frames) => {
            let path = dir.join("frame.pgm");
            if let Some(f) = frames.first() {
                pgm::write_pgm8(&path, &f.intensity)?;
            }
            Ok(path)
        }
    }
}
