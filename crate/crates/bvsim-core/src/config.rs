//! Run configuration: a TOML file describing the scene, the sensor lineup,
//! the sweep grid, and what to measure. Parsing is strict about unknown
//! keys so a typo cannot silently fall back to a default, and every value
//! can be overridden from the environment for scripted runs.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::value::{Table, Value};

use crate::aop::{AopConfig, CopConfig};
use crate::error::{Error, Result};
use crate::evs::{CutoffModel, DropPolicy, EvsConfig, Roi};
use crate::geometry::Homography;
use crate::scene::{PatternKind, PatternSpec, SceneModel, TurntableTrajectory};

pub const ENV_PREFIX: &str = "BVSIM_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneBlock,
    pub sensors: Vec<SensorBlock>,
    pub sweep: SweepBlock,
    pub tasks: TasksBlock,
    pub output: OutputBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            scene: SceneBlock::default(),
            sensors: Vec::new(),
            sweep: SweepBlock::default(),
            tasks: TasksBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneBlock {
    pub pattern: PatternKind,
    /// Pattern knobs; None keeps the pattern's own default.
    pub feature_scale: Option<f64>,
    pub contrast_levels: Option<Vec<f64>>,
    pub qr_modules: Option<u32>,
    pub checker_squares: Option<u32>,
    pub pattern_seed: Option<u64>,
    pub background: Option<f64>,
    pub edge_width: Option<f64>,
    pub width: usize,
    pub height: usize,
    /// Camera obliqueness; 0 keeps the view fronto-parallel.
    pub tilt_deg: f64,
    pub focal_px: f64,
    pub lux: Vec<f64>,
}

impl Default for SceneBlock {
    fn default() -> Self {
        SceneBlock {
            pattern: PatternKind::QrLike,
            feature_scale: None,
            contrast_levels: None,
            qr_modules: None,
            checker_squares: None,
            pattern_seed: None,
            background: None,
            edge_width: None,
            width: 128,
            height: 128,
            tilt_deg: 0.0,
            focal_px: 128.0,
            lux: vec![100.0, 2000.0],
        }
    }
}

impl SceneBlock {
    pub fn pattern_spec(&self) -> PatternSpec {
        let mut spec = PatternSpec::new(self.pattern);
        if let Some(v) = self.feature_scale {
            spec.feature_scale = v;
        }
        if let Some(v) = &self.contrast_levels {
            spec.contrast_levels = v.clone();
        }
        if let Some(v) = self.qr_modules {
            spec.qr_modules = v;
        }
        if let Some(v) = self.checker_squares {
            spec.checker_squares = v;
        }
        if let Some(v) = self.pattern_seed {
            spec.seed = v;
        }
        if let Some(v) = self.background {
            spec.background = v;
        }
        if let Some(v) = self.edge_width {
            spec.edge_width = v;
        }
        spec
    }

    pub fn scene_model(&self, rpm: f64, lux: f64) -> Result<SceneModel> {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let homography = if self.tilt_deg != 0.0 {
            Homography::oblique(cx, cy, self.tilt_deg, self.focal_px)
        } else {
            Homography::identity()
        };
        SceneModel::new(
            self.pattern_spec(),
            TurntableTrajectory::new(rpm, (cx, cy)),
            lux,
            homography,
            self.width,
            self.height,
            0.45 * self.width.min(self.height) as f64,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Evs,
    Aop,
    Cop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffChoice {
    /// Ideal pixels with unlimited bandwidth.
    Infinite,
    /// Illuminance-dependent first-order low-pass.
    LuxLowpass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorBlock {
    pub id: String,
    pub kind: SensorKind,
    pub contrast_threshold: f64,
    pub threshold_sigma: f64,
    pub refractory_us: u64,
    pub cutoff: CutoffChoice,
    /// Events per second; 0 disables the readout cap.
    pub rate_cap: f64,
    pub saturation_window_us: u64,
    pub drop_policy: DropPolicy,
    /// [x, y, width, height] crop applied before the rate cap.
    pub roi: Option<[u16; 4]>,
    pub background_rate: f64,
    /// Frame rate; None picks the kind's default (1515 difference
    /// sampling, 100 exposure frames).
    pub fps: Option<f64>,
    /// Quantizer resolution; None picks the kind's default (7 for
    /// difference planes, 8 for exposure frames).
    pub quant_bits: Option<u32>,
    pub quant_step: Option<f64>,
    pub sd_dirs: Option<[[i32; 2]; 2]>,
    pub exposure_s: f64,
}

impl Default for SensorBlock {
    fn default() -> Self {
        SensorBlock {
            id: String::new(),
            kind: SensorKind::Evs,
            contrast_threshold: 0.2,
            threshold_sigma: 0.0,
            refractory_us: 0,
            cutoff: CutoffChoice::Infinite,
            rate_cap: 0.0,
            saturation_window_us: 1000,
            drop_policy: DropPolicy::UniformRandom,
            roi: None,
            background_rate: 0.0,
            fps: None,
            quant_bits: None,
            quant_step: None,
            sd_dirs: None,
            exposure_s: 4e-3,
        }
    }
}

impl SensorBlock {
    pub fn evs_config(&self, seed: u64) -> Result<EvsConfig> {
        let cfg = EvsConfig {
            contrast_threshold: self.contrast_threshold,
            threshold_sigma: self.threshold_sigma,
            refractory_us: self.refractory_us,
            cutoff: match self.cutoff {
                CutoffChoice::Infinite => CutoffModel::Infinite,
                CutoffChoice::LuxLowpass => CutoffModel::lux_lowpass_default(),
            },
            rate_cap: (self.rate_cap > 0.0).then_some(self.rate_cap),
            saturation_window_us: self.saturation_window_us,
            drop_policy: self.drop_policy,
            roi: self.roi.map(|[x, y, width, height]| Roi { x, y, width, height }),
            background_activity_rate: self.background_rate,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn aop_config(&self, seed: u64) -> Result<AopConfig> {
        let cfg = AopConfig {
            fps: self.fps.unwrap_or(1515.0),
            quant_bits: self.quant_bits.unwrap_or(7),
            quant_step: self.quant_step,
            sd_dirs: self
                .sd_dirs
                .map(|[[ax, ay], [bx, by]]| [(ax, ay), (bx, by)])
                .unwrap_or(AopConfig::default().sd_dirs),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cop_config(&self) -> Result<CopConfig> {
        let cfg = CopConfig {
            fps: self.fps.unwrap_or(100.0),
            exposure_s: self.exposure_s,
            quant_bits: self.quant_bits.unwrap_or(8),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepBlock {
    pub rpm: Vec<f64>,
    /// Calibration / warp slice span, degrees of rotation.
    pub window_deg: f64,
    /// Event-flow accumulation window, degrees of rotation.
    pub flow_window_deg: f64,
    /// Trial length; the first revolution is treated as warm-up.
    pub revolutions: f64,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock {
            rpm: vec![50.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            window_deg: 15.0,
            flow_window_deg: 1.5,
            revolutions: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TasksBlock {
    pub thickness: bool,
    pub structure: bool,
    pub corners: bool,
    pub flow: bool,
    pub match_radius: f64,
    pub dedup_radius: f64,
}

impl Default for TasksBlock {
    fn default() -> Self {
        TasksBlock {
            thickness: true,
            structure: true,
            corners: true,
            flow: true,
            match_radius: 3.0,
            dedup_radius: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventsFormat {
    Csv,
    Bin,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputBlock {
    pub dir: String,
    /// Whether and how simulated event streams are persisted.
    pub events: EventsFormat,
    /// Dump intermediate images (renders, warped images, overlays) as PGM.
    pub images: bool,
    pub plots: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: "out".into(), events: EventsFormat::None, images: false, plots: true }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            // the config round-trips through TOML, whose integers stop at i64
            return Err(Error::config("seed: must fit in a signed 64-bit integer"));
        }
        if self.sensors.is_empty() {
            return Err(Error::config("sensors: at least one sensor is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, s) in self.sensors.iter().enumerate() {
            if s.id.is_empty() {
                return Err(Error::config(format!("sensors[{i}].id: must be non-empty")));
            }
            if !ids.insert(&s.id) {
                return Err(Error::config(format!("sensors[{i}].id: duplicate id `{}`", s.id)));
            }
            let seed = 0;
            let built = match s.kind {
                SensorKind::Evs => s.evs_config(seed).map(|_| ()),
                SensorKind::Aop => s.aop_config(seed).map(|_| ()),
                SensorKind::Cop => s.cop_config().map(|_| ()),
            };
            built.map_err(|e| Error::config(format!("sensors[{i}] (`{}`): {e}", s.id)))?;
            if let Some([x, y, w, h]) = s.roi {
                if w == 0
                    || h == 0
                    || x as usize + w as usize > self.scene.width
                    || y as usize + h as usize > self.scene.height
                {
                    return Err(Error::config(format!(
                        "sensors[{i}].roi: [{x},{y},{w},{h}] does not fit in {}x{}",
                        self.scene.width, self.scene.height
                    )));
                }
            }
        }
        if self.sweep.rpm.is_empty() {
            return Err(Error::config("sweep.rpm: must be non-empty"));
        }
        if !self.sweep.rpm.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("sweep.rpm: must be ascending"));
        }
        if self.sweep.rpm.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::config("sweep.rpm: values must be positive"));
        }
        if !(self.sweep.window_deg > 0.0 && self.sweep.window_deg <= 360.0) {
            return Err(Error::config("sweep.window_deg: must be in (0, 360]"));
        }
        if !(self.sweep.flow_window_deg > 0.0 && self.sweep.flow_window_deg <= 360.0) {
            return Err(Error::config("sweep.flow_window_deg: must be in (0, 360]"));
        }
        let angle_windowed = self.tasks.thickness || self.tasks.corners || self.tasks.flow
            || self.tasks.structure;
        if angle_windowed && !(self.sweep.revolutions >= 1.0) {
            return Err(Error::config(
                "sweep.revolutions: angle-windowed tasks need at least 1 revolution",
            ));
        }
        if self.scene.lux.is_empty() {
            return Err(Error::config("scene.lux: must be non-empty"));
        }
        if self.scene.lux.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::config("scene.lux: values must be positive"));
        }
        if self.scene.width < 16 || self.scene.height < 16 {
            return Err(Error::config("scene.width/height: minimum sensor size is 16"));
        }
        if !(self.tasks.match_radius > 0.0) || !(self.tasks.dedup_radius >= 0.0) {
            return Err(Error::config("tasks: radii must be positive"));
        }
        if self.output.dir.is_empty() {
            return Err(Error::config("output.dir: must be non-empty"));
        }
        // the scene itself must construct for every lux
        for &lux in &self.scene.lux {
            self.scene.scene_model(self.sweep.rpm[0], lux)?;
        }
        Ok(())
    }
}

fn allowed_keys(section: &str) -> &'static [&'static str] {
    match section {
        "" => &["seed", "scene", "sensors", "sweep", "tasks", "output"],
        "scene" => &[
            "pattern",
            "feature_scale",
            "contrast_levels",
            "qr_modules",
            "checker_squares",
            "pattern_seed",
            "background",
            "edge_width",
            "width",
            "height",
            "tilt_deg",
            "focal_px",
            "lux",
        ],
        "sensors" => &[
            "id",
            "kind",
            "contrast_threshold",
            "threshold_sigma",
            "refractory_us",
            "cutoff",
            "rate_cap",
            "saturation_window_us",
            "drop_policy",
            "roi",
            "background_rate",
            "fps",
            "quant_bits",
            "quant_step",
            "sd_dirs",
            "exposure_s",
        ],
        "sweep" => &["rpm", "window_deg", "flow_window_deg", "revolutions"],
        "tasks" => &["thickness", "structure", "corners", "flow", "match_radius", "dedup_radius"],
        "output" => &["dir", "events", "images", "plots"],
        _ => &[],
    }
}

fn collect_unknown_keys(table: &Table, out: &mut Vec<String>) {
    for (key, value) in table {
        if !allowed_keys("").contains(&key.as_str()) {
            out.push(key.clone());
            continue;
        }
        match (key.as_str(), value) {
            ("sensors", Value::Array(items)) => {
                for (i, item) in items.iter().enumerate() {
                    if let Value::Table(t) = item {
                        for k in t.keys() {
                            if !allowed_keys("sensors").contains(&k.as_str()) {
                                out.push(format!("sensors[{i}].{k}"));
                            }
                        }
                    }
                }
            }
            (section, Value::Table(t)) => {
                for k in t.keys() {
                    if !allowed_keys(section).contains(&k.as_str()) {
                        out.push(format!("{section}.{k}"));
                    }
                }
            }
            _ => {}
        }
    }
}

/// Environment overrides: `BVSIM_SWEEP__WINDOW_DEG=10` sets key
/// `sweep.window_deg` (double underscore separates path segments, names
/// are lowercased). Values parse as TOML, so lists are written
/// `BVSIM_SWEEP__RPM="[50, 300]"`; anything unparseable becomes a string.
pub fn env_overrides() -> Vec<(String, String)> {
    let mut vars: Vec<(String, String)> = std::env::vars()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    vars
}

fn parse_override_value(raw: &str) -> Value {
    if let Ok(t) = toml::from_str::<Table>(&format!("v = {raw}")) {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    Value::String(raw.to_string())
}

fn apply_overrides(table: &mut Table, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let path = key
            .strip_prefix(ENV_PREFIX)
            .ok_or_else(|| Error::config(format!("override `{key}` lacks the {ENV_PREFIX} prefix")))?;
        let segments: Vec<String> = path.split("__").map(str::to_lowercase).collect();
        if segments.is_empty() || segments.iter().any(String::is_empty) {
            return Err(Error::config(format!("override `{key}` has an empty path segment")));
        }
        let mut node = &mut *table;
        for seg in &segments[..segments.len() - 1] {
            let entry = node
                .entry(seg.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            node = entry.as_table_mut().ok_or_else(|| {
                Error::config(format!("override `{key}`: `{seg}` is not a table"))
            })?;
        }
        node.insert(segments.last().unwrap().clone(), parse_override_value(raw));
    }
    Ok(())
}

/// Parses config text, applies overrides, rejects unknown keys (or returns
/// them as warnings in lenient mode), and validates the result.
pub fn parse_config(
    text: &str,
    lenient: bool,
    overrides: &[(String, String)],
) -> Result<(RunConfig, Vec<String>)> {
    let mut table: Table =
        toml::from_str(text).map_err(|e| Error::parse(format!("config: {e}")))?;
    apply_overrides(&mut table, overrides)?;

    let mut unknown = Vec::new();
    collect_unknown_keys(&table, &mut unknown);
    if !unknown.is_empty() && !lenient {
        return Err(Error::config(format!(
            "unknown config keys: {}",
            unknown.join(", ")
        )));
    }
    let warnings: Vec<String> = unknown
        .into_iter()
        .map(|k| format!("ignoring unknown config key `{k}`"))
        .collect();

    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e| Error::parse(format!("config: {e}")))?;
    cfg.validate()?;
    Ok((cfg, warnings))
}

pub fn load_config(
    path: &Path,
    lenient: bool,
    overrides: &[(String, String)],
) -> Result<(RunConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, lenient, overrides)
}

/// Canonical serialization: field order is fixed by the struct layout, so
/// equal configs serialize identically.
pub fn save_config(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stable identifier over the parts of the config that determine the
/// simulated streams: seed, scene, sensors, and sweep. Output routing and
/// task toggles can change without orphaning recorded data.
pub fn config_hash(cfg: &RunConfig) -> u64 {
    #[derive(Serialize)]
    struct DataView<'a> {
        seed: u64,
        scene: &'a SceneBlock,
        sensors: &'a [SensorBlock],
        sweep: &'a SweepBlock,
    }
    let view = DataView {
        seed: cfg.seed,
        scene: &cfg.scene,
        sensors: &cfg.sensors,
        sweep: &cfg.sweep,
    };
    fnv1a64(toml::to_string(&view).expect("config serializes").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [scene]
        pattern = "checker_grid"

        [[sensors]]
        id = "evs"
        kind = "evs"

        [sweep]
        rpm = [50.0]
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let (cfg, warnings) = parse_config(MINIMAL, false, &[]).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.scene.width, 128);
        assert_eq!(cfg.sweep.window_deg, 15.0);
        assert_eq!(cfg.tasks.match_radius, 3.0);
        assert_eq!(cfg.sensors.len(), 1);
        assert_eq!(cfg.sensors[0].kind, SensorKind::Evs);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn unknown_keys_are_rejected_with_paths() {
        let text = format!("{MINIMAL}\n[outputt]\ndir = \"x\"\n");
        let err = parse_config(&text, false, &[]).unwrap_err();
        assert!(err.to_string().contains("outputt"), "{err}");

        let text = MINIMAL.replace("pattern =", "patern =");
        let err = parse_config(&text, false, &[]).unwrap_err();
        assert!(err.to_string().contains("scene.patern"), "{err}");
    }

    #[test]
    fn lenient_mode_downgrades_unknown_keys() {
        let text = MINIMAL.replace("pattern =", "patern =");
        let (cfg, warnings) = parse_config(&text, true, &[]).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("scene.patern"));
        // the typo'd key is ignored, so the default pattern applies
        assert_eq!(cfg.scene.pattern, PatternKind::QrLike);
    }

    #[test]
    fn descending_rpm_is_rejected() {
        let text = MINIMAL.replace("rpm = [50.0]", "rpm = [500.0, 50.0]");
        let err = parse_config(&text, false, &[]).unwrap_err();
        assert!(err.to_string().contains("ascending"), "{err}");
    }

    #[test]
    fn duplicate_sensor_ids_are_rejected() {
        let text = format!("{MINIMAL}\n[[sensors]]\nid = \"evs\"\nkind = \"aop\"\n");
        let err = parse_config(&text, false, &[]).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let text = MINIMAL.replace("rpm = [50.0]", "rpm = \"fast\"");
        let err = parse_config(&text, false, &[]).unwrap_err();
        assert!(err.to_string().contains("rpm"), "{err}");
    }

    #[test]
    fn config_round_trips_through_save() {
        let (cfg, _) = parse_config(MINIMAL, false, &[]).unwrap();
        let (back, _) = parse_config(&save_config(&cfg), false, &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn env_overrides_apply_by_path() {
        let overrides = vec![
            ("BVSIM_SEED".to_string(), "9".to_string()),
            ("BVSIM_SWEEP__RPM".to_string(), "[10.0, 20.0]".to_string()),
            ("BVSIM_OUTPUT__DIR".to_string(), "elsewhere".to_string()),
        ];
        let (cfg, _) = parse_config(MINIMAL, false, &overrides).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.sweep.rpm, vec![10.0, 20.0]);
        assert_eq!(cfg.output.dir, "elsewhere");
    }

    #[test]
    fn unknown_env_override_is_caught() {
        let overrides = vec![("BVSIM_SWEEEP__RPM".to_string(), "[10.0]".to_string())];
        let err = parse_config(MINIMAL, false, &overrides).unwrap_err();
        assert!(err.to_string().contains("sweeep"), "{err}");
    }

    #[test]
    fn hash_tracks_semantic_changes() {
        let (a, _) = parse_config(MINIMAL, false, &[]).unwrap();
        let (b, _) = parse_config(MINIMAL, false, &[]).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));

        let overrides = vec![("BVSIM_SEED".to_string(), "2".to_string())];
        let (c, _) = parse_config(MINIMAL, false, &overrides).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));

        // Rerouting the output must not orphan data recorded earlier.
        let overrides = vec![("BVSIM_OUTPUT__DIR".to_string(), "elsewhere".to_string())];
        let (d, _) = parse_config(MINIMAL, false, &overrides).unwrap();
        assert_eq!(config_hash(&a), config_hash(&d));
    }

    #[test]
    fn sensor_blocks_build_model_configs() {
        let text = r#"
            [scene]
            pattern = "radial_line"

            [[sensors]]
            id = "capped"
            kind = "evs"
            rate_cap = 1e6
            roi = [10, 10, 64, 64]

            [[sensors]]
            id = "dvs_lowlight"
            kind = "evs"
            cutoff = "lux_lowpass"
            threshold_sigma = 0.03

            [[sensors]]
            id = "aop"
            kind = "aop"

            [[sensors]]
            id = "cop"
            kind = "cop"

            [sweep]
            rpm = [50.0, 300.0]
        "#;
        let (cfg, _) = parse_config(text, false, &[]).unwrap();
        let evs = cfg.sensors[0].evs_config(7).unwrap();
        assert_eq!(evs.rate_cap, Some(1e6));
        assert_eq!(evs.roi.unwrap().width, 64);
        let dvs = cfg.sensors[1].evs_config(7).unwrap();
        assert!(matches!(dvs.cutoff, CutoffModel::LuxLowpass { .. }));
        let aop = cfg.sensors[2].aop_config(7).unwrap();
        assert_eq!(aop.fps, 1515.0);
        let cop = cfg.sensors[3].cop_config().unwrap();
        assert_eq!(cop.fps, 100.0);
        assert_eq!(cop.quant_bits, 8);
    }
}
