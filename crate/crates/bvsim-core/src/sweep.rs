//! Sweep orchestration: every (sensor, rpm, lux) cell runs as an
//! independent job on a bounded pool, and the report is assembled in cell
//! order so output bytes never depend on scheduling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{config_hash, save_config, EventsFormat, RunConfig, SensorKind};
use crate::error::{Error, Result};
use crate::metrics::normalize_by_first;
use crate::pipeline::{self, CellMetrics};
use crate::plots;

pub const REPORT_COLUMNS: &[&str] = &[
    "sensor",
    "kind",
    "rpm",
    "lux",
    "seed",
    "status",
    "event_rate",
    "drop_fraction",
    "omega_gt",
    "omega_est",
    "omega_rel_err",
    "omega_low_confidence",
    "thickness_px",
    "tss",
    "gm",
    "var",
    "gradvar",
    "tss_norm",
    "gm_norm",
    "var_norm",
    "gradvar_norm",
    "n_detected",
    "n_gt",
    "n_matched",
    "precision",
    "recall",
    "f1",
    "omega_flow",
    "flow_rel_err",
    "flow_valid_frac",
    "corner_method",
    "flow_method",
    "config_hash",
];

#[derive(Clone, Debug)]
pub struct ReportRow {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub rpm: f64,
    pub lux: f64,
    pub seed: u64,
    pub status: String,
    pub metrics: CellMetrics,
    /// Structure metrics relative to the slowest rpm in this row's
    /// (sensor, lux) group: tss, gm, var, gradvar.
    pub norm: [Option<f64>; 4],
}

impl ReportRow {
    pub fn ok(&self) -> bool {
        !self.status.starts_with("error")
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub report_path: PathBuf,
    pub rows: Vec<ReportRow>,
    pub n_failed: usize,
    pub plot_paths: Vec<PathBuf>,
}

/// Cells in report order: sensors, then rpm ascending, then lux.
pub fn enumerate_cells(cfg: &RunConfig) -> Vec<(usize, f64, f64)> {
    let mut cells = Vec::new();
    for i in 0..cfg.sensors.len() {
        for &rpm in &cfg.sweep.rpm {
            for &lux in &cfg.scene.lux {
                cells.push((i, rpm, lux));
            }
        }
    }
    cells
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))
}

fn prepare_out_dir(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    // Also serves as the writability probe demanded before any
    // simulation starts.
    fs::write(out_dir.join("config.toml"), save_config(cfg))?;
    Ok(())
}

/// Simulate and analyze every cell; persist streams according to the
/// output block; write report.csv and, when enabled, the plots.
pub fn run_sweep(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<SweepOutcome> {
    prepare_out_dir(cfg, out_dir)?;
    let cells = enumerate_cells(cfg);
    let persist = cfg.output.events != EventsFormat::None;
    let pool = worker_pool(jobs)?;
    let rows: Vec<ReportRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, rpm, lux)| {
                let sensor = &cfg.sensors[i];
                let cell_dir =
                    out_dir.join("cells").join(pipeline::cell_dir_name(&sensor.id, rpm, lux));
                let run = || -> Result<pipeline::CellResult> {
                    let data = pipeline::simulate_cell(cfg, sensor, rpm, lux)?;
                    if persist {
                        pipeline::write_cell(cfg, sensor, rpm, lux, &data, &cell_dir)?;
                    }
                    if cfg.output.images {
                        pipeline::emit_cell_image(cfg, sensor, rpm, lux, &data, &cell_dir)?;
                    }
                    pipeline::analyze_cell(cfg, sensor, rpm, lux, &data)
                };
                row_from_outcome(cfg, i, rpm, lux, run())
            })
            .collect()
    });
    finish(cfg, out_dir, rows)
}

/// Simulate and persist only; no analysis, no report.
pub fn run_simulate(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<usize> {
    prepare_out_dir(cfg, out_dir)?;
    let cells = enumerate_cells(cfg);
    let pool = worker_pool(jobs)?;
    let written: Vec<Result<()>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, rpm, lux)| {
                let sensor = &cfg.sensors[i];
                let cell_dir =
                    out_dir.join("cells").join(pipeline::cell_dir_name(&sensor.id, rpm, lux));
                let data = pipeline::simulate_cell(cfg, sensor, rpm, lux)?;
                pipeline::write_cell(cfg, sensor, rpm, lux, &data, &cell_dir)?;
                if cfg.output.images {
                    pipeline::emit_cell_image(cfg, sensor, rpm, lux, &data, &cell_dir)?;
                }
                Ok(())
            })
            .collect()
    });
    let mut n = 0;
    for w in written {
        w?;
        n += 1;
    }
    Ok(n)
}

/// Analyze previously persisted cells; write report.csv and plots.
pub fn run_evaluate(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<SweepOutcome> {
    fs::create_dir_all(out_dir)?;
    let cells = enumerate_cells(cfg);
    let expect_hash = format!("{:016x}", config_hash(cfg));
    let pool = worker_pool(jobs)?;
    let rows: Vec<ReportRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, rpm, lux)| {
                let sensor = &cfg.sensors[i];
                let cell_dir =
                    out_dir.join("cells").join(pipeline::cell_dir_name(&sensor.id, rpm, lux));
                let run = || -> Result<pipeline::CellResult> {
                    let (manifest, data) = pipeline::read_cell(&cell_dir)?;
                    let mut res = pipeline::analyze_cell(cfg, sensor, rpm, lux, &data)?;
                    if manifest.config_hash != expect_hash {
                        res.notes.push(format!(
                            "data recorded under config {}, analyzing under {}",
                            manifest.config_hash, expect_hash
                        ));
                    }
                    Ok(res)
                };
                row_from_outcome(cfg, i, rpm, lux, run())
            })
            .collect()
    });
    finish(cfg, out_dir, rows)
}

fn row_from_outcome(
    cfg: &RunConfig,
    sensor_idx: usize,
    rpm: f64,
    lux: f64,
    outcome: Result<pipeline::CellResult>,
) -> ReportRow {
    let sensor = &cfg.sensors[sensor_idx];
    match outcome {
        Ok(res) => {
            let status = if res.notes.is_empty() {
                "ok".to_string()
            } else {
                format!("ok ({})", res.notes.join("; "))
            };
            ReportRow {
                sensor_id: res.sensor_id,
                kind: res.kind,
                rpm,
                lux,
                seed: res.seed,
                status,
                metrics: res.metrics,
                norm: [None; 4],
            }
        }
        Err(e) => ReportRow {
            sensor_id: sensor.id.clone(),
            kind: sensor.kind,
            rpm,
            lux,
            seed: pipeline::cell_seed(cfg.seed, &sensor.id, rpm, lux),
            status: format!("error: {e}"),
            metrics: CellMetrics::default(),
            norm: [None; 4],
        },
    }
}

fn finish(cfg: &RunConfig, out_dir: &Path, mut rows: Vec<ReportRow>) -> Result<SweepOutcome> {
    normalize_rows(&mut rows);
    let report_path = out_dir.join("report.csv");
    write_report(&report_path, cfg, &rows)?;
    let plot_paths = if cfg.output.plots {
        plots::emit_plots(&report_path, &out_dir.join("plots"))?
    } else {
        Vec::new()
    };
    let n_failed = rows.iter().filter(|r| !r.ok()).count();
    Ok(SweepOutcome { report_path, rows, n_failed, plot_paths })
}

/// Anchor the structure metrics of every (sensor, lux) group at that
/// group's slowest rpm.
fn normalize_rows(rows: &mut [ReportRow]) {
    let mut groups: Vec<(String, f64)> = Vec::new();
    for r in rows.iter() {
        let key = (r.sensor_id.clone(), r.lux);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (sensor_id, lux) in groups {
        for (mi, pick) in [
            (0, (|m: &CellMetrics| m.tss) as fn(&CellMetrics) -> Option<f64>),
            (1, |m: &CellMetrics| m.gm),
            (2, |m: &CellMetrics| m.var),
            (3, |m: &CellMetrics| m.gradvar),
        ] {
            let mut idx = Vec::new();
            let mut series = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                if r.sensor_id == sensor_id && r.lux == lux {
                    if let Some(v) = pick(&r.metrics) {
                        idx.push(i);
                        series.push((r.rpm, v));
                    }
                }
            }
            for (&i, (_, norm)) in idx.iter().zip(normalize_by_first(&series)) {
                rows[i].norm[mi] = norm;
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6}"),
        _ => String::new(),
    }
}

fn fmt_count(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report(path: &Path, cfg: &RunConfig, rows: &[ReportRow]) -> Result<()> {
    let hash = format!("{:016x}", config_hash(cfg));
    let mut w = Vec::new();
    writeln!(w, "{}", REPORT_COLUMNS.join(","))?;
    for r in rows {
        let kind = match r.kind {
            SensorKind::Evs => "evs",
            SensorKind::Aop => "aop",
            SensorKind::Cop => "cop",
        };
        let corner_method = match (cfg.tasks.corners, r.kind) {
            (false, _) => "",
            (true, SensorKind::Evs) => "arc_star",
            (true, _) => "shi_tomasi",
        };
        let flow_method = match (cfg.tasks.flow, r.kind) {
            (true, SensorKind::Evs) | (true, SensorKind::Aop) => "lk-window",
            _ => "",
        };
        let m = &r.metrics;
        let fields = [
            csv_field(&r.sensor_id),
            kind.to_string(),
            format!("{}", r.rpm),
            format!("{}", r.lux),
            r.seed.to_string(),
            csv_field(&r.status),
            fmt_opt(m.event_rate),
            fmt_opt(m.drop_fraction),
            fmt_opt(Some(m.omega_gt)),
            fmt_opt(m.omega_est),
            fmt_opt(m.omega_rel_err),
            m.omega_low_confidence.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt(m.thickness_px),
            fmt_opt(m.tss),
            fmt_opt(m.gm),
            fmt_opt(m.var),
            fmt_opt(m.gradvar),
            fmt_opt(r.norm[0]),
            fmt_opt(r.norm[1]),
            fmt_opt(r.norm[2]),
            fmt_opt(r.norm[3]),
            fmt_count(m.n_detected),
            fmt_count(m.n_gt),
            fmt_count(m.n_matched),
            fmt_opt(m.precision),
            fmt_opt(m.recall),
            fmt_opt(m.f1),
            fmt_opt(m.omega_flow),
            fmt_opt(m.flow_rel_err),
            fmt_opt(m.flow_valid_frac),
            corner_method.to_string(),
            flow_method.to_string(),
            hash.clone(),
        ];
        writeln!(w, "{}", fields.join(","))?;
    }
    fs::write(path, w)?;
    Ok(())
}

/// Reads a report back as header + string rows; quoted fields are
/// unescaped.
pub fn read_report(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty report"))?;
    let header: Vec<String> = split_csv_line(header);
    let rows = lines.filter(|l| !l.is_empty()).map(split_csv_line).collect();
    Ok((header, rows))
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if field.is_empty() => quoted = true,
            ',' if !quoted => out.push(std::mem::take(&mut field)),
            _ => field.push(c),
        }
    }
    out.push(field);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tiny_cfg() -> RunConfig {
        let text = r#"
            seed = 11
            [scene]
            pattern = "checker_grid"
            width = 64
            height = 64
            lux = [1000.0]
            [[sensors]]
            id = "ideal"
            kind = "evs"
            [sweep]
            rpm = [100.0, 200.0]
            [tasks]
            corners = false
            flow = false
            [output]
            plots = true
        "#;
        parse_config(text, false, &[]).unwrap().0
    }

    #[test]
    fn two_cells_two_rows_normalized_anchor_is_one() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&cfg, dir.path(), 2).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.n_failed, 0);
        let anchor = out.rows.iter().find(|r| r.rpm == 100.0).unwrap();
        for v in anchor.norm {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(out.report_path.exists());
        assert!(!out.plot_paths.is_empty());
    }

    #[test]
    fn sweep_is_byte_deterministic() {
        let cfg = tiny_cfg();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let o1 = run_sweep(&cfg, d1.path(), 1).unwrap();
        let o2 = run_sweep(&cfg, d2.path(), 3).unwrap();
        let r1 = fs::read(&o1.report_path).unwrap();
        let r2 = fs::read(&o2.report_path).unwrap();
        assert_eq!(r1, r2);
        for (a, b) in o1.plot_paths.iter().zip(&o2.plot_paths) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
    }

    #[test]
    fn csv_round_trips_quoting() {
        let line = split_csv_line("a,\"x, y\",\"he said \"\"hi\"\"\",b");
        assert_eq!(line, vec!["a", "x, y", "he said \"hi\"", "b"]);
    }

    #[test]
    fn evaluate_reuses_simulated_cells() {
        let mut cfg = tiny_cfg();
        cfg.output.events = EventsFormat::Bin;
        cfg.output.plots = false;
        let dir = tempfile::tempdir().unwrap();
        let swept = run_sweep(&cfg, dir.path(), 2).unwrap();
        let from_sweep = fs::read_to_string(&swept.report_path).unwrap();
        let reread = run_evaluate(&cfg, dir.path(), 2).unwrap();
        assert_eq!(swept.rows.len(), reread.rows.len());
        let from_evaluate = fs::read_to_string(&reread.report_path).unwrap();
        assert_eq!(from_sweep, from_evaluate);
    }
}
