//! End-to-end experiment steps shared by the command line and the tests:
//! simulate, reconstruct both ways, score, and run parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, SceneSpec};
use crate::error::{IsarError, Result};
use crate::field::write_checkpoint;
use crate::geometry::RadarPose;
use crate::io::{save_sinogram, write_atomic, write_loss_csv, write_pgm, write_raw_image};
use crate::metrics::{compare, MetricReport};
use crate::recon::{ats_continue, fresh_field, AdamState, AtsOutput, ReconImage, TrainHooks};
use crate::sim::{add_noise, ground_truth_image, simulate_sinogram, Sinogram};

/// Clean sinogram plus noise per the config.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Sinogram> {
    let scene = cfg.scene()?;
    let poses = cfg.poses()?;
    let clean = simulate_sinogram(&scene, &poses, &cfg.pulse()?, &cfg.range_axis()?)?;
    add_noise(&clean, cfg.noise_variance, cfg.seed)
}

/// Poses matching the rows of a sinogram, on the configured circle.
pub fn poses_for(s: &Sinogram, standoff: f64) -> Result<Vec<RadarPose>> {
    s.angles_deg.iter().map(|&a| RadarPose::on_circle(a, standoff)).collect()
}

pub fn ground_truth(cfg: &ExperimentConfig) -> Result<ReconImage> {
    ground_truth_image(&cfg.scene()?, &cfg.grid()?, cfg.splat_radius_px)
}

pub fn run_bp(cfg: &ExperimentConfig, s: &Sinogram) -> Result<ReconImage> {
    let poses = poses_for(s, cfg.standoff)?;
    cfg.bp_mode.run(s, &poses, &cfg.grid()?)
}

/// ATS from a fresh field, or from `resume` (params and optimizer state).
pub fn run_ats(
    cfg: &ExperimentConfig,
    s: &Sinogram,
    resume: Option<(crate::field::FieldParams, AdamState)>,
    hooks: TrainHooks<'_>,
) -> Result<AtsOutput> {
    let poses = poses_for(s, cfg.standoff)?;
    let render = cfg.render_config()?;
    let train = cfg.train_config();
    let (params, state) = match resume {
        Some(p) => p,
        None => {
            let params = fresh_field(&cfg.field_config(), &train)?;
            let n = params.len();
            (params, AdamState::new(n))
        }
    };
    ats_continue(s, &poses, &cfg.grid()?, params, state, &render, &train, hooks)
}

pub fn score(cfg: &ExperimentConfig, img: &ReconImage, truth: &ReconImage) -> Result<MetricReport> {
    compare(img, truth, cfg.peak_separation_px, cfg.peak_threshold)
}

/// Write `<stem>.pgm` and `<stem>.f32img`.
pub fn save_image(dir: &Path, stem: &str, img: &ReconImage, db_floor: Option<f64>) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.pgm")), |w| write_pgm(w, img, db_floor))?;
    write_atomic(&dir.join(format!("{stem}.f32img")), |w| write_raw_image(w, img))
}

pub fn save_ats_outputs(dir: &Path, stem: &str, out: &AtsOutput, db_floor: Option<f64>) -> Result<()> {
    save_image(dir, stem, &out.image, db_floor)?;
    write_atomic(&dir.join(format!("{stem}.loss.csv")), |w| write_loss_csv(w, &out.loss_history))?;
    write_atomic(&dir.join(format!("{stem}.ckpt")), |w| write_checkpoint(w, &out.params, Some(&out.optimizer)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Noise,
    Skip,
    Partial,
    Reflectors,
}

impl std::str::FromStr for SweepKind {
    type Err = IsarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(Self::Noise),
            "skip" => Ok(Self::Skip),
            "partial" => Ok(Self::Partial),
            "reflectors" => Ok(Self::Reflectors),
            other => Err(IsarError::Config(format!("unknown sweep kind '{other}' (noise | skip | partial | reflectors)"))),
        }
    }
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Skip => "skip",
            Self::Partial => "partial",
            Self::Reflectors => "reflectors",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Self::Noise => vec![0.0, 0.05, 0.1, 0.2],
            Self::Skip => vec![1.0, 10.0, 20.0, 30.0],
            Self::Partial => vec![90.0, 180.0, 270.0, 360.0],
            Self::Reflectors => vec![1.0, 2.0, 3.0, 4.0],
        }
    }

    /// The base config with this kind's parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            Self::Noise => cfg.noise_variance = value,
            Self::Skip => cfg.skip_deg = value,
            Self::Partial => cfg.arc_deg = value,
            Self::Reflectors => {
                let names = ["one", "two", "three", "four"];
                let idx = value as usize;
                if value.fract() != 0.0 || !(1..=4).contains(&idx) {
                    return Err(IsarError::Config(format!("reflector count must be 1..4, got {value}")));
                }
                cfg.scene = SceneSpec::Preset(names[idx - 1].into());
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: SweepKind,
    pub value: f64,
    pub method: &'static str,
    pub outcome: std::result::Result<MetricReport, String>,
    pub runtime_s: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "kind,value,method,status,psnr_db,mse,ssim,peak_count,peak_positions,runtime_s";

    pub fn to_csv(&self) -> String {
        match &self.outcome {
            Ok(r) => format!("{},{},{},ok,{},{:.3}", self.kind.name(), self.value, self.method, r.to_csv_row(), self.runtime_s),
            Err(e) => {
                let msg = e.replace([',', '\n'], " ");
                format!("{},{},{},error: {msg},,,,,,{:.3}", self.kind.name(), self.value, self.method, self.runtime_s)
            }
        }
    }
}

fn cell_dir(out: &Path, kind: SweepKind, value: f64) -> PathBuf {
    out.join(format!("{}_{}", kind.name(), value))
}

/// Simulate, BP, ATS and score one cell. Always yields two rows.
fn run_cell(base: &ExperimentConfig, kind: SweepKind, value: f64, out: &Path) -> [SweepRow; 2] {
    let row = |method, outcome, runtime_s| SweepRow { kind, value, method, outcome, runtime_s };
    let prepared = (|| -> Result<_> {
        let cfg = kind.apply(base, value)?;
        cfg.validate()?;
        let dir = cell_dir(out, kind, value);
        fs::create_dir_all(&dir)?;
        let s = simulate(&cfg)?;
        save_sinogram(&dir.join("sinogram.isgm"), &s)?;
        let truth = ground_truth(&cfg)?;
        Ok((cfg, dir, s, truth))
    })();
    let (cfg, dir, s, truth) = match prepared {
        Ok(p) => p,
        Err(e) => return [row("bp", Err(e.to_string()), 0.0), row("ats", Err(e.to_string()), 0.0)],
    };
    let t = Instant::now();
    let bp = run_bp(&cfg, &s).and_then(|img| {
        save_image(&dir, "bp", &img, None)?;
        score(&cfg, &img, &truth)
    });
    let bp_time = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ats = run_ats(&cfg, &s, None, TrainHooks::default()).and_then(|out| {
        save_ats_outputs(&dir, "ats", &out, None)?;
        score(&cfg, &out.image, &truth)
    });
    let ats_time = t.elapsed().as_secs_f64();
    [row("bp", bp.map_err(|e| e.to_string()), bp_time), row("ats", ats.map_err(|e| e.to_string()), ats_time)]
}

/// Run every cell with up to `workers` cells in parallel and write
/// `<out>/<kind>.csv`. Rows come back in parameter order.
pub fn run_sweep(base: &ExperimentConfig, kind: SweepKind, values: &[f64], workers: usize, out: &Path) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| IsarError::Config(format!("cannot start {workers} workers: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| values.par_iter().map(|&v| run_cell(base, kind, v, out)).collect::<Vec<_>>()).into_iter().flatten().collect();
    let mut csv = String::from(SweepRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    write_atomic(&out.join(format!("{}.csv", kind.name())), |w| w.write_all(csv.as_bytes()).map_err(Into::into))?;
    Ok(rows)
}
