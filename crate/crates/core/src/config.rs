//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are errors.
//! Later assignments win, so command-line `--set key=value` overrides
//! apply on top of a file. An empty config describes the noise-free
//! single-target demo. [`ExperimentConfig::SCHEMA`] lists every key.

use std::path::{Path, PathBuf};

use crate::error::{IsarError, Result};
use crate::field::FieldConfig;
use crate::forward::RenderConfig;
use crate::geometry::{virtual_radar_positions, RadarPose};
use crate::recon::{BpMode, GridSpec, TrainConfig};
use crate::signal::{PulseParams, RangeAxis, DEFAULT_CENTER_FREQUENCY, DEFAULT_HALF_BANDWIDTH};
use crate::sim::{PointTarget, PointTargetScene};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ISAR_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum SceneSpec {
    Preset(String),
    Targets(Vec<PointTarget>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    pub scene_extent: f64,
    pub noise_variance: f64,
    pub n_angles: usize,
    pub standoff: f64,
    pub skip_deg: f64,
    pub arc_deg: f64,
    pub grid_size: usize,
    pub splat_radius_px: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_bins: usize,
    pub center_frequency: f64,
    pub half_bandwidth: f64,
    pub field: FieldConfig,
    pub render: RenderConfig,
    pub train: TrainConfig,
    pub bp_mode: BpMode,
    pub peak_separation_px: usize,
    pub peak_threshold: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let output_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("isar-out"));
        Self {
            scene: SceneSpec::Preset("one".into()),
            scene_extent: 0.5,
            noise_variance: 0.0,
            n_angles: 360,
            standoff: 1.0,
            skip_deg: 1.0,
            arc_deg: 360.0,
            grid_size: 128,
            splat_radius_px: 2.0,
            r_min: 0.25,
            r_max: 1.75,
            n_bins: 384,
            center_frequency: DEFAULT_CENTER_FREQUENCY,
            half_bandwidth: DEFAULT_HALF_BANDWIDTH,
            field: FieldConfig::default(),
            render: RenderConfig::default(),
            train: TrainConfig::default(),
            bp_mode: BpMode::default(),
            peak_separation_px: crate::metrics::DEFAULT_PEAK_SEPARATION_PX,
            peak_threshold: crate::metrics::DEFAULT_PEAK_THRESHOLD,
            seed: 0,
            output_dir,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| IsarError::Config(format!("bad value '{v}' for '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(IsarError::Config(format!("bad boolean '{v}' for '{key}'"))),
    }
}

/// `x:y[:amplitude]` entries separated by `;`.
fn parse_targets(v: &str) -> Result<Vec<PointTarget>> {
    v.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(IsarError::Config(format!("target '{item}' must be x:y or x:y:amplitude")));
            }
            let x = parse("targets", parts[0])?;
            let y = parse("targets", parts[1])?;
            let a = if parts.len() == 3 { parse("targets", parts[2])? } else { 1.0 };
            Ok(PointTarget::new(x, y, a))
        })
        .collect()
}

impl ExperimentConfig {
    /// Every key with its type and meaning.
    pub const SCHEMA: &'static [(&'static str, &'static str, &'static str)] = &[
        ("scene", "preset", "one | two | three | four"),
        ("targets", "list", "explicit targets x:y[:amp];... (overrides scene)"),
        ("scene_extent", "m", "half-width of the square scene"),
        ("noise_variance", "real", "Gaussian noise variance added to the sinogram"),
        ("n_angles", "count", "maximum number of poses"),
        ("standoff", "m", "radius of the aperture circle"),
        ("skip_deg", "deg", "angular spacing between poses"),
        ("arc_deg", "deg", "aperture arc"),
        ("grid_size", "px", "image width and height"),
        ("splat_radius_px", "px", "ground-truth Gaussian radius"),
        ("r_min", "m", "first range bin"),
        ("r_max", "m", "last range bin"),
        ("n_bins", "count", "range bins"),
        ("center_frequency", "Hz", "pulse carrier"),
        ("half_bandwidth", "Hz", "offset from carrier where the spectrum is 10 dB down"),
        ("hash_levels", "count", "hash encoding levels"),
        ("hash_base_resolution", "cells", "coarsest grid resolution"),
        ("hash_growth", "real", "per-level resolution factor"),
        ("hash_features", "count", "features per level"),
        ("hash_table_log2", "count", "log2 of the per-level table size"),
        ("hidden_width", "count", "hidden layer width"),
        ("beamwidth_deg", "deg", "ray fan width"),
        ("n_rays", "count", "rays per scan"),
        ("directivity_exponent", "real", "transmit pattern cos^n"),
        ("two_way_factor", "bool", "include the factor 2"),
        ("scatter_cosine", "real", "Lambertian cosine"),
        ("pulse_convolution", "bool", "convolve rendered rows with the pulse"),
        ("attenuation", "bool", "apply transmission"),
        ("n_steps", "count", "training steps"),
        ("learning_rate", "real", "Adam step size"),
        ("adam_beta1", "real", "Adam first moment decay"),
        ("adam_beta2", "real", "Adam second moment decay"),
        ("adam_eps", "real", "Adam stabilizer"),
        ("scans_per_step", "count", "scans per training step"),
        ("fan_jitter", "bool", "randomly rotate training fans"),
        ("output_bias_init", "real", "initial output-layer bias"),
        ("bp_mode", "signed|magnitude", "which backprojection image is scored"),
        ("peak_separation_px", "px", "peak suppression radius"),
        ("peak_threshold", "fraction", "peak threshold relative to max"),
        ("seed", "int", "seed for noise and training"),
        ("output_dir", "path", "where outputs go"),
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let k = key.trim();
        match k {
            "scene" => self.scene = SceneSpec::Preset(v.to_string()),
            "targets" => self.scene = SceneSpec::Targets(parse_targets(v)?),
            "scene_extent" => self.scene_extent = parse(k, v)?,
            "noise_variance" => self.noise_variance = parse(k, v)?,
            "n_angles" => self.n_angles = parse(k, v)?,
            "standoff" => self.standoff = parse(k, v)?,
            "skip_deg" => self.skip_deg = parse(k, v)?,
            "arc_deg" => self.arc_deg = parse(k, v)?,
            "grid_size" => self.grid_size = parse(k, v)?,
            "splat_radius_px" => self.splat_radius_px = parse(k, v)?,
            "r_min" => self.r_min = parse(k, v)?,
            "r_max" => self.r_max = parse(k, v)?,
            "n_bins" => self.n_bins = parse(k, v)?,
            "center_frequency" => self.center_frequency = parse(k, v)?,
            "half_bandwidth" => self.half_bandwidth = parse(k, v)?,
            "hash_levels" => self.field.encoding.n_levels = parse(k, v)?,
            "hash_base_resolution" => self.field.encoding.base_resolution = parse(k, v)?,
            "hash_growth" => self.field.encoding.growth_factor = parse(k, v)?,
            "hash_features" => self.field.encoding.features_per_level = parse(k, v)?,
            "hash_table_log2" => self.field.encoding.table_size_log2 = parse(k, v)?,
            "hidden_width" => self.field.hidden_width = parse(k, v)?,
            "beamwidth_deg" => self.render.beamwidth_deg = parse(k, v)?,
            "n_rays" => self.render.n_rays = parse(k, v)?,
            "directivity_exponent" => self.render.directivity_exponent = parse(k, v)?,
            "two_way_factor" => self.render.include_two_way_factor = parse_bool(k, v)?,
            "scatter_cosine" => self.render.scatter_cosine = parse(k, v)?,
            "pulse_convolution" => self.render_pulse_flag(parse_bool(k, v)?),
            "attenuation" => self.render.attenuation = parse_bool(k, v)?,
            "n_steps" => self.train.n_steps = parse(k, v)?,
            "learning_rate" => self.train.learning_rate = parse(k, v)?,
            "adam_beta1" => self.train.adam_beta1 = parse(k, v)?,
            "adam_beta2" => self.train.adam_beta2 = parse(k, v)?,
            "adam_eps" => self.train.adam_eps = parse(k, v)?,
            "scans_per_step" => self.train.scans_per_step = parse(k, v)?,
            "fan_jitter" => self.train.fan_jitter = parse_bool(k, v)?,
            "output_bias_init" => self.train.output_bias_init = parse(k, v)?,
            "bp_mode" => self.bp_mode = v.parse().map_err(|e: IsarError| IsarError::Config(e.to_string()))?,
            "peak_separation_px" => self.peak_separation_px = parse(k, v)?,
            "peak_threshold" => self.peak_threshold = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(IsarError::Config(format!("unknown config key '{k}'"))),
        }
        Ok(())
    }

    fn render_pulse_flag(&mut self, on: bool) {
        self.render.pulse = on.then(crate::signal::default_pulse);
    }

    /// Apply `key = value` lines.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| IsarError::Config(format!("line {}: expected key = value, got '{raw}'", n + 1)))?;
            self.set(k, v).map_err(|e| IsarError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| IsarError::Config(format!("override '{kv}' must be key=value")))?;
        self.set(k, v)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IsarError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every key with its current value, in schema order. Parses back to `self`.
    pub fn to_text(&self) -> String {
        let b = |x: bool| if x { "true" } else { "false" };
        let mut lines = Vec::new();
        let mut push = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        match &self.scene {
            SceneSpec::Preset(name) => push("scene", name.clone()),
            SceneSpec::Targets(ts) => push(
                "targets",
                ts.iter().map(|t| format!("{}:{}:{}", t.position.x, t.position.y, t.amplitude)).collect::<Vec<_>>().join(";"),
            ),
        }
        push("scene_extent", self.scene_extent.to_string());
        push("noise_variance", self.noise_variance.to_string());
        push("n_angles", self.n_angles.to_string());
        push("standoff", self.standoff.to_string());
        push("skip_deg", self.skip_deg.to_string());
        push("arc_deg", self.arc_deg.to_string());
        push("grid_size", self.grid_size.to_string());
        push("splat_radius_px", self.splat_radius_px.to_string());
        push("r_min", self.r_min.to_string());
        push("r_max", self.r_max.to_string());
        push("n_bins", self.n_bins.to_string());
        push("center_frequency", self.center_frequency.to_string());
        push("half_bandwidth", self.half_bandwidth.to_string());
        let e = &self.field.encoding;
        push("hash_levels", e.n_levels.to_string());
        push("hash_base_resolution", e.base_resolution.to_string());
        push("hash_growth", e.growth_factor.to_string());
        push("hash_features", e.features_per_level.to_string());
        push("hash_table_log2", e.table_size_log2.to_string());
        push("hidden_width", self.field.hidden_width.to_string());
        let r = &self.render;
        push("beamwidth_deg", r.beamwidth_deg.to_string());
        push("n_rays", r.n_rays.to_string());
        push("directivity_exponent", r.directivity_exponent.to_string());
        push("two_way_factor", b(r.include_two_way_factor).into());
        push("scatter_cosine", r.scatter_cosine.to_string());
        push("pulse_convolution", b(r.pulse.is_some()).into());
        push("attenuation", b(r.attenuation).into());
        let t = &self.train;
        push("n_steps", t.n_steps.to_string());
        push("learning_rate", t.learning_rate.to_string());
        push("adam_beta1", t.adam_beta1.to_string());
        push("adam_beta2", t.adam_beta2.to_string());
        push("adam_eps", t.adam_eps.to_string());
        push("scans_per_step", t.scans_per_step.to_string());
        push("fan_jitter", b(t.fan_jitter).into());
        push("output_bias_init", t.output_bias_init.to_string());
        push("bp_mode", self.bp_mode.name().into());
        push("peak_separation_px", self.peak_separation_px.to_string());
        push("peak_threshold", self.peak_threshold.to_string());
        push("seed", self.seed.to_string());
        push("output_dir", self.output_dir.display().to_string());
        lines.join("\n") + "\n"
    }

    pub fn scene(&self) -> Result<PointTargetScene> {
        match &self.scene {
            SceneSpec::Preset(name) => PointTargetScene::preset_by_name(name, self.scene_extent),
            SceneSpec::Targets(ts) => PointTargetScene::new(ts.clone(), self.scene_extent),
        }
    }

    pub fn poses(&self) -> Result<Vec<RadarPose>> {
        virtual_radar_positions(self.n_angles, self.standoff, self.skip_deg, self.arc_deg)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::square(self.grid_size, self.scene_extent)
    }

    pub fn range_axis(&self) -> Result<RangeAxis> {
        RangeAxis::new(self.r_min, self.r_max, self.n_bins)
    }

    pub fn pulse(&self) -> Result<PulseParams> {
        PulseParams::new(self.center_frequency, PulseParams::tau0_for_bandwidth(self.half_bandwidth))
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig { extent: self.scene_extent, ..self.field }
    }

    /// Render config with the pulse filled in from the pulse keys.
    pub fn render_config(&self) -> Result<RenderConfig> {
        let mut r = self.render;
        if r.pulse.is_some() {
            r.pulse = Some(self.pulse()?);
        }
        Ok(r)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    /// Check every derived object can be built.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: IsarError| match e {
            IsarError::Config(_) => e,
            other => IsarError::Config(other.to_string()),
        };
        self.scene().map_err(wrap)?;
        self.poses().map_err(wrap)?;
        self.grid().map_err(wrap)?;
        self.range_axis().map_err(wrap)?;
        self.render_config().map_err(wrap)?.validate().map_err(wrap)?;
        self.field_config().validate().map_err(wrap)?;
        self.train_config().validate().map_err(wrap)?;
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(IsarError::Config(format!("noise_variance must be >= 0, got {}", self.noise_variance)));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return Err(IsarError::Config("peak_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
