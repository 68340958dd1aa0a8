//! Synthetic sinograms of ideal point scatterers.
//!
//! Each target contributes a copy of the transmit pulse delayed by its two-way
//! range. Free-space path loss is not modelled, so rows add linearly and the
//! renderer in [`crate::forward`] sees the same units.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{ensure_arg, IsarError, Result};
use crate::geometry::{Point3, RadarPose};
use crate::recon::{GridSpec, ReconImage};
use crate::signal::{pulse_at_range_offset, PulseParams, RangeAxis};

/// Side of the centered square whose corners hold the preset targets, meters.
pub const PRESET_SQUARE_SIDE: f64 = 0.3;

/// Upper bound on scene size accepted by [`PointTargetScene::new`].
pub const MAX_TARGETS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTarget {
    pub position: Point3,
    pub amplitude: f64,
}

impl PointTarget {
    pub fn new(x: f64, y: f64, amplitude: f64) -> Self {
        Self { position: Point3::planar(x, y), amplitude }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointTargetScene {
    pub targets: Vec<PointTarget>,
    /// Half-width of the square scene, meters.
    pub extent: f64,
}

impl PointTargetScene {
    pub fn new(targets: Vec<PointTarget>, extent: f64) -> Result<Self> {
        ensure_arg!(extent.is_finite() && extent > 0.0, "scene extent must be positive, got {extent}");
        ensure_arg!(
            !targets.is_empty() && targets.len() <= MAX_TARGETS,
            "scene needs between 1 and {MAX_TARGETS} targets, got {}",
            targets.len()
        );
        for t in &targets {
            ensure_arg!(
                t.amplitude.is_finite() && t.amplitude >= 0.0,
                "target amplitude must be finite and non-negative, got {}",
                t.amplitude
            );
            ensure_arg!(t.position.is_finite(), "target position must be finite");
            if t.position.x.abs() > extent || t.position.y.abs() > extent {
                return Err(IsarError::OutOfDomain { x: t.position.x, y: t.position.y });
            }
        }
        Ok(Self { targets, extent })
    }

    /// `count` unit targets (1 to 4) on the corners of a centered square,
    /// filled in the order: lower-left, upper-right, lower-right, upper-left.
    pub fn preset(count: usize, extent: f64) -> Result<Self> {
        ensure_arg!((1..=4).contains(&count), "preset scenes hold 1 to 4 targets, got {count}");
        let h = PRESET_SQUARE_SIDE / 2.0;
        let corners = [(-h, -h), (h, h), (h, -h), (-h, h)];
        let targets = corners[..count].iter().map(|&(x, y)| PointTarget::new(x, y, 1.0)).collect();
        Self::new(targets, extent)
    }

    pub fn preset_by_name(name: &str, extent: f64) -> Result<Self> {
        let count = match name {
            "one" => 1,
            "two" => 2,
            "three" => 3,
            "four" => 4,
            other => return Err(IsarError::Config(format!("unknown scene preset '{other}'"))),
        };
        Self::preset(count, extent)
    }
}

/// Range profiles stacked over aperture angle; row `k` belongs to `angles_deg[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub data: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub range_axis: RangeAxis,
}

impl Sinogram {
    pub fn new(data: Vec<f64>, angles_deg: Vec<f64>, range_axis: RangeAxis) -> Result<Self> {
        let expected = angles_deg.len() * range_axis.n_bins();
        if data.len() != expected {
            return Err(IsarError::ShapeMismatch(format!(
                "sinogram has {} samples, expected {} angles x {} bins",
                data.len(),
                angles_deg.len(),
                range_axis.n_bins()
            )));
        }
        ensure_arg!(data.iter().all(|v| v.is_finite()), "sinogram entries must be finite");
        Ok(Self { data, angles_deg, range_axis })
    }

    pub fn zeros(angles_deg: Vec<f64>, range_axis: RangeAxis) -> Self {
        let data = vec![0.0; angles_deg.len() * range_axis.n_bins()];
        Self { data, angles_deg, range_axis }
    }

    pub fn n_angles(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn n_bins(&self) -> usize {
        self.range_axis.n_bins()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.n_bins();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_bins())
    }
}

/// One received range profile.
pub fn simulate_scan(scene: &PointTargetScene, pose: &RadarPose, p: &PulseParams, axis: &RangeAxis) -> Vec<f64> {
    let mut row = vec![0.0; axis.n_bins()];
    for target in &scene.targets {
        let range = pose.origin.distance(target.position);
        for (i, v) in row.iter_mut().enumerate() {
            *v += target.amplitude * pulse_at_range_offset(axis.radius(i) - range, p);
        }
    }
    row
}

pub fn simulate_sinogram(
    scene: &PointTargetScene,
    poses: &[RadarPose],
    p: &PulseParams,
    axis: &RangeAxis,
) -> Result<Sinogram> {
    ensure_arg!(!poses.is_empty(), "need at least one pose");
    let data: Vec<f64> = poses.par_iter().flat_map_iter(|pose| simulate_scan(scene, pose, p, axis)).collect();
    let angles = poses.iter().map(|p| p.aperture_angle_deg).collect();
    Ok(Sinogram { data, angles_deg: angles, range_axis: *axis })
}

/// Add i.i.d. zero-mean Gaussian noise of the given variance.
///
/// Row `k` draws from its own ChaCha stream `(seed, k)`, so the output does
/// not depend on how rows are scheduled across threads.
pub fn add_noise(s: &Sinogram, variance: f64, seed: u64) -> Result<Sinogram> {
    ensure_arg!(variance.is_finite() && variance >= 0.0, "noise variance must be non-negative, got {variance}");
    let mut out = s.clone();
    if variance == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| IsarError::InvalidArgument(e.to_string()))?;
    let n_bins = s.n_bins();
    out.data.par_chunks_mut(n_bins).enumerate().for_each(|(k, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        for v in row.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    });
    Ok(out)
}

/// Reference image: a unit-height Gaussian of standard deviation
/// `splat_radius_px` pixels at every target, summed and clipped to `[0, 1]`.
pub fn ground_truth_image(scene: &PointTargetScene, grid: &GridSpec, splat_radius_px: f64) -> Result<ReconImage> {
    ensure_arg!(splat_radius_px > 0.0, "splat radius must be positive, got {splat_radius_px}");
    for t in &scene.targets {
        if !grid.contains(t.position) {
            return Err(IsarError::OutOfDomain { x: t.position.x, y: t.position.y });
        }
    }
    let sigma = splat_radius_px * grid.pitch();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut img = ReconImage::zeros(*grid);
    for row in 0..grid.height {
        for col in 0..grid.width {
            let p = grid.pixel_center(row, col);
            let v: f64 = scene
                .targets
                .iter()
                .filter(|t| t.amplitude > 0.0)
                .map(|t| {
                    let d = p - t.position;
                    (-(d.x * d.x + d.y * d.y) * inv).exp()
                })
                .sum();
            img.set(row, col, v.clamp(0.0, 1.0));
        }
    }
    Ok(img)
}
