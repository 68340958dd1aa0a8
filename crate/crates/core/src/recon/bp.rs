use rayon::prelude::*;

use super::{GridSpec, ReconImage};
use crate::error::{IsarError, Result};
use crate::geometry::RadarPose;
use crate::signal::RangeAxis;
use crate::sim::Sinogram;

/// Linear interpolation of `row` at `range`; zero outside the axis.
#[inline]
pub fn interp_row(row: &[f64], axis: &RangeAxis, range: f64) -> f64 {
    match axis.fractional_index(range) {
        None => 0.0,
        Some(f) => {
            let i = (f.floor() as usize).min(row.len() - 2);
            let t = f - i as f64;
            row[i] * (1.0 - t) + row[i + 1] * t
        }
    }
}

/// Delay-and-sum image before the magnitude is taken: every pixel sums each
/// pose's row at the pixel's range from that pose.
pub fn backproject_coherent(s: &Sinogram, poses: &[RadarPose], grid: &GridSpec) -> Result<ReconImage> {
    if poses.len() != s.n_angles() {
        return Err(IsarError::ShapeMismatch(format!("{} poses for {} sinogram rows", poses.len(), s.n_angles())));
    }
    let axis = s.range_axis;
    let mut pixels = vec![0.0; grid.len()];
    pixels.par_chunks_mut(grid.width).enumerate().for_each(|(row, out)| {
        for (col, px) in out.iter_mut().enumerate() {
            let p = grid.pixel_center(row, col);
            *px = poses.iter().zip(s.rows()).map(|(pose, data)| interp_row(data, &axis, p.distance(pose.origin))).sum();
        }
    });
    Ok(ReconImage { grid: *grid, pixels })
}

/// Magnitude of [`backproject_coherent`].
pub fn backproject(s: &Sinogram, poses: &[RadarPose], grid: &GridSpec) -> Result<ReconImage> {
    Ok(backproject_coherent(s, poses, grid)?.abs())
}

/// Which BP image the pipeline scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BpMode {
    /// The coherent sum itself.
    #[default]
    Signed,
    /// Its absolute value.
    Magnitude,
}

impl BpMode {
    pub fn run(self, s: &Sinogram, poses: &[RadarPose], grid: &GridSpec) -> Result<ReconImage> {
        match self {
            BpMode::Signed => backproject_coherent(s, poses, grid),
            BpMode::Magnitude => backproject(s, poses, grid),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BpMode::Signed => "signed",
            BpMode::Magnitude => "magnitude",
        }
    }
}

impl std::str::FromStr for BpMode {
    type Err = IsarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(BpMode::Signed),
            "magnitude" => Ok(BpMode::Magnitude),
            other => Err(IsarError::Config(format!("unknown bp mode '{other}' (signed | magnitude)"))),
        }
    }
}
