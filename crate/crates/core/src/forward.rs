//! Differentiable radar measurement model.
//!
//! For one pose the beam is discretized into a fan of rays and every ray is
//! sampled where it crosses each constant time-of-flight sphere. A range bin
//! collects
//!
//! ```text
//! h_i = (1 / n_rays) * sum_j  b_T(ray_j) * 2 * T_ij * sigma_ij * cos_ij
//! T_ij = prod_{k < i} exp(-|sigma_kj| * |l_{k+1} - l_k|)
//! ```
//!
//! and the rendered range profile is `h` convolved with the transmit pulse
//! (optional), which puts rendered and simulated rows in the same units.
//! Scene points outside the field's domain are empty space (`sigma = 0`).

use rayon::prelude::*;

use crate::error::{ensure_arg, IsarError, Result};
use crate::field::{FieldGradient, FieldParams, GradientTape};
use crate::geometry::{ray_fan, sample_sphere_points, Point3, RadarPose};
use crate::signal::{default_pulse, pulse_at_range_offset, PulseParams, RangeAxis};
use crate::sim::Sinogram;

/// Pulse kernels are truncated at this many envelope standard deviations.
const KERNEL_HALF_WIDTH_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub beamwidth_deg: f64,
    pub n_rays: usize,
    /// Transmit directivity `b_T = cos(angle from boresight)^exponent`.
    pub directivity_exponent: f64,
    /// Multiply contributions by 2 for the shared transmit/receive path.
    pub include_two_way_factor: bool,
    /// Cosine in the Lambertian term. Monostatic sphere sampling makes it 1.
    pub scatter_cosine: f64,
    /// Convolve the range histogram with this pulse; `None` returns the
    /// bare histogram.
    pub pulse: Option<PulseParams>,
    /// When false, transmission is forced to 1 (linear test mode).
    pub attenuation: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            beamwidth_deg: 90.0,
            n_rays: 64,
            directivity_exponent: 0.0,
            include_two_way_factor: true,
            scatter_cosine: 1.0,
            pulse: Some(default_pulse()),
            attenuation: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(
            self.beamwidth_deg > 0.0 && self.beamwidth_deg <= 180.0,
            "beamwidth must lie in (0, 180], got {}",
            self.beamwidth_deg
        );
        ensure_arg!(self.n_rays >= 1, "need at least one ray");
        ensure_arg!(
            self.directivity_exponent.is_finite() && self.directivity_exponent >= 0.0,
            "directivity exponent must be >= 0"
        );
        ensure_arg!((-1.0..=1.0).contains(&self.scatter_cosine), "scatter cosine must lie in [-1, 1]");
        Ok(())
    }

    fn path_factor(&self) -> f64 {
        if self.include_two_way_factor {
            2.0
        } else {
            1.0
        }
    }
}

/// Something that assigns a scattering amplitude to scene points.
pub trait ScatterField: Sync {
    /// Points outside the domain are treated as empty space.
    fn contains(&self, _p: Point3) -> bool {
        true
    }

    fn sigma_many(&self, points: &[Point3]) -> Result<Vec<f64>>;
}

impl ScatterField for FieldParams {
    fn contains(&self, p: Point3) -> bool {
        let e = self.config().extent;
        p.x.abs() <= e && p.y.abs() <= e
    }

    fn sigma_many(&self, points: &[Point3]) -> Result<Vec<f64>> {
        self.eval_many(points)
    }
}

/// Adapter for closed-form fields.
pub struct FnField<F>(pub F);

impl<F: Fn(Point3) -> f64 + Sync> ScatterField for FnField<F> {
    fn sigma_many(&self, points: &[Point3]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|&p| (self.0)(p)).collect())
    }
}

/// Transmission along one ray: `T_0 = 1`, `T_i = T_{i-1} exp(-|sigma_{i-1}| |l_i - l_{i-1}|)`.
pub fn transmission(sigmas: &[f64], depths: &[f64]) -> Result<Vec<f64>> {
    if sigmas.len() != depths.len() {
        return Err(IsarError::ShapeMismatch(format!(
            "{} amplitudes but {} depths",
            sigmas.len(),
            depths.len()
        )));
    }
    ensure_arg!(depths.windows(2).all(|w| w[1] > w[0]), "depths must be strictly increasing");
    let mut out = Vec::with_capacity(sigmas.len());
    let mut t = 1.0;
    for i in 0..sigmas.len() {
        out.push(t);
        if i + 1 < sigmas.len() {
            t *= (-sigmas[i].abs() * (depths[i + 1] - depths[i]).abs()).exp();
        }
    }
    Ok(out)
}

/// Lambertian scattered intensity `sigma * cosine * 2 T`.
#[inline]
pub fn lambertian(sigma: f64, transmission: f64, ray_cosine: f64) -> f64 {
    sigma * ray_cosine * 2.0 * transmission
}

/// Sampled pulse `s(2 dr / c)` at integer multiples of the bin spacing.
/// Index `half + m` holds offset `m` bins.
pub fn pulse_kernel(p: &PulseParams, axis: &RangeAxis) -> Vec<f64> {
    let dr = axis.spacing();
    let reach = KERNEL_HALF_WIDTH_SIGMAS * p.tau0 * crate::signal::SPEED_OF_LIGHT / 2.0;
    let half = (reach / dr).ceil() as isize;
    (-half..=half).map(|m| pulse_at_range_offset(m as f64 * dr, p)).collect()
}

/// `out_i = sum_m h_{i-m} k_m`, same length as `h`.
fn convolve_same(h: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = h.len() as isize;
    let half = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; h.len()];
    for (j, &hv) in h.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        let j = j as isize;
        let lo = (j - half).max(0);
        let hi = (j + half).min(n - 1);
        for i in lo..=hi {
            out[i as usize] += hv * kernel[(i - j + half) as usize];
        }
    }
    out
}

/// Adjoint of [`convolve_same`].
fn correlate_same(g: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = g.len() as isize;
    let half = (kernel.len() / 2) as isize;
    (0..n)
        .map(|j| {
            let lo = (j - half).max(0);
            let hi = (j + half).min(n - 1);
            (lo..=hi).map(|i| g[i as usize] * kernel[(i - j + half) as usize]).sum()
        })
        .collect()
}

/// Amplitudes on a pose's ray x bin sample lattice together with the
/// geometry the renderer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaLattice {
    pub n_rays: usize,
    pub n_bins: usize,
    /// Row-major `[ray][bin]`.
    pub sigma: Vec<f64>,
    /// Row-major `[ray][bin]`, strictly increasing along a ray.
    pub depths: Vec<f64>,
    /// Directivity weight per ray.
    pub ray_weights: Vec<f64>,
}

/// Forward result for one scan, keeping what the adjoint needs.
#[derive(Debug, Clone)]
pub struct ScanRender {
    pub row: Vec<f64>,
    pub histogram: Vec<f64>,
    lattice: SigmaLattice,
    transmission: Vec<f64>,
    kernel: Option<Vec<f64>>,
    scale: f64,
    cosine: f64,
    attenuation: bool,
}

/// Render a range profile from amplitudes given directly on the sample lattice.
pub fn render_lattice(lattice: SigmaLattice, cfg: &RenderConfig, axis: &RangeAxis) -> Result<ScanRender> {
    cfg.validate()?;
    let SigmaLattice { n_rays, n_bins, .. } = lattice;
    if lattice.sigma.len() != n_rays * n_bins || lattice.depths.len() != n_rays * n_bins {
        return Err(IsarError::ShapeMismatch("lattice arrays do not match n_rays x n_bins".into()));
    }
    if lattice.ray_weights.len() != n_rays || n_bins != axis.n_bins() {
        return Err(IsarError::ShapeMismatch("lattice does not match ray count or range axis".into()));
    }
    if let Some(v) = lattice.sigma.iter().find(|v| !v.is_finite()) {
        return Err(IsarError::Divergence(format!("non-finite scattering amplitude {v}")));
    }

    let scale = cfg.path_factor() / n_rays as f64;
    let mut transmission = vec![1.0; n_rays * n_bins];
    let mut histogram = vec![0.0; n_bins];
    for j in 0..n_rays {
        let s = &lattice.sigma[j * n_bins..(j + 1) * n_bins];
        let l = &lattice.depths[j * n_bins..(j + 1) * n_bins];
        let t = &mut transmission[j * n_bins..(j + 1) * n_bins];
        if cfg.attenuation {
            t.copy_from_slice(&transmission_unchecked(s, l));
        }
        let w = lattice.ray_weights[j] * scale * cfg.scatter_cosine;
        for i in 0..n_bins {
            histogram[i] += w * t[i] * s[i];
        }
    }
    let kernel = cfg.pulse.map(|p| pulse_kernel(&p, axis));
    let row = match &kernel {
        Some(k) => convolve_same(&histogram, k),
        None => histogram.clone(),
    };
    Ok(ScanRender {
        row,
        histogram,
        lattice,
        transmission,
        kernel,
        scale,
        cosine: cfg.scatter_cosine,
        attenuation: cfg.attenuation,
    })
}

fn transmission_unchecked(s: &[f64], l: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    let mut optical_depth = 0.0f64;
    for i in 0..s.len() {
        out.push((-optical_depth).exp());
        if i + 1 < s.len() {
            optical_depth += s[i].abs() * (l[i + 1] - l[i]).abs();
        }
    }
    out
}

impl ScanRender {
    pub fn lattice(&self) -> &SigmaLattice {
        &self.lattice
    }

    /// Gradient of `sum_i d_row[i] * row[i]` with respect to every lattice amplitude.
    pub fn sigma_adjoint(&self, d_row: &[f64]) -> Result<Vec<f64>> {
        let n_bins = self.lattice.n_bins;
        if d_row.len() != n_bins {
            return Err(IsarError::ShapeMismatch(format!("row gradient has {} bins, expected {n_bins}", d_row.len())));
        }
        let g = match &self.kernel {
            Some(k) => correlate_same(d_row, k),
            None => d_row.to_vec(),
        };
        let mut out = vec![0.0; self.lattice.sigma.len()];
        for j in 0..self.lattice.n_rays {
            let w = self.lattice.ray_weights[j] * self.scale * self.cosine;
            let s = &self.lattice.sigma[j * n_bins..(j + 1) * n_bins];
            let l = &self.lattice.depths[j * n_bins..(j + 1) * n_bins];
            let t = &self.transmission[j * n_bins..(j + 1) * n_bins];
            let o = &mut out[j * n_bins..(j + 1) * n_bins];
            // Suffix sum of downstream contributions that sigma_m shadows.
            let mut tail = 0.0;
            for m in (0..n_bins).rev() {
                o[m] = w * t[m] * g[m];
                if self.attenuation && m + 1 < n_bins {
                    let sign = if s[m] >= 0.0 { 1.0 } else { -1.0 };
                    o[m] -= sign * (l[m + 1] - l[m]).abs() * tail;
                }
                tail += w * t[m] * s[m] * g[m];
            }
        }
        Ok(out)
    }
}

/// The sample lattice of one pose: points, depths and directivity weights.
#[derive(Debug, Clone)]
pub struct PoseSamples {
    pub points: Vec<Point3>,
    pub depths: Vec<f64>,
    pub ray_weights: Vec<f64>,
    pub n_rays: usize,
    pub n_bins: usize,
}

/// Sample a pose's beam; `fan_phase` shifts the fan by a fraction of the ray spacing.
pub fn pose_samples(pose: &RadarPose, cfg: &RenderConfig, axis: &RangeAxis, fan_phase: f64) -> Result<PoseSamples> {
    cfg.validate()?;
    let bundle = ray_fan(pose, cfg.beamwidth_deg, cfg.n_rays, fan_phase)?;
    let grid = sample_sphere_points(pose, &bundle, axis);
    let ray_weights =
        bundle.offsets.iter().map(|a| if cfg.directivity_exponent == 0.0 { 1.0 } else { a.cos().max(0.0).powf(cfg.directivity_exponent) }).collect();
    Ok(PoseSamples { points: grid.points, depths: grid.depths, ray_weights, n_rays: grid.n_rays, n_bins: grid.n_bins })
}

fn lattice_from_field<F: ScatterField + ?Sized>(field: &F, samples: PoseSamples) -> Result<(SigmaLattice, Vec<usize>, Vec<Point3>)> {
    let inside: Vec<usize> = (0..samples.points.len()).filter(|&k| field.contains(samples.points[k])).collect();
    let pts: Vec<Point3> = inside.iter().map(|&k| samples.points[k]).collect();
    let mut sigma = vec![0.0; samples.points.len()];
    if !pts.is_empty() {
        let values = field.sigma_many(&pts)?;
        for (&k, v) in inside.iter().zip(values) {
            sigma[k] = v;
        }
    }
    let lattice = SigmaLattice {
        n_rays: samples.n_rays,
        n_bins: samples.n_bins,
        sigma,
        depths: samples.depths,
        ray_weights: samples.ray_weights,
    };
    Ok((lattice, inside, pts))
}

/// Render one range profile from a scattering field.
pub fn render_scan<F: ScatterField + ?Sized>(field: &F, pose: &RadarPose, cfg: &RenderConfig, axis: &RangeAxis) -> Result<Vec<f64>> {
    let samples = pose_samples(pose, cfg, axis, 0.0)?;
    let (lattice, _, _) = lattice_from_field(field, samples)?;
    Ok(render_lattice(lattice, cfg, axis)?.row)
}

/// Render every pose; rows follow the order of `poses`.
pub fn render_sinogram<F: ScatterField + ?Sized>(
    field: &F,
    poses: &[RadarPose],
    cfg: &RenderConfig,
    axis: &RangeAxis,
) -> Result<Sinogram> {
    ensure_arg!(!poses.is_empty(), "need at least one pose");
    let rows: Vec<Vec<f64>> = poses.par_iter().map(|p| render_scan(field, p, cfg, axis)).collect::<Result<_>>()?;
    let angles = poses.iter().map(|p| p.aperture_angle_deg).collect();
    Sinogram::new(rows.concat(), angles, *axis)
}

/// A rendered scan of the neural field with its gradient tape.
#[derive(Debug)]
pub struct TapedScan {
    pub render: ScanRender,
    tape: GradientTape,
    inside: Vec<usize>,
}

impl TapedScan {
    pub fn render(params: &FieldParams, pose: &RadarPose, cfg: &RenderConfig, axis: &RangeAxis, fan_phase: f64) -> Result<Self> {
        let samples = pose_samples(pose, cfg, axis, fan_phase)?;
        let inside: Vec<usize> = (0..samples.points.len()).filter(|&k| params.contains(samples.points[k])).collect();
        let pts: Vec<Point3> = inside.iter().map(|&k| samples.points[k]).collect();
        let (values, tape) = params.eval_batch(&pts)?;
        let mut sigma = vec![0.0; samples.points.len()];
        for (&k, v) in inside.iter().zip(values) {
            sigma[k] = v;
        }
        let lattice = SigmaLattice {
            n_rays: samples.n_rays,
            n_bins: samples.n_bins,
            sigma,
            depths: samples.depths,
            ray_weights: samples.ray_weights,
        };
        let render = render_lattice(lattice, cfg, axis)?;
        Ok(Self { render, tape, inside })
    }

    pub fn tape(&self) -> &GradientTape {
        &self.tape
    }

    pub fn row(&self) -> &[f64] {
        &self.render.row
    }

    /// Accumulate the parameter gradient of `sum_i d_row[i] * row[i]`.
    pub fn backward(self, params: &FieldParams, d_row: &[f64], grad: &mut FieldGradient) -> Result<()> {
        let d_sigma = self.render.sigma_adjoint(d_row)?;
        let upstream: Vec<f64> = self.inside.iter().map(|&k| d_sigma[k]).collect();
        params.backpropagate_into(self.tape, &upstream, grad)
    }
}
