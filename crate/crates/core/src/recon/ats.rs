use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{GridSpec, ReconImage};
use crate::error::{ensure_arg, IsarError, Result};
use crate::field::{FieldConfig, FieldGradient, FieldParams};
use crate::forward::{RenderConfig, TapedScan};
use crate::geometry::RadarPose;
use crate::sim::Sinogram;

/// Mean squared error between a rendered and a measured range profile.
pub fn scan_loss(estimated: &[f64], measured: &[f64]) -> Result<f64> {
    if estimated.len() != measured.len() {
        return Err(IsarError::ShapeMismatch(format!("rows of length {} and {}", estimated.len(), measured.len())));
    }
    ensure_arg!(!estimated.is_empty(), "rows must be non-empty");
    Ok(estimated.iter().zip(measured).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / estimated.len() as f64)
}

/// Gradient of [`scan_loss`] with respect to `estimated`.
pub fn scan_loss_grad(estimated: &[f64], measured: &[f64]) -> Result<Vec<f64>> {
    if estimated.len() != measured.len() {
        return Err(IsarError::ShapeMismatch(format!("rows of length {} and {}", estimated.len(), measured.len())));
    }
    let k = 2.0 / estimated.len() as f64;
    Ok(estimated.iter().zip(measured).map(|(a, b)| k * (a - b)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub n_steps: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub scans_per_step: usize,
    pub seed: u64,
    /// Rotate each training fan by a random fraction of the ray spacing.
    pub fan_jitter: bool,
    /// Output-layer bias of a fresh field. Negative values start training
    /// from a nearly empty scene.
    pub output_bias_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_steps: 300,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            scans_per_step: 4,
            seed: 0,
            fan_jitter: true,
            output_bias_init: -5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.n_steps >= 1, "n_steps must be >= 1");
        ensure_arg!(self.learning_rate.is_finite() && self.learning_rate > 0.0, "learning rate must be positive");
        ensure_arg!(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0, "adam_beta1 must lie in (0, 1)");
        ensure_arg!(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0, "adam_beta2 must lie in (0, 1)");
        ensure_arg!(self.adam_eps > 0.0, "adam_eps must be positive");
        ensure_arg!(self.scans_per_step >= 1, "scans_per_step must be >= 1");
        ensure_arg!(self.output_bias_init.is_finite(), "output_bias_init must be finite");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves params and
/// state untouched and returns [`IsarError::Divergence`].
pub fn adam_step(params: &mut FieldParams, grad: &FieldGradient, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let n = params.len();
    if grad.data.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(IsarError::ShapeMismatch(format!(
            "params {n}, gradient {}, moments {}/{}",
            grad.data.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    if let Some(i) = grad.data.iter().position(|g| !g.is_finite()) {
        return Err(IsarError::Divergence(format!("non-finite gradient at parameter {i}")));
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    let p = params.as_mut_slice();
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let g = grad.data[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        p[i] -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Field value at every pixel center, unnormalized.
pub fn extract_image(params: &FieldParams, grid: &GridSpec) -> Result<ReconImage> {
    let centers = grid.pixel_centers();
    let pixels: Vec<f64> = centers.par_chunks(grid.width).map(|row| params.eval_many(row)).collect::<Result<Vec<_>>>()?.concat();
    ReconImage::from_pixels(*grid, pixels)
}

/// Per-step sampling of training scans: pose indices and fan phases.
fn step_plan(cfg: &TrainConfig, step: u64, n_poses: usize) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(step + 1);
    (0..cfg.scans_per_step)
        .map(|_| {
            let k = rng.random_range(0..n_poses);
            let phase = rng.random_range(-0.5..0.5);
            (k, if cfg.fan_jitter { phase } else { 0.0 })
        })
        .collect()
}

/// Loss and gradient of the mean scan loss over the given scans.
pub fn batch_loss_and_gradient(
    params: &FieldParams,
    s: &Sinogram,
    poses: &[RadarPose],
    render: &RenderConfig,
    scans: &[(usize, f64)],
) -> Result<(f64, FieldGradient)> {
    let axis = s.range_axis;
    let weight = 1.0 / scans.len() as f64;
    let parts: Vec<(f64, FieldGradient)> = scans
        .par_iter()
        .map(|&(k, phase)| {
            let taped = TapedScan::render(params, &poses[k], render, &axis, phase)?;
            let measured = s.row(k);
            let loss = scan_loss(taped.row(), measured)?;
            let mut d_row = scan_loss_grad(taped.row(), measured)?;
            d_row.iter_mut().for_each(|v| *v *= weight);
            let mut grad = FieldGradient::zeros(params.len());
            taped.backward(params, &d_row, &mut grad)?;
            Ok((loss * weight, grad))
        })
        .collect::<Result<_>>()?;
    // Fixed-order reduction keeps results independent of thread scheduling.
    let mut total = 0.0;
    let mut grad = FieldGradient::zeros(params.len());
    for (l, g) in &parts {
        total += l;
        grad.add_assign(g);
    }
    Ok((total, grad))
}

#[derive(Debug, Clone)]
pub struct AtsOutput {
    pub image: ReconImage,
    pub params: FieldParams,
    pub optimizer: AdamState,
    /// Mean scan loss of each step, in order.
    pub loss_history: Vec<f64>,
}

impl AtsOutput {
    /// Soft convergence check: the mean loss over the last `window / 2`
    /// steps does not exceed that of the `window / 2` steps before.
    pub fn trailing_window_settled(&self, window: usize) -> bool {
        let half = window / 2;
        let h = &self.loss_history;
        if half == 0 || h.len() < 2 * half {
            return true;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        mean(&h[h.len() - half..]) <= mean(&h[h.len() - 2 * half..h.len() - half])
    }
}

/// Optional hooks into the training loop.
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Called after every step with `(step, loss)`.
    pub on_step: Option<&'a mut dyn FnMut(usize, f64)>,
}

/// Seeded initial field with the configured output bias.
pub fn fresh_field(field_cfg: &FieldConfig, train: &TrainConfig) -> Result<FieldParams> {
    let mut params = FieldParams::init(*field_cfg, train.seed)?;
    params.bias_mut(crate::field::N_LAYERS - 1)[0] = train.output_bias_init;
    Ok(params)
}

/// Fit a fresh field to the sinogram and extract its image.
pub fn ats_reconstruct(
    s: &Sinogram,
    poses: &[RadarPose],
    grid: &GridSpec,
    field_cfg: &FieldConfig,
    render: &RenderConfig,
    train: &TrainConfig,
) -> Result<AtsOutput> {
    let params = fresh_field(field_cfg, train)?;
    let state = AdamState::new(params.len());
    ats_continue(s, poses, grid, params, state, render, train, TrainHooks::default())
}

/// Train from given parameters and optimizer state until `train.n_steps`
/// total steps have run. Step `t` draws its scans from stream `t` of the
/// seed, so resuming from a checkpoint repeats an uninterrupted run exactly.
#[allow(clippy::too_many_arguments)]
pub fn ats_continue(
    s: &Sinogram,
    poses: &[RadarPose],
    grid: &GridSpec,
    mut params: FieldParams,
    mut state: AdamState,
    render: &RenderConfig,
    train: &TrainConfig,
    mut hooks: TrainHooks<'_>,
) -> Result<AtsOutput> {
    train.validate()?;
    render.validate()?;
    if poses.len() != s.n_angles() {
        return Err(IsarError::ShapeMismatch(format!("{} poses for {} sinogram rows", poses.len(), s.n_angles())));
    }
    if state.first_moment.len() != params.len() {
        return Err(IsarError::ShapeMismatch("optimizer state does not match parameters".into()));
    }
    let mut history = Vec::with_capacity(train.n_steps);
    let mut last_finite = f64::NAN;
    for step in state.step as usize..train.n_steps {
        let scans = step_plan(train, step as u64, poses.len());
        let (loss, grad) = batch_loss_and_gradient(&params, s, poses, render, &scans).map_err(|e| match e {
            IsarError::Divergence(msg) => IsarError::Divergence(format!("step {step}: {msg}; last finite loss {last_finite}")),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(IsarError::Divergence(format!("step {step}: loss {loss}; last finite loss {last_finite}")));
        }
        adam_step(&mut params, &grad, &mut state, train)
            .map_err(|e| IsarError::Divergence(format!("step {step}: {e}; last finite loss {last_finite}")))?;
        last_finite = loss;
        history.push(loss);
        if let Some(f) = hooks.on_step.as_mut() {
            f(step, loss);
        }
    }
    let image = extract_image(&params, grid)?;
    Ok(AtsOutput { image, params, optimizer: state, loss_history: history })
}
