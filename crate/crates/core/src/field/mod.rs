//! Trainable scene representation.
//!
//! A position in the scene plane is hash-encoded at several resolutions and
//! passed through four fully connected layers. Hidden layers use ReLU and
//! the output goes through softplus, so the predicted scattering amplitude
//! is real and non-negative.
//!
//! All parameters live in one flat `Vec<f64>` in declaration order:
//! the level tables (level, slot, feature), then for each layer its weight
//! matrix (`fan_in x fan_out`, row-major) followed by its bias.

mod checkpoint;
mod encoding;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use encoding::{hash_index, HashEncoding, HashEncodingConfig, HASH_PRIMES};

use crate::error::{ensure_arg, IsarError, Result};
use crate::geometry::Point3;

/// Number of fully connected layers in the network.
pub const N_LAYERS: usize = 4;

/// Half-width of the uniform hash-table initialization.
pub const TABLE_INIT_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    pub encoding: HashEncodingConfig,
    pub hidden_width: usize,
    /// Half-width of the square scene the field is defined over, meters.
    pub extent: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { encoding: HashEncodingConfig::default(), hidden_width: 32, extent: 0.5 }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        ensure_arg!(self.hidden_width >= 1, "hidden width must be positive");
        ensure_arg!(self.extent.is_finite() && self.extent > 0.0, "field extent must be positive");
        Ok(())
    }

    /// `(fan_in, fan_out)` of each layer.
    pub fn layer_shapes(&self) -> [(usize, usize); N_LAYERS] {
        let e = self.encoding.output_width();
        let h = self.hidden_width;
        [(e, h), (h, h), (h, h), (h, 1)]
    }

    pub fn parameter_count(&self) -> usize {
        self.encoding.parameter_count() + self.layer_shapes().iter().map(|(i, o)| i * o + o).sum::<usize>()
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    weights: [usize; N_LAYERS],
    biases: [usize; N_LAYERS],
    shapes: [(usize, usize); N_LAYERS],
}

impl Layout {
    fn of(cfg: &FieldConfig) -> Self {
        let shapes = cfg.layer_shapes();
        let mut offset = cfg.encoding.parameter_count();
        let mut weights = [0; N_LAYERS];
        let mut biases = [0; N_LAYERS];
        for (l, (i, o)) in shapes.iter().enumerate() {
            weights[l] = offset;
            offset += i * o;
            biases[l] = offset;
            offset += o;
        }
        Self { weights, biases, shapes }
    }

    fn weight<'a>(&self, data: &'a [f64], l: usize) -> ArrayView2<'a, f64> {
        let (i, o) = self.shapes[l];
        ArrayView2::from_shape((i, o), &data[self.weights[l]..self.weights[l] + i * o]).expect("layer shape")
    }

    fn bias<'a>(&self, data: &'a [f64], l: usize) -> &'a [f64] {
        &data[self.biases[l]..self.biases[l] + self.shapes[l].1]
    }
}

/// Network and hash-table parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    config: FieldConfig,
    encoding: HashEncoding,
    data: Vec<f64>,
}

/// Gradient with the same flat layout as [`FieldParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub data: Vec<f64>,
}

impl FieldGradient {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn add_assign(&mut self, other: &FieldGradient) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Everything the reverse pass needs from one batched forward pass.
/// Single-use: consumed by [`FieldParams::backpropagate`].
#[derive(Debug)]
pub struct GradientTape {
    batch: usize,
    rows: Vec<u32>,
    weights: Vec<f64>,
    /// Inputs to each layer: encoding, then three hidden activations.
    inputs: Vec<Array2<f64>>,
    /// Pre-softplus outputs.
    logits: Vec<f64>,
}

impl GradientTape {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Which hidden ReLU units are active, flattened over layers and samples.
    /// Two tapes with equal patterns lie on the same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.inputs[1..].iter().flat_map(|a| a.iter().map(|&v| v > 0.0)).collect()
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl FieldParams {
    /// Seeded initialization: tables uniform in `[-1e-4, 1e-4]`, weights
    /// Glorot-uniform, biases zero.
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let layout = Layout::of(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_tables = config.encoding.parameter_count();
        for v in &mut params.data[..n_tables] {
            *v = rng.random_range(-TABLE_INIT_SCALE..=TABLE_INIT_SCALE);
        }
        for (l, (i, o)) in layout.shapes.iter().enumerate() {
            let limit = (6.0 / (i + o) as f64).sqrt();
            for v in &mut params.data[layout.weights[l]..layout.weights[l] + i * o] {
                *v = rng.random_range(-limit..=limit);
            }
        }
        Ok(params)
    }

    pub fn zeros(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let encoding = HashEncoding::new(config.encoding, config.extent)?;
        Ok(Self { config, encoding, data: vec![0.0; config.parameter_count()] })
    }

    /// Rebuild from a flat parameter vector.
    pub fn from_vec(config: FieldConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.data.len() {
            return Err(IsarError::ShapeMismatch(format!(
                "parameter vector has {} entries, config needs {}",
                data.len(),
                p.data.len()
            )));
        }
        ensure_arg!(data.iter().all(|v| v.is_finite()), "parameters must be finite");
        p.data = data;
        Ok(p)
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn encoding(&self) -> &HashEncoding {
        &self.encoding
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tables(&self) -> &[f64] {
        &self.data[..self.config.encoding.parameter_count()]
    }

    pub fn tables_mut(&mut self) -> &mut [f64] {
        let n = self.config.encoding.parameter_count();
        &mut self.data[..n]
    }

    /// Mutable bias of layer `l` (0-based).
    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let layout = Layout::of(&self.config);
        let o = layout.shapes[l].1;
        &mut self.data[layout.biases[l]..layout.biases[l] + o]
    }

    /// Mutable weight matrix of layer `l`, row-major `fan_in x fan_out`.
    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let layout = Layout::of(&self.config);
        let (i, o) = layout.shapes[l];
        &mut self.data[layout.weights[l]..layout.weights[l] + i * o]
    }

    /// Scattering amplitude at one position.
    pub fn eval(&self, position: Point3) -> Result<f64> {
        Ok(self.eval_many(&[position])?[0])
    }

    /// Forward pass without recording a tape.
    pub fn eval_many(&self, positions: &[Point3]) -> Result<Vec<f64>> {
        let (sigmas, _) = self.forward(positions, false)?;
        Ok(sigmas)
    }

    /// Batched forward pass that also records a tape for [`Self::backpropagate`].
    pub fn eval_batch(&self, positions: &[Point3]) -> Result<(Vec<f64>, GradientTape)> {
        let (sigmas, tape) = self.forward(positions, true)?;
        Ok((sigmas, tape.expect("tape requested")))
    }

    fn forward(&self, positions: &[Point3], record: bool) -> Result<(Vec<f64>, Option<GradientTape>)> {
        let n = positions.len();
        let cfg = &self.config.encoding;
        let layout = Layout::of(&self.config);
        let corners = cfg.n_levels * 4;

        let mut rows = vec![0u32; n * corners];
        let mut weights = vec![0.0; n * corners];
        let mut x = Array2::<f64>::zeros((n, cfg.output_width()));
        let tables = self.tables();
        for (k, p) in positions.iter().enumerate() {
            let r = &mut rows[k * corners..(k + 1) * corners];
            let w = &mut weights[k * corners..(k + 1) * corners];
            self.encoding.plan(*p, r, w)?;
            let out = x.row_mut(k).into_slice().expect("contiguous row");
            encoding::gather(cfg, tables, r, w, out);
        }

        let mut inputs = Vec::with_capacity(N_LAYERS);
        let mut act = x;
        for l in 0..N_LAYERS - 1 {
            let mut z = dense(&act, layout.weight(&self.data, l), layout.bias(&self.data, l));
            z.mapv_inplace(|v| v.max(0.0));
            if record {
                inputs.push(std::mem::replace(&mut act, z));
            } else {
                act = z;
            }
        }
        let z = dense(&act, layout.weight(&self.data, N_LAYERS - 1), layout.bias(&self.data, N_LAYERS - 1));
        let logits: Vec<f64> = z.into_raw_vec_and_offset().0;
        let sigmas: Vec<f64> = logits.iter().map(|&v| softplus(v)).collect();
        if let Some((k, v)) = sigmas.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(IsarError::Divergence(format!("field output {v} at batch index {k}")));
        }
        let tape = record.then(|| {
            inputs.push(act);
            GradientTape { batch: n, rows, weights, inputs, logits }
        });
        Ok((sigmas, tape))
    }

    /// Reverse pass: gradient of `sum_k upstream[k] * sigma_k` with respect
    /// to every parameter.
    pub fn backpropagate(&self, tape: GradientTape, upstream: &[f64]) -> Result<FieldGradient> {
        let mut grad = FieldGradient::zeros(self.data.len());
        self.backpropagate_into(tape, upstream, &mut grad)?;
        Ok(grad)
    }

    /// As [`Self::backpropagate`], accumulating into `grad`.
    pub fn backpropagate_into(&self, tape: GradientTape, upstream: &[f64], grad: &mut FieldGradient) -> Result<()> {
        if upstream.len() != tape.batch {
            return Err(IsarError::ShapeMismatch(format!(
                "upstream has {} entries, tape recorded {}",
                upstream.len(),
                tape.batch
            )));
        }
        if grad.data.len() != self.data.len() {
            return Err(IsarError::ShapeMismatch("gradient buffer does not match parameters".into()));
        }
        let layout = Layout::of(&self.config);
        let n = tape.batch;
        let GradientTape { rows, weights, inputs, logits, .. } = tape;

        let dz: Vec<f64> = logits.iter().zip(upstream).map(|(&z, &u)| u * sigmoid(z)).collect();
        let mut delta = Array2::from_shape_vec((n, 1), dz).expect("column");

        for l in (0..N_LAYERS).rev() {
            let input = &inputs[l];
            let (fan_in, fan_out) = layout.shapes[l];
            {
                let dw = &mut grad.data[layout.weights[l]..layout.weights[l] + fan_in * fan_out];
                let mut dw = ArrayViewMut2::from_shape((fan_in, fan_out), dw).expect("weight grad");
                general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut dw);
            }
            {
                let db = &mut grad.data[layout.biases[l]..layout.biases[l] + fan_out];
                for (g, s) in db.iter_mut().zip(delta.sum_axis(Axis(0)).iter()) {
                    *g += s;
                }
            }
            let mut d_input = Array2::<f64>::zeros((n, fan_in));
            general_mat_mul(1.0, &delta, &layout.weight(&self.data, l).t(), 0.0, &mut d_input);
            if l > 0 {
                // ReLU mask from the stored activation.
                ndarray::Zip::from(&mut d_input).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_input;
        }

        let cfg = &self.config.encoding;
        let corners = cfg.n_levels * 4;
        let n_tables = cfg.parameter_count();
        let table_grad = &mut grad.data[..n_tables];
        for (k, d) in delta.rows().into_iter().enumerate() {
            let d = d.as_slice().expect("contiguous row");
            encoding::scatter(cfg, d, &rows[k * corners..(k + 1) * corners], &weights[k * corners..(k + 1) * corners], table_grad);
        }
        Ok(())
    }
}

fn dense(x: &Array2<f64>, w: ArrayView2<f64>, b: &[f64]) -> Array2<f64> {
    let n = x.nrows();
    let mut z = Array2::<f64>::zeros((n, w.ncols()));
    for mut row in z.rows_mut() {
        row.iter_mut().zip(b).for_each(|(v, &bb)| *v = bb);
    }
    general_mat_mul(1.0, x, &w, 1.0, &mut z);
    z
}

/// Convenience wrapper matching the free-function form of the API.
pub fn field_eval(params: &FieldParams, position: Point3) -> Result<f64> {
    params.eval(position)
}

pub fn field_eval_batch(params: &FieldParams, positions: &[Point3]) -> Result<(Vec<f64>, GradientTape)> {
    params.eval_batch(positions)
}

pub fn backpropagate(params: &FieldParams, tape: GradientTape, upstream: &[f64]) -> Result<FieldGradient> {
    params.backpropagate(tape, upstream)
}
