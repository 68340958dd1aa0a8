//! Multi-resolution hash encoding over the 2D scene plane.

use crate::error::{ensure_arg, IsarError, Result};
use crate::geometry::Point3;

/// Spatial hash primes for the two plane axes.
pub const HASH_PRIMES: [u32; 2] = [1, 2_654_435_761];

/// Slack for positions that land a hair outside the domain through rounding.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashEncodingConfig {
    pub n_levels: usize,
    /// Grid cells per axis at the coarsest level.
    pub base_resolution: f64,
    pub growth_factor: f64,
    pub features_per_level: usize,
    pub table_size_log2: u32,
}

impl Default for HashEncodingConfig {
    fn default() -> Self {
        Self { n_levels: 8, base_resolution: 16.0, growth_factor: 1.5, features_per_level: 2, table_size_log2: 14 }
    }
}

impl HashEncodingConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.n_levels >= 1, "hash encoding needs at least one level");
        ensure_arg!(self.base_resolution >= 1.0, "base resolution must be >= 1, got {}", self.base_resolution);
        ensure_arg!(self.growth_factor > 1.0, "growth factor must exceed 1, got {}", self.growth_factor);
        ensure_arg!(self.features_per_level >= 1, "need at least one feature per level");
        ensure_arg!(
            (1..=24).contains(&self.table_size_log2),
            "table_size_log2 must lie in [1, 24], got {}",
            self.table_size_log2
        );
        Ok(())
    }

    pub fn table_size(&self) -> usize {
        1usize << self.table_size_log2
    }

    /// Grid cells per axis at `level`.
    pub fn resolution(&self, level: usize) -> u32 {
        (self.base_resolution * self.growth_factor.powi(level as i32)).floor() as u32
    }

    pub fn output_width(&self) -> usize {
        self.n_levels * self.features_per_level
    }

    /// Number of reals across all level tables.
    pub fn parameter_count(&self) -> usize {
        self.n_levels * self.table_size() * self.features_per_level
    }
}

/// Table slot for integer corner `(x0, x1)`.
#[inline]
pub fn hash_index(x0: u32, x1: u32, table_size_log2: u32) -> u32 {
    let h = x0.wrapping_mul(HASH_PRIMES[0]) ^ x1.wrapping_mul(HASH_PRIMES[1]);
    h & ((1u32 << table_size_log2) - 1)
}

/// Lookup plan for one position: per level, 4 table rows and their
/// bilinear weights, ordered (0,0), (1,0), (0,1), (1,1).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CornerPlan {
    pub rows: Vec<u32>,
    pub weights: Vec<f64>,
}

/// Encoder bound to a square scene domain centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashEncoding {
    pub config: HashEncodingConfig,
    /// Half-width of the encoded square, meters.
    pub extent: f64,
}

impl HashEncoding {
    pub fn new(config: HashEncodingConfig, extent: f64) -> Result<Self> {
        config.validate()?;
        ensure_arg!(extent.is_finite() && extent > 0.0, "encoding extent must be positive, got {extent}");
        Ok(Self { config, extent })
    }

    /// Map a world position to `[0, 1]^2`.
    pub fn normalize(&self, p: Point3) -> Result<[f64; 2]> {
        let u = (p.x + self.extent) / (2.0 * self.extent);
        let v = (p.y + self.extent) / (2.0 * self.extent);
        let inside = |t: f64| t.is_finite() && (-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&t);
        if !(inside(u) && inside(v)) {
            return Err(IsarError::OutOfDomain { x: p.x, y: p.y });
        }
        Ok([u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)])
    }

    pub(crate) fn plan(&self, p: Point3, rows: &mut [u32], weights: &mut [f64]) -> Result<()> {
        let [u, v] = self.normalize(p)?;
        let cfg = &self.config;
        for level in 0..cfg.n_levels {
            let res = cfg.resolution(level);
            let (c0, f0) = cell(u, res);
            let (c1, f1) = cell(v, res);
            let base = level * 4;
            let level_offset = (level * cfg.table_size()) as u32;
            let corners = [(0u32, 0u32), (1, 0), (0, 1), (1, 1)];
            for (k, (dx, dy)) in corners.into_iter().enumerate() {
                let wx = if dx == 0 { 1.0 - f0 } else { f0 };
                let wy = if dy == 0 { 1.0 - f1 } else { f1 };
                rows[base + k] = level_offset + hash_index(c0 + dx, c1 + dy, cfg.table_size_log2);
                weights[base + k] = wx * wy;
            }
        }
        Ok(())
    }

    pub(crate) fn corner_plan(&self, p: Point3) -> Result<CornerPlan> {
        let n = self.config.n_levels * 4;
        let mut plan = CornerPlan { rows: vec![0; n], weights: vec![0.0; n] };
        self.plan(p, &mut plan.rows, &mut plan.weights)?;
        Ok(plan)
    }

    /// Feature vector of length `n_levels * features_per_level` for `p`,
    /// reading from the concatenated level tables.
    pub fn encode(&self, tables: &[f64], p: Point3) -> Result<Vec<f64>> {
        if tables.len() != self.config.parameter_count() {
            return Err(IsarError::ShapeMismatch(format!(
                "hash tables hold {} reals, expected {}",
                tables.len(),
                self.config.parameter_count()
            )));
        }
        let plan = self.corner_plan(p)?;
        let mut out = vec![0.0; self.config.output_width()];
        gather(&self.config, tables, &plan.rows, &plan.weights, &mut out);
        Ok(out)
    }
}

#[inline]
fn cell(t: f64, res: u32) -> (u32, f64) {
    let scaled = t * res as f64;
    let c = (scaled.floor() as u32).min(res.saturating_sub(1));
    (c, scaled - c as f64)
}

#[inline]
pub(crate) fn gather(cfg: &HashEncodingConfig, tables: &[f64], rows: &[u32], weights: &[f64], out: &mut [f64]) {
    let f = cfg.features_per_level;
    for level in 0..cfg.n_levels {
        let dst = &mut out[level * f..(level + 1) * f];
        dst.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..4 {
            let w = weights[level * 4 + k];
            let row = rows[level * 4 + k] as usize * f;
            for (d, t) in dst.iter_mut().zip(&tables[row..row + f]) {
                *d += w * t;
            }
        }
    }
}

#[inline]
pub(crate) fn scatter(cfg: &HashEncodingConfig, upstream: &[f64], rows: &[u32], weights: &[f64], grad: &mut [f64]) {
    let f = cfg.features_per_level;
    for level in 0..cfg.n_levels {
        let src = &upstream[level * f..(level + 1) * f];
        for k in 0..4 {
            let w = weights[level * 4 + k];
            let row = rows[level * 4 + k] as usize * f;
            for (g, s) in grad[row..row + f].iter_mut().zip(src) {
                *g += w * s;
            }
        }
    }
}
