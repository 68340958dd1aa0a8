use crate::error::{ensure_arg, IsarError, Result};
use crate::geometry::Point3;

/// Pixel grid over the reconstruction region. Rows run along +y, columns
/// along +x; pixel `(0, 0)` is the corner nearest `(-extent, -extent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Half-width along x, meters. The y half-extent follows from the pitch.
    pub extent: f64,
    pub center: Point3,
}

pub const MIN_GRID_SIDE: usize = 8;

impl GridSpec {
    pub fn new(width: usize, height: usize, extent: f64, center: Point3) -> Result<Self> {
        ensure_arg!(
            width >= MIN_GRID_SIDE && height >= MIN_GRID_SIDE,
            "grid must be at least {MIN_GRID_SIDE}x{MIN_GRID_SIDE}, got {width}x{height}"
        );
        ensure_arg!(extent.is_finite() && extent > 0.0, "grid extent must be positive, got {extent}");
        ensure_arg!(center.is_finite(), "grid center must be finite");
        Ok(Self { width, height, extent, center })
    }

    pub fn square(side: usize, extent: f64) -> Result<Self> {
        Self::new(side, side, extent, Point3::ORIGIN)
    }

    pub fn pitch(&self) -> f64 {
        2.0 * self.extent / self.width as f64
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn y_extent(&self) -> f64 {
        0.5 * self.pitch() * self.height as f64
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Point3 {
        let p = self.pitch();
        Point3::new(
            self.center.x - self.extent + (col as f64 + 0.5) * p,
            self.center.y - self.y_extent() + (row as f64 + 0.5) * p,
            self.center.z,
        )
    }

    /// All pixel centers in row-major order.
    pub fn pixel_centers(&self) -> Vec<Point3> {
        (0..self.height).flat_map(|r| (0..self.width).map(move |c| (r, c))).map(|(r, c)| self.pixel_center(r, c)).collect()
    }

    pub fn contains(&self, p: Point3) -> bool {
        (p.x - self.center.x).abs() <= self.extent && (p.y - self.center.y).abs() <= self.y_extent()
    }

    /// Pixel holding `p`, if inside the grid.
    pub fn pixel_of(&self, p: Point3) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let pitch = self.pitch();
        let col = ((p.x - self.center.x + self.extent) / pitch).floor() as usize;
        let row = ((p.y - self.center.y + self.y_extent()) / pitch).floor() as usize;
        Some((row.min(self.height - 1), col.min(self.width - 1)))
    }
}

/// Row-major image on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    pub grid: GridSpec,
    pub pixels: Vec<f64>,
}

impl ReconImage {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { pixels: vec![0.0; grid.len()], grid }
    }

    pub fn from_pixels(grid: GridSpec, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != grid.len() {
            return Err(IsarError::ShapeMismatch(format!("{} pixels for a {}x{} grid", pixels.len(), grid.width, grid.height)));
        }
        ensure_arg!(pixels.iter().all(|v| v.is_finite()), "image pixels must be finite");
        Ok(Self { grid, pixels })
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.grid.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.grid.width + col] = v;
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(row, col)` of the largest pixel; ties resolve to the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.pixels.iter().enumerate() {
            if v > self.pixels[best] {
                best = i;
            }
        }
        (best / self.grid.width, best % self.grid.width)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, pixels: self.pixels.iter().map(|&v| f(v)).collect() }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }
}
