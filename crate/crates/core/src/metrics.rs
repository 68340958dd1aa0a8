//! Image quality metrics. Callers compare min-max normalized images; see
//! [`normalize_min_max`] and [`compare`].

use std::fmt::Write as _;

use crate::error::{ensure_arg, IsarError, Result};
use crate::recon::ReconImage;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Defaults used when a report counts peaks.
pub const DEFAULT_PEAK_SEPARATION_PX: usize = 10;
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.3;

/// Affine map to `[0, 1]`. A constant image maps to all zeros.
pub fn normalize_min_max(img: &ReconImage) -> ReconImage {
    let (lo, hi) = (img.min(), img.max());
    if hi > lo {
        img.map(|v| (v - lo) / (hi - lo))
    } else {
        img.map(|_| 0.0)
    }
}

fn same_shape(a: &ReconImage, b: &ReconImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(IsarError::ShapeMismatch(format!(
            "images are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &ReconImage, b: &ReconImage) -> Result<f64> {
    same_shape(a, b)?;
    Ok(a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.pixels.len() as f64)
}

/// `10 log10(1 / mse)` for unit peak; `+inf` when the images are identical.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr(a: &ReconImage, b: &ReconImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights).
pub fn ssim(a: &ReconImage, b: &ReconImage) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    ensure_arg!(w >= SSIM_WINDOW && h >= SSIM_WINDOW, "images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}");
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                for c in c0..c0 + SSIM_WINDOW {
                    sa += a.get(r, c);
                    sb += b.get(r, c);
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                for c in c0..c0 + SSIM_WINDOW {
                    let x = a.get(r, c) - ma;
                    let y = b.get(r, c) - mb;
                    va += x * x;
                    vb += y * y;
                    cov += x * y;
                }
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Local maxima (3x3 neighborhood) at or above `threshold_fraction * max`,
/// kept greedily from the largest down, dropping any within
/// `min_separation_px` of an already kept peak. Returns `(row, col)` pairs
/// sorted by value, largest first.
pub fn find_peaks(img: &ReconImage, min_separation_px: usize, threshold_fraction: f64) -> Vec<(usize, usize)> {
    let max = img.max();
    if !(max > 0.0) {
        return Vec::new();
    }
    let threshold = threshold_fraction * max;
    let (w, h) = (img.width(), img.height());
    let mut candidates = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = img.get(r, c);
            if v < threshold || v <= 0.0 {
                continue;
            }
            let is_max = (r.saturating_sub(1)..(r + 2).min(h))
                .all(|rr| (c.saturating_sub(1)..(c + 2).min(w)).all(|cc| img.get(rr, cc) <= v));
            if is_max {
                candidates.push((v, r, c));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sep2 = (min_separation_px * min_separation_px) as f64;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, r, c) in candidates {
        let far = kept.iter().all(|&(kr, kc)| {
            let dr = kr as f64 - r as f64;
            let dc = kc as f64 - c as f64;
            dr * dr + dc * dc > sep2
        });
        if far {
            kept.push((r, c));
        }
    }
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub mse: f64,
    pub ssim: f64,
    pub peak_count: usize,
    pub peak_positions: Vec<(usize, usize)>,
}

/// Normalize both images, then score `recon` against `truth` and count
/// peaks in the normalized reconstruction.
pub fn compare(recon: &ReconImage, truth: &ReconImage, min_separation_px: usize, threshold_fraction: f64) -> Result<MetricReport> {
    let a = normalize_min_max(recon);
    let b = normalize_min_max(truth);
    let m = mse(&a, &b)?;
    let peaks = find_peaks(&a, min_separation_px, threshold_fraction);
    Ok(MetricReport { psnr_db: psnr_from_mse(m), mse: m, ssim: ssim(&a, &b)?, peak_count: peaks.len(), peak_positions: peaks })
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn fmt_peaks(p: &[(usize, usize)]) -> String {
    p.iter().map(|(r, c)| format!("{r}:{c}")).collect::<Vec<_>>().join(";")
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "psnr_db,mse,ssim,peak_count,peak_positions";

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "psnr_db = {}", fmt_f64(self.psnr_db));
        let _ = writeln!(s, "mse = {}", fmt_f64(self.mse));
        let _ = writeln!(s, "ssim = {}", fmt_f64(self.ssim));
        let _ = writeln!(s, "peak_count = {}", self.peak_count);
        let _ = writeln!(s, "peak_positions = {}", fmt_peaks(&self.peak_positions));
        s
    }

    /// Fields in [`Self::CSV_HEADER`] order; peaks are `row:col` joined by `;`.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt_f64(self.psnr_db),
            fmt_f64(self.mse),
            fmt_f64(self.ssim),
            self.peak_count,
            fmt_peaks(&self.peak_positions)
        )
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut psnr_db = None;
        let mut mse = None;
        let mut ssim = None;
        let mut peak_count = None;
        let mut peak_positions = Vec::new();
        let num = |v: &str| -> Result<f64> {
            if v == "inf" {
                return Ok(f64::INFINITY);
            }
            v.parse().map_err(|_| IsarError::Format(format!("bad number '{v}' in metric report")))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| IsarError::Format(format!("bad report line '{line}'")))?;
            let v = v.trim();
            match k.trim() {
                "psnr_db" => psnr_db = Some(num(v)?),
                "mse" => mse = Some(num(v)?),
                "ssim" => ssim = Some(num(v)?),
                "peak_count" => peak_count = Some(v.parse().map_err(|_| IsarError::Format(format!("bad peak count '{v}'")))?),
                "peak_positions" => {
                    for item in v.split(';').filter(|s| !s.is_empty()) {
                        let (r, c) = item.split_once(':').ok_or_else(|| IsarError::Format(format!("bad peak '{item}'")))?;
                        let parse = |s: &str| s.parse::<usize>().map_err(|_| IsarError::Format(format!("bad peak '{item}'")));
                        peak_positions.push((parse(r)?, parse(c)?));
                    }
                }
                other => return Err(IsarError::Format(format!("unknown report key '{other}'"))),
            }
        }
        let missing = |k: &str| IsarError::Format(format!("metric report lacks '{k}'"));
        Ok(Self {
            psnr_db: psnr_db.ok_or_else(|| missing("psnr_db"))?,
            mse: mse.ok_or_else(|| missing("mse"))?,
            ssim: ssim.ok_or_else(|| missing("ssim"))?,
            peak_count: peak_count.ok_or_else(|| missing("peak_count"))?,
            peak_positions,
        })
    }
}
