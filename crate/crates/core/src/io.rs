//! File formats: binary and CSV sinograms, PGM previews, raw float images,
//! loss histories. Writers go through [`write_atomic`].
//!
//! Sinogram binary layout, little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `ISGM` |
//! | 2     | version (u16, currently 1) |
//! | 4     | n_angles (u32) |
//! | 4     | n_bins (u32) |
//! | 16    | r_min, r_max (f64) |
//! | 8 A   | angles in degrees (f64) |
//! | 4 A B | samples (f32), row-major by angle |
//!
//! Raw image layout: magic `ISIM`, u16 version, u32 width, u32 height,
//! f64 extent, f64 center x, f64 center y, then f32 pixels row-major.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{IsarError, Result};
use crate::geometry::Point3;
use crate::metrics::normalize_min_max;
use crate::recon::{GridSpec, ReconImage};
use crate::signal::RangeAxis;
use crate::sim::Sinogram;

pub const SINOGRAM_MAGIC: &[u8; 4] = b"ISGM";
pub const IMAGE_MAGIC: &[u8; 4] = b"ISIM";
const VERSION: u16 = 1;

/// Write `path` via a temporary file in the same directory and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| IsarError::Io(e.error))?;
    Ok(())
}

pub fn write_sinogram<W: Write + ?Sized>(w: &mut W, s: &Sinogram) -> Result<()> {
    let mut buf = Vec::with_capacity(30 + 8 * s.n_angles() + 4 * s.data.len());
    buf.extend_from_slice(SINOGRAM_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(s.n_angles() as u32).to_le_bytes());
    buf.extend_from_slice(&(s.n_bins() as u32).to_le_bytes());
    buf.extend_from_slice(&s.range_axis.r_min().to_le_bytes());
    buf.extend_from_slice(&s.range_axis.r_max().to_le_bytes());
    for a in &s.angles_deg {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    for v in &s.data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_sinogram<R: Read>(mut r: R) -> Result<Sinogram> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != SINOGRAM_MAGIC {
        return Err(IsarError::Format("not a sinogram file (bad magic)".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(IsarError::Format(format!("unsupported sinogram version {version}")));
    }
    let n_angles = cur.u32()? as usize;
    let n_bins = cur.u32()? as usize;
    let r_min = cur.f64()?;
    let r_max = cur.f64()?;
    let axis = RangeAxis::new(r_min, r_max, n_bins).map_err(|e| IsarError::Format(e.to_string()))?;
    let expected = n_angles
        .checked_mul(8 + 4 * n_bins)
        .ok_or_else(|| IsarError::Format("sinogram dimensions overflow".into()))?;
    if bytes.len() - cur.pos != expected {
        return Err(IsarError::Format(format!(
            "sinogram payload is {} bytes, header implies {expected}",
            bytes.len() - cur.pos
        )));
    }
    let angles = (0..n_angles).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let data = (0..n_angles * n_bins).map(|_| cur.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    Sinogram::new(data, angles, axis).map_err(|e| IsarError::Format(e.to_string()))
}

/// CSV with a `# r_min,r_max,n_bins` preamble, then one `angle,v0,v1,...`
/// line per row. Values use shortest round-trip formatting, so the CSV is lossless.
pub fn write_sinogram_csv<W: Write + ?Sized>(w: &mut W, s: &Sinogram) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# r_min,r_max,n_bins\n# {},{},{}\n", s.range_axis.r_min(), s.range_axis.r_max(), s.n_bins()));
    for (a, row) in s.angles_deg.iter().zip(s.rows()) {
        out.push_str(&a.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_sinogram_csv<R: Read>(r: R) -> Result<Sinogram> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(IsarError::from) };
    let bad = |m: &str| IsarError::Format(format!("sinogram csv: {m}"));
    let _ = next()?.ok_or_else(|| bad("empty file"))?;
    let meta = next()?.ok_or_else(|| bad("missing axis line"))?;
    let fields: Vec<&str> = meta.trim_start_matches('#').trim().split(',').collect();
    if fields.len() != 3 {
        return Err(bad("axis line must be '# r_min,r_max,n_bins'"));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
    let n_bins: usize = fields[2].trim().parse().map_err(|_| bad("bad bin count"))?;
    let axis = RangeAxis::new(num(fields[0])?, num(fields[1])?, n_bins).map_err(|e| bad(&e.to_string()))?;
    let mut angles = Vec::new();
    let mut data = Vec::new();
    while let Some(line) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        angles.push(num(it.next().unwrap_or(""))?);
        let before = data.len();
        for v in it {
            data.push(num(v)?);
        }
        if data.len() - before != n_bins {
            return Err(bad(&format!("row {} has {} values, expected {n_bins}", angles.len(), data.len() - before)));
        }
    }
    Sinogram::new(data, angles, axis).map_err(|e| bad(&e.to_string()))
}

/// 8-bit binary PGM of the min-max normalized image, +y up. With
/// `db_floor = Some(x)` (x < 0) the display is `20 log10(|v| / max|v|)`
/// clipped to `[x, 0]` dB instead.
pub fn write_pgm<W: Write + ?Sized>(w: &mut W, img: &ReconImage, db_floor: Option<f64>) -> Result<()> {
    let shown = match db_floor {
        None => normalize_min_max(img),
        Some(floor) => {
            if !(floor < 0.0) {
                return Err(IsarError::InvalidArgument(format!("dB floor must be negative, got {floor}")));
            }
            let peak = img.pixels.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            img.map(|v| {
                if peak == 0.0 {
                    return 0.0;
                }
                let db = 20.0 * (v.abs() / peak).log10();
                ((db - floor) / -floor).clamp(0.0, 1.0)
            })
        }
    };
    let (wd, ht) = (img.width(), img.height());
    let mut buf = format!("P5\n{wd} {ht}\n255\n").into_bytes();
    for row in (0..ht).rev() {
        for col in 0..wd {
            buf.push((shown.get(row, col) * 255.0).round() as u8);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_raw_image<W: Write + ?Sized>(w: &mut W, img: &ReconImage) -> Result<()> {
    let mut buf = Vec::with_capacity(42 + 4 * img.pixels.len());
    buf.extend_from_slice(IMAGE_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(img.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.height() as u32).to_le_bytes());
    buf.extend_from_slice(&img.grid.extent.to_le_bytes());
    buf.extend_from_slice(&img.grid.center.x.to_le_bytes());
    buf.extend_from_slice(&img.grid.center.y.to_le_bytes());
    for v in &img.pixels {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_raw_image<R: Read>(mut r: R) -> Result<ReconImage> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != IMAGE_MAGIC {
        return Err(IsarError::Format("not a raw image file (bad magic)".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(IsarError::Format(format!("unsupported image version {version}")));
    }
    let width = cur.u32()? as usize;
    let height = cur.u32()? as usize;
    let extent = cur.f64()?;
    let cx = cur.f64()?;
    let cy = cur.f64()?;
    let grid = GridSpec::new(width, height, extent, Point3::planar(cx, cy)).map_err(|e| IsarError::Format(e.to_string()))?;
    if bytes.len() - cur.pos != 4 * grid.len() {
        return Err(IsarError::Format("raw image payload does not match its header".into()));
    }
    let pixels = (0..grid.len()).map(|_| cur.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    ReconImage::from_pixels(grid, pixels).map_err(|e| IsarError::Format(e.to_string()))
}

/// `step,loss` CSV, one row per step.
pub fn write_loss_csv<W: Write + ?Sized>(w: &mut W, history: &[f64]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn save_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    write_atomic(path, |w| if csv { write_sinogram_csv(w, s) } else { write_sinogram(w, s) })
}

/// Reads CSV when the extension is `.csv`, the binary format otherwise.
pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    let f = fs::File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_sinogram_csv(f)
    } else {
        read_sinogram(BufReader::new(f))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(IsarError::Format("file truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
