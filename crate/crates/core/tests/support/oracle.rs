//! Reference implementations written independently of the library code.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use isar_core::forward::{RenderConfig, SigmaLattice};
use isar_core::signal::{PulseParams, RangeAxis};

pub const C: f64 = 299_792_458.0;

/// Envelope width whose spectrum is 10 dB down at `half_bandwidth` from the carrier.
pub fn tau0_for(half_bandwidth: f64) -> f64 {
    // |G(f)| = exp(-2 pi^2 f^2 tau0^2) = 10^(-1/2)  =>  tau0 = sqrt(ln 10) / (2 pi B)
    (10f64.ln() / (4.0 * PI * PI * half_bandwidth * half_bandwidth)).sqrt()
}

/// Gaussian-modulated cosine at a range offset `dr` (two-way travel).
pub fn pulse_at_range(dr: f64, fc: f64, tau0: f64) -> f64 {
    let t = 2.0 * dr / C;
    (-0.5 * (t / tau0).powi(2)).exp() * (2.0 * PI * fc * t).cos()
}

#[derive(Debug, Clone, Copy)]
pub struct OracleRender {
    pub two_way: bool,
    pub cosine: f64,
    pub attenuation: bool,
    /// `(center frequency, tau0)`
    pub pulse: Option<(f64, f64)>,
}

/// Direct double sum over every (ray, sample) pair for every output bin.
/// Optical depth is recomputed from scratch for each sample.
pub fn brute_force_row(l: &SigmaLattice, o: &OracleRender, axis: &RangeAxis) -> Vec<f64> {
    let (nr, nb) = (l.n_rays, l.n_bins);
    let dr = (axis.r_max() - axis.r_min()) / (nb as f64 - 1.0);
    let factor = if o.two_way { 2.0 } else { 1.0 };
    let reach = o.pulse.map(|(_, tau0)| (5.0 * tau0 * C / 2.0 / dr).ceil() as i64);
    let mut out = vec![0.0; nb];
    for (i, out_i) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..nr {
            for k in 0..nb {
                let kern = match (o.pulse, reach) {
                    (Some((fc, tau0)), Some(h)) => {
                        let m = i as i64 - k as i64;
                        if m.abs() > h {
                            continue;
                        }
                        pulse_at_range(m as f64 * dr, fc, tau0)
                    }
                    _ => {
                        if i != k {
                            continue;
                        }
                        1.0
                    }
                };
                let mut od = 0.0;
                if o.attenuation {
                    for m in 0..k {
                        od += l.sigma[j * nb + m].abs() * (l.depths[j * nb + m + 1] - l.depths[j * nb + m]);
                    }
                }
                let t = (-od).exp();
                acc += factor / nr as f64 * l.ray_weights[j] * o.cosine * l.sigma[j * nb + k] * t * kern;
            }
        }
        *out_i = acc;
    }
    out
}

/// Random lattice and render settings for the renderer equivalence check.
pub fn random_render_case(rng: &mut ChaCha8Rng) -> (SigmaLattice, RenderConfig, OracleRender, RangeAxis) {
    let n_rays = rng.random_range(1..10);
    let n_bins = rng.random_range(8..80);
    let r_min = rng.random_range(0.2..0.5);
    let axis = RangeAxis::new(r_min, r_min + rng.random_range(0.3..1.5), n_bins).unwrap();
    let sigma = (0..n_rays * n_bins).map(|_| rng.random_range(-1.0..3.0)).collect();
    let mut depths = Vec::new();
    for _ in 0..n_rays {
        let mut d = rng.random_range(0.1..0.5);
        for _ in 0..n_bins {
            depths.push(d);
            d += rng.random_range(0.001..0.05);
        }
    }
    let ray_weights = (0..n_rays).map(|_| rng.random_range(0.0..1.0)).collect();
    let fc = rng.random_range(3e9..5e9);
    let tau0 = tau0_for(rng.random_range(0.3e9..1.2e9));
    let with_pulse = rng.random_bool(0.7);
    let cfg = RenderConfig {
        n_rays,
        include_two_way_factor: rng.random_bool(0.5),
        scatter_cosine: rng.random_range(-1.0..1.0),
        attenuation: rng.random_bool(0.7),
        pulse: with_pulse.then(|| PulseParams::new(fc, tau0).unwrap()),
        ..RenderConfig::default()
    };
    let oracle = OracleRender {
        two_way: cfg.include_two_way_factor,
        cosine: cfg.scatter_cosine,
        attenuation: cfg.attenuation,
        pulse: with_pulse.then_some((fc, tau0)),
    };
    (SigmaLattice { n_rays, n_bins, sigma, depths, ray_weights }, cfg, oracle, axis)
}
