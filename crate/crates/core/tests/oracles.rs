//! Derived quantities checked against independent test-side computations.

mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use isar_core::forward::render_lattice;
use isar_core::geometry::{virtual_radar_positions, Point3, RadarPose};
use isar_core::signal::{default_pulse, pulse, PulseParams, RangeAxis, DEFAULT_CENTER_FREQUENCY, DEFAULT_HALF_BANDWIDTH};
use isar_core::sim::{ground_truth_image, simulate_scan, PointTarget, PointTargetScene};
use isar_core::recon::GridSpec;
use support::oracle::{brute_force_row, pulse_at_range, random_render_case, tau0_for};

#[test]
fn tau0_matches_closed_form() {
    let got = PulseParams::tau0_for_bandwidth(DEFAULT_HALF_BANDWIDTH);
    let want = tau0_for(DEFAULT_HALF_BANDWIDTH);
    assert!((got - want).abs() <= 1e-15 * want, "{got} vs {want}");
    assert_eq!(default_pulse().tau0, got);
}

/// Frequency where the spectrum magnitude crosses `level`, by linear
/// interpolation between FFT bins, walking outward from `start`.
fn crossing(mag: &[f64], df: f64, start: usize, step: isize, level: f64) -> f64 {
    let mut k = start as isize;
    loop {
        let next = k + step;
        let (a, b) = (mag[k as usize], mag[next as usize]);
        if b < level {
            let frac = (a - level) / (a - b);
            return (k as f64 + frac * step as f64) * df;
        }
        k = next;
    }
}

#[test]
fn pulse_spectrum_is_10db_down_at_band_edges() {
    let p = default_pulse();
    let n = 1 << 15;
    let dt = 1e-12;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            let t = (i as f64 - n as f64 / 2.0) * dt;
            Complex::new(pulse(t, &p), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let (k_peak, peak) = mag.iter().enumerate().fold((0, 0.0), |m, (k, &v)| if v > m.1 { (k, v) } else { m });
    assert!((k_peak as f64 * df - DEFAULT_CENTER_FREQUENCY).abs() < 2.0 * df);
    let level = peak * 10f64.powf(-10.0 / 20.0);
    let hi = crossing(&mag, df, k_peak, 1, level);
    let lo = crossing(&mag, df, k_peak, -1, level);
    // Interpolating a Gaussian linearly between ~30 MHz bins is good to about 1 MHz.
    assert!((hi - (DEFAULT_CENTER_FREQUENCY + DEFAULT_HALF_BANDWIDTH)).abs() < 5e6, "upper edge {hi}");
    assert!((lo - (DEFAULT_CENTER_FREQUENCY - DEFAULT_HALF_BANDWIDTH)).abs() < 5e6, "lower edge {lo}");
}

#[test]
fn simulated_echo_peaks_at_target_range() {
    let axis = RangeAxis::new(0.25, 1.75, 1501).unwrap();
    let p = default_pulse();
    for (x, y) in [(0.0, 0.0), (0.2, -0.1), (-0.3, 0.35)] {
        let scene = PointTargetScene::new(vec![PointTarget::new(x, y, 1.0)], 0.5).unwrap();
        for pose in virtual_radar_positions(8, 1.0, 45.0, 360.0).unwrap() {
            let row = simulate_scan(&scene, &pose, &p, &axis);
            let k = row.iter().enumerate().fold(0, |m, (i, v)| if *v > row[m] { i } else { m });
            let range = ((pose.origin.x - x).powi(2) + (pose.origin.y - y).powi(2)).sqrt();
            assert!((axis.radius(k) - range).abs() <= axis.spacing(), "peak at {} for range {range}", axis.radius(k));
            for (i, v) in row.iter().enumerate() {
                let want = pulse_at_range(axis.radius(i) - range, p.center_frequency, p.tau0);
                assert!((v - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ground_truth_peaks_at_target_pixel() {
    let grid = GridSpec::square(128, 0.5).unwrap();
    let scene = PointTargetScene::new(vec![PointTarget::new(0.1, 0.2, 1.0)], 0.5).unwrap();
    let img = ground_truth_image(&scene, &grid, 2.0).unwrap();
    let (r, c) = img.argmax();
    let pitch = 1.0 / 128.0;
    assert_eq!(c, ((0.1 + 0.5) / pitch) as usize);
    assert_eq!(r, ((0.2 + 0.5) / pitch) as usize);
    assert!(img.max() <= 1.0 && img.min() >= 0.0);
}

#[test]
fn renderer_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let (lat, cfg, oracle, axis) = random_render_case(&mut rng);
        let want = brute_force_row(&lat, &oracle, &axis);
        let got = render_lattice(lat, &cfg, &axis).unwrap().row;
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }
}

#[test]
fn pose_geometry_is_circular() {
    for k in 0..36 {
        let a = k as f64 * 10.0;
        let pose = RadarPose::on_circle(a, 1.3).unwrap();
        let r = a.to_radians();
        assert!((pose.origin - Point3::planar(1.3 * r.cos(), 1.3 * r.sin())).norm() < 1e-15);
        assert!((pose.boresight + Point3::planar(r.cos(), r.sin())).norm() < 1e-15);
    }
}
