//! Property checks for every module invariant. Each check drives its own
//! proptest runner with a fixed RNG so failures reproduce exactly.

use std::fmt::Debug;

use proptest::prelude::*;
use proptest::sample::Index;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isar_core::field::{hash_index, FieldConfig, FieldGradient, FieldParams, HashEncoding, HashEncodingConfig, N_LAYERS};
use isar_core::forward::{render_lattice, render_scan, transmission, RenderConfig, SigmaLattice, TapedScan};
use isar_core::geometry::{
    generate_ray_bundle, ray_sphere_intersect, sample_sphere_points, virtual_radar_positions, Point3, RadarPose, Ray,
};
use isar_core::metrics::{find_peaks, mse, psnr, psnr_from_mse, ssim};
use isar_core::recon::{ats_reconstruct, backproject_coherent, scan_loss, GridSpec, ReconImage, TrainConfig};
use isar_core::signal::{default_pulse, pulse, PulseParams, RangeAxis};
use isar_core::sim::{add_noise, simulate_sinogram, PointTarget, PointTargetScene, Sinogram};

pub type Check = fn() -> Result<(), String>;

/// Every invariant, by module.
pub const ALL: &[(&str, Check)] = &[
    ("geometry/sample points on range sphere", sample_points_on_sphere),
    ("geometry/re-intersection is idempotent", reintersection_idempotent),
    ("geometry/sparse pose set within dense", sparse_poses_subset),
    ("geometry/odd fan symmetric about boresight", fan_symmetric),
    ("signal/pulse under envelope", pulse_under_envelope),
    ("signal/pulse even", pulse_even),
    ("signal/range bins uniform", range_bins_uniform),
    ("sim/linear in scene", sim_linear),
    ("sim/rotation shifts rows", sim_rotation_shifts_rows),
    ("sim/noise mean", noise_mean),
    ("field/encoding weights sum to one", encoding_partition_of_unity),
    ("field/encoding bilinear within a cell", encoding_bilinear),
    ("field/output non-negative", field_non_negative),
    ("field/gradient matches finite differences", field_gradient_check),
    ("field/hash is fixed", hash_is_fixed),
    ("forward/transmission bounded and non-increasing", transmission_bounds),
    ("forward/linear without attenuation", linear_without_attenuation),
    ("forward/table gradient of row sum", table_gradient),
    ("forward/occlusion monotone", occlusion_monotone),
    ("recon/backprojection linear", bp_linear),
    ("recon/backprojection 90 degree equivariance", bp_shift_equivariance),
    ("recon/reconstruction deterministic", ats_deterministic),
    ("recon/loss non-negative, zero iff equal", loss_properties),
    ("metrics/psnr monotone in mse", psnr_monotone),
    ("metrics/ssim identity and symmetry", ssim_identities),
    ("metrics/peaks scale invariant", peaks_scale_invariant),
];

fn run<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail<E: std::fmt::Display>(e: E) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn small_field() -> FieldConfig {
    FieldConfig {
        encoding: HashEncodingConfig { n_levels: 4, table_size_log2: 8, ..HashEncodingConfig::default() },
        hidden_width: 16,
        extent: 0.5,
    }
}

fn random_field(cfg: FieldConfig, seed: u64, table_scale: f64) -> Result<FieldParams, TestCaseError> {
    let mut params = FieldParams::init(cfg, seed).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for v in params.tables_mut() {
        *v = rng.random_range(-table_scale..table_scale);
    }
    Ok(params)
}

fn planar_point(rng: &mut ChaCha8Rng, half: f64) -> Point3 {
    Point3::planar(rng.random_range(-half..half), rng.random_range(-half..half))
}

fn default_axis() -> RangeAxis {
    RangeAxis::new(0.25, 1.75, 384).expect("valid axis")
}

// ---- geometry ----

pub fn sample_points_on_sphere() -> Result<(), String> {
    let s = (0.0..360.0f64, 0.5..2.0f64, 1usize..24, 10.0..180.0f64, 0.05..0.5f64, 0.2..2.0f64, 2usize..64);
    run(64, s, |(angle, standoff, n_rays, bw, r_min, span, n_bins)| {
        let pose = RadarPose::on_circle(angle, standoff).map_err(fail)?;
        let bundle = generate_ray_bundle(&pose, bw, n_rays).map_err(fail)?;
        let axis = RangeAxis::new(r_min, r_min + span, n_bins).map_err(fail)?;
        let grid = sample_sphere_points(&pose, &bundle, &axis);
        for r in 0..n_rays {
            for b in 0..n_bins {
                let err = (grid.point(r, b).distance(pose.origin) - axis.radius(b)).abs();
                prop_assert!(err < 1e-9, "ray {} bin {}: off the sphere by {}", r, b, err);
            }
        }
        Ok(())
    })
}

pub fn reintersection_idempotent() -> Result<(), String> {
    let v3 = || prop::array::uniform3(-1.5..1.5f64);
    let aim = prop::array::uniform3(-0.5..0.5f64);
    run(512, (v3(), v3(), aim, 0.1..2.0f64), |(o, c, a, radius)| {
        let origin = Point3::new(o[0], o[1], o[2]);
        let center = Point3::new(c[0], c[1], c[2]);
        // Aim within 0.9 radius of the center so the ray is never grazing.
        let target = center + Point3::new(a[0], a[1], a[2]) * (1.8 * radius / 3f64.sqrt());
        let Ok(ray) = Ray::new(origin, target - origin) else {
            return Ok(());
        };
        // An origin on the surface makes the near root ill-conditioned.
        prop_assume!(((center - origin).norm() - radius).abs() > 1e-3);
        let t = ray_sphere_intersect(&ray, center, radius).ok_or_else(|| fail("aimed ray missed"))?;
        let again = Ray::new(origin, ray.at(t) - origin).map_err(fail)?;
        let t2 = ray_sphere_intersect(&again, center, radius).ok_or_else(|| fail("second intersection missed"))?;
        prop_assert!((t2 - t).abs() < 1e-12, "depth {} then {}", t, t2);
        Ok(())
    })
}

pub fn sparse_poses_subset() -> Result<(), String> {
    let dense = virtual_radar_positions(360, 1.0, 1.0, 360.0).map_err(|e| e.to_string())?;
    run(45, 1u32..=45, |k| {
        let sparse = virtual_radar_positions(360, 1.0, k as f64, 360.0).map_err(fail)?;
        for p in &sparse {
            prop_assert!(
                dense.iter().any(|q| (q.aperture_angle_deg - p.aperture_angle_deg).abs() < 1e-9),
                "angle {} missing from the dense set",
                p.aperture_angle_deg
            );
        }
        Ok(())
    })
}

pub fn fan_symmetric() -> Result<(), String> {
    run(128, (0usize..16, 1.0..180.0f64, 0.0..360.0f64), |(h, bw, angle)| {
        let pose = RadarPose::on_circle(angle, 1.0).map_err(fail)?;
        let bundle = generate_ray_bundle(&pose, bw, 2 * h + 1).map_err(fail)?;
        let b = pose.boresight;
        for ray in &bundle.rays {
            let d = ray.direction;
            let mirrored = b * (2.0 * d.dot(b)) - d;
            prop_assert!(bundle.rays.iter().any(|r| (r.direction - mirrored).norm() < 1e-12));
        }
        Ok(())
    })
}

// ---- signal ----

pub fn pulse_under_envelope() -> Result<(), String> {
    run(1024, (-5e-9..5e-9f64, 1e9..1e10f64, 1e-11..1e-9f64), |(t, fc, tau0)| {
        let p = PulseParams::new(fc, tau0).map_err(fail)?;
        let envelope = (-t * t / (2.0 * tau0 * tau0)).exp();
        prop_assert!(pulse(t, &p).abs() <= envelope * (1.0 + 1e-12));
        Ok(())
    })
}

pub fn pulse_even() -> Result<(), String> {
    run(1024, (-5e-9..5e-9f64, 1e9..1e10f64, 1e-11..1e-9f64), |(t, fc, tau0)| {
        let p = PulseParams::new(fc, tau0).map_err(fail)?;
        prop_assert_eq!(pulse(-t, &p), pulse(t, &p));
        Ok(())
    })
}

pub fn range_bins_uniform() -> Result<(), String> {
    run(256, (0.01..2.0f64, 0.01..3.0f64, 2usize..2048), |(r_min, span, n)| {
        let axis = RangeAxis::new(r_min, r_min + span, n).map_err(fail)?;
        let r = axis.radii();
        let step = span / (n - 1) as f64;
        for w in r.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!((w[1] - w[0] - step).abs() < 1e-12 * (1.0 + span));
        }
        Ok(())
    })
}

// ---- sim ----

fn targets(max: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    // Polar draw keeps every rotation of the scene inside the domain.
    prop::collection::vec((0.0..0.45f64, 0.0..std::f64::consts::TAU, 0.1..2.0f64), 1..=max)
        .prop_map(|v| v.into_iter().map(|(r, a, amp)| (r * a.cos(), r * a.sin(), amp)).collect())
}

fn scene_of(t: &[(f64, f64, f64)]) -> Result<PointTargetScene, TestCaseError> {
    PointTargetScene::new(t.iter().map(|&(x, y, a)| PointTarget::new(x, y, a)).collect(), 0.5).map_err(fail)
}

pub fn sim_linear() -> Result<(), String> {
    let poses = virtual_radar_positions(24, 1.0, 15.0, 360.0).map_err(|e| e.to_string())?;
    let axis = default_axis();
    let p = default_pulse();
    run(64, (targets(3), targets(3)), |(a, b)| {
        let union: Vec<_> = a.iter().chain(&b).copied().collect();
        let sa = simulate_sinogram(&scene_of(&a)?, &poses, &p, &axis).map_err(fail)?;
        let sb = simulate_sinogram(&scene_of(&b)?, &poses, &p, &axis).map_err(fail)?;
        let su = simulate_sinogram(&scene_of(&union)?, &poses, &p, &axis).map_err(fail)?;
        for ((u, x), y) in su.data.iter().zip(&sa.data).zip(&sb.data) {
            // Summation order differs between the two sides, hence the rounding slack.
            prop_assert!((u - (x + y)).abs() <= 1e-12, "{} vs {}", u, x + y);
        }
        Ok(())
    })
}

pub fn sim_rotation_shifts_rows() -> Result<(), String> {
    let axis = default_axis();
    let p = default_pulse();
    let skips = prop::sample::select(vec![1.0, 5.0, 10.0, 30.0]);
    run(24, (targets(3), skips, 1usize..4), |(t, skip, k)| {
        let n = (360.0 / skip) as usize;
        let poses = virtual_radar_positions(n, 1.0, skip, 360.0).map_err(fail)?;
        let dphi = (k as f64 * skip).to_radians();
        let rotated: Vec<_> = t
            .iter()
            .map(|&(x, y, a)| {
                let q = Point3::planar(x, y).rotate_z(dphi);
                (q.x, q.y, a)
            })
            .collect();
        let s0 = simulate_sinogram(&scene_of(&t)?, &poses, &p, &axis).map_err(fail)?;
        let s1 = simulate_sinogram(&scene_of(&rotated)?, &poses, &p, &axis).map_err(fail)?;
        for j in 0..n {
            let src = (j + n - k) % n;
            for (a, b) in s1.row(j).iter().zip(s0.row(src)) {
                prop_assert!((a - b).abs() < 1e-9, "row {} vs shifted row {}: {} vs {}", j, src, a, b);
            }
        }
        Ok(())
    })
}

pub fn noise_mean() -> Result<(), String> {
    run(32, (0.01..1.0f64, any::<u64>(), 20usize..200), |(v, seed, n_angles)| {
        let axis = RangeAxis::new(0.25, 1.75, 128).map_err(fail)?;
        let clean = Sinogram::zeros((0..n_angles).map(|k| k as f64).collect(), axis);
        let noisy = add_noise(&clean, v, seed).map_err(fail)?;
        let n = noisy.data.len() as f64;
        let mean = noisy.data.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 3.0 * (v / n).sqrt(), "mean {} over {} entries", mean, n);
        Ok(())
    })
}

// ---- field ----

pub fn encoding_partition_of_unity() -> Result<(), String> {
    let cfg = HashEncodingConfig { table_size_log2: 10, ..HashEncodingConfig::default() };
    let enc = HashEncoding::new(cfg, 0.5).map_err(|e| e.to_string())?;
    let ones = vec![1.0; cfg.parameter_count()];
    run(512, (-0.5..=0.5f64, -0.5..=0.5f64), |(x, y)| {
        for f in enc.encode(&ones, Point3::planar(x, y)).map_err(fail)? {
            prop_assert!((f - 1.0).abs() < 1e-12, "weights sum to {}", f);
        }
        Ok(())
    })
}

pub fn encoding_bilinear() -> Result<(), String> {
    let cfg = HashEncodingConfig { table_size_log2: 12, ..HashEncodingConfig::default() };
    let enc = HashEncoding::new(cfg, 0.5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tables: Vec<f64> = (0..cfg.parameter_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    run(512, (-0.49..0.49f64, -0.49..0.49f64, 1e-6..1e-4f64, any::<bool>()), |(x, y, h, along_x)| {
        let step = if along_x { Point3::planar(h, 0.0) } else { Point3::planar(0.0, h) };
        let p0 = Point3::planar(x, y);
        let p2 = p0 + step * 2.0;
        for level in 0..cfg.n_levels {
            let res = cfg.resolution(level) as f64;
            let cell = |p: Point3| (((p.x + 0.5) * res).floor(), ((p.y + 0.5) * res).floor());
            prop_assume!(cell(p0) == cell(p2));
        }
        let f0 = enc.encode(&tables, p0).map_err(fail)?;
        let f1 = enc.encode(&tables, p0 + step).map_err(fail)?;
        let f2 = enc.encode(&tables, p2).map_err(fail)?;
        for i in 0..f0.len() {
            let second = f0[i] - 2.0 * f1[i] + f2[i];
            prop_assert!(second.abs() < 1e-12, "feature {} bends by {}", i, second);
        }
        Ok(())
    })
}

pub fn field_non_negative() -> Result<(), String> {
    run(32, (any::<u64>(), 0.1..20.0f64, -60.0..5.0f64), |(seed, gain, out_bias)| {
        let mut params = random_field(small_field(), seed, 2.0)?;
        params.as_mut_slice().iter_mut().for_each(|v| *v *= gain);
        params.bias_mut(N_LAYERS - 1)[0] = out_bias;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3> = (0..64).map(|_| planar_point(&mut rng, 0.5)).collect();
        for v in params.eval_many(&pts).map_err(fail)? {
            prop_assert!(v.is_finite() && v >= 0.0, "field value {}", v);
        }
        Ok(())
    })
}

/// `|analytic - numeric| / max(|numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1e-8)
}

/// Central difference of `f` in parameter `idx`.
pub fn central_difference(params: &FieldParams, idx: usize, eps: f64, f: impl Fn(&FieldParams) -> f64) -> f64 {
    let mut p = params.clone();
    p.as_mut_slice()[idx] += eps;
    let up = f(&p);
    p.as_mut_slice()[idx] = params.as_slice()[idx] - eps;
    let down = f(&p);
    (up - down) / (2.0 * eps)
}

pub fn field_gradient_check() -> Result<(), String> {
    run(8, any::<u64>(), |seed| {
        let params = random_field(small_field(), seed, 0.5)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3> = (0..16).map(|_| planar_point(&mut rng, 0.5)).collect();
        let c: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |p: &FieldParams| -> f64 { p.eval_many(&pts).unwrap().iter().zip(&c).map(|(s, w)| s * w).sum() };
        let (_, tape) = params.eval_batch(&pts).map_err(fail)?;
        let g = params.backpropagate(tape, &c).map_err(fail)?;
        for _ in 0..20 {
            let idx = rng.random_range(0..params.len());
            let numeric = central_difference(&params, idx, 1e-4, objective);
            let err = relative_error(g.data[idx], numeric);
            prop_assert!(err < 1e-4, "param {}: analytic {} numeric {}", idx, g.data[idx], numeric);
        }
        Ok(())
    })
}

pub fn hash_is_fixed() -> Result<(), String> {
    // Anchor values computed by hand from the two primes.
    if hash_index(1, 1, 14) != 14768 || hash_index(0, 0, 14) != 0 || hash_index(3, 0, 4) != 3 {
        return Err("hash anchors changed".into());
    }
    run(1024, (any::<u32>(), any::<u32>(), 1u32..=24), |(x0, x1, bits)| {
        let expected = ((x0 as u64) ^ ((x1 as u64 * 2_654_435_761) & 0xffff_ffff)) & ((1u64 << bits) - 1);
        prop_assert_eq!(hash_index(x0, x1, bits) as u64, expected);
        Ok(())
    })
}

// ---- forward ----

pub fn transmission_bounds() -> Result<(), String> {
    run(512, prop::collection::vec((-5.0..5.0f64, 1e-4..0.1f64), 1..64), |pairs| {
        let sigmas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let depths: Vec<f64> = pairs.iter().scan(0.25, |d, p| {
            *d += p.1;
            Some(*d)
        })
        .collect();
        let t = transmission(&sigmas, &depths).map_err(fail)?;
        prop_assert_eq!(t[0], 1.0);
        for &v in &t {
            prop_assert!(v > 0.0 && v <= 1.0, "transmission {}", v);
        }
        for w in t.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        Ok(())
    })
}

fn random_lattice(rng: &mut ChaCha8Rng, n_rays: usize, n_bins: usize, sigma_range: std::ops::Range<f64>) -> SigmaLattice {
    let sigma = (0..n_rays * n_bins).map(|_| rng.random_range(sigma_range.clone())).collect();
    let mut depths = Vec::with_capacity(n_rays * n_bins);
    for _ in 0..n_rays {
        let mut d = rng.random_range(0.1..0.4);
        for _ in 0..n_bins {
            depths.push(d);
            d += rng.random_range(0.001..0.05);
        }
    }
    let ray_weights = (0..n_rays).map(|_| rng.random_range(0.0..1.0)).collect();
    SigmaLattice { n_rays, n_bins, sigma, depths, ray_weights }
}

pub fn linear_without_attenuation() -> Result<(), String> {
    run(128, (1usize..6, 8usize..48, any::<u64>(), 0.1..10.0f64, -8i32..8), |(nr, nb, seed, alpha, e)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = random_lattice(&mut rng, nr, nb, -2.0..2.0);
        let axis = RangeAxis::new(0.3, 1.2, nb).map_err(fail)?;
        let cfg = RenderConfig { n_rays: nr, attenuation: false, ..RenderConfig::default() };
        let scaled = |a: f64| SigmaLattice { sigma: lat.sigma.iter().map(|s| s * a).collect(), ..lat.clone() };
        let base = render_lattice(lat.clone(), &cfg, &axis).map_err(fail)?.row;
        // Power-of-two scaling commutes with every rounding step, so equality is exact.
        let k = 2f64.powi(e);
        let row = render_lattice(scaled(k), &cfg, &axis).map_err(fail)?.row;
        for (r, b) in row.iter().zip(&base) {
            prop_assert_eq!(*r, b * k);
        }
        let peak = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let row = render_lattice(scaled(alpha), &cfg, &axis).map_err(fail)?.row;
        for (r, b) in row.iter().zip(&base) {
            prop_assert!((r - alpha * b).abs() <= 1e-12 * alpha * (1.0 + peak));
        }
        Ok(())
    })
}

pub fn table_gradient() -> Result<(), String> {
    let render = RenderConfig { n_rays: 8, ..RenderConfig::default() };
    let axis = RangeAxis::new(0.25, 1.75, 96).map_err(|e| e.to_string())?;
    run(4, (any::<u64>(), 0.0..360.0f64), |(seed, angle)| {
        let params = random_field(small_field(), seed, 0.5)?;
        let pose = RadarPose::on_circle(angle, 1.0).map_err(fail)?;
        let taped = TapedScan::render(&params, &pose, &render, &axis, 0.0).map_err(fail)?;
        let mut g = FieldGradient::zeros(params.len());
        taped.backward(&params, &vec![1.0; axis.n_bins()], &mut g).map_err(fail)?;
        // Entries the row sum depends on above rounding level.
        let touched: Vec<usize> = (0..params.tables().len()).filter(|&i| g.data[i].abs() > 1e-6).collect();
        prop_assume!(!touched.is_empty());
        let row_sum = |p: &FieldParams| -> f64 { render_scan(p, &pose, &render, &axis).unwrap().iter().sum() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let idx = touched[rng.random_range(0..touched.len())];
            let numeric = central_difference(&params, idx, 1e-4, row_sum);
            let err = relative_error(g.data[idx], numeric);
            prop_assert!(err < 1e-4, "table entry {}: analytic {} numeric {}", idx, g.data[idx], numeric);
        }
        Ok(())
    })
}

pub fn occlusion_monotone() -> Result<(), String> {
    run(256, (prop::collection::vec(0.0..3.0f64, 2..48), any::<Index>(), 0.01..2.0f64), |(sig, k, delta)| {
        let n = sig.len();
        let k = k.index(n);
        let depths: Vec<f64> = (0..n).map(|i| 0.3 + 0.02 * i as f64).collect();
        let axis = RangeAxis::new(0.3, 0.3 + 0.02 * (n - 1) as f64, n).map_err(fail)?;
        let cfg = RenderConfig { n_rays: 1, pulse: None, ..RenderConfig::default() };
        let lat = SigmaLattice { n_rays: 1, n_bins: n, sigma: sig.clone(), depths, ray_weights: vec![1.0] };
        let mut bumped = lat.clone();
        bumped.sigma[k] += delta;
        let before = render_lattice(lat, &cfg, &axis).map_err(fail)?.histogram;
        let after = render_lattice(bumped, &cfg, &axis).map_err(fail)?.histogram;
        for i in k + 1..n {
            prop_assert!(after[i] <= before[i], "bin {} rose from {} to {}", i, before[i], after[i]);
        }
        Ok(())
    })
}

// ---- recon ----

fn random_sinogram(rng: &mut ChaCha8Rng, angles: Vec<f64>, axis: RangeAxis) -> Result<Sinogram, TestCaseError> {
    let data = (0..angles.len() * axis.n_bins()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Sinogram::new(data, angles, axis).map_err(fail)
}

pub fn bp_linear() -> Result<(), String> {
    run(16, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = RangeAxis::new(0.25, 1.75, 64).map_err(fail)?;
        let poses = virtual_radar_positions(12, 1.0, 30.0, 360.0).map_err(fail)?;
        let angles: Vec<f64> = poses.iter().map(|p| p.aperture_angle_deg).collect();
        let grid = GridSpec::square(16, 0.5).map_err(fail)?;
        let s1 = random_sinogram(&mut rng, angles.clone(), axis)?;
        let s2 = random_sinogram(&mut rng, angles.clone(), axis)?;
        let sum = Sinogram::new(s1.data.iter().zip(&s2.data).map(|(a, b)| a + b).collect(), angles, axis).map_err(fail)?;
        let b1 = backproject_coherent(&s1, &poses, &grid).map_err(fail)?;
        let b2 = backproject_coherent(&s2, &poses, &grid).map_err(fail)?;
        let b12 = backproject_coherent(&sum, &poses, &grid).map_err(fail)?;
        for i in 0..grid.len() {
            let (x, y, z) = (b1.pixels[i], b2.pixels[i], b12.pixels[i]);
            prop_assert!((z - (x + y)).abs() <= 1e-12 * (1.0 + x.abs() + y.abs()));
            prop_assert!(z.abs() <= x.abs() + y.abs() + 1e-12);
        }
        Ok(())
    })
}

pub fn bp_shift_equivariance() -> Result<(), String> {
    run(6, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = RangeAxis::new(0.25, 1.75, 64).map_err(fail)?;
        let poses = virtual_radar_positions(360, 1.0, 1.0, 360.0).map_err(fail)?;
        let angles: Vec<f64> = poses.iter().map(|p| p.aperture_angle_deg).collect();
        let grid = GridSpec::square(16, 0.5).map_err(fail)?;
        let s = random_sinogram(&mut rng, angles.clone(), axis)?;
        let shifted: Vec<f64> = (0..360).flat_map(|k| s.row((k + 270) % 360).to_vec()).collect();
        let shifted = Sinogram::new(shifted, angles, axis).map_err(fail)?;
        let a = backproject_coherent(&s, &poses, &grid).map_err(fail)?;
        let b = backproject_coherent(&shifted, &poses, &grid).map_err(fail)?;
        let scale = 1.0 + a.pixels.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let w = grid.width;
        // Delaying rows by 90 degrees turns the image by +90 degrees about the center:
        // pixel (r, c) of the new image is pixel (w - 1 - c, r) of the old one.
        for r in 0..w {
            for c in 0..w {
                let d = (b.get(r, c) - a.get(w - 1 - c, r)).abs();
                prop_assert!(d <= 1e-9 * scale, "pixel ({}, {}) off by {}", r, c, d);
            }
        }
        Ok(())
    })
}

pub fn ats_deterministic() -> Result<(), String> {
    run(3, any::<u64>(), |seed| {
        let scene = PointTargetScene::new(vec![PointTarget::new(0.1, -0.05, 1.0)], 0.5).map_err(fail)?;
        let poses = virtual_radar_positions(36, 1.0, 10.0, 360.0).map_err(fail)?;
        let axis = RangeAxis::new(0.25, 1.75, 128).map_err(fail)?;
        let clean = simulate_sinogram(&scene, &poses, &default_pulse(), &axis).map_err(fail)?;
        let s = add_noise(&clean, 0.05, seed).map_err(fail)?;
        let render = RenderConfig { n_rays: 8, ..RenderConfig::default() };
        let train = TrainConfig { n_steps: 6, scans_per_step: 3, seed, ..TrainConfig::default() };
        let grid = GridSpec::square(16, 0.5).map_err(fail)?;
        let a = ats_reconstruct(&s, &poses, &grid, &small_field(), &render, &train).map_err(fail)?;
        let b = ats_reconstruct(&s, &poses, &grid, &small_field(), &render, &train).map_err(fail)?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.loss_history), bits(&b.loss_history));
        prop_assert_eq!(bits(&a.image.pixels), bits(&b.image.pixels));
        Ok(())
    })
}

pub fn loss_properties() -> Result<(), String> {
    let pair = (1usize..64).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n)));
    run(512, pair, |(a, b)| {
        let l = scan_loss(&a, &b).map_err(fail)?;
        prop_assert!(l >= 0.0);
        prop_assert_eq!(scan_loss(&a, &a).map_err(fail)?, 0.0);
        if a != b {
            prop_assert!(l > 0.0);
        }
        Ok(())
    })
}

// ---- metrics ----

fn image_from(pixels: Vec<f64>) -> ReconImage {
    let side = (pixels.len() as f64).sqrt() as usize;
    ReconImage::from_pixels(GridSpec::square(side, 0.5).expect("grid"), pixels).expect("image")
}

pub fn psnr_monotone() -> Result<(), String> {
    run(1024, (1e-9..10.0f64, 1e-9..10.0f64), |(a, b)| {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(psnr_from_mse(lo) > psnr_from_mse(hi));
        Ok(())
    })
}

pub fn ssim_identities() -> Result<(), String> {
    let img = || prop::collection::vec(0.0..1.0f64, 256).prop_map(image_from);
    run(128, (img(), img()), |(a, b)| {
        prop_assert_eq!(ssim(&a, &a).map_err(fail)?, 1.0);
        prop_assert_eq!(mse(&a, &a).map_err(fail)?, 0.0);
        prop_assert_eq!(psnr(&a, &a).map_err(fail)?, f64::INFINITY);
        let d = ssim(&a, &b).map_err(fail)? - ssim(&b, &a).map_err(fail)?;
        prop_assert!(d.abs() <= 1e-12);
        Ok(())
    })
}

pub fn peaks_scale_invariant() -> Result<(), String> {
    run(128, (any::<u64>(), 1usize..5, 0.01..100.0f64), |(seed, n_blobs, s)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 48;
        let blobs: Vec<(f64, f64, f64)> = (0..n_blobs)
            .map(|_| (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64), rng.random_range(0.2..1.0)))
            .collect();
        let mut pixels = vec![0.0; side * side];
        for (i, v) in pixels.iter_mut().enumerate() {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            *v = rng.random_range(0.0..0.05)
                + blobs.iter().map(|&(br, bc, a)| a * (-((r - br).powi(2) + (c - bc).powi(2)) / 8.0).exp()).sum::<f64>();
        }
        let img = image_from(pixels);
        prop_assert_eq!(find_peaks(&img, 10, 0.3), find_peaks(&img.map(|v| v * s), 10, 0.3));
        Ok(())
    })
}
