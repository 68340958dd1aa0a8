//! Reconstruction behavior on inputs with a known answer.

use isar_core::config::ExperimentConfig;
use isar_core::pipeline;
use isar_core::recon::TrainHooks;
use isar_core::sim::Sinogram;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(
        "n_angles = 36\nskip_deg = 10\nn_bins = 128\ngrid_size = 32\nn_rays = 8\n\
         hash_levels = 4\nhash_table_log2 = 10\nhidden_width = 8\nscene = two",
    )
    .unwrap();
    cfg
}

#[test]
fn zero_sinogram_drives_field_to_zero() {
    let cfg = small();
    let angles = cfg.poses().unwrap().iter().map(|p| p.aperture_angle_deg).collect();
    let s = Sinogram::zeros(angles, cfg.range_axis().unwrap());
    let out = pipeline::run_ats(&cfg, &s, None, TrainHooks::default()).unwrap();
    let max = out.image.pixels.iter().cloned().fold(f64::MIN, f64::max);
    assert!(max < 1e-3, "max {max}");
}

#[test]
fn ats_loss_falls_on_clean_data() {
    let cfg = small();
    let s = pipeline::simulate(&cfg).unwrap();
    let out = pipeline::run_ats(&cfg, &s, None, TrainHooks::default()).unwrap();
    let h = &out.loss_history;
    let head = h[..20].iter().sum::<f64>() / 20.0;
    let tail = h[h.len() - 20..].iter().sum::<f64>() / 20.0;
    assert!(tail < head, "loss {head} -> {tail}");
}
