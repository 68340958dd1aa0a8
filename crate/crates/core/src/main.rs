use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isar_core::config::ExperimentConfig;
use isar_core::field::read_checkpoint;
use isar_core::io::{load_sinogram, read_raw_image, save_sinogram, write_atomic, write_pgm};
use isar_core::pipeline::{self, SweepKind};
use isar_core::recon::{GridSpec, ReconImage, TrainHooks};
use isar_core::{IsarError, Result};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "isar", version, about = "Desk-scale ISAR simulation and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to the `output_dir` key, then $ISAR_OUTPUT_DIR).
    #[arg(long, short)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sinogram from the configured scene.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output file; `.csv` selects the text format.
        #[arg(long, default_value = "sinogram.isgm")]
        name: String,
        /// Also write a PGM preview of the sinogram.
        #[arg(long)]
        preview: bool,
    },
    /// Backprojection image of a sinogram.
    Bp {
        /// Sinogram file (.isgm or .csv).
        sinogram: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Score against the configured scene's ground truth.
        #[arg(long)]
        truth: bool,
        /// Display clip in dB (e.g. -30) for the PGM.
        #[arg(long, allow_hyphen_values = true)]
        db_floor: Option<f64>,
    },
    /// Neural-field reconstruction of a sinogram.
    Ats {
        /// Sinogram file (.isgm or .csv).
        sinogram: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Score against the configured scene's ground truth.
        #[arg(long)]
        truth: bool,
        /// Display clip in dB (e.g. -30) for the PGM.
        #[arg(long, allow_hyphen_values = true)]
        db_floor: Option<f64>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print the loss every N steps (0 = quiet).
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Score a raw float image against ground truth.
    Metrics {
        /// Raw float image (.f32img).
        image: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Reference raw image; defaults to the configured scene's ground truth.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Run a parameter sweep: noise | skip | partial | reflectors.
    Sweep {
        /// noise, skip, partial or reflectors.
        kind: String,
        #[command(flatten)]
        common: Common,
        /// Comma-separated parameter values; defaults depend on the kind.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Sweep cells run in parallel up to this many workers.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print the effective config, or describe a sinogram, image or checkpoint file.
    Info {
        /// Sinogram, raw image or checkpoint to describe.
        file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// List every config key.
        #[arg(long)]
        schema: bool,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &c.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(d) = &c.out_dir {
        cfg.output_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(&cfg.output_dir)
}

fn stem_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

fn report(cfg: &ExperimentConfig, img: &ReconImage, dir: &Path, stem: &str) -> Result<()> {
    let truth = pipeline::ground_truth(cfg)?;
    let r = pipeline::score(cfg, img, &truth)?;
    let text = r.to_key_value();
    write_atomic(&dir.join(format!("{stem}.metrics.txt")), |w| w.write_all(text.as_bytes()).map_err(Into::into))?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, name, preview } => {
            let cfg = load_config(&common)?;
            let dir = out_dir(&cfg)?;
            let s = pipeline::simulate(&cfg)?;
            let path = dir.join(&name);
            save_sinogram(&path, &s)?;
            if preview {
                let grid = GridSpec::new(s.n_bins(), s.n_angles().max(8), 0.5, isar_core::geometry::Point3::ORIGIN)?;
                let mut img = ReconImage::zeros(grid);
                for (k, row) in s.rows().enumerate() {
                    for (i, v) in row.iter().enumerate() {
                        img.set(k, i, *v);
                    }
                }
                write_atomic(&dir.join(format!("{}.pgm", stem_of(&path))), |w| write_pgm(w, &img, None))?;
            }
            println!("wrote {} ({} angles x {} bins)", path.display(), s.n_angles(), s.n_bins());
        }
        Command::Bp { sinogram, common, truth, db_floor } => {
            let cfg = load_config(&common)?;
            let s = load_sinogram(&sinogram)?;
            let img = pipeline::run_bp(&cfg, &s)?;
            let dir = out_dir(&cfg)?;
            let stem = format!("{}.bp", stem_of(&sinogram));
            pipeline::save_image(dir, &stem, &img, db_floor)?;
            println!("wrote {}", dir.join(format!("{stem}.pgm")).display());
            if truth {
                report(&cfg, &img, dir, &stem)?;
            }
        }
        Command::Ats { sinogram, common, truth, db_floor, resume, log_every } => {
            let cfg = load_config(&common)?;
            let s = load_sinogram(&sinogram)?;
            let start = match resume {
                Some(p) => {
                    let ck = read_checkpoint(std::io::BufReader::new(fs::File::open(&p)?))?;
                    let n = ck.params.len();
                    Some((ck.params, ck.optimizer.unwrap_or_else(|| isar_core::recon::AdamState::new(n))))
                }
                None => None,
            };
            let mut log = |step: usize, loss: f64| {
                if log_every > 0 && step.is_multiple_of(log_every) {
                    eprintln!("step {step:>6}  loss {loss:.6e}");
                }
            };
            let out = pipeline::run_ats(&cfg, &s, start, TrainHooks { on_step: Some(&mut log) })?;
            if !out.trailing_window_settled(100) {
                eprintln!("warning: loss still rising over the last 100 steps");
            }
            let dir = out_dir(&cfg)?;
            let stem = format!("{}.ats", stem_of(&sinogram));
            pipeline::save_ats_outputs(dir, &stem, &out, db_floor)?;
            println!("wrote {}", dir.join(format!("{stem}.pgm")).display());
            if truth {
                report(&cfg, &out.image, dir, &stem)?;
            }
        }
        Command::Metrics { image, common, reference } => {
            let cfg = load_config(&common)?;
            let img = read_raw_image(std::io::BufReader::new(fs::File::open(&image)?))?;
            let truth = match reference {
                Some(p) => read_raw_image(std::io::BufReader::new(fs::File::open(&p)?))?,
                None => pipeline::ground_truth(&cfg)?,
            };
            print!("{}", pipeline::score(&cfg, &img, &truth)?.to_key_value());
        }
        Command::Sweep { kind, common, values, workers } => {
            let cfg = load_config(&common)?;
            let kind: SweepKind = kind.parse()?;
            let values = if values.is_empty() { kind.default_values() } else { values };
            let dir = out_dir(&cfg)?.to_path_buf();
            let rows = pipeline::run_sweep(&cfg, kind, &values, workers, &dir)?;
            println!("{}", pipeline::SweepRow::CSV_HEADER);
            for r in &rows {
                println!("{}", r.to_csv());
            }
        }
        Command::Info { file, common, schema } => {
            let cfg = load_config(&common)?;
            if schema {
                for (k, ty, doc) in ExperimentConfig::SCHEMA {
                    println!("{k:<22} {ty:<18} {doc}");
                }
            } else if let Some(p) = file {
                describe(&p)?;
            } else {
                print!("{}", cfg.to_text());
            }
        }
    }
    Ok(())
}

fn describe(p: &Path) -> Result<()> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        fs::File::open(p)?.read_exact(&mut magic).map_err(|_| IsarError::Format("file too short".into()))?;
    }
    let open = || -> Result<_> { Ok(std::io::BufReader::new(fs::File::open(p)?)) };
    match &magic {
        b"ISGM" => {
            let s = load_sinogram(p)?;
            let a = s.range_axis;
            println!("sinogram: {} angles x {} bins, range [{}, {}] m", s.n_angles(), s.n_bins(), a.r_min(), a.r_max());
        }
        b"ISIM" => {
            let img = read_raw_image(open()?)?;
            println!("image: {}x{}, extent {} m, range [{}, {}]", img.width(), img.height(), img.grid.extent, img.min(), img.max());
        }
        b"ISFP" => {
            let ck = read_checkpoint(open()?)?;
            let c = ck.params.config();
            println!(
                "checkpoint: {} parameters, {} levels, hidden width {}, optimizer step {}",
                ck.params.len(),
                c.encoding.n_levels,
                c.hidden_width,
                ck.optimizer.map_or(0, |o| o.step)
            );
        }
        _ => {
            let s = load_sinogram(p)?;
            println!("sinogram (csv): {} angles x {} bins", s.n_angles(), s.n_bins());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                IsarError::Config(_) | IsarError::InvalidArgument(_) => EXIT_CONFIG,
                IsarError::Divergence(_) => EXIT_DIVERGENCE,
                _ => EXIT_FAILURE,
            })
        }
    }
}
