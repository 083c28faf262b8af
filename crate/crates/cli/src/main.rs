//! `skullnet`: z-normalize, augment, train and skull-strip MRI volumes with
//! 2D U-Nets.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error
//! (I/O, format, empty dataset), 4 numeric failure (degenerate statistics,
//! non-finite gradients, failed gradient check).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use skullnet::error::exit_code;
use skullnet::pipeline::{
    cmd_augment, cmd_count_params, cmd_describe, cmd_gradcheck, cmd_phantom, cmd_predict, cmd_preprocess, cmd_train,
    RunConfig, VolumeFormat,
};
use skullnet::train::curves_csv;
use skullnet::{ArchitectureKind, Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "skullnet",
    version,
    about = "Skull stripping with Vanilla, Residual and Dense 2D U-Nets"
)]
struct Cli {
    /// TOML run configuration (flat dotted keys; see `skullnet defaults`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Overrides `arch`.
    #[arg(long, global = true, value_name = "KIND", value_parser = parse_arch)]
    arch: Option<ArchitectureKind>,

    /// Overrides `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration as flat dotted keys.
    Defaults,
    /// Z-normalize scans and write f16 NPY volumes with statistics sidecars.
    Preprocess {
        /// Scans to process (replaces `data.scans`).
        scans: Vec<PathBuf>,
        /// Brain mask for the statistics region, one per scan (replaces `data.masks`).
        #[arg(long = "mask", value_name = "PATH")]
        masks: Vec<PathBuf>,
    },
    /// Expand (scan, mask) pairs into an augmented NPY tree.
    Augment {
        /// Scans to augment (replaces `data.scans`).
        scans: Vec<PathBuf>,
        /// Brain masks, one per scan (replaces `data.masks`).
        #[arg(long = "mask", value_name = "PATH")]
        masks: Vec<PathBuf>,
        /// Copies per scan, including the unmodified one (overrides `data.factor`).
        #[arg(long)]
        factor: Option<usize>,
    },
    /// Train on an augmented tree; writes checkpoint, curves and manifest.
    Train {
        /// Augmented tree root (overrides `data.augmented`).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Skull-strip one volume with a trained checkpoint.
    Predict {
        /// Volume to strip (overrides `predict.input`).
        input: Option<PathBuf>,
        /// Overrides `predict.checkpoint`.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Brain mask to score against (overrides `predict.ground_truth`).
        #[arg(long, value_name = "PATH")]
        ground_truth: Option<PathBuf>,
    },
    /// Print analytic and runtime parameter counts against the published ones.
    CountParams,
    /// Check analytic gradients against finite differences.
    Gradcheck {
        /// Number of consecutive seeds, starting at `--seed`.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Print the layer graph and channel bookkeeping of a model.
    Describe,
    /// Write synthetic head phantoms with brain masks.
    Phantom {
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Volume dims as D,H,W.
        #[arg(long, default_value = "16,64,64", value_parser = parse_dims)]
        dims: [usize; 3],
        #[arg(long, default_value = "nii", value_parser = parse_format)]
        format: VolumeFormat,
    },
}

fn parse_arch(s: &str) -> std::result::Result<ArchitectureKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match parts[..] {
        [d, h, w] if d > 0 && h > 0 && w > 0 => Ok([d, h, w]),
        _ => Err("expected three positive integers D,H,W".into()),
    }
}

fn parse_format(s: &str) -> std::result::Result<VolumeFormat, String> {
    match s {
        "npy" => Ok(VolumeFormat::Npy),
        "nii" => Ok(VolumeFormat::Nii),
        other => Err(format!("unknown format `{other}` (expected npy or nii)")),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(arch) = cli.arch {
        cfg.arch = arch;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Defaults => print!("{}", cfg.to_flat_toml()),
        Command::Preprocess { scans, masks } => {
            if !scans.is_empty() {
                cfg.data.scans = scans;
            }
            if !masks.is_empty() {
                cfg.data.masks = masks;
            }
            for o in cmd_preprocess(&cfg)? {
                println!(
                    "{} -> {} (mu={:.6} sigma={:.6} voxels={})",
                    o.record.source.display(),
                    o.volume.display(),
                    o.record.stats.mu_brain,
                    o.record.stats.sigma_brain,
                    o.record.stats.count
                );
            }
        }
        Command::Augment { scans, masks, factor } => {
            if !scans.is_empty() {
                cfg.data.scans = scans;
            }
            if !masks.is_empty() {
                cfg.data.masks = masks;
            }
            if let Some(f) = factor {
                cfg.data.factor = f;
            }
            cfg.validate()?;
            let s = cmd_augment(&cfg)?;
            println!(
                "scans={} copies={} slices={} out={}",
                s.scans,
                s.copies,
                s.slices,
                cfg.out.display()
            );
        }
        Command::Train { data } => {
            if data.is_some() {
                cfg.data.augmented = data;
            }
            let t = cmd_train(&cfg)?;
            print!("{}", curves_csv(&t.report.records)?);
            println!(
                "updates={} epochs={} stopped_early={} parameters={} out={}",
                t.manifest.updates,
                t.manifest.epochs,
                t.manifest.stopped_early,
                t.manifest.parameter_count,
                cfg.out.display()
            );
        }
        Command::Predict {
            input,
            checkpoint,
            ground_truth,
        } => {
            if input.is_some() {
                cfg.predict.input = input;
            }
            if checkpoint.is_some() {
                cfg.predict.checkpoint = checkpoint;
            }
            if ground_truth.is_some() {
                cfg.predict.ground_truth = ground_truth;
            }
            let p = cmd_predict(&cfg)?;
            for f in &p.files {
                println!("{}", f.display());
            }
            if let Some(m) = p.metrics {
                println!("{}", serde_json::to_string(&m).expect("metrics serialize"));
            }
        }
        Command::CountParams => {
            let kinds = match cli.arch {
                Some(k) => vec![k],
                None => ArchitectureKind::ALL.to_vec(),
            };
            let rows = cmd_count_params(&kinds, &cfg.model)?;
            for r in &rows {
                println!("{r}");
            }
            if rows.iter().any(|r| !r.consistent()) {
                return Ok(exit_code::NUMERIC);
            }
        }
        Command::Gradcheck { seeds } => {
            let rows = cmd_gradcheck(cfg.seed, seeds)?;
            for r in &rows {
                println!("{r}");
            }
            let failed = rows.iter().filter(|r| !r.pass).count();
            println!("{} checks, {failed} failed", rows.len());
            if failed > 0 {
                return Ok(exit_code::NUMERIC);
            }
        }
        Command::Describe => println!("{}", cmd_describe(cfg.arch, &cfg.model)?),
        Command::Phantom { count, dims, format } => {
            for (scan, mask) in cmd_phantom(&cfg.out, count, dims, cfg.seed, format)? {
                println!("{} {}", scan.display(), mask.display());
            }
        }
    }
    Ok(exit_code::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
