//! Command-line interface for the leaf segmentation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leafseg::pipeline::{
    cmd_evaluate, cmd_overlay, cmd_pipeline, cmd_segment, cmd_split, cmd_synth, cmd_train,
    cmd_undistort, ClassifierMode, PipelineConfig, PipelineError,
};
use leafseg::synth::DatasetSpec;

#[derive(Parser)]
#[command(
    name = "leafseg",
    about = "Leaf-level plant segmentation from classified image edges",
    version
)]
struct Cli {
    /// Pipeline config file (key=value lines, e.g. canny.low=0.04).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override values from the config file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Classifier layout: tree | fourway.
    #[arg(long)]
    mode: Option<String>,
    /// Patch side in pixels.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Temporal mode: number of most recent frames per patch (0 = off).
    #[arg(long)]
    temporal: Option<usize>,
    /// Seed for training, balancing, and synthesis.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rosette dataset with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of plants.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Canvas side in pixels.
        #[arg(long, default_value_t = 320)]
        canvas: usize,
        /// Leaf count range, e.g. 8,12.
        #[arg(long, default_value = "8,12", value_parser = parse_usize_pair)]
        leaves: (usize, usize),
        /// Leaf-on-leaf overlap factor in [0,1].
        #[arg(long, default_value_t = 0.3)]
        overlap: f64,
    },
    /// Train edge classifiers from images plus ground-truth annotations.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Segment every image in a directory with a trained model.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write classified-edge maps as PNG.
        #[arg(long)]
        debug: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predicted segmentations against ground truth.
    Evaluate {
        /// Directory of predicted label images.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend a segmentation or class map over its source image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        /// Segmentation or class-map PNG (black = transparent).
        #[arg(long)]
        layer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct barrel distortion using the configured camera model.
    Undistort {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split tray images into per-pot cells on the configured grid.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full run: undistort, split, segment, and (with ground truth)
    /// evaluate.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn parse_usize_pair(raw: &str) -> Result<(usize, usize), String> {
    let (a, b) = raw
        .split_once(',')
        .ok_or_else(|| format!("expected MIN,MAX, got {raw:?}"))?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("range is reversed: {lo} > {hi}"));
    }
    Ok((lo, hi))
}

fn load_config(
    path: &Option<PathBuf>,
    overrides: &Overrides,
) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(mode) = &overrides.mode {
        cfg.mode = mode
            .parse::<ClassifierMode>()
            .map_err(PipelineError::Config)?;
    }
    if let Some(side) = overrides.patch_size {
        cfg.patch_side = side;
    }
    if let Some(n) = overrides.temporal {
        cfg.temporal_frames = (n > 0).then_some(n);
    }
    if let Some(seed) = overrides.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("LEAFSEG_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool already configured: {e}");
                }
            }
            _ => log::warn!("ignoring invalid LEAFSEG_THREADS={raw:?}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Synth {
            out,
            count,
            seed,
            canvas,
            leaves,
            overlap,
        } => {
            let ranges = DatasetSpec {
                canvas,
                leaf_count: leaves,
                overlap,
                ..DatasetSpec::default()
            };
            cmd_synth(&out, count, &ranges, seed)
        }
        Command::Train {
            input,
            gt,
            model,
            overrides,
        } => {
            let cfg = load_config(&cli.config, &overrides)?;
            cmd_train(&cfg, &input, &gt, &model)
        }
        Command::Segment {
            input,
            model,
            out,
            debug,
            overrides,
        } => {
            let cfg = load_config(&cli.config, &overrides)?;
            cmd_segment(&cfg, &input, &model, &out, debug).map(|results| {
                log::info!("segmented {} work items", results.len());
            })
        }
        Command::Evaluate { input, gt, out } => cmd_evaluate(&input, &gt, &out).map(print_report),
        Command::Overlay { image, layer, out } => cmd_overlay(&image, &layer, &out),
        Command::Undistort { input, out } => {
            let cfg = load_config(&cli.config, &Overrides::default())?;
            cmd_undistort(&cfg, &input, &out)
        }
        Command::Split { input, out } => {
            let cfg = load_config(&cli.config, &Overrides::default())?;
            cmd_split(&cfg, &input, &out)
        }
        Command::Pipeline {
            input,
            gt,
            model,
            out,
            overrides,
        } => {
            let cfg = load_config(&cli.config, &overrides)?;
            cmd_pipeline(&cfg, &input, gt.as_deref(), &model, &out).map(print_report)
        }
    }
}

fn print_report(report: Option<leafseg::eval::MetricReport>) {
    if let Some(report) = report {
        let a = &report.aggregate;
        println!(
            "plants {}  DiC {:.2} ({:.2})  |DiC| {:.2} ({:.2})  FBD {:.3} ({:.3})  SBD {:.3} ({:.3})  SMJ {:.3} ({:.3})",
            report.records.len(),
            a.mean_dic,
            a.std_dic,
            a.mean_abs_dic,
            a.std_abs_dic,
            a.mean_fbd,
            a.std_fbd,
            a.mean_sbd,
            a.std_sbd,
            a.mean_smj,
            a.std_smj,
        );
    } else {
        println!("no ground truth matched; segmentation outputs written");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
