mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpseg::synth::SynthConfig;
use report::{CliError, CliReport, Status};

#[derive(Parser)]
#[command(name = "mpseg", version, about = "Coronary artery segment labeling toolkit")]
struct Cli {
    /// Print a JSON report on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the 25 segment classes and their vessel groups.
    Taxonomy,
    /// Parse an annotation file and rasterize every image.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        /// Also load and check image pixels from this directory.
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Per-class annotation counts and RCA/LCA image tallies.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write `<image_id>.png` label masks.
    Rasterize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic k-fold split of image ids.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        /// Write the folds to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean F1 of predictions against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// Annotation file or directory of `<image_id>.png` label masks.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        per_class: bool,
        /// Write the full report to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the segmentation pipeline over a dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Restrict the run to these image ids.
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
        /// Score outputs against the dataset's ground truth.
        #[arg(long)]
        eval: bool,
        /// Worker threads; defaults to the number of cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Write augmented image/mask pairs.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_per_image: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Generate a synthetic vessel-tree dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        canvas: u32,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        rca_fraction: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Taxonomy => "taxonomy",
            Command::Validate { .. } => "validate",
            Command::Stats { .. } => "stats",
            Command::Rasterize { .. } => "rasterize",
            Command::Split { .. } => "split",
            Command::Eval { .. } => "eval",
            Command::Run { .. } => "run",
            Command::Augment { .. } => "augment",
            Command::Synth { .. } => "synth",
        }
    }
}

fn dispatch(cmd: &Command) -> Result<report::Outcome, CliError> {
    match cmd {
        Command::Taxonomy => commands::taxonomy(),
        Command::Validate { dataset, images } => commands::validate(dataset, images.as_deref()),
        Command::Stats { dataset } => commands::stats(dataset),
        Command::Rasterize { dataset, out } => commands::rasterize(dataset, out),
        Command::Split {
            dataset,
            folds,
            seed,
            out,
        } => commands::split(dataset, *folds, *seed, out.as_deref()),
        Command::Eval {
            gt,
            pred,
            per_class,
            out,
        } => commands::eval(gt, pred, *per_class, out.as_deref()),
        Command::Run {
            config,
            dataset,
            images,
            ids,
            out,
            eval,
            workers,
        } => commands::run(commands::RunArgs {
            config,
            dataset,
            images: images.as_deref(),
            image_ids: ids.as_deref(),
            out,
            evaluate: *eval,
            workers: *workers,
        }),
        Command::Augment {
            dataset,
            images,
            out,
            n_per_image,
            seed,
        } => commands::augment(dataset, images, out, *n_per_image, *seed),
        Command::Synth {
            n,
            seed,
            out,
            canvas,
            rca_fraction,
        } => commands::synth(
            SynthConfig {
                n_images: *n,
                seed: *seed,
                rca_fraction: *rca_fraction,
                ..SynthConfig::for_canvas(*canvas)
            },
            out,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MPSEG_LOG", "warn")).init();
    let cli = Cli::parse();
    let command = cli.command.name().to_string();
    let (status, payload, warnings, text) = match dispatch(&cli.command) {
        Ok(o) => {
            let status = if o.partial { Status::Partial } else { Status::Ok };
            (status, o.payload, o.warnings, Some(o.text))
        }
        Err(e) => {
            if !cli.json {
                eprintln!("error: {}", e.message);
            }
            (e.status, serde_json::json!({ "error": e.message }), Vec::new(), None)
        }
    };
    if cli.json {
        let report = CliReport {
            command,
            status,
            payload,
            warnings,
        };
        // A closed pipe (e.g. `| head`) is not an error worth reporting.
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        if let Some(t) = text {
            let _ = writeln!(std::io::stdout(), "{t}");
        }
    }
    ExitCode::from(status.exit_code() as u8)
}
