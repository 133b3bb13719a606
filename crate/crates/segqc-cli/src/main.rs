//! Command-line surface for the segmentation label quality engine.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segqc::volume::VolumeFormat;
use util::CliError;

#[derive(Parser)]
#[command(
    name = "segqc",
    about = "Segmentation label quality: synthesize training data, train and \
             evaluate a quality predictor, score datasets, select samples",
    version
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory all outputs are written into.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
    /// Worker threads for scoring (deterministic output regardless).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a quality-labeled slice dataset from degraded volumes.
    Synth {
        /// JSON file: {"manifest": path, "synthesis": {...}}.
        #[arg(long)]
        config: PathBuf,
        /// Balance the quality histogram after synthesis.
        #[arg(long)]
        resample: bool,
    },
    /// Train the quality head (or an ablation grid) on a dataset.
    Train {
        /// Dataset index JSON written by synth.
        #[arg(long)]
        dataset: PathBuf,
        /// JSON file: {"train": {...}, "loss": {...}}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run an ablation grid instead of a single training: table1 | full.
        #[arg(long)]
        preset: Option<String>,
        /// Text-embedding manifest; synthesized pseudo-embeddings otherwise.
        #[arg(long)]
        text_embeddings: Option<PathBuf>,
        /// Precomputed vision-embedding manifest; toy encoder otherwise.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Compute correlation/ranking metrics from a prediction CSV.
    Eval {
        /// CSV with header sample_id,class_id,predicted,actual.
        #[arg(long)]
        scores: PathBuf,
    },
    /// Score every candidate label of a dataset manifest.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        text_embeddings: Option<PathBuf>,
        /// Slices sampled per 3D label.
        #[arg(long, default_value_t = 10)]
        n_slices: usize,
    },
    /// Select volumes for correction (active) or admission (semisup).
    Select {
        /// Candidate pool JSON.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// scores.json from the score command (aggregated per volume).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// predicted | entropy | mc_variance | random.
        #[arg(long)]
        method: String,
        /// active | semisup.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        budget: usize,
        /// Directory of <volume_id>.json probability volumes for the
        /// uncertainty baselines.
        #[arg(long)]
        prob_dir: Option<PathBuf>,
        /// Also simulate selection benefit with this many trials.
        #[arg(long)]
        simulate_trials: Option<usize>,
    },
    /// Per-class and overall label-quality report for a manifest.
    Benchmark {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score with the true-Dice oracle instead of a checkpoint.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        text_embeddings: Option<PathBuf>,
        /// Low-quality threshold for the reported fraction.
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        n_slices: usize,
        /// Dataset name shown in the report.
        #[arg(long)]
        name: Option<String>,
    },
    /// Corrupt a volume's ground truth into a candidate label grid.
    Degrade {
        /// Volume sidecar/descriptor JSON.
        #[arg(long)]
        volume: PathBuf,
        /// raw_json | nifti1.
        #[arg(long, default_value = "raw_json")]
        format: String,
        /// erode | dilate | drop_components | boundary_noise | shift |
        /// checkpoint_schedule.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        severity: f64,
        /// Restrict to one class; all ground-truth classes otherwise.
        #[arg(long)]
        class_id: Option<u16>,
        /// Output volume name (files <name>.json, <name>.*.raw).
        #[arg(long, default_value = "degraded")]
        out_name: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth { config, resample } => {
            commands::cmd_synth(config, *resample, Some(g.seed), &g.output_dir)
        }
        Command::Train { dataset, config, preset, text_embeddings, embeddings } => {
            commands::cmd_train(
                dataset,
                config.as_deref(),
                preset.as_deref(),
                text_embeddings.as_deref(),
                embeddings.as_deref(),
                Some(g.seed),
                &g.output_dir,
            )
        }
        Command::Eval { scores } => commands::cmd_eval(scores, &g.output_dir),
        Command::Score { manifest, checkpoint, embeddings, text_embeddings, n_slices } => {
            commands::cmd_score(
                manifest,
                checkpoint,
                embeddings.as_deref(),
                text_embeddings.as_deref(),
                *n_slices,
                g.jobs,
                g.seed,
                &g.output_dir,
            )
        }
        Command::Select { pool, scores, method, mode, budget, prob_dir, simulate_trials } => {
            commands::cmd_select(
                pool.as_deref(),
                scores.as_deref(),
                method,
                mode,
                *budget,
                prob_dir.as_deref(),
                *simulate_trials,
                g.seed,
                &g.output_dir,
            )
        }
        Command::Benchmark {
            manifest,
            checkpoint,
            oracle,
            embeddings,
            text_embeddings,
            threshold,
            n_slices,
            name,
        } => commands::cmd_benchmark(
            manifest,
            checkpoint.as_deref(),
            *oracle,
            embeddings.as_deref(),
            text_embeddings.as_deref(),
            *threshold,
            *n_slices,
            name.as_deref(),
            g.seed,
            &g.output_dir,
        ),
        Command::Degrade { volume, format, kind, severity, class_id, out_name } => {
            let fmt = match format.as_str() {
                "raw_json" => VolumeFormat::RawJson,
                "nifti1" => VolumeFormat::Nifti1,
                other => return Err(util::usage(format!("unknown format '{other}'"))),
            };
            commands::cmd_degrade(
                volume,
                fmt,
                kind,
                *severity,
                *class_id,
                g.seed,
                out_name,
                &g.output_dir,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output is a successful exit.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("segqc: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
