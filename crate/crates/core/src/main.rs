use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use usdl::cli::{self, EvalSplit, Mode, RunConfig};
use usdl::dataio::SynthConfig;
use usdl::multipath::FusionRule;
use usdl::Result;

#[derive(Parser)]
#[command(name = "usdl", version, about = "Score distribution learning for action quality assessment")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `train.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.train.rng_seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the checkpoint, loss log and config snapshot.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint and write the report and prediction table.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which records to score; defaults to the config's `eval_split`.
        #[arg(long, value_enum)]
        split: Option<EvalSplit>,
    },
    /// Score every sample of a feature file.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature file; defaults to the dataset's feature file.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Convert an evaluation report into plot-ready tables.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding the `eval` outputs; defaults to the config's output directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset and a matching run config.
    Synth {
        /// Target directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 80)]
        train: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        segments: usize,
        #[arg(long, default_value_t = 7)]
        judges: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, value_parser = parse_mode, default_value = "usdl")]
        mode: Mode,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|_| format!("unknown mode `{s}` (regression, usdl, usdl_dd, musdl, musdl_star)"))
}

fn run(args: Args) -> Result<()> {
    match args.command {
        Command::Train { common } => {
            let summary = cli::cmd_train(&common.load()?)?;
            println!("checkpoint: {}", summary.checkpoint.display());
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let config = common.load()?;
            let report = cli::cmd_eval(&config, &checkpoint, split.unwrap_or(config.eval_split))?;
            for (action, rho) in &report.per_action_rho {
                println!("rho {action}: {rho:.4}");
            }
            println!("fisher-z average: {:.4}", report.fisher_z_average);
        }
        Command::Infer {
            common,
            checkpoint,
            features,
        } => {
            let config = common.load()?;
            let features = features.unwrap_or_else(|| config.paths.features.clone());
            let scores = cli::cmd_infer(&config, &checkpoint, &features)?;
            println!("scored {} samples", scores.len());
        }
        Command::PlotData {
            common,
            checkpoint,
            report_dir,
        } => {
            let config = common.load()?;
            let report_dir = report_dir.unwrap_or_else(|| config.output_dir.clone());
            let files = cli::cmd_plot_data(&config, &checkpoint, &report_dir, &config.output_dir)?;
            println!("scatter: {}", files.scatter.display());
        }
        Command::Synth {
            out,
            seed,
            samples,
            train,
            dim,
            segments,
            judges,
            noise,
            mode,
        } => {
            let synth = SynthConfig::new(seed, samples, dim, segments, judges, FusionRule::DIVING, noise);
            cli::write_synthetic_run(&out, &synth, train, mode)?;
            println!("wrote {}", out.join("run.toml").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
