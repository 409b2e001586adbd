use std::path::PathBuf;
use std::process::ExitCode;

use c3dm_cli::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_train, Ablation, EvalOptions, EvalSource,
    ExperimentConfig, HarnessError, MetricsRow, Overrides,
};
use c3dm_core::fddp::PolicyMode;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "c3dm",
    version,
    about = "Fixation-while-denoising diffusion policies on a desk pick-and-place task"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// baseline, mask or zoom.
    #[arg(long)]
    mode: Option<PolicyMode>,
    /// Inference refinement steps.
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    n_demos: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let overrides = Overrides {
            seed: self.seed,
            mode: self.mode,
            n_steps: self.n_steps,
            n_demos: self.n_demos,
            out: self.out.clone(),
        };
        ExperimentConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write oracle demonstrations as episode files plus a manifest.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a policy; writes weights.c3dm, loss.csv and the resolved config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory from gen-data; demos are sampled when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from these weights.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Roll out a policy on fresh scenes; writes metrics.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Weight file; `{seed}` is replaced by each run seed.
        #[arg(long, required_unless_present_any = ["oracle", "random"])]
        weights: Option<String>,
        /// Act with the ground-truth action.
        #[arg(long, conflicts_with_all = ["weights", "random"])]
        oracle: bool,
        /// Act uniformly at random over the action bounds.
        #[arg(long, conflicts_with_all = ["weights", "oracle"])]
        random: bool,
        /// Swap every distractor for an unseen shape and color.
        #[arg(long)]
        ood: bool,
        /// Write trace images for this many episodes per seed.
        #[arg(long, default_value_t = 0)]
        traces: usize,
    },
    /// Train and evaluate an ablation matrix across seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// drift, timesteps, demos or ood.
        #[arg(long)]
        which: Ablation,
    },
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows {
        let seed = r
            .seed
            .map_or_else(|| "median".to_string(), |s| s.to_string());
        println!(
            "{} seed={} mode={} variant={} success={:.3} pick_err={:.4} place_err={:.4}",
            r.experiment, seed, r.mode, r.variant, r.success_rate, r.pick_err_m, r.place_err_m
        );
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = common.resolve()?;
            let manifest = cmd_gen_data(&cfg)?;
            println!(
                "wrote {} episodes to {}",
                manifest.episodes.len(),
                cfg.output_dir.display()
            );
        }
        Command::Train {
            common,
            data,
            resume,
        } => {
            let cfg = common.resolve()?;
            let report = cmd_train(&cfg, data.as_deref(), resume.as_deref())?;
            println!(
                "steps={} final_loss={:.6} weights={}",
                report.steps,
                report.final_loss,
                report.weights.display()
            );
        }
        Command::Eval {
            common,
            weights,
            oracle,
            random,
            ood,
            traces,
        } => {
            let cfg = common.resolve()?;
            let source = match (weights, oracle, random) {
                (_, true, _) => EvalSource::Oracle,
                (_, _, true) => EvalSource::Random,
                (Some(w), _, _) => EvalSource::Weights(w),
                (None, false, false) => {
                    return Err(HarnessError::Config("no policy to evaluate".into()))
                }
            };
            let rows = cmd_eval(
                &cfg,
                &source,
                &EvalOptions {
                    ood,
                    trace_episodes: traces,
                },
            )?;
            print_rows(&rows);
        }
        Command::Ablate { common, which } => {
            let cfg = common.resolve()?;
            let rows = cmd_ablate(&cfg, which, |line| eprintln!("{line}"))?;
            print_rows(&rows);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                c3dm_cli::exit::CONFIG
            } else {
                c3dm_cli::exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
