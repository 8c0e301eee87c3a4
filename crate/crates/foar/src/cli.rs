//! Command-line interface. Exit codes: 0 success, 2 usage error, 3 runtime
//! failure.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foar_core::policy::FusionMode;
use foar_core::sim::{Disturbance, Task};

use crate::commands::{self, RolloutArgs, TrainArgs};
use crate::config::{self, TrainOverrides};
use crate::harness::metrics_line;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

fn parse_task(s: &str) -> Result<Task, String> {
    Task::parse(s).ok_or_else(|| format!("unknown task {s:?} (expected wipe or cut)"))
}

fn parse_fusion(s: &str) -> Result<FusionMode, String> {
    FusionMode::parse(s).ok_or_else(|| {
        let names: Vec<&str> = FusionMode::ALL.iter().map(|m| m.name()).collect();
        format!("unknown fusion mode {s:?} (expected one of {})", names.join(", "))
    })
}

fn parse_disturbance(s: &str) -> Result<Disturbance, String> {
    Disturbance::parse(s).ok_or_else(|| format!("unknown disturbance {s:?} (expected rewrite, move or rewrite+move)"))
}

#[derive(Debug, Parser)]
#[command(name = "foar", version, about = "Force-aware reactive policy: data, training, rollout and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record scripted-expert demonstrations into a dataset directory.
    DemoGen(DemoGenCmd),
    /// Write per-tick contact labels and wrench norms for every episode.
    LabelCheck(LabelCheckCmd),
    /// Train a policy on a dataset.
    Train(TrainCmd),
    /// Run one closed-loop episode from a checkpoint.
    Rollout(RolloutCmd),
    /// Run a multi-method experiment over paired seeds and write a report.
    Eval(EvalCmd),
}

#[derive(Debug, Args)]
pub struct DemoGenCmd {
    /// Task template: wipe or cut.
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Number of successful episodes to write.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    /// First simulator seed; episodes use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulator config (JSON); defaults to the task template.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    /// Recording options (JSON): disturbance probability, rendering.
    #[arg(long)]
    pub record_config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelCheckCmd {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Label thresholds (JSON).
    #[arg(long)]
    pub label_config: Option<PathBuf>,
    /// Output directory; CSVs go to <out>/labels/.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Policy architecture config (JSON).
    #[arg(long)]
    pub policy_config: Option<PathBuf>,
    /// Optimizer and schedule config (JSON); defaults to the desk-scale run.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Contact-label thresholds (JSON).
    #[arg(long)]
    pub label_config: Option<PathBuf>,
    /// Fusion mode, overriding the policy config.
    #[arg(long, value_parser = parse_fusion)]
    pub fusion_mode: Option<FusionMode>,
    /// Total optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Warmup steps.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RolloutCmd {
    /// Checkpoint file (its .json sidecar must sit next to it).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Simulator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulator config (JSON).
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    /// Runtime schedule and reactive thresholds (JSON).
    #[arg(long)]
    pub deploy_config: Option<PathBuf>,
    /// Disable reactive correction.
    #[arg(long)]
    pub no_reactive: bool,
    /// Inject a disturbance after the first wiping pass: rewrite, move or rewrite+move.
    #[arg(long, value_parser = parse_disturbance)]
    pub disturb: Option<Disturbance>,
    /// Output directory for rollout.csv and result.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Experiment description (JSON).
    #[arg(long)]
    pub experiment: PathBuf,
    /// Output root; reports go to <out>/runs/<experiment name>/.
    #[arg(long)]
    pub out: PathBuf,
    /// Parallel trial workers.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
}

/// Parses `args` and runs the chosen command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn execute(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::DemoGen(c) => {
            let r = commands::demo_gen(
                c.task,
                c.episodes as usize,
                c.seed,
                c.sim_config.as_deref(),
                c.record_config.as_deref(),
                &c.out,
            )?;
            println!("written={} skipped={}", r.written, r.skipped.len());
        }
        Command::LabelCheck(c) => {
            let labels = config::label_config(c.label_config.as_deref())?;
            let s = commands::label_check(&c.dataset, &labels, &c.out)?;
            let both = s.iter().filter(|e| e.positive > 0 && e.positive < e.ticks).count();
            let ticks: usize = s.iter().map(|e| e.ticks).sum();
            let pos: usize = s.iter().map(|e| e.positive).sum();
            println!(
                "episodes={} with_both_labels={} ticks={} positive={}",
                s.len(),
                both,
                ticks,
                pos
            );
        }
        Command::Train(c) => {
            let args = TrainArgs {
                policy_config: c.policy_config,
                train_config: c.train_config,
                label_config: c.label_config,
                fusion: c.fusion_mode,
                overrides: TrainOverrides {
                    steps: c.steps,
                    warmup: c.warmup,
                    lr: c.lr,
                    batch: c.batch,
                    seed: c.seed,
                },
            };
            let s = commands::train(&c.dataset, &args, &c.out, false)?;
            println!(
                "steps={} best_step={} final={} best={}",
                s.steps,
                s.best_step,
                s.final_path.display(),
                s.best_path.display()
            );
        }
        Command::Rollout(c) => {
            let args = RolloutArgs {
                sim_config: c.sim_config,
                deploy_config: c.deploy_config,
                no_reactive: c.no_reactive,
                disturb: c.disturb,
            };
            let (r, _) = commands::rollout(&c.checkpoint, c.task, c.seed, &args, &c.out)?;
            println!("{}", metrics_line(&r));
        }
        Command::Eval(c) => {
            let out = commands::eval(&c.experiment, &c.out, c.jobs as usize)?;
            print!("{}", out.table.render());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
