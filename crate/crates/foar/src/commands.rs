//! Subcommand implementations. Each is a pure function of its arguments
//! and the files they name; all outputs go under the given directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use foar_core::demo::{extract_contact_labels, record_episode, samples_until, Dataset, LabelConfig};
use foar_core::eval::TrialResult;
use foar_core::policy::{FusionMode, Policy};
use foar_core::runtime::Rollout;
use foar_core::sim::{Disturbance, Task};
use log::{info, warn};

use crate::checkpoint::load_policy;
use crate::config::{self, DeployConfig, Experiment, TrainOverrides};
use crate::dataset::{self, config_hash, episode_dir, DatasetMeta};
use crate::harness::{self, metrics_line, rollout_csv, ExperimentOutput, TrialBase};
use crate::training::{self, TrainSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct DemoGenReport {
    pub written: usize,
    pub skipped: Vec<u64>,
}

/// Records `episodes` successful expert episodes with simulator seeds
/// `seed, seed + 1, ...`, skipping seeds whose expert fails.
pub fn demo_gen(
    task: Task,
    episodes: usize,
    seed: u64,
    sim_path: Option<&Path>,
    record_path: Option<&Path>,
    out: &Path,
) -> Result<DemoGenReport> {
    if episodes == 0 {
        bail!("--episodes must be positive");
    }
    let sim = config::sim_config(task, sim_path)?;
    let opts = config::record_options(record_path)?;
    let max_attempts = 2 * episodes + 10;
    let mut written = 0;
    let mut skipped = Vec::new();
    let mut s = seed;
    while written < episodes {
        if written + skipped.len() >= max_attempts {
            bail!("expert failed on {} of {} seeds", skipped.len(), written + skipped.len());
        }
        match record_episode(&sim, s, &opts) {
            Ok(ep) => {
                dataset::write_episode(&episode_dir(out, written), &ep, &sim)?;
                written += 1;
            }
            Err(e) => {
                warn!("seed {s}: {e}; skipped");
                skipped.push(s);
            }
        }
        s += 1;
    }
    dataset::write_meta(
        out,
        &DatasetMeta {
            task,
            config_hash: config_hash(&sim),
            episodes: written,
            seed,
            skipped: skipped.clone(),
            sim,
        },
    )?;
    Ok(DemoGenReport { written, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub episode: usize,
    pub ticks: usize,
    pub positive: usize,
}

pub const LABEL_HEADER: &str = "tick,t,force_norm,torque_norm,label";

/// Per-tick contact labels with the wrench reading at each tick, one CSV
/// per episode under `out/labels/`, plus `out/labels/summary.csv`.
pub fn label_check(dataset_root: &Path, labels: &LabelConfig, out: &Path) -> Result<Vec<LabelSummary>> {
    let (_, eps) = dataset::read_dataset(dataset_root)?;
    if eps.is_empty() {
        bail!("dataset {} has no episodes", dataset_root.display());
    }
    let dir = out.join("labels");
    fs::create_dir_all(&dir)?;
    let mut summary = Vec::with_capacity(eps.len());
    let mut total = String::from("episode,seed,ticks,positive,negative\n");
    for (e, ep) in eps.iter().enumerate() {
        let times = ep.tick_times();
        let lab = extract_contact_labels(&ep.ft, labels, &times)?;
        let mut csv = String::from(LABEL_HEADER);
        csv.push('\n');
        for (k, (&t, &l)) in times.iter().zip(&lab).enumerate() {
            let (f, tau) = match samples_until(&ep.ft, t).checked_sub(1) {
                Some(i) => (ep.ft[i].force_norm(), ep.ft[i].torque_norm()),
                None => (0.0, 0.0),
            };
            csv.push_str(&format!("{k},{t},{f},{tau},{l}\n"));
        }
        fs::write(dir.join(format!("ep_{e:06}.csv")), csv)?;
        let positive = lab.iter().filter(|&&l| l == 1).count();
        total.push_str(&format!("{e},{},{},{positive},{}\n", ep.seed, lab.len(), lab.len() - positive));
        summary.push(LabelSummary {
            episode: e,
            ticks: lab.len(),
            positive,
        });
    }
    fs::write(dir.join("summary.csv"), total)?;
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub policy_config: Option<PathBuf>,
    pub train_config: Option<PathBuf>,
    pub label_config: Option<PathBuf>,
    pub fusion: Option<FusionMode>,
    pub overrides: TrainOverrides,
}

pub fn train(dataset_root: &Path, args: &TrainArgs, out: &Path, quiet: bool) -> Result<TrainSummary> {
    if !dataset_root.join(dataset::META_FILE).exists() {
        bail!("no dataset at {}", dataset_root.display());
    }
    let pcfg = config::policy_config(args.policy_config.as_deref(), args.fusion)?;
    let tcfg = config::train_config(args.train_config.as_deref(), &args.overrides)?;
    let labels = config::label_config(args.label_config.as_deref())?;
    let (meta, ds) = dataset::load_training_set(dataset_root, &labels, pcfg.t_o, pcfg.t_a)?;
    info!(
        "{} episodes, {} samples, task {}",
        meta.episodes,
        ds.len(),
        meta.task.name()
    );
    fs::create_dir_all(out)?;
    config::write_json(&out.join("policy_config.json"), &pcfg)?;
    config::write_json(&out.join("train_config.json"), &tcfg)?;
    config::write_json(&out.join("label_config.json"), &labels)?;
    let norm = ds.norm.clone();
    let every = tcfg.log_every.max(1);
    training::train_to_dir(&ds, Policy::new(pcfg, norm)?, tcfg, out, |l| {
        if !quiet && l.step % every == 0 {
            info!(
                "step {} lr {:.2e} action {:.4} predictor {:.4} total {:.4}",
                l.step, l.lr, l.l_action, l.l_predictor, l.l_total
            );
        }
    })
}

#[derive(Debug, Clone, Default)]
pub struct RolloutArgs {
    pub sim_config: Option<PathBuf>,
    pub deploy_config: Option<PathBuf>,
    pub no_reactive: bool,
    pub disturb: Option<Disturbance>,
}

/// One episode; writes `out/rollout.csv` and `out/result.json`.
pub fn rollout(checkpoint: &Path, task: Task, seed: u64, args: &RolloutArgs, out: &Path) -> Result<(TrialResult, Rollout)> {
    let (policy, _) = load_policy(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let sim = config::sim_config(task, args.sim_config.as_deref())?;
    let deploy: DeployConfig = config::read_or_default(args.deploy_config.as_deref())?;
    deploy.validate(policy.cfg.t_a)?;
    let base = TrialBase {
        sim,
        runtime: deploy.runtime,
        thresholds: deploy.thresholds,
    };
    let method = policy.cfg.fusion.name();
    let mut runs = harness::run_trials(&policy, method, &base, &[seed], args.disturb, !args.no_reactive, 1)?;
    let (res, log) = runs.pop().expect("one trial");
    fs::create_dir_all(out)?;
    fs::write(out.join("rollout.csv"), rollout_csv(&log))?;
    let rec = serde_json::to_string_pretty(&harness::TrialRecord::from(&res))?;
    fs::write(out.join("result.json"), rec + "\n")?;
    info!("{}", metrics_line(&res));
    Ok((res, log))
}

pub fn eval(experiment: &Path, out: &Path, jobs: usize) -> Result<ExperimentOutput> {
    let exp = Experiment::load(experiment)?;
    harness::run_experiment(&exp, out, jobs)
}
