//! Training driver: loss log, best and final checkpoints, divergence abort.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use foar_core::demo::Dataset;
use foar_core::numeric::TrainConfig;
use foar_core::policy::{Policy, PolicyError, StepLog, Trainer};

use crate::checkpoint::save_policy;

pub const LOG_FILE: &str = "train_log.csv";
pub const BEST: &str = "best.foar";
pub const FINAL: &str = "final.foar";
pub const LAST_GOOD: &str = "last_good.foar";
pub const LOG_HEADER: &str = "step,lr,L_action,L_predictor,L_total";

pub fn log_row(l: &StepLog) -> String {
    format!("{},{},{},{},{}", l.step, l.lr, l.l_action, l.l_predictor, l.l_total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_path: PathBuf,
    pub best_path: PathBuf,
    /// Step ending the log window with the lowest mean total loss.
    pub best_step: usize,
    pub best_window_loss: f64,
    /// Means over the last log window.
    pub last_action: f64,
    pub last_predictor: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("training diverged at step {step}: {reason}; last good parameters in {}", saved.display())]
pub struct Diverged {
    pub step: usize,
    pub reason: String,
    pub saved: PathBuf,
}

/// Trains `policy` on `ds`, writing the log and checkpoints into `out`.
/// `progress` sees every step.
pub fn train_to_dir(
    ds: &dyn Dataset,
    policy: Policy,
    cfg: TrainConfig,
    out: &Path,
    mut progress: impl FnMut(&StepLog),
) -> Result<TrainSummary> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log_path = out.join(LOG_FILE);
    let mut log = BufWriter::new(
        fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    writeln!(log, "{LOG_HEADER}")?;

    let window = cfg.log_every.max(1);
    let total = cfg.total_steps;
    let mut trainer = Trainer::new(policy, cfg)?;
    let best_path = out.join(BEST);
    let mut best = (0usize, f64::INFINITY);
    let mut acc = (0.0, 0.0, 0.0, 0usize);
    let mut last = (f64::NAN, f64::NAN);

    for _ in 0..total {
        let l = match trainer.train_step(ds) {
            Ok(l) => l,
            Err(PolicyError::Diverged { step, reason }) => {
                log.flush()?;
                let saved = out.join(LAST_GOOD);
                save_policy(&saved, &trainer.policy, trainer.steps_done())?;
                return Err(Diverged { step, reason, saved }.into());
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(log, "{}", log_row(&l))?;
        progress(&l);
        acc.0 += l.l_total;
        acc.1 += l.l_action;
        acc.2 += l.l_predictor;
        acc.3 += 1;
        if acc.3 == window || l.step == total {
            let n = acc.3 as f64;
            let mean = acc.0 / n;
            last = (acc.1 / n, acc.2 / n);
            if mean < best.1 {
                best = (l.step, mean);
                save_policy(&best_path, &trainer.policy, l.step)?;
            }
            acc = (0.0, 0.0, 0.0, 0);
        }
    }
    log.flush()?;
    let final_path = out.join(FINAL);
    save_policy(&final_path, &trainer.policy, trainer.steps_done())?;
    if !best_path.exists() {
        save_policy(&best_path, &trainer.policy, trainer.steps_done())?;
    }
    Ok(TrainSummary {
        steps: trainer.steps_done(),
        final_path,
        best_path,
        best_step: best.0,
        best_window_loss: best.1,
        last_action: last.0,
        last_predictor: last.1,
    })
}

/// Parses a training log back into rows.
pub fn read_log(path: &Path) -> Result<Vec<[f64; 5]>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    anyhow::ensure!(lines.next() == Some(LOG_HEADER), "unexpected log header");
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(str::parse).collect::<Result<_, _>>()?;
            anyhow::ensure!(v.len() == 5, "log row has {} fields", v.len());
            Ok([v[0], v[1], v[2], v[3], v[4]])
        })
        .collect()
}
