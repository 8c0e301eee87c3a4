//! Multi-trial evaluation with paired seeds, rollout logs and reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, Context, Result};
use foar_core::eval::{run_trial, summarize, ComparisonTable, TrialResult, TrialSpec};
use foar_core::policy::Policy;
use foar_core::runtime::{ReactiveThresholds, Rollout, RuntimeConfig};
use foar_core::sim::{Disturbance, SimConfig};
use serde::Serialize;

use crate::checkpoint::load_policy;
use crate::config::{self, Experiment, MethodSpec};

pub const ROLLOUT_HEADER: &str =
    "tick,t,phi,buffer,correction,force_norm,torque_norm,x,y,z,qw,qx,qy,qz,width,inference,event";

pub fn rollout_csv(r: &Rollout) -> String {
    let mut s = String::with_capacity(128 * (r.ticks.len() + 1));
    s.push_str(ROLLOUT_HEADER);
    s.push('\n');
    for t in &r.ticks {
        let p = &t.pose;
        let note = t.note.as_deref().unwrap_or("").replace([',', '\n'], ";");
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            t.tick,
            t.t,
            t.phi,
            t.buffer.name(),
            u8::from(t.correction),
            t.force_norm,
            t.torque_norm,
            p.pos.x,
            p.pos.y,
            p.pos.z,
            p.rot.w,
            p.rot.x,
            p.rot.y,
            p.rot.z,
            p.width,
            u8::from(t.inference),
            note
        ));
    }
    s
}

/// Serializable view of a [`TrialResult`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub score: f64,
    pub coverage: f64,
    pub grasp: bool,
    pub operate: bool,
    pub place: bool,
    pub segment_count: Option<usize>,
    pub segment_mean: Option<f64>,
    pub segment_std: Option<f64>,
    pub disturbance: Option<String>,
    pub disturbed_at: Option<usize>,
    pub corrections: usize,
}

impl From<&TrialResult> for TrialRecord {
    fn from(r: &TrialResult) -> Self {
        Self {
            task: r.task.name().into(),
            method: r.method.clone(),
            seed: r.seed,
            score: r.score,
            coverage: r.coverage,
            grasp: r.asr.grasp,
            operate: r.asr.operate,
            place: r.asr.place,
            segment_count: r.segments.map(|s| s.count),
            segment_mean: r.segments.map(|s| s.mean),
            segment_std: r.segments.map(|s| s.std),
            disturbance: r.disturbance.map(|d| d.name().into()),
            disturbed_at: r.disturbed_at,
            corrections: r.corrections,
        }
    }
}

pub fn metrics_line(r: &TrialResult) -> String {
    let mut s = format!(
        "method={} seed={} score={} coverage={:.4} grasp={} operate={} place={} corrections={}",
        r.method, r.seed, r.score, r.coverage, r.asr.grasp, r.asr.operate, r.asr.place, r.corrections
    );
    if let Some(g) = r.segments {
        s.push_str(&format!(" segments={} seg_mean={:.4} seg_std={:.4}", g.count, g.mean, g.std));
    }
    if let Some(d) = r.disturbance {
        s.push_str(&format!(" disturbance={}", d.name()));
    }
    s
}

/// Settings shared by every trial of a method.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBase {
    pub sim: SimConfig,
    pub runtime: RuntimeConfig,
    pub thresholds: ReactiveThresholds,
}

impl TrialBase {
    pub fn spec(&self, seed: u64, disturbance: Option<Disturbance>, reactive: bool) -> TrialSpec {
        TrialSpec {
            sim: self.sim.clone(),
            seed,
            disturbance,
            runtime: RuntimeConfig {
                reactive,
                ..self.runtime.clone()
            },
            thresholds: self.thresholds.clone(),
        }
    }
}

/// Runs one trial per seed, in seed order, on up to `jobs` threads.
/// Trials are independent, so the result does not depend on `jobs`.
pub fn run_trials(
    policy: &Policy,
    method: &str,
    base: &TrialBase,
    seeds: &[u64],
    disturbance: Option<Disturbance>,
    reactive: bool,
    jobs: usize,
) -> Result<Vec<(TrialResult, Rollout)>> {
    let one = |seed: u64| {
        run_trial(policy, method, &base.spec(seed, disturbance, reactive))
            .map_err(|e| anyhow!("{method} seed {seed}: {e}"))
    };
    let jobs = jobs.clamp(1, seeds.len().max(1));
    if jobs == 1 {
        return seeds.iter().map(|&s| one(s)).collect();
    }
    let mut slots: Vec<Option<Result<(TrialResult, Rollout)>>> = (0..seeds.len()).map(|_| None).collect();
    thread::scope(|sc| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let one = &one;
                sc.spawn(move || {
                    (j..seeds.len())
                        .step_by(jobs)
                        .map(|i| (i, one(seeds[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("trial worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every trial ran")).collect()
}

/// One report row: a method under one reactive setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub method: usize,
    pub reactive: bool,
}

/// Expands the experiment into rows: each method as configured, plus a
/// `-no-reactive` row for reactive methods when the ablation is requested.
pub fn ablation_matrix(exp: &Experiment) -> Vec<Row> {
    let mut rows = Vec::new();
    for (i, m) in exp.methods.iter().enumerate() {
        rows.push(Row {
            label: m.name.clone(),
            method: i,
            reactive: m.reactive,
        });
        if exp.reactive_ablation && m.reactive {
            rows.push(Row {
                label: format!("{}-no-reactive", m.name),
                method: i,
                reactive: false,
            });
        }
    }
    rows
}

#[derive(Debug, Serialize)]
struct ReportMeta<'a> {
    experiment: &'a str,
    task: &'a str,
    seeds: Vec<u64>,
    rows: Vec<ReportRowMeta<'a>>,
}

#[derive(Debug, Serialize)]
struct ReportRowMeta<'a> {
    label: &'a str,
    checkpoint: String,
    reactive: bool,
    disturbance: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub table: ComparisonTable,
    pub trials: Vec<Vec<TrialResult>>,
}

pub fn trial_dir(exp_dir: &Path, i: usize) -> PathBuf {
    exp_dir.join(format!("trial_{i:02}"))
}

/// Runs every row over the paired seeds and writes
/// `<out>/runs/<name>/{report.csv, report.txt, report.json}` plus per-trial
/// logs `trial_NN/<row>.csv` and `trial_NN/<row>.json`.
pub fn run_experiment(exp: &Experiment, out: &Path, jobs: usize) -> Result<ExperimentOutput> {
    let sim = config::sim_config(exp.task, exp.sim.as_deref())?;
    let seeds = exp.seeds();
    let dir = out.join("runs").join(&exp.name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut policies = Vec::with_capacity(exp.methods.len());
    for m in &exp.methods {
        let (p, _) = load_policy(&m.checkpoint)
            .with_context(|| format!("method {}: loading {}", m.name, m.checkpoint.display()))?;
        exp.deploy.validate(p.cfg.t_a)?;
        policies.push(p);
    }
    let base = TrialBase {
        sim,
        runtime: exp.deploy.runtime.clone(),
        thresholds: exp.deploy.thresholds.clone(),
    };

    let rows = ablation_matrix(exp);
    let mut table_rows = Vec::with_capacity(rows.len());
    let mut all = Vec::with_capacity(rows.len());
    for row in &rows {
        let m: &MethodSpec = &exp.methods[row.method];
        let runs = run_trials(
            &policies[row.method],
            &row.label,
            &base,
            &seeds,
            m.disturbance,
            row.reactive,
            jobs,
        )?;
        for (i, (res, log)) in runs.iter().enumerate() {
            let td = trial_dir(&dir, i);
            fs::create_dir_all(&td)?;
            fs::write(td.join(format!("{}.csv", row.label)), rollout_csv(log))?;
            let rec = serde_json::to_string_pretty(&TrialRecord::from(res))?;
            fs::write(td.join(format!("{}.json", row.label)), rec + "\n")?;
        }
        let results: Vec<TrialResult> = runs.into_iter().map(|(r, _)| r).collect();
        table_rows.push(summarize(&row.label, &results));
        all.push(results);
    }

    let title = format!("{} ({}, {} paired seeds)", exp.name, exp.task.name(), seeds.len());
    let table = ComparisonTable::new(&title, seeds.clone(), table_rows).map_err(|e| anyhow!(e))?;
    fs::write(dir.join("report.csv"), table.to_csv())?;
    fs::write(dir.join("report.txt"), table.render())?;
    let meta = ReportMeta {
        experiment: &exp.name,
        task: exp.task.name(),
        seeds,
        rows: rows
            .iter()
            .map(|r| {
                let m = &exp.methods[r.method];
                ReportRowMeta {
                    label: &r.label,
                    checkpoint: m.checkpoint.display().to_string(),
                    reactive: r.reactive,
                    disturbance: m.disturbance.map(|d| d.name()),
                }
            })
            .collect(),
    };
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(ExperimentOutput { dir, table, trials: all })
}
