//! JSON configuration files. Every file is optional; absent fields take
//! their defaults and command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use foar_core::demo::{LabelConfig, RecordOptions};
use foar_core::numeric::TrainConfig;
use foar_core::policy::{FusionMode, PolicyConfig};
use foar_core::runtime::{ReactiveThresholds, RuntimeConfig};
use foar_core::sim::{Disturbance, SimConfig, Task};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Simulator config for `task`: the task defaults, replaced wholesale by
/// a file when one is given. The file's task must agree with `task`.
pub fn sim_config(task: Task, path: Option<&Path>) -> Result<SimConfig> {
    let cfg = match path {
        Some(p) => {
            let c: SimConfig = read_json(p)?;
            if c.task != task {
                bail!("{} describes task {}, expected {}", p.display(), c.task.name(), task.name());
            }
            c
        }
        None => SimConfig::for_task(task),
    };
    cfg.validate().map_err(|e| anyhow::anyhow!("simulator config: {e}"))?;
    Ok(cfg)
}

pub fn policy_config(path: Option<&Path>, fusion: Option<FusionMode>) -> Result<PolicyConfig> {
    let mut cfg: PolicyConfig = read_or_default(path)?;
    if let Some(m) = fusion {
        cfg.fusion = m;
    }
    cfg.validate().context("policy config")?;
    Ok(cfg)
}

/// Training config for the desk-scale runs: shorter than the defaults and
/// with a larger peak learning rate.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        base_lr: 1e-3,
        warmup_steps: 500,
        total_steps: 6000,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub steps: Option<usize>,
    pub warmup: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
}

pub fn train_config(path: Option<&Path>, o: &TrainOverrides) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => read_json(p)?,
        None => desk_train_config(),
    };
    if let Some(s) = o.steps {
        cfg.total_steps = s;
        if o.warmup.is_none() {
            cfg.warmup_steps = cfg.warmup_steps.min(s);
        }
    }
    if let Some(w) = o.warmup {
        cfg.warmup_steps = w;
    }
    if let Some(lr) = o.lr {
        cfg.base_lr = lr;
    }
    if let Some(b) = o.batch {
        cfg.batch_size = b;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate().context("train config")?;
    Ok(cfg)
}

pub fn label_config(path: Option<&Path>) -> Result<LabelConfig> {
    let cfg: LabelConfig = read_or_default(path)?;
    cfg.validate().context("label config")?;
    Ok(cfg)
}

pub fn record_options(path: Option<&Path>) -> Result<RecordOptions> {
    read_or_default(path)
}

/// Deployment settings: controller schedule and reactive thresholds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DeployConfig {
    pub runtime: RuntimeConfig,
    pub thresholds: ReactiveThresholds,
}

impl DeployConfig {
    pub fn validate(&self, t_a: usize) -> Result<()> {
        self.runtime.validate().map_err(|e| anyhow::anyhow!("runtime config: {e}"))?;
        self.thresholds
            .validate(t_a)
            .map_err(|e| anyhow::anyhow!("reactive thresholds: {e}"))?;
        Ok(())
    }
}

/// One row of an evaluation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    /// Relative paths resolve against the experiment file's directory.
    pub checkpoint: PathBuf,
    #[serde(default = "yes")]
    pub reactive: bool,
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
}

fn yes() -> bool {
    true
}

fn default_trials() -> usize {
    20
}

fn default_seed() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub task: Task,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Trial `i` runs simulator seed `seed + i` for every method.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sim: Option<PathBuf>,
    #[serde(default)]
    pub deploy: DeployConfig,
    pub methods: Vec<MethodSpec>,
    /// Adds a `no-reactive` row after every gated method.
    #[serde(default)]
    pub reactive_ablation: bool,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let mut e: Experiment = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for m in &mut e.methods {
            if m.checkpoint.is_relative() {
                m.checkpoint = base.join(&m.checkpoint);
            }
        }
        if let Some(s) = &mut e.sim {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("experiment needs at least one trial");
        }
        if self.methods.is_empty() {
            bail!("experiment lists no methods");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("experiment name must be a plain directory name");
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("method names must be unique");
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|i| self.seed + i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_over_defaults() {
        let o = TrainOverrides {
            steps: Some(100),
            lr: Some(5e-4),
            ..Default::default()
        };
        let c = train_config(None, &o).unwrap();
        assert_eq!(c.total_steps, 100);
        assert_eq!(c.warmup_steps, 100);
        assert_eq!(c.base_lr, 5e-4);
        assert_eq!(c.alpha, 0.1);
    }

    #[test]
    fn experiment_paths_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.json");
        fs::write(
            &p,
            r#"{"name": "t1", "task": "wipe", "methods": [
                {"name": "gated", "checkpoint": "ck/final.foar"},
                {"name": "vision", "checkpoint": "/abs/v.foar", "reactive": false, "disturbance": "rewrite_move"}]}"#,
        )
        .unwrap();
        let e = Experiment::load(&p).unwrap();
        assert_eq!(e.trials, 20);
        assert_eq!(e.seeds()[..2], [1000, 1001]);
        assert_eq!(e.methods[0].checkpoint, dir.path().join("ck/final.foar"));
        assert!(e.methods[0].reactive);
        assert_eq!(e.methods[1].checkpoint, PathBuf::from("/abs/v.foar"));
        assert_eq!(e.methods[1].disturbance, Some(Disturbance::RewriteMove));
    }

    #[test]
    fn duplicate_methods_rejected() {
        let m = MethodSpec {
            name: "a".into(),
            checkpoint: "x".into(),
            reactive: true,
            disturbance: None,
        };
        let e = Experiment {
            name: "x".into(),
            task: Task::Wipe,
            trials: 2,
            seed: 0,
            sim: None,
            deploy: DeployConfig::default(),
            methods: vec![m.clone(), m],
            reactive_ablation: false,
        };
        assert!(e.validate().is_err());
    }
}
