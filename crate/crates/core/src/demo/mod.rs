//! Demonstration recording, contact labelling, normalization, augmentation
//! and training-sample assembly.

use alloc::vec::Vec;

mod augment;
mod labels;
mod normalize;
mod record;

pub use augment::{apply_color, apply_rigid, augment, AugmentConfig};
pub use labels::{exceeds, extract_contact_labels, LabelConfig, TIME_EPS};
pub use normalize::Normalizer;
pub use record::{
    record_episode, EpisodeData, RecordOptions, TickRecord, LIFT_TICKS, LOWDIM_WIDTH, TRIGGER_CLEARANCE,
    TRIGGER_COVERAGE,
};

use crate::geom::POSE_DIM;
use crate::sim::{window_ending_at, FtSample, ImageGrid, Observation, PointCloud, SimError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemoError {
    #[error("empty force/torque stream")]
    EmptyStream,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("sample index {0} out of range")]
    Index(usize),
    #[error("episode {episode}: {reason}")]
    Episode { episode: usize, reason: alloc::string::String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Normalized policy inputs at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    /// Points with xyz in `[-1, 1]` and rgb in `[0, 1]`.
    pub cloud: Vec<[f64; 6]>,
    pub image: ImageGrid,
    /// `T_o` rows of raw wrench readings, oldest first.
    pub ft: Vec<[f64; 6]>,
    pub proprio: [f64; POSE_DIM],
}

/// A policy input with its target chunk and future-contact label. The
/// normalized form is distinct from raw observations by type, so a sample
/// cannot be normalized twice.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: PolicyInput,
    /// `T_a` normalized absolute targets.
    pub actions: Vec<[f64; POSE_DIM]>,
    pub label: f64,
}

pub fn normalize_cloud(cloud: &PointCloud, norm: &Normalizer) -> Vec<[f64; 6]> {
    cloud
        .points
        .iter()
        .map(|p| {
            let n = norm.point(crate::geom::Vec3::new(p[0], p[1], p[2]));
            [n.x, n.y, n.z, p[3], p[4], p[5]]
        })
        .collect()
}

pub fn normalize_observation(obs: &Observation, norm: &Normalizer) -> PolicyInput {
    PolicyInput {
        cloud: normalize_cloud(&obs.cloud, norm),
        image: obs.image.clone(),
        ft: obs.ft_window.clone(),
        proprio: norm.pose(&obs.proprio),
    }
}

/// Index one past the last sample with timestamp at or before `t`.
pub fn samples_until(stream: &[FtSample], t: f64) -> usize {
    stream.partition_point(|s| s.t <= t + TIME_EPS)
}

/// Sample for `tick`: the `t_o` readings ending at the tick timestamp and
/// the expert's commands for ticks `tick .. tick + t_a` (the last command
/// repeats past the episode end).
#[allow(clippy::too_many_arguments)]
pub fn assemble_sample(
    ticks: &[TickRecord],
    ft: &[FtSample],
    cloud: &PointCloud,
    image: &ImageGrid,
    label: u8,
    tick: usize,
    t_o: usize,
    t_a: usize,
    norm: &Normalizer,
) -> Result<TrainingSample, DemoError> {
    if tick >= ticks.len() {
        return Err(DemoError::Index(tick));
    }
    let rec = &ticks[tick];
    let end = samples_until(ft, rec.t);
    let actions = (0..t_a)
        .map(|k| norm.pose(&ticks[(tick + k).min(ticks.len() - 1)].action))
        .collect();
    Ok(TrainingSample {
        input: PolicyInput {
            cloud: normalize_cloud(cloud, norm),
            image: image.clone(),
            ft: window_ending_at(ft, end, t_o),
            proprio: norm.pose(&rec.proprio),
        },
        actions,
        label: label as f64,
    })
}

/// Random access to training samples.
pub trait Dataset {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample(&self, index: usize) -> Result<TrainingSample, DemoError>;
    /// Per-sample episode id, for grouping and diagnostics.
    fn episode_of(&self, index: usize) -> usize;
}

pub fn load_batch<D: Dataset + ?Sized>(ds: &D, indices: &[usize]) -> Result<Vec<TrainingSample>, DemoError> {
    indices.iter().map(|&i| ds.sample(i)).collect()
}

/// Episodes held in memory with precomputed labels.
#[derive(Debug, Clone)]
pub struct MemoryDataset {
    pub episodes: Vec<EpisodeData>,
    pub labels: Vec<Vec<u8>>,
    index: Vec<(u32, u32)>,
    pub t_o: usize,
    pub t_a: usize,
    pub norm: Normalizer,
}

impl MemoryDataset {
    pub fn new(
        episodes: Vec<EpisodeData>,
        label_cfg: &LabelConfig,
        t_o: usize,
        t_a: usize,
        norm: Normalizer,
    ) -> Result<Self, DemoError> {
        let mut labels = Vec::with_capacity(episodes.len());
        let mut index = Vec::new();
        for (e, ep) in episodes.iter().enumerate() {
            if ep.clouds.len() != ep.ticks.len() || ep.images.len() != ep.ticks.len() {
                return Err(DemoError::Episode {
                    episode: e,
                    reason: "missing rendered observations".into(),
                });
            }
            labels.push(extract_contact_labels(&ep.ft, label_cfg, &ep.tick_times())?);
            for t in 0..ep.ticks.len() {
                index.push((e as u32, t as u32));
            }
        }
        Ok(Self {
            episodes,
            labels,
            index,
            t_o,
            t_a,
            norm,
        })
    }
}

impl Dataset for MemoryDataset {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn sample(&self, i: usize) -> Result<TrainingSample, DemoError> {
        let &(e, t) = self.index.get(i).ok_or(DemoError::Index(i))?;
        let (e, t) = (e as usize, t as usize);
        let ep = &self.episodes[e];
        assemble_sample(
            &ep.ticks,
            &ep.ft,
            &ep.clouds[t],
            &ep.images[t],
            self.labels[e][t],
            t,
            self.t_o,
            self.t_a,
            &self.norm,
        )
    }

    fn episode_of(&self, i: usize) -> usize {
        self.index[i].0 as usize
    }
}

#[cfg(test)]
mod tests;
