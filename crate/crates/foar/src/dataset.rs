//! On-disk demonstration datasets.
//!
//! ```text
//! <root>/meta.json
//! <root>/episodes/ep_NNNNNN/lowdim.bin     f32 ticks x 17 (t, proprio, action)
//! <root>/episodes/ep_NNNNNN/ft.bin         f32 rows (t, fx, fy, fz, tx, ty, tz)
//! <root>/episodes/ep_NNNNNN/cloud_TTTT.bin f32 N x 6
//! <root>/episodes/ep_NNNNNN/image_TTTT.bin f32 H x W x C
//! <root>/episodes/ep_NNNNNN/index.json     shapes and exact timestamps
//! ```
//!
//! Arrays are little-endian `f32`. Timestamps are kept exactly in
//! `index.json` so that label windows agree with the in-memory recording.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use foar_core::demo::{EpisodeData, LabelConfig, MemoryDataset, Normalizer, TickRecord, LOWDIM_WIDTH};
use foar_core::sim::{Disturbance, FtSample, ImageGrid, PointCloud, SimConfig, Task};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const META_FILE: &str = "meta.json";
pub const EPISODES_DIR: &str = "episodes";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("episode {episode}: {reason}")]
    Episode { episode: usize, reason: String },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: Task,
    /// SHA-256 of the canonical JSON of `sim`.
    pub config_hash: String,
    pub episodes: usize,
    pub seed: u64,
    /// Generation seeds whose expert run failed.
    pub skipped: Vec<u64>,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeIndex {
    pub task: Task,
    pub seed: u64,
    pub config_hash: String,
    pub ticks: usize,
    /// Exact tick timestamps, s.
    pub tick_times: Vec<f64>,
    pub ft_samples: usize,
    /// Sample `j` was taken at `(ft_first + j) / ft_rate_hz`.
    pub ft_first: u64,
    pub ft_rate_hz: f64,
    pub cloud_points: Vec<usize>,
    /// `[h, w, c]`; empty when the episode was recorded without rendering.
    pub image_shape: Vec<usize>,
    pub disturbance: Option<Disturbance>,
    pub disturbed_tick: Option<usize>,
    pub final_coverage: Option<f64>,
}

pub fn config_hash(cfg: &SimConfig) -> String {
    let text = serde_json::to_string(cfg).expect("simulator config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn episode_dir(root: &Path, i: usize) -> PathBuf {
    root.join(EPISODES_DIR).join(format!("ep_{i:06}"))
}

fn f32_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect()
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>, DatasetError> {
    let buf = fs::read(path).map_err(io_at(path))?;
    if buf.len() != expected * 4 {
        return Err(bad(path, format!("expected {expected} floats, found {} bytes", buf.len())));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    fs::write(path, bytes).map_err(io_at(path))
}

/// Infers the index of the first sensor sample from its timestamp.
fn first_sample_index(ft: &[FtSample], rate: f64) -> Option<u64> {
    let first = ft.first()?;
    let k = (first.t * rate).round();
    let ok = ft
        .iter()
        .enumerate()
        .all(|(j, s)| s.t == (k + j as f64) / rate);
    ok.then_some(k as u64)
}

pub fn write_episode(dir: &Path, ep: &EpisodeData, cfg: &SimConfig) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let ft_first = first_sample_index(&ep.ft, cfg.ft_rate_hz)
        .ok_or_else(|| bad(dir, "sensor timestamps are not on the sample grid"))?;

    write_file(
        &dir.join("lowdim.bin"),
        &f32_bytes(ep.ticks.iter().flat_map(|t| t.to_row())),
    )?;
    write_file(
        &dir.join("ft.bin"),
        &f32_bytes(ep.ft.iter().flat_map(|s| {
            let r = s.row();
            [s.t, r[0], r[1], r[2], r[3], r[4], r[5]]
        })),
    )?;
    for (t, c) in ep.clouds.iter().enumerate() {
        write_file(
            &dir.join(format!("cloud_{t:04}.bin")),
            &f32_bytes(c.points.iter().flatten().copied()),
        )?;
    }
    for (t, im) in ep.images.iter().enumerate() {
        write_file(&dir.join(format!("image_{t:04}.bin")), &f32_bytes(im.data.iter().copied()))?;
    }
    let index = EpisodeIndex {
        task: ep.task,
        seed: ep.seed,
        config_hash: config_hash(cfg),
        ticks: ep.ticks.len(),
        tick_times: ep.tick_times(),
        ft_samples: ep.ft.len(),
        ft_first,
        ft_rate_hz: cfg.ft_rate_hz,
        cloud_points: ep.clouds.iter().map(|c| c.len()).collect(),
        image_shape: ep.images.first().map(|i| vec![i.h, i.w, i.c]).unwrap_or_default(),
        disturbance: ep.disturbance.map(|d| d.0),
        disturbed_tick: ep.disturbance.map(|d| d.1),
        final_coverage: ep.final_coverage,
    };
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    write_file(&dir.join("index.json"), (text + "\n").as_bytes())
}

pub fn read_episode(dir: &Path) -> Result<EpisodeData, DatasetError> {
    let ip = dir.join("index.json");
    let text = fs::read_to_string(&ip).map_err(io_at(&ip))?;
    let index: EpisodeIndex = serde_json::from_str(&text).map_err(|e| bad(&ip, e.to_string()))?;
    if index.tick_times.len() != index.ticks {
        return Err(bad(&ip, "tick timestamp count differs from tick count"));
    }

    let rows = read_f32(&dir.join("lowdim.bin"), index.ticks * LOWDIM_WIDTH)?;
    let ticks = rows
        .chunks_exact(LOWDIM_WIDTH)
        .zip(&index.tick_times)
        .map(|(r, &t)| TickRecord {
            t,
            ..TickRecord::from_row(r)
        })
        .collect();

    let ftp = dir.join("ft.bin");
    let raw = read_f32(&ftp, index.ft_samples * 7)?;
    let mut ft = Vec::with_capacity(index.ft_samples);
    for (j, r) in raw.chunks_exact(7).enumerate() {
        let t = (index.ft_first + j as u64) as f64 / index.ft_rate_hz;
        if (t as f32) as f64 != r[0] {
            return Err(bad(&ftp, format!("sample {j} timestamp disagrees with the index")));
        }
        ft.push(FtSample {
            t,
            f: [r[1], r[2], r[3]],
            tau: [r[4], r[5], r[6]],
        });
    }

    let mut clouds = Vec::with_capacity(index.cloud_points.len());
    for (t, &n) in index.cloud_points.iter().enumerate() {
        let v = read_f32(&dir.join(format!("cloud_{t:04}.bin")), n * 6)?;
        clouds.push(PointCloud {
            points: v
                .chunks_exact(6)
                .map(|p| [p[0], p[1], p[2], p[3], p[4], p[5]])
                .collect(),
        });
    }
    let mut images = Vec::new();
    if let [h, w, c] = index.image_shape[..] {
        for t in 0..index.ticks {
            let data = read_f32(&dir.join(format!("image_{t:04}.bin")), h * w * c)?;
            images.push(ImageGrid { h, w, c, data });
        }
    } else if !index.image_shape.is_empty() {
        return Err(bad(&ip, "image shape must have three entries"));
    }

    Ok(EpisodeData {
        task: index.task,
        seed: index.seed,
        ticks,
        ft,
        clouds,
        images,
        disturbance: index.disturbance.zip(index.disturbed_tick),
        final_coverage: index.final_coverage,
    })
}

pub fn write_meta(root: &Path, meta: &DatasetMeta) -> Result<(), DatasetError> {
    fs::create_dir_all(root).map_err(io_at(root))?;
    let text = serde_json::to_string_pretty(meta).expect("dataset metadata serializes");
    write_file(&root.join(META_FILE), (text + "\n").as_bytes())
}

pub fn read_meta(root: &Path) -> Result<DatasetMeta, DatasetError> {
    let p = root.join(META_FILE);
    let text = fs::read_to_string(&p).map_err(io_at(&p))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| bad(&p, e.to_string()))?;
    if meta.config_hash != config_hash(&meta.sim) {
        return Err(bad(&p, "config hash does not match the stored simulator config"));
    }
    Ok(meta)
}

/// Reads every episode listed in `meta.json`.
pub fn read_dataset(root: &Path) -> Result<(DatasetMeta, Vec<EpisodeData>), DatasetError> {
    let meta = read_meta(root)?;
    let mut eps = Vec::with_capacity(meta.episodes);
    for i in 0..meta.episodes {
        let ep = read_episode(&episode_dir(root, i)).map_err(|e| DatasetError::Episode {
            episode: i,
            reason: e.to_string(),
        })?;
        eps.push(ep);
    }
    Ok((meta, eps))
}

/// Loads a dataset into memory with labels and the workspace normalizer
/// of its simulator config.
pub fn load_training_set(
    root: &Path,
    labels: &LabelConfig,
    t_o: usize,
    t_a: usize,
) -> Result<(DatasetMeta, MemoryDataset), DatasetError> {
    let (meta, eps) = read_dataset(root)?;
    if eps.is_empty() {
        return Err(bad(root, "dataset has no episodes"));
    }
    let norm = Normalizer::from_sim(&meta.sim);
    let ds = MemoryDataset::new(eps, labels, t_o, t_a, norm).map_err(|e| bad(root, e.to_string()))?;
    Ok((meta, ds))
}
