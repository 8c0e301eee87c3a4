//! Task outcome measures.

use super::config::Task;
use super::world::{CutObject, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation of the normalized lengths.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub coverage: Option<f64>,
    pub segments: Option<SegmentStats>,
}

/// Maximal runs of uncut cells; each run length is normalized by the total
/// uncut length, so the lengths always sum to one.
pub fn segment_stats(object: &CutObject) -> SegmentStats {
    let mut runs = alloc::vec::Vec::new();
    let mut cur = 0usize;
    for &cut in &object.cells {
        if cut {
            if cur > 0 {
                runs.push(cur);
            }
            cur = 0;
        } else {
            cur += 1;
        }
    }
    if cur > 0 {
        runs.push(cur);
    }
    let total: usize = runs.iter().sum();
    if runs.is_empty() {
        return SegmentStats::default();
    }
    let n = runs.len() as f64;
    let lens = runs.iter().map(|&r| r as f64 / total as f64);
    let mean = lens.clone().sum::<f64>() / n;
    let var = lens.map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    SegmentStats {
        count: runs.len(),
        mean,
        std: libm::sqrt(var),
    }
}

pub fn task_metrics(state: &SimState, task: Task) -> Metrics {
    match task {
        Task::Wipe => Metrics {
            coverage: state.board.as_ref().map(|b| b.coverage()),
            segments: None,
        },
        Task::Cut => Metrics {
            coverage: None,
            segments: state.object.as_ref().map(segment_stats),
        },
    }
}
