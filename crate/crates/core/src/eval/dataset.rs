use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate, compute_metrics, format_table, Aggregate, CategoryRow, ConfusionCounts, MetricReport};
use crate::error::{Error, Result};
use crate::frame_io::{
    self, discover_videos, FramePattern, RoiMask, TemporalRange, VideoLayout,
};

/// Scores of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub id: String,
    pub category: String,
    pub name: String,
    pub frames: usize,
    pub counts: ConfusionCounts,
    pub metrics: MetricReport,
}

/// Scores of every video plus per-category and overall means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub videos: Vec<VideoReport>,
    pub summary: Aggregate,
}

impl DatasetReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Argument(format!("bad report json: {e}")))
    }

    /// Per-video, per-category and overall rows as an aligned table.
    pub fn table(&self) -> String {
        let mut rows: Vec<CategoryRow<'_>> = self
            .videos
            .iter()
            .map(|v| CategoryRow {
                label: &v.id,
                report: &v.metrics,
            })
            .collect();
        for (cat, mean) in &self.summary.categories {
            rows.push(CategoryRow {
                label: cat,
                report: &mean.report,
            });
        }
        rows.push(CategoryRow {
            label: "Overall",
            report: &self.summary.overall.report,
        });
        format_table(&rows)
    }
}

const GT_PATTERN: &str = "gt%06d.png";

fn gt_indices(video: &VideoLayout, range: Option<TemporalRange>) -> Vec<usize> {
    let pattern = FramePattern::parse(GT_PATTERN).expect("static pattern");
    let dir = video.groundtruth_dir();
    match range {
        Some(r) => (r.first..=r.last)
            .filter(|&i| pattern.path(&dir, i).is_file())
            .collect(),
        None => (1..)
            .take_while(|&i| pattern.path(&dir, i).is_file())
            .collect(),
    }
}

/// Scores the masks in `results_dir` against one video's ground truth.
pub fn evaluate_video(results_dir: &Path, video: &VideoLayout, mask_pattern: &str) -> Result<VideoReport> {
    let pattern = FramePattern::parse(mask_pattern)?;
    let range = if video.temporal_roi_path().is_file() {
        Some(video.temporal_roi()?)
    } else {
        None
    };
    let indices = gt_indices(video, range);
    if indices.is_empty() {
        return Err(Error::Config(format!("{}: no ground-truth frames", video.id())));
    }
    let missing: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| !pattern.path(results_dir, i).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "{}: {} of {} evaluated frames have no result mask (first missing: {})",
            video.id(),
            missing.len(),
            indices.len(),
            pattern.path(results_dir, missing[0]).display()
        )));
    }
    let roi_path = video.roi_path();
    let mut roi: Option<RoiMask> = if roi_path.is_file() {
        Some(frame_io::load_roi(&roi_path)?)
    } else {
        None
    };
    let gt_pattern = FramePattern::parse(GT_PATTERN)?;
    let mut counts = ConfusionCounts::default();
    for &i in &indices {
        let gt = frame_io::load_ground_truth(&gt_pattern.path(&video.groundtruth_dir(), i))?;
        let mask = frame_io::load_mask(&pattern.path(results_dir, i))?;
        let roi = roi.get_or_insert_with(|| {
            let (w, h) = gt.dims();
            RoiMask::full(w, h)
        });
        counts
            .accumulate(&mask, &gt, roi, range.map(|r| (i, r)))
            .map_err(|e| Error::Config(format!("{} frame {i}: {e}", video.id())))?;
    }
    Ok(VideoReport {
        id: video.id(),
        category: video.category.clone(),
        name: video.name.clone(),
        frames: indices.len(),
        metrics: compute_metrics(&counts),
        counts,
    })
}

/// Scores every video found under `dataset_root` against the matching
/// directory under `results_root` (same relative layout).
pub fn evaluate_dataset(results_root: &Path, dataset_root: &Path, mask_pattern: &str) -> Result<DatasetReport> {
    let videos = discover_videos(dataset_root)?;
    if videos.is_empty() {
        return Err(Error::Config(format!(
            "no videos found under {}",
            dataset_root.display()
        )));
    }
    let mut reports = Vec::with_capacity(videos.len());
    for video in &videos {
        let dir = results_root.join(&video.relative);
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "{}: results directory {} does not exist",
                video.id(),
                dir.display()
            )));
        }
        reports.push(evaluate_video(&dir, video, mask_pattern)?);
    }
    let pairs: Vec<(String, MetricReport)> = reports.iter().map(|r| (r.id.clone(), r.metrics)).collect();
    let summary = aggregate(&pairs, |id| id.split('/').next().unwrap_or_default().to_string())?;
    Ok(DatasetReport {
        videos: reports,
        summary,
    })
}

/// Validates the semantic maps of one video: each must load as 8-bit
/// grayscale with the frame dimensions. Returns how many maps were checked.
pub fn check_semantic_maps(sem_dir: &Path, sem_pattern: &str, video: &VideoLayout, input_pattern: &str) -> Result<usize> {
    let sem = FramePattern::parse(sem_pattern)?;
    let reader = frame_io::load_sequence(&video.input_dir(), input_pattern, 1, None)?;
    let indices = reader.indices();
    let first = indices
        .first()
        .ok_or_else(|| Error::Config(format!("{}: no input frames", video.id())))?;
    let dims = frame_io::load_frame(&reader.index_path(*first))?.dims();
    let mut checked = 0;
    for i in indices {
        let p = sem.path(sem_dir, i);
        if !p.is_file() {
            continue;
        }
        let map = frame_io::load_semantic_map(&p)?;
        if map.dims() != dims {
            return Err(Error::format(
                &p,
                format!(
                    "semantic map is {}x{}, frames are {}x{}",
                    map.width(),
                    map.height(),
                    dims.0,
                    dims.1
                ),
            ));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err(Error::Config(format!(
            "{}: no semantic maps in {}",
            video.id(),
            sem_dir.display()
        )));
    }
    Ok(checked)
}
