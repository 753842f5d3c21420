use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Inclusive range of evaluated frame indices, as in `temporalROI.txt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TemporalRange {
    pub first: usize,
    pub last: usize,
}

impl TemporalRange {
    pub fn contains(&self, index: usize) -> bool {
        (self.first..=self.last).contains(&index)
    }
}

/// Parses a `temporalROI.txt` file: two whitespace separated integers.
pub fn read_temporal_roi(path: &Path) -> Result<TemporalRange> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let nums: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    match nums.as_slice() {
        [first, last] if first <= last => Ok(TemporalRange {
            first: *first,
            last: *last,
        }),
        _ => Err(Error::format(
            path,
            "expected two integers `first last` with first <= last",
        )),
    }
}

/// One video of a CDnet-style dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoLayout {
    /// The video directory.
    pub dir: PathBuf,
    /// Path of the video directory relative to the dataset root.
    pub relative: PathBuf,
    pub category: String,
    pub name: String,
}

impl VideoLayout {
    pub fn from_dir(dir: &Path, relative: PathBuf) -> Self {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let category = dir
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        VideoLayout {
            dir: dir.to_path_buf(),
            relative,
            category,
            name,
        }
    }

    pub fn input_dir(&self) -> PathBuf {
        self.dir.join("input")
    }

    pub fn groundtruth_dir(&self) -> PathBuf {
        self.dir.join("groundtruth")
    }

    pub fn roi_path(&self) -> PathBuf {
        self.dir.join("ROI.bmp")
    }

    pub fn temporal_roi_path(&self) -> PathBuf {
        self.dir.join("temporalROI.txt")
    }

    pub fn temporal_roi(&self) -> Result<TemporalRange> {
        read_temporal_roi(&self.temporal_roi_path())
    }

    /// `category/video`, used in reports.
    pub fn id(&self) -> String {
        format!("{}/{}", self.category, self.name)
    }
}

fn is_video_dir(dir: &Path) -> bool {
    dir.join("input").is_dir()
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Finds videos under `root`, which may be a single video directory, a
/// category directory or a dataset root (`category/video`).
pub fn discover_videos(root: &Path) -> Result<Vec<VideoLayout>> {
    if is_video_dir(root) {
        return Ok(vec![VideoLayout::from_dir(root, PathBuf::new())]);
    }
    let mut videos = Vec::new();
    for child in sorted_subdirs(root)? {
        let rel = PathBuf::from(child.file_name().unwrap_or_default());
        if is_video_dir(&child) {
            videos.push(VideoLayout::from_dir(&child, rel));
            continue;
        }
        for grandchild in sorted_subdirs(&child)? {
            if is_video_dir(&grandchild) {
                let rel = rel.join(grandchild.file_name().unwrap_or_default());
                videos.push(VideoLayout::from_dir(&grandchild, rel));
            }
        }
    }
    Ok(videos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temporal_roi_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("temporalROI.txt");
        std::fs::write(&p, "470 1700\n").unwrap();
        let r = read_temporal_roi(&p).unwrap();
        assert_eq!(r, TemporalRange { first: 470, last: 1700 });
        assert!(r.contains(470) && r.contains(1700) && !r.contains(469));
        std::fs::write(&p, "5").unwrap();
        assert!(read_temporal_roi(&p).is_err());
        std::fs::write(&p, "9 3").unwrap();
        assert!(read_temporal_roi(&p).is_err());
    }

    #[test]
    fn discovers_nested_layout() {
        let dir = tempfile::tempdir().unwrap();
        for v in ["baseline/highway", "baseline/office", "shadow/bungalows"] {
            std::fs::create_dir_all(dir.path().join(v).join("input")).unwrap();
        }
        std::fs::create_dir_all(dir.path().join("notes")).unwrap();
        let vids = discover_videos(dir.path()).unwrap();
        let ids: Vec<_> = vids.iter().map(|v| v.id()).collect();
        assert_eq!(ids, ["baseline/highway", "baseline/office", "shadow/bungalows"]);
        assert_eq!(vids[2].relative, PathBuf::from("shadow/bungalows"));

        let single = discover_videos(&dir.path().join("baseline/office")).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].category, "baseline");
    }
}
