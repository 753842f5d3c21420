//! Image sequence, ground truth, ROI and semantic map I/O in the CDnet
//! directory layout.
//!
//! Frames decode from anything the `image` crate reads (JPEG, PNG, BMP,
//! PNM) and are converted to RGB. Semantic maps must already be 8-bit
//! single channel; their bytes are kept verbatim.

mod cdnet;
mod types;

pub use cdnet::{discover_videos, read_temporal_roi, TemporalRange, VideoLayout};
pub use types::*;

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// A filename template holding exactly one printf-style index placeholder,
/// e.g. `in%06d.jpg`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePattern {
    prefix: String,
    pad: usize,
    suffix: String,
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let start = pattern
            .find('%')
            .ok_or_else(|| Error::Argument(format!("pattern {pattern:?} has no %d placeholder")))?;
        let rest = &pattern[start + 1..];
        let d = rest
            .find('d')
            .ok_or_else(|| Error::Argument(format!("pattern {pattern:?} has no %d placeholder")))?;
        let spec = &rest[..d];
        let pad = if spec.is_empty() {
            0
        } else if spec.bytes().all(|b| b.is_ascii_digit()) {
            spec.parse()
                .map_err(|_| Error::Argument(format!("bad width in pattern {pattern:?}")))?
        } else {
            return Err(Error::Argument(format!(
                "pattern {pattern:?} has an unsupported placeholder"
            )));
        };
        let suffix = &rest[d + 1..];
        if suffix.contains('%') {
            return Err(Error::Argument(format!(
                "pattern {pattern:?} has more than one placeholder"
            )));
        }
        Ok(FramePattern {
            prefix: pattern[..start].to_string(),
            pad,
            suffix: suffix.to_string(),
        })
    }

    pub fn file_name(&self, index: usize) -> String {
        format!(
            "{}{:0pad$}{}",
            self.prefix,
            index,
            self.suffix,
            pad = self.pad
        )
    }

    pub fn path(&self, dir: &Path, index: usize) -> PathBuf {
        dir.join(self.file_name(index))
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

fn to_usize_dims(img: &DynamicImage) -> (usize, usize) {
    (img.width() as usize, img.height() as usize)
}

/// Reads one RGB frame.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = decode(path)?;
    let (w, h) = to_usize_dims(&img);
    Frame::new(w, h, img.into_rgb8().into_raw()).map_err(|e| Error::format(path, e.to_string()))
}

fn load_gray8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = decode(path)?;
    let (w, h) = to_usize_dims(&img);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok((w, h, buf.into_raw())),
        other => Err(Error::format(
            path,
            format!(
                "expected 8-bit single-channel image, found {:?}",
                other.color()
            ),
        )),
    }
}

/// Reads an 8-bit grayscale semantic map without rescaling.
pub fn load_semantic_map(path: &Path) -> Result<SemanticMap> {
    let (w, h, values) = load_gray8(path)?;
    SemanticMap::new(w, h, values).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a ground-truth frame, rejecting values outside the CDnet code set.
pub fn load_ground_truth(path: &Path) -> Result<GroundTruthFrame> {
    let img = decode(path)?;
    let (w, h) = to_usize_dims(&img);
    let labels = img.into_luma8().into_raw();
    let mut bad: Vec<u8> = labels.iter().copied().filter(|&l| !is_gt_code(l)).collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::format(
            path,
            format!("unknown ground-truth codes {bad:?}"),
        ));
    }
    GroundTruthFrame::new(w, h, labels).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a region-of-interest image; any nonzero channel marks an included pixel.
pub fn load_roi(path: &Path) -> Result<RoiMask> {
    let img = decode(path)?;
    let (w, h) = to_usize_dims(&img);
    let included = img
        .into_rgb8()
        .pixels()
        .map(|p| p.0.iter().any(|&c| c != 0))
        .collect();
    RoiMask::new(w, h, included).map_err(|e| Error::format(path, e.to_string()))
}

fn save_gray8(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    image::save_buffer(
        path,
        bytes,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Writes a mask as 8-bit grayscale, FG as 255 and BG as 0. The encoding
/// follows the file extension (`.png` or `.pgm`).
pub fn write_mask(mask: &FgMask, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.labels().iter().map(|&l| l * 255).collect();
    save_gray8(path, mask.width(), mask.height(), &bytes)
}

/// Reads a mask written by [`write_mask`]; nonzero pixels become FG.
pub fn load_mask(path: &Path) -> Result<FgMask> {
    let img = decode(path)?;
    let (w, h) = to_usize_dims(&img);
    let labels = img
        .into_luma8()
        .into_raw()
        .into_iter()
        .map(|v| (v != 0) as u8)
        .collect();
    FgMask::new(w, h, labels).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a semantic map as 8-bit grayscale.
pub fn write_semantic_map(map: &SemanticMap, path: &Path) -> Result<()> {
    save_gray8(path, map.width(), map.height(), map.values())
}

/// Ordered stream of frames `dir/pattern(first)`, `dir/pattern(first + 1)`, ...
///
/// The stream stops at the first missing index or after `last`. Every frame
/// must share the dimensions of the first one.
#[derive(Debug)]
pub struct SequenceReader {
    dir: PathBuf,
    pattern: FramePattern,
    next: usize,
    last: Option<usize>,
    dims: Option<(usize, usize)>,
    done: bool,
}

impl SequenceReader {
    pub fn index_path(&self, index: usize) -> PathBuf {
        self.pattern.path(&self.dir, index)
    }

    /// Indices the stream would yield, determined by file existence only.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = self.next;
        while self.last.is_none_or(|l| i <= l) && self.index_path(i).is_file() {
            out.push(i);
            i += 1;
        }
        out
    }
}

impl Iterator for SequenceReader {
    type Item = Result<(usize, Frame)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.last.is_some_and(|l| self.next > l) {
            return None;
        }
        let index = self.next;
        let path = self.index_path(index);
        if !path.exists() {
            self.done = true;
            return None;
        }
        self.next += 1;
        let frame = match load_frame(&path) {
            Ok(f) => f,
            Err(e) => {
                self.done = true;
                return Some(Err(e));
            }
        };
        match self.dims {
            None => self.dims = Some(frame.dims()),
            Some(d) if d != frame.dims() => {
                self.done = true;
                return Some(Err(Error::format(
                    &path,
                    format!(
                        "frame is {}x{}, sequence is {}x{}",
                        frame.width(),
                        frame.height(),
                        d.0,
                        d.1
                    ),
                )));
            }
            Some(_) => {}
        }
        Some(Ok((index, frame)))
    }
}

/// Opens an ordered frame stream starting at index `first`.
pub fn load_sequence(
    dir: &Path,
    pattern: &str,
    first: usize,
    last: Option<usize>,
) -> Result<SequenceReader> {
    let pattern = FramePattern::parse(pattern)?;
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "sequence directory not found"),
        ));
    }
    Ok(SequenceReader {
        dir: dir.to_path_buf(),
        pattern,
        next: first,
        last,
        dims: None,
        done: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_rgb(path: &Path, w: u32, h: u32, color: [u8; 3]) {
        let img = image::RgbImage::from_pixel(w, h, image::Rgb(color));
        img.save(path).unwrap();
    }

    fn write_pgm(path: &Path, w: usize, h: usize, bytes: &[u8]) {
        let mut data = format!("P5\n{w} {h}\n255\n").into_bytes();
        data.extend_from_slice(bytes);
        std::fs::write(path, data).unwrap();
    }

    #[test]
    fn pattern_parsing() {
        let p = FramePattern::parse("in%06d.jpg").unwrap();
        assert_eq!(p.file_name(3), "in000003.jpg");
        assert_eq!(FramePattern::parse("f%d.png").unwrap().file_name(12), "f12.png");
        assert!(FramePattern::parse("frame.png").is_err());
        assert!(FramePattern::parse("a%d_%d.png").is_err());
        assert!(FramePattern::parse("a%xd.png").is_err());
    }

    #[test]
    fn sequence_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for i in 1..=3 {
            write_rgb(&dir.path().join(format!("in{i:06}.png")), 4, 3, [i as u8; 3]);
        }
        let frames: Vec<_> = load_sequence(dir.path(), "in%06d.png", 1, None)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(frames.len(), 3);
        for (k, (idx, f)) in frames.iter().enumerate() {
            assert_eq!(*idx, k + 1);
            assert_eq!(f.pixel(0, 0), [(k + 1) as u8; 3]);
        }
    }

    #[test]
    fn sequence_empty_and_gap() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_sequence(dir.path(), "in%06d.png", 1, None).unwrap().count(), 0);
        write_rgb(&dir.path().join("in000001.png"), 2, 2, [0; 3]);
        write_rgb(&dir.path().join("in000003.png"), 2, 2, [0; 3]);
        let reader = load_sequence(dir.path(), "in%06d.png", 1, None).unwrap();
        assert_eq!(reader.indices(), vec![1]);
        assert_eq!(reader.count(), 1);
    }

    #[test]
    fn sequence_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_rgb(&dir.path().join("in000001.png"), 2, 2, [0; 3]);
        write_rgb(&dir.path().join("in000002.png"), 3, 2, [0; 3]);
        let items: Vec<_> = load_sequence(dir.path(), "in%06d.png", 1, None).unwrap().collect();
        assert_eq!(items.len(), 2);
        assert!(matches!(items[1], Err(Error::Format { .. })));
    }

    #[test]
    fn unreadable_frame_names_path() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("in000001.png"), b"not an image").unwrap();
        let err = load_sequence(dir.path(), "in%06d.png", 1, None)
            .unwrap()
            .next()
            .unwrap()
            .unwrap_err();
        assert!(err.to_string().contains("in000001.png"), "{err}");
    }

    #[test]
    fn semantic_map_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sem.pgm");
        write_pgm(&p, 2, 1, &[20, 230]);
        assert_eq!(load_semantic_map(&p).unwrap().values(), &[20, 230]);
        write_pgm(&p, 3, 2, &[0; 6]);
        assert!(load_semantic_map(&p).unwrap().values().iter().all(|&v| v == 0));
        write_pgm(&p, 3, 2, &[255; 6]);
        assert!(load_semantic_map(&p).unwrap().values().iter().all(|&v| v == 255));
    }

    #[test]
    fn semantic_map_rejects_color_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sem.png");
        write_rgb(&p, 2, 2, [1, 2, 3]);
        assert!(matches!(load_semantic_map(&p), Err(Error::Format { .. })));
        let p16 = dir.path().join("sem16.png");
        image::ImageBuffer::<image::Luma<u16>, _>::from_pixel(2, 2, image::Luma([1000u16]))
            .save(&p16)
            .unwrap();
        assert!(matches!(load_semantic_map(&p16), Err(Error::Format { .. })));
    }

    #[test]
    fn mask_write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        for ext in ["png", "pgm"] {
            let p = dir.path().join(format!("m.{ext}"));
            write_mask(&FgMask::filled(3, 2, FG), &p).unwrap();
            let raw = load_semantic_map(&p).unwrap();
            assert!(raw.values().iter().all(|&v| v == 255));
            write_mask(&FgMask::background(3, 2), &p).unwrap();
            assert!(load_semantic_map(&p).unwrap().values().iter().all(|&v| v == 0));
            let mask = FgMask::new(3, 2, vec![1, 0, 0, 1, 1, 0]).unwrap();
            write_mask(&mask, &p).unwrap();
            assert_eq!(load_mask(&p).unwrap(), mask);
        }
    }

    #[test]
    fn write_mask_missing_parent_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing").join("m.png");
        assert!(matches!(
            write_mask(&FgMask::background(2, 2), &p),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn ground_truth_codes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.pgm");
        write_pgm(&p, 2, 2, &[255; 4]);
        assert!(load_ground_truth(&p).unwrap().labels().iter().all(|&v| v == GT_MOTION));
        write_pgm(&p, 2, 2, &[0, 50, 42, 170]);
        let err = load_ground_truth(&p).unwrap_err();
        assert!(err.to_string().contains("42"), "{err}");
    }

    #[test]
    fn roi_zero_excludes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ROI.bmp");
        write_rgb(&p, 3, 3, [0; 3]);
        assert!(load_roi(&p).unwrap().included().iter().all(|&b| !b));
        write_rgb(&p, 3, 3, [255; 3]);
        assert!(load_roi(&p).unwrap().included().iter().all(|&b| b));
    }
}
