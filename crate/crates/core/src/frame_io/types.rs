use crate::error::{Error, Result};

/// Label value for foreground pixels.
pub const FG: u8 = 1;
/// Label value for background pixels.
pub const BG: u8 = 0;

/// An RGB frame stored row-major as interleaved 8-bit triples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Argument(format!(
                "frame data has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    /// A frame filled with a single color.
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<Self> {
        let data = color.iter().copied().cycle().take(width * height * 3).collect();
        Frame::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }
}

/// Binary foreground mask, `FG` = 1 and `BG` = 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FgMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl FgMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Argument(format!(
                "mask has {} labels, expected {}",
                labels.len(),
                width * height
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Argument(format!("mask label {bad} is not 0 or 1")));
        }
        Ok(FgMask {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        FgMask {
            width,
            height,
            labels: vec![label.min(1); width * height],
        }
    }

    pub fn background(width: usize, height: usize) -> Self {
        Self::filled(width, height, BG)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn is_fg(&self, i: usize) -> bool {
        self.labels[i] == FG
    }

    #[inline]
    pub fn set(&mut self, i: usize, fg: bool) {
        self.labels[i] = fg as u8;
    }

    pub fn count_fg(&self) -> usize {
        self.labels.iter().filter(|&&l| l == FG).count()
    }

    /// Labels with FG and BG swapped.
    pub fn inverted(&self) -> Self {
        FgMask {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&l| l ^ 1).collect(),
        }
    }
}

/// Semantic foreground probability per pixel, scaled to 0..=255.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SemanticMap {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl SemanticMap {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Argument(format!(
                "semantic map has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        Ok(SemanticMap {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        SemanticMap {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [u8] {
        &mut self.values
    }
}

/// Signed per-pixel difference map in [-255, 255].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedMap {
    width: usize,
    height: usize,
    values: Vec<i16>,
}

impl SignedMap {
    pub fn new(width: usize, height: usize, values: Vec<i16>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Argument(format!(
                "signed map has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        Ok(SignedMap {
            width,
            height,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }
}

/// Ground-truth code for static pixels.
pub const GT_STATIC: u8 = 0;
/// Ground-truth code for hard shadows.
pub const GT_SHADOW: u8 = 50;
/// Ground-truth code for pixels outside the region of interest.
pub const GT_OUTSIDE_ROI: u8 = 85;
/// Ground-truth code for pixels with unknown motion.
pub const GT_UNKNOWN: u8 = 170;
/// Ground-truth code for moving pixels.
pub const GT_MOTION: u8 = 255;

/// Per-pixel ground truth using the CDnet label codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthFrame {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl GroundTruthFrame {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Argument(format!(
                "ground truth has {} labels, expected {}",
                labels.len(),
                width * height
            )));
        }
        if let Some(bad) = labels.iter().find(|l| !is_gt_code(**l)) {
            return Err(Error::Argument(format!("unknown ground-truth code {bad}")));
        }
        Ok(GroundTruthFrame {
            width,
            height,
            labels,
        })
    }

    /// Ground truth equivalent to a binary mask (FG as 255, BG as 0).
    pub fn from_mask(mask: &FgMask) -> Self {
        GroundTruthFrame {
            width: mask.width(),
            height: mask.height(),
            labels: mask
                .labels()
                .iter()
                .map(|&l| if l == FG { GT_MOTION } else { GT_STATIC })
                .collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

pub(crate) fn is_gt_code(code: u8) -> bool {
    matches!(
        code,
        GT_STATIC | GT_SHADOW | GT_OUTSIDE_ROI | GT_UNKNOWN | GT_MOTION
    )
}

/// Evaluation region of interest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    included: Vec<bool>,
}

impl RoiMask {
    pub fn new(width: usize, height: usize, included: Vec<bool>) -> Result<Self> {
        if included.len() != width * height {
            return Err(Error::Argument(format!(
                "roi has {} entries, expected {}",
                included.len(),
                width * height
            )));
        }
        Ok(RoiMask {
            width,
            height,
            included,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        RoiMask {
            width,
            height,
            included: vec![true; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }
}
