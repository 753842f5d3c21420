//! Background subtraction segmenters.
//!
//! Every segmenter separates classification from model update so the
//! caller can feed an externally refined mask back into the update. This
//! is the hook the semantic fusion loop drives.

mod gmm;
pub mod lbsp;
mod subsense;
mod vibe;

pub use gmm::{GmmModel, GmmParams, GmmPixelState};
pub use subsense::{
    adjust_distance_threshold, adjust_update_rate, smooth_min_distance, update_blink_accumulator,
    PixelSample, SubsenseModel, SubsenseOutput, SubsenseParams, SubsensePixelState,
};
pub use vibe::{VibeModel, VibeParams, VibePixelState};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frame_io::{FgMask, Frame};

/// Output of a classification pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    /// The segmenter's mask `B_t`.
    pub mask: FgMask,
    /// Segmenter-specific per-pixel data reused by the update pass.
    pub(crate) aux: SegmentationAux,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum SegmentationAux {
    None,
    Subsense {
        dmin_obs: Vec<f64>,
        descriptors: Vec<[u16; 3]>,
    },
}

/// Classify-then-update background segmenter.
pub trait Segmenter: Send {
    /// Labels `frame` against the current model; never mutates it.
    fn classify(&self, frame: &Frame) -> Result<Segmentation>;

    /// Adapts the model using this frame's raw segmentation and the refined
    /// mask. Callers without any refinement pass `&seg.mask`.
    fn update(&mut self, frame: &Frame, seg: &Segmentation, final_mask: &FgMask) -> Result<()>;

    fn dims(&self) -> (usize, usize);
}

/// Which segmenter drives the pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    #[default]
    Subsense,
    Vibe,
    Gmm,
}

impl std::str::FromStr for SegmenterKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "subsense" => Ok(SegmenterKind::Subsense),
            "vibe" => Ok(SegmenterKind::Vibe),
            "gmm" => Ok(SegmenterKind::Gmm),
            other => Err(crate::Error::Config(format!(
                "unknown segmenter {other:?} (expected subsense, vibe or gmm)"
            ))),
        }
    }
}

impl std::fmt::Display for SegmenterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SegmenterKind::Subsense => "subsense",
            SegmenterKind::Vibe => "vibe",
            SegmenterKind::Gmm => "gmm",
        })
    }
}

/// Parameters for all segmenters; only the selected one is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterParams {
    pub subsense: SubsenseParams,
    pub vibe: VibeParams,
    pub gmm: GmmParams,
}

/// Builds the selected segmenter from the first frame of a sequence.
pub fn build_segmenter(
    kind: SegmenterKind,
    params: &SegmenterParams,
    first: &Frame,
    seed: u64,
) -> Result<Box<dyn Segmenter>> {
    Ok(match kind {
        SegmenterKind::Subsense => Box::new(SubsenseModel::init(
            std::slice::from_ref(first),
            params.subsense.clone(),
            seed,
        )?),
        SegmenterKind::Vibe => Box::new(VibeModel::init(first, params.vibe.clone(), seed)?),
        SegmenterKind::Gmm => Box::new(GmmModel::init(first, params.gmm.clone())?),
    })
}

/// In-bounds 8-neighbors of `(x, y)` in a fixed order.
pub(crate) fn neighbors8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    const OFFS: [(isize, isize); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (-1, 0),
        (1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    OFFS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then_some((nx as usize, ny as usize))
    })
}

/// Picks a uniformly random in-bounds 8-neighbor.
pub(crate) fn random_neighbor<R: rand::Rng>(
    rng: &mut R,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Option<(usize, usize)> {
    let mut buf = [(0usize, 0usize); 8];
    let mut n = 0;
    for p in neighbors8(x, y, w, h) {
        buf[n] = p;
        n += 1;
    }
    (n > 0).then(|| buf[rng.random_range(0..n)])
}

/// Binary median filter over a `window`×`window` neighborhood, clipped at
/// the borders. A pixel becomes FG when strictly more than half of the
/// in-bounds window is FG. Windows of 0 or 1 return the input unchanged.
pub fn median_filter(mask: &FgMask, window: usize) -> FgMask {
    if window <= 1 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let r = window / 2;
    let stride = w + 1;
    let mut integral = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += mask.labels()[y * w + x] as u32;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let mut labels = vec![0u8; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let sum = integral[y1 * stride + x1] + integral[y0 * stride + x0]
                - integral[y0 * stride + x1]
                - integral[y1 * stride + x0];
            let area = ((y1 - y0) * (x1 - x0)) as u32;
            labels[y * w + x] = (2 * sum > area) as u8;
        }
    }
    FgMask::new(w, h, labels).expect("dimensions preserved")
}
