//! Combines the segmenter mask with semantic evidence.
//!
//! Per pixel, in order: `S_fg >= tau_fg` forces FG, otherwise
//! `S_bg <= tau_bg` forces BG, otherwise the segmenter label stands.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result};
use crate::frame_io::{FgMask, SemanticMap, SignedMap, BG, FG};

/// Default background threshold.
pub const DEFAULT_TAU_BG: i16 = 0;
/// Default foreground threshold.
pub const DEFAULT_TAU_FG: i16 = 225;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// `-1` disables the background rule.
    pub tau_bg: i16,
    /// `256` disables the foreground rule.
    pub tau_fg: i16,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            tau_bg: DEFAULT_TAU_BG,
            tau_fg: DEFAULT_TAU_FG,
        }
    }
}

impl FusionParams {
    /// Thresholds under which fusion returns the segmenter mask unchanged.
    pub const PASSTHROUGH: FusionParams = FusionParams {
        tau_bg: -1,
        tau_fg: 256,
    };
}

#[inline]
pub fn fuse_pixel(b: u8, s_bg: u8, s_fg: i16, params: &FusionParams) -> u8 {
    if s_fg >= params.tau_fg {
        FG
    } else if (s_bg as i16) <= params.tau_bg {
        BG
    } else {
        b
    }
}

pub fn fuse(b: &FgMask, s_bg: &SemanticMap, s_fg: &SignedMap, params: &FusionParams) -> Result<FgMask> {
    check_dims("fuse (S_bg)", b.dims(), s_bg.dims())?;
    check_dims("fuse (S_fg)", b.dims(), s_fg.dims())?;
    let labels = b
        .labels()
        .iter()
        .zip(s_bg.values())
        .zip(s_fg.values())
        .map(|((&l, &sb), &sf)| fuse_pixel(l, sb, sf, params))
        .collect();
    FgMask::new(b.width(), b.height(), labels)
}
