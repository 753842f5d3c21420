//! ViBe: random sample banks, fixed radius, conservative update with
//! neighborhood diffusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{neighbors8, random_neighbor, Segmentation, SegmentationAux, Segmenter};
use crate::error::{check_dims, Error, Result};
use crate::frame_io::{FgMask, Frame, BG};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VibeParams {
    pub n_samples: usize,
    /// Per-channel radius; the RGB L1 distance must be below `3 * radius`.
    pub radius: u32,
    pub min_matches: usize,
    /// Time subsampling factor; samples are replaced with probability 1/subsampling.
    pub subsampling: u32,
}

impl Default for VibeParams {
    fn default() -> Self {
        VibeParams {
            n_samples: 20,
            radius: 20,
            min_matches: 2,
            subsampling: 16,
        }
    }
}

impl VibeParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.min_matches == 0 || self.min_matches > self.n_samples {
            return Err(Error::Argument(
                "vibe: need 1 <= min_matches <= n_samples".into(),
            ));
        }
        if self.subsampling == 0 {
            return Err(Error::Argument("vibe: subsampling must be >= 1".into()));
        }
        Ok(())
    }
}

/// One pixel's sample bank.
#[derive(Clone, Debug, PartialEq)]
pub struct VibePixelState {
    pub samples: Vec<[u8; 3]>,
    pub radius: u32,
    pub min_matches: usize,
}

#[derive(Clone, Debug)]
pub struct VibeModel {
    params: VibeParams,
    width: usize,
    height: usize,
    samples: Vec<[u8; 3]>,
    rng: ChaCha8Rng,
}

impl VibeModel {
    /// Fills each bank from the pixel and its 8-neighborhood in `first`.
    pub fn init(first: &Frame, params: VibeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let (w, h) = first.dims();
        let n = params.n_samples;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(w * h * n);
        let mut cands = Vec::with_capacity(9);
        for y in 0..h {
            for x in 0..w {
                cands.clear();
                cands.push((x, y));
                cands.extend(neighbors8(x, y, w, h));
                for _ in 0..n {
                    let (sx, sy) = cands[rng.random_range(0..cands.len())];
                    samples.push(first.pixel(sx, sy));
                }
            }
        }
        Ok(VibeModel {
            params,
            width: w,
            height: h,
            samples,
            rng,
        })
    }

    pub fn pixel_state(&self, x: usize, y: usize) -> VibePixelState {
        let n = self.params.n_samples;
        let i = y * self.width + x;
        VibePixelState {
            samples: self.samples[i * n..(i + 1) * n].to_vec(),
            radius: self.params.radius,
            min_matches: self.params.min_matches,
        }
    }

    pub fn classify_mask(&self, frame: &Frame) -> Result<FgMask> {
        check_dims("vibe classify", (self.width, self.height), frame.dims())?;
        let p = &self.params;
        let n = p.n_samples;
        let thr = 3 * p.radius;
        let data = frame.data();
        let labels = (0..self.width * self.height)
            .map(|i| {
                let c = &data[3 * i..3 * i + 3];
                let mut matches = 0;
                for s in &self.samples[i * n..(i + 1) * n] {
                    let d = c[0].abs_diff(s[0]) as u32
                        + c[1].abs_diff(s[1]) as u32
                        + c[2].abs_diff(s[2]) as u32;
                    if d < thr {
                        matches += 1;
                        if matches >= p.min_matches {
                            break;
                        }
                    }
                }
                (matches < p.min_matches) as u8
            })
            .collect();
        FgMask::new(self.width, self.height, labels)
    }

    /// Updates banks where `update_mask` is BG.
    pub fn update_masked(&mut self, frame: &Frame, update_mask: &FgMask) -> Result<()> {
        let dims = (self.width, self.height);
        check_dims("vibe update", dims, frame.dims())?;
        check_dims("vibe update (mask)", dims, update_mask.dims())?;
        let n = self.params.n_samples;
        let sub = self.params.subsampling;
        let (w, h) = dims;
        for i in 0..w * h {
            if update_mask.labels()[i] != BG {
                continue;
            }
            let (x, y) = (i % w, i / w);
            let color = frame.pixel(x, y);
            if self.rng.random_range(0..sub) == 0 {
                let k = i * n + self.rng.random_range(0..n);
                self.samples[k] = color;
            }
            if self.rng.random_range(0..sub) == 0 {
                if let Some((nx, ny)) = random_neighbor(&mut self.rng, x, y, w, h) {
                    let k = (ny * w + nx) * n + self.rng.random_range(0..n);
                    self.samples[k] = color;
                }
            }
        }
        Ok(())
    }

    /// Classify, then update using `update_mask` (or the fresh mask when `None`).
    pub fn step(&mut self, frame: &Frame, update_mask: Option<&FgMask>) -> Result<FgMask> {
        let mask = self.classify_mask(frame)?;
        self.update_masked(frame, update_mask.unwrap_or(&mask))?;
        Ok(mask)
    }
}

impl Segmenter for VibeModel {
    fn classify(&self, frame: &Frame) -> Result<Segmentation> {
        Ok(Segmentation {
            mask: self.classify_mask(frame)?,
            aux: SegmentationAux::None,
        })
    }

    fn update(&mut self, frame: &Frame, _seg: &Segmentation, final_mask: &FgMask) -> Result<()> {
        self.update_masked(frame, final_mask)
    }

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_scene_is_background() {
        let f = Frame::filled(16, 12, [120, 60, 30]).unwrap();
        let mut m = VibeModel::init(&f, VibeParams::default(), 2).unwrap();
        for _ in 0..30 {
            m.step(&f, None).unwrap();
        }
        for _ in 0..5 {
            assert_eq!(m.step(&f, None).unwrap().count_fg(), 0);
        }
    }

    #[test]
    fn all_foreground_update_mask_freezes() {
        let f = Frame::filled(8, 8, [10; 3]).unwrap();
        let mut m = VibeModel::init(&f, VibeParams::default(), 2).unwrap();
        let g = Frame::filled(8, 8, [200; 3]).unwrap();
        let before = m.samples.clone();
        let fg = FgMask::filled(8, 8, 1);
        for _ in 0..50 {
            m.step(&g, Some(&fg)).unwrap();
        }
        assert_eq!(m.samples, before);
        assert_eq!(m.pixel_state(0, 0).samples.len(), 20);
    }

    #[test]
    fn detects_change() {
        let f = Frame::filled(8, 8, [10; 3]).unwrap();
        let m = VibeModel::init(&f, VibeParams::default(), 2).unwrap();
        let mut g = f.clone();
        g.set_pixel(3, 3, [90, 10, 10]);
        let mask = m.classify_mask(&g).unwrap();
        assert_eq!(mask.count_fg(), 1);
        assert!(mask.is_fg(3 * 8 + 3));
    }

    #[test]
    fn dims_checked() {
        let f = Frame::filled(8, 8, [10; 3]).unwrap();
        let mut m = VibeModel::init(&f, VibeParams::default(), 2).unwrap();
        let g = Frame::filled(8, 7, [10; 3]).unwrap();
        assert!(m.step(&g, None).is_err());
    }
}
