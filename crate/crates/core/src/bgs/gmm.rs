//! Per-pixel mixture of Gaussians over RGB with isotropic variance.
//!
//! Components are ranked by `weight / sigma`; the first components whose
//! cumulative weight exceeds `background_ratio` model the background. A
//! pixel is background when it matches one of them.

use serde::{Deserialize, Serialize};

use super::{Segmentation, SegmentationAux, Segmenter};
use crate::error::{check_dims, Error, Result};
use crate::frame_io::{FgMask, Frame, BG};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmParams {
    /// Components per pixel (`K`).
    pub components: usize,
    pub learning_rate: f64,
    pub initial_variance: f64,
    pub min_variance: f64,
    /// Match when the per-channel RMS distance is within this many sigmas.
    pub match_sigmas: f64,
    pub background_ratio: f64,
    /// Weight given to a component created for an unmatched observation.
    pub initial_weight: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            components: 5,
            learning_rate: 0.01,
            initial_variance: 225.0,
            min_variance: 16.0,
            match_sigmas: 2.5,
            background_ratio: 0.7,
            initial_weight: 0.05,
        }
    }
}

impl GmmParams {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Argument("gmm: need at least one component".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Argument("gmm: learning_rate must be in (0, 1]".into()));
        }
        if !(self.initial_variance > 0.0 && self.min_variance > 0.0) {
            return Err(Error::Argument("gmm: variances must be positive".into()));
        }
        if !(self.initial_weight > 0.0 && self.initial_weight < 1.0) {
            return Err(Error::Argument("gmm: initial_weight must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    pub variance: f64,
}

/// One pixel's mixture, always sorted by decreasing `weight / sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmPixelState {
    pub components: Vec<GmmComponent>,
}

impl GmmPixelState {
    fn new(color: [u8; 3], p: &GmmParams) -> Self {
        let unused = GmmComponent {
            weight: 0.0,
            mean: [0.0; 3],
            variance: p.initial_variance,
        };
        let mut components = vec![unused; p.components];
        components[0] = GmmComponent {
            weight: 1.0,
            mean: color.map(f64::from),
            variance: p.initial_variance,
        };
        GmmPixelState { components }
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    fn sq_dist(c: &GmmComponent, x: [f64; 3]) -> f64 {
        (0..3).map(|k| (x[k] - c.mean[k]).powi(2)).sum::<f64>() / 3.0
    }

    fn matching(&self, x: [f64; 3], p: &GmmParams) -> Option<usize> {
        let lim = p.match_sigmas * p.match_sigmas;
        self.components
            .iter()
            .position(|c| c.weight > 0.0 && Self::sq_dist(c, x) < lim * c.variance)
    }

    fn background_count(&self, p: &GmmParams) -> usize {
        let mut acc = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if acc > p.background_ratio {
                return i + 1;
            }
        }
        self.components.len()
    }

    fn is_background(&self, x: [f64; 3], p: &GmmParams) -> bool {
        self.matching(x, p)
            .is_some_and(|k| k < self.background_count(p))
    }

    fn update(&mut self, x: [f64; 3], p: &GmmParams) {
        let a = p.learning_rate;
        match self.matching(x, p) {
            Some(k) => {
                for (i, c) in self.components.iter_mut().enumerate() {
                    c.weight *= 1.0 - a;
                    if i == k {
                        c.weight += a;
                    }
                }
                let c = &mut self.components[k];
                let rho = (a / c.weight).min(1.0);
                for (m, v) in c.mean.iter_mut().zip(x) {
                    *m += rho * (v - *m);
                }
                let d2 = Self::sq_dist(c, x);
                c.variance = (c.variance + rho * (d2 - c.variance)).max(p.min_variance);
            }
            None => {
                let last = self.components.len() - 1;
                self.components[last] = GmmComponent {
                    weight: p.initial_weight,
                    mean: x,
                    variance: p.initial_variance,
                };
            }
        }
        let total = self.weight_sum();
        for c in &mut self.components {
            c.weight /= total;
        }
        self.components.sort_by(|a, b| {
            let ka = a.weight / a.variance.sqrt();
            let kb = b.weight / b.variance.sqrt();
            kb.total_cmp(&ka)
        });
    }
}

#[derive(Clone, Debug)]
pub struct GmmModel {
    params: GmmParams,
    width: usize,
    height: usize,
    pixels: Vec<GmmPixelState>,
}

impl GmmModel {
    pub fn init(first: &Frame, params: GmmParams) -> Result<Self> {
        params.validate()?;
        let (w, h) = first.dims();
        let pixels = (0..w * h)
            .map(|i| GmmPixelState::new(first.pixel(i % w, i / w), &params))
            .collect();
        Ok(GmmModel {
            params,
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn pixel_state(&self, x: usize, y: usize) -> &GmmPixelState {
        &self.pixels[y * self.width + x]
    }

    pub fn classify_mask(&self, frame: &Frame) -> Result<FgMask> {
        check_dims("gmm classify", (self.width, self.height), frame.dims())?;
        let labels = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, px)| {
                let x = frame.pixel(i % self.width, i / self.width).map(f64::from);
                (!px.is_background(x, &self.params)) as u8
            })
            .collect();
        FgMask::new(self.width, self.height, labels)
    }

    /// Updates every pixel, or only the BG pixels of `update_mask`.
    pub fn update_masked(&mut self, frame: &Frame, update_mask: Option<&FgMask>) -> Result<()> {
        let dims = (self.width, self.height);
        check_dims("gmm update", dims, frame.dims())?;
        if let Some(m) = update_mask {
            check_dims("gmm update (mask)", dims, m.dims())?;
        }
        let w = self.width;
        for (i, px) in self.pixels.iter_mut().enumerate() {
            if update_mask.is_some_and(|m| m.labels()[i] != BG) {
                continue;
            }
            px.update(frame.pixel(i % w, i / w).map(f64::from), &self.params);
        }
        Ok(())
    }

    /// Classify, then update. With `None` every pixel is updated (the
    /// classic scheme); with a mask only its BG pixels are.
    pub fn step(&mut self, frame: &Frame, update_mask: Option<&FgMask>) -> Result<FgMask> {
        let mask = self.classify_mask(frame)?;
        self.update_masked(frame, update_mask)?;
        Ok(mask)
    }
}

impl Segmenter for GmmModel {
    fn classify(&self, frame: &Frame) -> Result<Segmentation> {
        Ok(Segmentation {
            mask: self.classify_mask(frame)?,
            aux: SegmentationAux::None,
        })
    }

    fn update(&mut self, frame: &Frame, _seg: &Segmentation, final_mask: &FgMask) -> Result<()> {
        self.update_masked(frame, Some(final_mask))
    }

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}
