//! Sample-consensus segmenter with per-pixel feedback.
//!
//! Each pixel keeps `N` background samples (color plus LBSP descriptor)
//! and four feedback scalars:
//!
//! * `D_min`, the smoothed minimal normalized distance to the model,
//! * `v`, an accumulator that grows where the mask blinks,
//! * `R`, the distance threshold multiplier,
//! * `T`, the update rate (samples are replaced with probability `1/T`).
//!
//! A pixel is background when at least `min_matches` samples lie within
//! both the scaled color threshold and the scaled descriptor threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbsp::{self, LbspThreshold};
use super::{median_filter, random_neighbor, Segmentation, SegmentationAux, Segmenter};
use crate::error::{check_dims, Error, Result};
use crate::frame_io::{FgMask, Frame, BG};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsenseParams {
    /// Samples per pixel (`N`).
    pub n_samples: usize,
    /// Matches needed to label a pixel background (`#_min`).
    pub min_matches: usize,
    /// Base color threshold per channel; the L1 sum over the three
    /// channels is compared against `3 * color_threshold * R`.
    pub color_threshold: f64,
    /// Base descriptor Hamming threshold, scaled by `floor(R)`.
    pub descriptor_threshold: u32,
    /// Learning rate of the `D_min` moving average (`alpha`).
    pub alpha: f64,
    pub v_incr: f64,
    pub v_decr: f64,
    pub v_floor: f64,
    pub r_lower: f64,
    pub t_lower: f64,
    pub t_upper: f64,
    /// Added to `D_min` wherever it appears as a divisor.
    pub epsilon: f64,
    /// Median filter window applied to the output mask; 0 or 1 disables it.
    pub median_window: usize,
    pub lbsp_relative: f32,
    pub lbsp_minimum: u8,
    /// Use the refined mask instead of the raw one for the blink map.
    pub blink_uses_final: bool,
    /// Use the refined mask for the FG/BG branch of the update-rate rule.
    pub rate_uses_final: bool,
    /// Use the refined mask to decide which pixels may replace samples.
    pub replacement_uses_final: bool,
}

impl Default for SubsenseParams {
    fn default() -> Self {
        SubsenseParams {
            n_samples: 50,
            min_matches: 2,
            color_threshold: 30.0,
            descriptor_threshold: 3,
            alpha: 0.04,
            v_incr: 1.0,
            v_decr: 0.1,
            v_floor: 0.1,
            r_lower: 1.0,
            t_lower: 2.0,
            t_upper: 256.0,
            epsilon: 1e-6,
            median_window: 9,
            lbsp_relative: 0.333,
            lbsp_minimum: 3,
            blink_uses_final: false,
            rate_uses_final: true,
            replacement_uses_final: true,
        }
    }
}

impl SubsenseParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("subsense: {m}")));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if self.min_matches == 0 || self.min_matches > self.n_samples {
            return bad("min_matches must be in 1..=n_samples");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if !(self.t_lower >= 1.0 && self.t_lower <= self.t_upper) {
            return bad("update rate bounds must satisfy 1 <= t_lower <= t_upper");
        }
        if self.r_lower.is_nan() || self.r_lower <= 0.0 {
            return bad("r_lower must be positive");
        }
        if self.v_floor.is_nan() || self.v_floor <= 0.0 {
            return bad("v_floor must be positive");
        }
        if self.color_threshold.is_nan() || self.color_threshold <= 0.0 {
            return bad("color_threshold must be positive");
        }
        Ok(())
    }

    pub fn lbsp_threshold(&self) -> LbspThreshold {
        LbspThreshold {
            relative: self.lbsp_relative,
            minimum: self.lbsp_minimum,
        }
    }
}

/// Exponential smoothing of the minimal distance, unclamped.
#[inline]
pub fn smooth_min_distance(dmin: f64, observed: f64, alpha: f64) -> f64 {
    dmin * (1.0 - alpha) + observed * alpha
}

/// Blink accumulator step, floored at `p.v_floor`.
#[inline]
pub fn update_blink_accumulator(v: f64, blinked: bool, p: &SubsenseParams) -> f64 {
    if blinked {
        v + p.v_incr
    } else {
        (v - p.v_decr).max(p.v_floor)
    }
}

/// Distance threshold step, clamped to `p.r_lower` from below.
#[inline]
pub fn adjust_distance_threshold(r: f64, dmin: f64, v: f64, p: &SubsenseParams) -> f64 {
    let bound = (1.0 + dmin * 2.0).powi(2);
    let next = if r < bound { r + v } else { r - 1.0 / v };
    next.max(p.r_lower)
}

/// Update-rate step, clamped to `[p.t_lower, p.t_upper]`.
#[inline]
pub fn adjust_update_rate(t: f64, dmin: f64, v: f64, foreground: bool, p: &SubsenseParams) -> f64 {
    let d = dmin + p.epsilon;
    let next = if foreground {
        t + 1.0 / (v * d)
    } else {
        t - v / d
    };
    next.clamp(p.t_lower, p.t_upper)
}

/// One background sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelSample {
    pub color: [u8; 3],
    /// 16-bit LBSP string per channel.
    pub descriptor: [u16; 3],
}

/// Snapshot of one pixel's model.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsensePixelState {
    pub samples: Vec<PixelSample>,
    pub r: f64,
    pub t: f64,
    pub d_min: f64,
    pub v: f64,
}

/// Result of [`SubsenseModel::classify`].
#[derive(Clone, Debug, PartialEq)]
pub struct SubsenseOutput {
    pub mask: FgMask,
    /// Minimal color distance to the samples, normalized to [0, 1].
    pub dmin_obs: Vec<f64>,
    descriptors: Vec<[u16; 3]>,
}

#[derive(Clone, Debug)]
pub struct SubsenseModel {
    params: SubsenseParams,
    width: usize,
    height: usize,
    colors: Vec<[u8; 3]>,
    descriptors: Vec<u64>,
    r: Vec<f64>,
    t: Vec<f64>,
    d_min: Vec<f64>,
    v: Vec<f64>,
    prev_mask: Vec<u8>,
    rng: ChaCha8Rng,
}

impl SubsenseModel {
    /// Builds the sample banks from `frames`. Every sample is copied from a
    /// random frame at the pixel itself or one of its 8 neighbors.
    pub fn init(frames: &[Frame], params: SubsenseParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let first = frames
            .first()
            .ok_or_else(|| Error::Argument("subsense init needs at least one frame".into()))?;
        let (w, h) = first.dims();
        for f in frames {
            check_dims("subsense init", (w, h), f.dims())?;
        }
        let descs: Vec<Vec<[u16; 3]>> = frames
            .iter()
            .map(|f| lbsp::compute_descriptors(f, params.lbsp_threshold()))
            .collect();
        let n = params.n_samples;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut colors = Vec::with_capacity(w * h * n);
        let mut descriptors = Vec::with_capacity(w * h * n);
        let mut cands = Vec::with_capacity(9);
        for y in 0..h {
            for x in 0..w {
                cands.clear();
                cands.push((x, y));
                cands.extend(super::neighbors8(x, y, w, h));
                for _ in 0..n {
                    let fi = rng.random_range(0..frames.len());
                    let (sx, sy) = cands[rng.random_range(0..cands.len())];
                    colors.push(frames[fi].pixel(sx, sy));
                    descriptors.push(lbsp::pack(descs[fi][sy * w + sx]));
                }
            }
        }
        let npix = w * h;
        Ok(SubsenseModel {
            width: w,
            height: h,
            colors,
            descriptors,
            r: vec![1.0f64.max(params.r_lower); npix],
            t: vec![params.t_lower; npix],
            d_min: vec![0.0; npix],
            v: vec![params.v_floor; npix],
            prev_mask: vec![BG; npix],
            rng,
            params,
        })
    }

    pub fn params(&self) -> &SubsenseParams {
        &self.params
    }

    pub fn pixel_state(&self, x: usize, y: usize) -> SubsensePixelState {
        let i = y * self.width + x;
        let n = self.params.n_samples;
        let samples = (i * n..(i + 1) * n)
            .map(|k| PixelSample {
                color: self.colors[k],
                descriptor: lbsp::unpack(self.descriptors[k]),
            })
            .collect();
        SubsensePixelState {
            samples,
            r: self.r[i],
            t: self.t[i],
            d_min: self.d_min[i],
            v: self.v[i],
        }
    }

    pub fn distance_thresholds(&self) -> &[f64] {
        &self.r
    }

    pub fn update_rates(&self) -> &[f64] {
        &self.t
    }

    pub fn min_distances(&self) -> &[f64] {
        &self.d_min
    }

    pub fn blink_accumulators(&self) -> &[f64] {
        &self.v
    }

    /// Labels `frame` against the model.
    pub fn classify(&self, frame: &Frame) -> Result<SubsenseOutput> {
        check_dims("subsense classify", self.dims(), frame.dims())?;
        let p = &self.params;
        let n = p.n_samples;
        let descs = lbsp::compute_descriptors(frame, p.lbsp_threshold());
        let npix = self.width * self.height;
        let mut labels = vec![BG; npix];
        let mut dmin_obs = vec![0.0; npix];
        let data = frame.data();
        for i in 0..npix {
            let c = [data[3 * i], data[3 * i + 1], data[3 * i + 2]];
            let d = lbsp::pack(descs[i]);
            let r = self.r[i];
            // distances are integers, so `dist < x` is `dist < ceil(x)`
            let color_thr = (3.0 * p.color_threshold * r).ceil() as u32;
            let desc_thr = p.descriptor_threshold * r.floor() as u32;
            let bank = &self.colors[i * n..(i + 1) * n];
            let dbank = &self.descriptors[i * n..(i + 1) * n];
            let mut best = u32::MAX;
            let mut matches = 0;
            for (s, &sd) in bank.iter().zip(dbank) {
                let dist = c[0].abs_diff(s[0]) as u32
                    + c[1].abs_diff(s[1]) as u32
                    + c[2].abs_diff(s[2]) as u32;
                best = best.min(dist);
                matches += ((dist < color_thr) & ((sd ^ d).count_ones() < desc_thr)) as usize;
            }
            labels[i] = (matches < p.min_matches) as u8;
            dmin_obs[i] = best as f64 / (3.0 * 255.0);
        }
        let raw = FgMask::new(self.width, self.height, labels)?;
        Ok(SubsenseOutput {
            mask: median_filter(&raw, p.median_window),
            dmin_obs,
            descriptors: descs,
        })
    }

    /// Feedback update from this frame's raw mask and the refined mask.
    pub fn feedback_update(
        &mut self,
        frame: &Frame,
        raw_mask: &FgMask,
        final_mask: &FgMask,
        dmin_obs: &[f64],
    ) -> Result<()> {
        check_dims("subsense update", self.dims(), frame.dims())?;
        let descs = lbsp::compute_descriptors(frame, self.params.lbsp_threshold());
        self.update_with(frame, raw_mask, final_mask, dmin_obs, &descs)
    }

    fn update_with(
        &mut self,
        frame: &Frame,
        raw_mask: &FgMask,
        final_mask: &FgMask,
        dmin_obs: &[f64],
        descs: &[[u16; 3]],
    ) -> Result<()> {
        let dims = self.dims();
        check_dims("subsense update", dims, frame.dims())?;
        check_dims("subsense update (raw mask)", dims, raw_mask.dims())?;
        check_dims("subsense update (final mask)", dims, final_mask.dims())?;
        let npix = self.width * self.height;
        if dmin_obs.len() != npix || descs.len() != npix {
            return Err(Error::Argument(
                "subsense update: per-pixel distance buffer has the wrong length".into(),
            ));
        }
        let p = self.params.clone();
        let n = p.n_samples;
        let (w, h) = dims;
        for i in 0..npix {
            let raw_fg = raw_mask.is_fg(i);
            let final_fg = final_mask.is_fg(i);

            let d = smooth_min_distance(self.d_min[i], dmin_obs[i], p.alpha).clamp(0.0, 1.0);
            self.d_min[i] = d;

            let current = if p.blink_uses_final { final_fg } else { raw_fg };
            let blinked = current != (self.prev_mask[i] != BG);
            let v = update_blink_accumulator(self.v[i], blinked, &p);
            self.v[i] = v;

            self.r[i] = adjust_distance_threshold(self.r[i], d, v, &p);
            let rate_fg = if p.rate_uses_final { final_fg } else { raw_fg };
            self.t[i] = adjust_update_rate(self.t[i], d, v, rate_fg, &p);

            let replace_fg = if p.replacement_uses_final {
                final_fg
            } else {
                raw_fg
            };
            if !replace_fg {
                let t = self.t[i];
                let color = frame.pixel(i % w, i / w);
                if self.rng.random::<f64>() * t < 1.0 {
                    let k = i * n + self.rng.random_range(0..n);
                    self.colors[k] = color;
                    self.descriptors[k] = lbsp::pack(descs[i]);
                }
                if self.rng.random::<f64>() * t < 1.0 {
                    if let Some((nx, ny)) = random_neighbor(&mut self.rng, i % w, i / w, w, h) {
                        let k = (ny * w + nx) * n + self.rng.random_range(0..n);
                        self.colors[k] = color;
                        self.descriptors[k] = lbsp::pack(descs[i]);
                    }
                }
            }
            self.prev_mask[i] = current as u8;
        }
        Ok(())
    }
}

impl Segmenter for SubsenseModel {
    fn classify(&self, frame: &Frame) -> Result<Segmentation> {
        let out = SubsenseModel::classify(self, frame)?;
        Ok(Segmentation {
            mask: out.mask,
            aux: SegmentationAux::Subsense {
                dmin_obs: out.dmin_obs,
                descriptors: out.descriptors,
            },
        })
    }

    fn update(&mut self, frame: &Frame, seg: &Segmentation, final_mask: &FgMask) -> Result<()> {
        match &seg.aux {
            SegmentationAux::Subsense {
                dmin_obs,
                descriptors,
            } => self.update_with(frame, &seg.mask, final_mask, dmin_obs, descriptors),
            SegmentationAux::None => Err(Error::Argument(
                "subsense update needs a segmentation produced by subsense".into(),
            )),
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_params() -> SubsenseParams {
        SubsenseParams {
            median_window: 0,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let p = SubsenseParams::default();
        assert_eq!(p.n_samples, 50);
        assert_eq!(p.min_matches, 2);
        assert_eq!((p.v_incr, p.v_decr), (1.0, 0.1));
        assert_eq!((p.t_lower, p.t_upper, p.r_lower), (2.0, 256.0, 1.0));
        assert_eq!(p.alpha, 0.04);
    }

    #[test]
    fn smoothing_step() {
        assert!((smooth_min_distance(0.2, 0.8, 0.1) - 0.26).abs() < 1e-12);
        // fixed point
        assert_eq!(smooth_min_distance(0.375, 0.375, 0.04), 0.375);
    }

    #[test]
    fn threshold_step() {
        let p = SubsenseParams::default();
        assert_eq!(adjust_distance_threshold(1.0, 0.5, 2.0, &p), 3.0);
        // at or above the bound the threshold shrinks by 1/v
        assert_eq!(adjust_distance_threshold(5.0, 0.5, 2.0, &p), 4.5);
        // and never drops below r_lower
        assert_eq!(adjust_distance_threshold(1.0, 0.0, 0.1, &p), 1.0);
        assert!((adjust_distance_threshold(1.0, 0.1, 0.1, &p) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn blink_step() {
        let p = SubsenseParams::default();
        assert_eq!(update_blink_accumulator(0.1, true, &p), 1.1);
        assert!((update_blink_accumulator(1.1, false, &p) - 1.0).abs() < 1e-12);
        assert_eq!(update_blink_accumulator(0.15, false, &p), 0.1);
    }

    #[test]
    fn rate_step() {
        let p = SubsenseParams {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!((adjust_update_rate(10.0, 0.5, 2.0, true, &p) - 11.0).abs() < 1e-12);
        assert!((adjust_update_rate(10.0, 0.5, 2.0, false, &p) - 6.0).abs() < 1e-12);
        assert_eq!(adjust_update_rate(3.0, 0.5, 2.0, false, &p), 2.0);
        assert_eq!(adjust_update_rate(255.5, 0.5, 2.0, true, &p), 256.0);
        // epsilon keeps D_min = 0 finite
        let p = SubsenseParams::default();
        assert_eq!(adjust_update_rate(10.0, 0.0, 0.1, true, &p), 256.0);
        assert_eq!(adjust_update_rate(10.0, 0.0, 0.1, false, &p), 2.0);
    }

    #[test]
    fn constant_init() {
        let f = Frame::filled(6, 4, [128; 3]).unwrap();
        let m = SubsenseModel::init(&[f], raw_params(), 1).unwrap();
        let s = m.pixel_state(3, 2);
        assert_eq!(s.samples.len(), 50);
        assert!(s.samples.iter().all(|p| p.color == [128; 3] && p.descriptor == [0; 3]));
        assert_eq!((s.r, s.t, s.d_min, s.v), (1.0, 2.0, 0.0, 0.1));
    }

    #[test]
    fn init_requires_frames() {
        assert!(matches!(
            SubsenseModel::init(&[], raw_params(), 1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn init_is_deterministic() {
        let mut f = Frame::filled(8, 8, [10, 20, 30]).unwrap();
        for i in 0..8 {
            f.set_pixel(i, i, [200, 100, i as u8]);
        }
        let a = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 9).unwrap();
        let b = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 9).unwrap();
        assert_eq!(a.colors, b.colors);
        assert_eq!(a.descriptors, b.descriptors);
    }

    #[test]
    fn perfect_match_is_background() {
        let f = Frame::filled(10, 10, [77; 3]).unwrap();
        let m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 1).unwrap();
        let out = m.classify(&f).unwrap();
        assert_eq!(out.mask.count_fg(), 0);
        assert!(out.dmin_obs.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn complement_pixel_is_foreground() {
        let f = Frame::filled(10, 10, [40, 90, 160]).unwrap();
        let m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 1).unwrap();
        let mut g = f.clone();
        g.set_pixel(4, 5, [255 - 40, 255 - 90, 255 - 160]);
        let out = m.classify(&g).unwrap();
        assert!(out.mask.is_fg(5 * 10 + 4));
        let expected = (175 + 75 + 65) as f64 / 765.0;
        assert!((out.dmin_obs[5 * 10 + 4] - expected).abs() < 1e-12);
    }

    #[test]
    fn classify_is_pure() {
        let f = Frame::filled(10, 10, [40, 90, 160]).unwrap();
        let m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 1).unwrap();
        let g = Frame::filled(10, 10, [45, 80, 170]).unwrap();
        assert_eq!(m.classify(&g).unwrap(), m.classify(&g).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let f = Frame::filled(10, 10, [0; 3]).unwrap();
        let mut m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 1).unwrap();
        let g = Frame::filled(9, 10, [0; 3]).unwrap();
        assert!(matches!(m.classify(&g), Err(Error::Argument(_))));
        let mask = FgMask::background(10, 10);
        let bad = FgMask::background(10, 9);
        let d = vec![0.0; 100];
        assert!(m.feedback_update(&f, &mask, &bad, &d).is_err());
        assert!(m.feedback_update(&f, &mask, &mask, &d[..50]).is_err());
    }

    #[test]
    fn all_foreground_final_freezes_banks() {
        let f = Frame::filled(12, 12, [100; 3]).unwrap();
        let mut m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 4).unwrap();
        let g = Frame::filled(12, 12, [30; 3]).unwrap();
        let before = m.colors.clone();
        for _ in 0..20 {
            let out = m.classify(&g).unwrap();
            let fg = FgMask::filled(12, 12, 1);
            m.feedback_update(&g, &out.mask, &fg, &out.dmin_obs).unwrap();
        }
        assert_eq!(m.colors, before);
    }

    #[test]
    fn background_absorbs_new_color() {
        let f = Frame::filled(12, 12, [100; 3]).unwrap();
        let mut m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 4).unwrap();
        let g = Frame::filled(12, 12, [30; 3]).unwrap();
        for _ in 0..30 {
            let out = m.classify(&g).unwrap();
            let bg = FgMask::background(12, 12);
            m.feedback_update(&g, &out.mask, &bg, &out.dmin_obs).unwrap();
        }
        assert_eq!(m.classify(&g).unwrap().mask.count_fg(), 0);
    }

    #[test]
    fn update_example_from_state() {
        // one pixel, driven directly: D_min 0 -> alpha * d
        let f = Frame::filled(1, 1, [0; 3]).unwrap();
        let mut m = SubsenseModel::init(std::slice::from_ref(&f), raw_params(), 4).unwrap();
        let mask = FgMask::background(1, 1);
        m.feedback_update(&f, &mask, &mask, &[0.5]).unwrap();
        assert!((m.d_min[0] - 0.02).abs() < 1e-12);
        assert_eq!(m.v[0], 0.1);
    }
}
