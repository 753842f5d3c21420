//! Semantic foreground probability and the semantic background model.
//!
//! `S_t` is the softmax mass of a foreground class set scaled to 0..=255.
//! The background model `M` starts as the first map and is refreshed, at
//! pixels the final mask calls background, with probability `1/phi`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dims, Error, Result};
use crate::frame_io::{self, FgMask, FramePattern, SemanticMap, SignedMap, BG};

/// Foreground object classes used for change detection.
pub const DEFAULT_FOREGROUND_CLASSES: [&str; 12] = [
    "person", "car", "cushion", "box", "book", "boat", "bus", "truck", "bottle", "van", "bag",
    "bicycle",
];

/// Default time subsampling factor `phi`.
pub const DEFAULT_PHI: u32 = 100;

/// Per-pixel class scores, classes innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScoreMap {
    width: usize,
    height: usize,
    num_classes: usize,
    scores: Vec<f32>,
}

impl ClassScoreMap {
    pub fn new(width: usize, height: usize, num_classes: usize, scores: Vec<f32>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Argument("score map needs at least one class".into()));
        }
        if scores.len() != width * height * num_classes {
            return Err(Error::Argument(format!(
                "score map has {} values, expected {}",
                scores.len(),
                width * height * num_classes
            )));
        }
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite class score at pixel {} class {}",
                pos / num_classes,
                pos % num_classes
            )));
        }
        Ok(ClassScoreMap {
            width,
            height,
            num_classes,
            scores,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn pixel_scores(&self, i: usize) -> &[f32] {
        &self.scores[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Reads the binary score format: three little-endian `i32` (height,
    /// width, classes) followed by `f32` scores.
    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 12];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let field = |k: usize| i32::from_le_bytes(header[4 * k..4 * k + 4].try_into().unwrap());
        let (h, w, c) = (field(0), field(1), field(2));
        if h <= 0 || w <= 0 || c <= 0 {
            return Err(Error::format(path, format!("bad score header {h}x{w}x{c}")));
        }
        let (h, w, c) = (h as usize, w as usize, c as usize);
        let mut body = Vec::new();
        file.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
        if body.len() != h * w * c * 4 {
            return Err(Error::format(
                path,
                format!("expected {} score bytes, found {}", h * w * c * 4, body.len()),
            ));
        }
        let scores = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        ClassScoreMap::new(w, h, c, scores).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(12 + self.scores.len() * 4);
        for v in [self.height, self.width, self.num_classes] {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
        for s in &self.scores {
            out.extend_from_slice(&s.to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

/// Indices of the classes counted as foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForegroundClassSet {
    member: Vec<bool>,
}

impl ForegroundClassSet {
    pub fn new(indices: &[usize], num_classes: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Argument("foreground class set is empty".into()));
        }
        let mut member = vec![false; num_classes];
        for &i in indices {
            if i >= num_classes {
                return Err(Error::Argument(format!(
                    "foreground class {i} out of range for {num_classes} classes"
                )));
            }
            member[i] = true;
        }
        Ok(ForegroundClassSet { member })
    }

    /// Resolves class names against a name table (index = position).
    pub fn from_names(names: &[&str], table: &[&str]) -> Result<Self> {
        let indices = names
            .iter()
            .map(|n| {
                table
                    .iter()
                    .position(|t| t == n)
                    .ok_or_else(|| Error::Argument(format!("unknown class name {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&indices, table.len())
    }

    pub fn num_classes(&self) -> usize {
        self.member.len()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.member.get(class).copied().unwrap_or(false)
    }
}

/// Scales a probability to 0..=255, rounding half up.
#[inline]
pub fn probability_to_byte(p: f64) -> u8 {
    (255.0 * p + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Softmax over each pixel's scores, summed over the foreground classes
/// and scaled to 0..=255.
pub fn foreground_probability(scores: &ClassScoreMap, fg: &ForegroundClassSet) -> Result<SemanticMap> {
    if fg.num_classes() != scores.num_classes() {
        return Err(Error::Argument(format!(
            "foreground set is for {} classes, scores have {}",
            fg.num_classes(),
            scores.num_classes()
        )));
    }
    let npix = scores.width() * scores.height();
    let mut values = Vec::with_capacity(npix);
    for i in 0..npix {
        let s = scores.pixel_scores(i);
        if let Some(k) = s.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite class score at pixel {i} class {k}"
            )));
        }
        let max = s.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let mut total = 0.0;
        let mut fg_mass = 0.0;
        for (k, &v) in s.iter().enumerate() {
            let e = (v as f64 - max).exp();
            total += e;
            if fg.contains(k) {
                fg_mass += e;
            }
        }
        // all classes foreground: exactly 1 regardless of rounding
        let p = if fg_mass == total { 1.0 } else { fg_mass / total };
        values.push(probability_to_byte(p));
    }
    SemanticMap::new(scores.width(), scores.height(), values)
}

/// Semantic background model `M`.
#[derive(Clone, Debug)]
pub struct SemanticModel {
    background: SemanticMap,
    phi: u32,
    rng: ChaCha8Rng,
}

impl SemanticModel {
    /// Starts the model as an exact copy of the first map.
    pub fn init(first: &SemanticMap, phi: u32, seed: u64) -> Result<Self> {
        if phi == 0 {
            return Err(Error::Argument("phi must be at least 1".into()));
        }
        Ok(SemanticModel {
            background: first.clone(),
            phi,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn background(&self) -> &SemanticMap {
        &self.background
    }

    pub fn phi(&self) -> u32 {
        self.phi
    }

    /// Returns `(S_bg, S_fg)`: the map itself and its signed difference to `M`.
    pub fn split(&self, current: &SemanticMap) -> Result<(SemanticMap, SignedMap)> {
        split_semantics(current, self)
    }

    /// Conservative random update: FG pixels keep `M`, BG pixels take
    /// `S_t` with probability `1/phi`.
    pub fn update(&mut self, current: &SemanticMap, final_mask: &FgMask) -> Result<()> {
        let dims = self.background.dims();
        check_dims("semantic update", dims, current.dims())?;
        check_dims("semantic update (mask)", dims, final_mask.dims())?;
        let phi = self.phi;
        let src = current.values();
        let labels = final_mask.labels();
        let dst = self.background.values_mut();
        for i in 0..dst.len() {
            if labels[i] == BG && self.rng.random_range(0..phi) == 0 {
                dst[i] = src[i];
            }
        }
        Ok(())
    }
}

/// `S_bg = S_t` and `S_fg = S_t - M` without saturation.
pub fn split_semantics(current: &SemanticMap, model: &SemanticModel) -> Result<(SemanticMap, SignedMap)> {
    let m = model.background();
    check_dims("split semantics", m.dims(), current.dims())?;
    let fg = current
        .values()
        .iter()
        .zip(m.values())
        .map(|(&s, &b)| s as i16 - b as i16)
        .collect();
    let (w, h) = current.dims();
    Ok((current.clone(), SignedMap::new(w, h, fg)?))
}

/// Where semantic maps come from.
pub trait SemanticSource: Send {
    /// Map for the frame with file index `index`.
    fn load(&mut self, index: usize) -> Result<SemanticMap>;

    /// Checks up front that maps for `indices` can be loaded.
    fn check_available(&self, _indices: &[usize]) -> Result<()> {
        Ok(())
    }
}

/// 8-bit maps on disk, e.g. `sem%06d.png`.
#[derive(Clone, Debug)]
pub struct MapDirSource {
    dir: PathBuf,
    pattern: FramePattern,
}

impl MapDirSource {
    pub fn new(dir: &Path, pattern: &str) -> Result<Self> {
        Ok(MapDirSource {
            dir: dir.to_path_buf(),
            pattern: FramePattern::parse(pattern)?,
        })
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.pattern.path(&self.dir, index)
    }
}

impl SemanticSource for MapDirSource {
    fn load(&mut self, index: usize) -> Result<SemanticMap> {
        frame_io::load_semantic_map(&self.path(index))
    }

    fn check_available(&self, indices: &[usize]) -> Result<()> {
        for &i in indices {
            let p = self.path(i);
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "missing semantic map for frame {i}: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

/// Raw class-score files converted in-core.
#[derive(Clone, Debug)]
pub struct ScoreDirSource {
    dir: PathBuf,
    pattern: FramePattern,
    classes: Vec<usize>,
}

impl ScoreDirSource {
    pub fn new(dir: &Path, pattern: &str, foreground_classes: Vec<usize>) -> Result<Self> {
        if foreground_classes.is_empty() {
            return Err(Error::Config(
                "score source needs a non-empty foreground class list".into(),
            ));
        }
        Ok(ScoreDirSource {
            dir: dir.to_path_buf(),
            pattern: FramePattern::parse(pattern)?,
            classes: foreground_classes,
        })
    }

    fn path(&self, index: usize) -> PathBuf {
        self.pattern.path(&self.dir, index)
    }
}

impl SemanticSource for ScoreDirSource {
    fn load(&mut self, index: usize) -> Result<SemanticMap> {
        let scores = ClassScoreMap::read(&self.path(index))?;
        let fg = ForegroundClassSet::new(&self.classes, scores.num_classes())?;
        foreground_probability(&scores, &fg)
    }

    fn check_available(&self, indices: &[usize]) -> Result<()> {
        for &i in indices {
            let p = self.path(i);
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "missing score file for frame {i}: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

/// Maps held in memory, keyed by frame index.
#[derive(Clone, Debug, Default)]
pub struct InMemorySource {
    maps: std::collections::BTreeMap<usize, SemanticMap>,
}

impl InMemorySource {
    pub fn new(maps: impl IntoIterator<Item = (usize, SemanticMap)>) -> Self {
        InMemorySource {
            maps: maps.into_iter().collect(),
        }
    }
}

impl SemanticSource for InMemorySource {
    fn load(&mut self, index: usize) -> Result<SemanticMap> {
        self.maps
            .get(&index)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no semantic map for frame {index}")))
    }

    fn check_available(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|i| !self.maps.contains_key(i)) {
            Some(i) => Err(Error::Config(format!("no semantic map for frame {i}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores_1px(values: Vec<f32>) -> ClassScoreMap {
        let n = values.len();
        ClassScoreMap::new(1, 1, n, values).unwrap()
    }

    #[test]
    fn saturated_foreground_class() {
        let mut v = vec![0.0; 150];
        v[3] = 50.0;
        let fg = ForegroundClassSet::new(&[3, 7], 150).unwrap();
        assert_eq!(foreground_probability(&scores_1px(v), &fg).unwrap().values(), &[255]);
    }

    #[test]
    fn uniform_scores() {
        let fg = ForegroundClassSet::new(&(0..12).collect::<Vec<_>>(), 150).unwrap();
        let s = scores_1px(vec![1.5; 150]);
        // 255 * 12 / 150 = 20.4
        assert_eq!(foreground_probability(&s, &fg).unwrap().values(), &[20]);
    }

    #[test]
    fn all_classes_foreground() {
        let fg = ForegroundClassSet::new(&(0..5).collect::<Vec<_>>(), 5).unwrap();
        let s = ClassScoreMap::new(2, 1, 5, vec![3.0, -1.0, 7.5, 0.0, 2.0, 9.0, 9.0, -4.0, 1.0, 0.0])
            .unwrap();
        assert_eq!(foreground_probability(&s, &fg).unwrap().values(), &[255, 255]);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(probability_to_byte(0.5 / 255.0), 1);
        assert_eq!(probability_to_byte(0.49 / 255.0), 0);
        assert_eq!(probability_to_byte(1.0), 255);
        assert_eq!(probability_to_byte(0.0), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ClassScoreMap::new(1, 1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(ForegroundClassSet::new(&[], 3).is_err());
        assert!(ForegroundClassSet::new(&[3], 3).is_err());
        let fg = ForegroundClassSet::new(&[0], 4).unwrap();
        assert!(foreground_probability(&scores_1px(vec![0.0; 3]), &fg).is_err());
    }

    #[test]
    fn class_names_resolve() {
        let table = ["wall", "person", "car"];
        let fg = ForegroundClassSet::from_names(&["car", "person"], &table).unwrap();
        assert!(fg.contains(1) && fg.contains(2) && !fg.contains(0));
        assert!(ForegroundClassSet::from_names(&["boat"], &table).is_err());
    }

    #[test]
    fn score_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let s = ClassScoreMap::new(3, 2, 4, (0..24).map(|i| i as f32 * 0.25 - 2.0).collect()).unwrap();
        s.write(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..12], &[2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(ClassScoreMap::read(&p).unwrap(), s);
        std::fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(ClassScoreMap::read(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn model_init_copies_first_map() {
        let s0 = SemanticMap::new(3, 1, vec![0, 128, 255]).unwrap();
        let m = SemanticModel::init(&s0, DEFAULT_PHI, 1).unwrap();
        assert_eq!(m.background(), &s0);
        assert_eq!(m.phi(), 100);
        assert!(SemanticModel::init(&s0, 0, 1).is_err());
        let z = SemanticMap::filled(4, 4, 0);
        assert_eq!(SemanticModel::init(&z, 5, 1).unwrap().background(), &z);
    }

    #[test]
    fn split_values() {
        let m0 = SemanticMap::new(3, 1, vec![0, 255, 40]).unwrap();
        let model = SemanticModel::init(&m0, 100, 1).unwrap();
        let s = SemanticMap::new(3, 1, vec![230, 0, 40]).unwrap();
        let (bg, fg) = split_semantics(&s, &model).unwrap();
        assert_eq!(bg, s);
        assert_eq!(fg.values(), &[230, -255, 0]);
        let (_, same) = split_semantics(&m0, &model).unwrap();
        assert!(same.values().iter().all(|&v| v == 0));
        assert!(split_semantics(&SemanticMap::filled(2, 1, 0), &model).is_err());
    }

    #[test]
    fn update_branches() {
        let m0 = SemanticMap::filled(8, 8, 10);
        let s = SemanticMap::filled(8, 8, 200);
        let mut model = SemanticModel::init(&m0, 1, 1).unwrap();
        model.update(&s, &FgMask::filled(8, 8, 1)).unwrap();
        assert_eq!(model.background(), &m0);
        model.update(&s, &FgMask::background(8, 8)).unwrap();
        assert_eq!(model.background(), &s);
        assert!(model.update(&s, &FgMask::background(8, 7)).is_err());
    }

    #[test]
    fn in_memory_source_reports_missing() {
        let src = InMemorySource::new([(1, SemanticMap::filled(2, 2, 0))]);
        assert!(src.check_available(&[1]).is_ok());
        assert!(matches!(src.check_available(&[1, 2]), Err(Error::Config(_))));
    }
}
