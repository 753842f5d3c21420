//! Run configuration files.
//!
//! A config is a TOML document of flat keys, with optional `[fusion]`,
//! `[semantic]` and per-segmenter tables. Relative paths resolve against
//! the directory containing the config file. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::PipelineParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticSourceKind {
    /// 8-bit probability maps, one per frame.
    Maps,
    /// Raw class-score files; probabilities are computed in-core.
    Scores,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    pub source: SemanticSourceKind,
    pub dir: Option<PathBuf>,
    /// Defaults to `sem%06d.png` for maps and `sem%06d.bin` for scores.
    pub pattern: Option<String>,
    /// Foreground class indices for the score source.
    pub foreground_classes: Vec<usize>,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig {
            source: SemanticSourceKind::None,
            dir: None,
            pattern: None,
            foreground_classes: Vec::new(),
        }
    }
}

impl SemanticConfig {
    pub fn pattern(&self) -> &str {
        match (&self.pattern, self.source) {
            (Some(p), _) => p,
            (None, SemanticSourceKind::Scores) => "sem%06d.bin",
            (None, _) => "sem%06d.png",
        }
    }
}

/// Keys accepted at the top level. Nested tables reject unknown keys
/// themselves; the flattened parameter structs cannot.
const TOP_LEVEL_KEYS: [&str; 15] = [
    "input_dir",
    "input_pattern",
    "first_frame",
    "last_frame",
    "output_dir",
    "seed",
    "semantic",
    "segmenter",
    "subsense",
    "vibe",
    "gmm",
    "fusion",
    "semantic_period",
    "phi",
    "update_semantic_on_skipped",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input_dir: Option<PathBuf>,
    pub input_pattern: String,
    pub first_frame: usize,
    pub last_frame: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// When absent, a seed is chosen at run time and recorded in the manifest.
    pub seed: Option<u64>,
    pub semantic: SemanticConfig,
    #[serde(flatten)]
    pub params: PipelineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input_dir: None,
            input_pattern: "in%06d.jpg".to_string(),
            first_frame: 1,
            last_frame: None,
            output_dir: None,
            seed: None,
            semantic: SemanticConfig::default(),
            params: PipelineParams::default(),
        }
    }
}

impl RunConfig {
    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !TOP_LEVEL_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.input_dir, &mut self.output_dir, &mut self.semantic.dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without touching frames.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        crate::frame_io::FramePattern::parse(&self.input_pattern)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(last) = self.last_frame {
            if last < self.first_frame {
                return Err(Error::Config("last_frame precedes first_frame".into()));
            }
        }
        match self.semantic.source {
            SemanticSourceKind::None => {}
            kind => {
                if self.semantic.dir.is_none() {
                    return Err(Error::Config("semantic source needs semantic.dir".into()));
                }
                crate::frame_io::FramePattern::parse(self.semantic.pattern())
                    .map_err(|e| Error::Config(e.to_string()))?;
                if kind == SemanticSourceKind::Scores && self.semantic.foreground_classes.is_empty() {
                    return Err(Error::Config(
                        "score source needs semantic.foreground_classes".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Command-line style overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOverrides {
    pub segmenter: Option<crate::bgs::SegmenterKind>,
    pub input_dir: Option<PathBuf>,
    /// Also selects the map source when the config has none.
    pub semantic_dir: Option<PathBuf>,
    pub semantic_period: Option<usize>,
    pub tau_bg: Option<i16>,
    pub tau_fg: Option<i16>,
    pub phi: Option<u32>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.segmenter {
            cfg.params.segmenter = k;
        }
        if let Some(d) = &self.input_dir {
            cfg.input_dir = Some(d.clone());
        }
        if let Some(d) = &self.semantic_dir {
            cfg.semantic.dir = Some(d.clone());
            if cfg.semantic.source == SemanticSourceKind::None {
                cfg.semantic.source = SemanticSourceKind::Maps;
            }
        }
        if let Some(n) = self.semantic_period {
            cfg.params.semantic_period = n;
        }
        if let Some(t) = self.tau_bg {
            cfg.params.fusion.tau_bg = t;
        }
        if let Some(t) = self.tau_fg {
            cfg.params.fusion.tau_fg = t;
        }
        if let Some(phi) = self.phi {
            cfg.params.phi = phi;
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = Some(d.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgs::SegmenterKind;

    #[test]
    fn defaults_from_empty_file() {
        let c = RunConfig::parse("", Path::new("/base")).unwrap();
        assert_eq!(c.params.fusion.tau_bg, 0);
        assert_eq!(c.params.fusion.tau_fg, 225);
        assert_eq!(c.params.phi, 100);
        assert_eq!(c.params.semantic_period, 1);
        assert_eq!(c.params.segmenter, SegmenterKind::Subsense);
        assert_eq!(c.seed, None);
    }

    #[test]
    fn parses_keys_and_resolves_paths() {
        let text = r#"
            input_dir = "video/input"
            output_dir = "/abs/out"
            seed = 7
            segmenter = "vibe"
            semantic_period = 3
            phi = 16
            fusion.tau_fg = 200
            [semantic]
            source = "maps"
            dir = "sem"
            [subsense]
            n_samples = 20
        "#;
        let c = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(c.input_dir, Some(PathBuf::from("/cfg/video/input")));
        assert_eq!(c.output_dir, Some(PathBuf::from("/abs/out")));
        assert_eq!(c.semantic.dir, Some(PathBuf::from("/cfg/sem")));
        assert_eq!(c.params.segmenter, SegmenterKind::Vibe);
        assert_eq!(c.params.semantic_period, 3);
        assert_eq!(c.params.phi, 16);
        assert_eq!(c.params.fusion.tau_fg, 200);
        assert_eq!(c.params.fusion.tau_bg, 0);
        assert_eq!(c.params.segmenter_params.subsense.n_samples, 20);
        assert_eq!(c.semantic.pattern(), "sem%06d.png");
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = RunConfig::parse("tau_fgg = 3", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("tau_fgg"), "{err}");
        let err = RunConfig::parse("[subsense]\nalpah = 0.1", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::parse("phi = 9\nseed = 1", Path::new(".")).unwrap();
        RunOverrides {
            phi: Some(4),
            semantic_dir: Some("/sem".into()),
            semantic_period: Some(0),
            ..Default::default()
        }
        .apply(&mut c);
        assert_eq!((c.params.phi, c.seed), (4, Some(1)));
        assert_eq!(c.semantic.source, SemanticSourceKind::Maps);
        assert!(c.validate().is_err());
    }

    #[test]
    fn validation() {
        let c = RunConfig::parse("semantic_period = 0", Path::new(".")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("semantic period must be ≥ 1"));
        let c = RunConfig::parse("[semantic]\nsource = \"maps\"", Path::new(".")).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_serialized_key_is_known() {
        let c = RunConfig {
            input_dir: Some("/i".into()),
            output_dir: Some("/o".into()),
            last_frame: Some(9),
            seed: Some(1),
            ..Default::default()
        };
        let table: toml::Table = c.to_toml().parse().unwrap();
        let mut keys: Vec<&str> = table.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut known = TOP_LEVEL_KEYS.to_vec();
        known.sort_unstable();
        assert_eq!(keys, known);
    }

    #[test]
    fn serialized_config_reparses() {
        let mut c = RunConfig::parse("seed = 3\nphi = 9", Path::new("/x")).unwrap();
        c.input_dir = Some("/x/in".into());
        let back = RunConfig::parse(&c.to_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
    }
}
