//! File-level entry points: run a configured sequence or dataset, write
//! masks, timings and a manifest, and sweep one parameter.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SemanticSourceKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, DatasetReport};
use crate::frame_io::{self, discover_videos, FramePattern, VideoLayout};
use crate::pipeline::{required_semantic_indices, run_rtss};
use crate::semantic::{MapDirSource, ScoreDirSource, SemanticSource};

/// Output mask file names.
pub const MASK_PATTERN: &str = "bin%06d.png";
pub const TIMING_LOG: &str = "timing.jsonl";
pub const TIMING_SUMMARY: &str = "timing_summary.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    /// True when no seed was configured and one was generated.
    pub seed_generated: bool,
    pub config: RunConfig,
    pub input_dir: PathBuf,
    pub output_dir: Option<PathBuf>,
    pub mask_pattern: String,
    pub timing_log: Option<PathBuf>,
    pub frames: usize,
    pub first_index: Option<usize>,
    pub last_index: Option<usize>,
}

/// One line of the timing log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub frame: usize,
    pub bgs_ms: f64,
    pub sem_ms: f64,
    pub fuse_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub frames: usize,
    pub mean_bgs_ms: f64,
    pub mean_sem_ms: f64,
    pub mean_fuse_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub timing: TimingSummary,
}

fn generated_seed() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0x5EED)
}

fn semantic_source(cfg: &RunConfig) -> Result<Option<Box<dyn SemanticSource>>> {
    let dir = || {
        cfg.semantic
            .dir
            .clone()
            .ok_or_else(|| Error::Config("semantic source needs semantic.dir".into()))
    };
    Ok(match cfg.semantic.source {
        SemanticSourceKind::None => None,
        SemanticSourceKind::Maps => {
            let dir = dir()?;
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "semantic directory {} does not exist",
                    dir.display()
                )));
            }
            Some(Box::new(MapDirSource::new(&dir, cfg.semantic.pattern())?))
        }
        SemanticSourceKind::Scores => {
            let dir = dir()?;
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "score directory {} does not exist",
                    dir.display()
                )));
            }
            Some(Box::new(ScoreDirSource::new(
                &dir,
                cfg.semantic.pattern(),
                cfg.semantic.foreground_classes.clone(),
            )?))
        }
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs one configured sequence; writes `bin%06d.png` masks, the timing
/// log and the manifest when an output directory is set.
pub fn run_sequence(cfg: &RunConfig, config_path: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let input_dir = cfg
        .input_dir
        .clone()
        .ok_or_else(|| Error::Config("input_dir is not set".into()))?;
    if !input_dir.is_dir() {
        return Err(Error::Config(format!(
            "input directory {} does not exist",
            input_dir.display()
        )));
    }
    let (seed, seed_generated) = match cfg.seed {
        Some(s) => (s, false),
        None => (generated_seed(), true),
    };
    let mut resolved = cfg.clone();
    resolved.seed = Some(seed);
    let mut params = resolved.params.clone();
    params.seed = seed;

    let reader = frame_io::load_sequence(&input_dir, &cfg.input_pattern, cfg.first_frame, cfg.last_frame)?;
    let indices = reader.indices();
    let mut source = semantic_source(cfg)?;
    if let Some(src) = &source {
        src.check_available(&required_semantic_indices(&indices, params.semantic_period))?;
    }

    let out_dir = cfg.output_dir.clone();
    let mut timing_log = None;
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(TIMING_LOG);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        timing_log = Some((path, std::io::BufWriter::new(file)));
    }
    let mask_pattern = FramePattern::parse(MASK_PATTERN)?;

    let mut totals = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let mut frames = 0usize;
    run_rtss(
        &params,
        reader,
        source.as_deref_mut().map(|s| s as &mut dyn SemanticSource),
        |r| {
            frames += 1;
            totals.0 += r.timing.bgs;
            totals.1 += r.timing.sem;
            totals.2 += r.timing.fuse;
            if let Some(dir) = &out_dir {
                frame_io::write_mask(&r.fused, &mask_pattern.path(dir, r.index))?;
            }
            if let Some((path, log)) = timing_log.as_mut() {
                let rec = TimingRecord {
                    frame: r.index,
                    bgs_ms: r.timing.bgs_ms(),
                    sem_ms: r.timing.sem_ms(),
                    fuse_ms: r.timing.fuse_ms(),
                };
                writeln!(log, "{}", serde_json::to_string(&rec).expect("serializable"))
                    .map_err(|e| Error::io(path.as_path(), e))?;
            }
            Ok(())
        },
    )?;

    let mean = |d: Duration| {
        if frames == 0 {
            0.0
        } else {
            d.as_secs_f64() * 1e3 / frames as f64
        }
    };
    let timing = TimingSummary {
        frames,
        mean_bgs_ms: mean(totals.0),
        mean_sem_ms: mean(totals.1),
        mean_fuse_ms: mean(totals.2),
    };
    let manifest = RunManifest {
        config_path: config_path.map(Path::to_path_buf),
        seed,
        seed_generated,
        config: resolved,
        input_dir,
        output_dir: out_dir.clone(),
        mask_pattern: MASK_PATTERN.to_string(),
        timing_log: timing_log.as_ref().map(|(p, _)| p.clone()),
        frames,
        first_index: indices.first().copied(),
        last_index: indices.last().copied(),
    };
    if let Some((path, mut log)) = timing_log {
        log.flush().map_err(|e| Error::io(&path, e))?;
    }
    if let Some(dir) = &out_dir {
        write_json(&dir.join(TIMING_SUMMARY), &timing)?;
        write_json(&dir.join(MANIFEST), &manifest)?;
    }
    Ok(RunSummary { manifest, timing })
}

/// Configuration for one video of a dataset, derived from a base config.
/// Output and semantic directories mirror the dataset layout.
pub fn video_config(base: &RunConfig, video: &VideoLayout, results_root: &Path) -> RunConfig {
    let mut cfg = base.clone();
    cfg.input_dir = Some(video.input_dir());
    cfg.output_dir = Some(results_root.join(&video.relative));
    if let Some(sem_root) = &base.semantic.dir {
        cfg.semantic.dir = Some(sem_root.join(&video.relative));
    }
    cfg
}

/// Runs every video under `dataset_root`, writing results to the same
/// relative paths under `results_root`.
pub fn run_dataset(
    base: &RunConfig,
    config_path: Option<&Path>,
    dataset_root: &Path,
    results_root: &Path,
) -> Result<Vec<(VideoLayout, RunSummary)>> {
    let videos = discover_videos(dataset_root)?;
    if videos.is_empty() {
        return Err(Error::Config(format!(
            "no videos found under {}",
            dataset_root.display()
        )));
    }
    let mut base = base.clone();
    if base.seed.is_none() {
        base.seed = Some(generated_seed());
    }
    videos
        .into_iter()
        .map(|v| {
            let cfg = video_config(&base, &v, results_root);
            let summary = run_sequence(&cfg, config_path).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", v.id())),
                other => other,
            })?;
            Ok((v, summary))
        })
        .collect()
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    TauBg,
    TauFg,
    Phi,
    Period,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau_bg" => Ok(SweepParam::TauBg),
            "tau_fg" => Ok(SweepParam::TauFg),
            "phi" => Ok(SweepParam::Phi),
            "n" => Ok(SweepParam::Period),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected tau_bg, tau_fg, phi or n)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::TauBg => "tau_bg",
            SweepParam::TauFg => "tau_fg",
            SweepParam::Phi => "phi",
            SweepParam::Period => "n",
        })
    }
}

impl SweepParam {
    /// Sets the parameter in `cfg` from its textual value.
    pub fn apply(&self, cfg: &mut RunConfig, value: &str) -> Result<()> {
        let bad = |e: std::num::ParseIntError| Error::Config(format!("bad {self} value {value:?}: {e}"));
        let v = value.trim();
        match self {
            SweepParam::TauBg => cfg.params.fusion.tau_bg = v.parse().map_err(bad)?,
            SweepParam::TauFg => cfg.params.fusion.tau_fg = v.parse().map_err(bad)?,
            SweepParam::Phi => cfg.params.phi = v.parse().map_err(bad)?,
            SweepParam::Period => cfg.params.semantic_period = v.parse().map_err(bad)?,
        }
        cfg.params.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub overall_fm: Option<f64>,
    pub category_fm: BTreeMap<String, Option<f64>>,
}

/// One dataset run plus evaluation per value. Results of value `v` go to
/// `out_root/<param>=<v>/`.
pub fn sweep(
    base: &RunConfig,
    config_path: Option<&Path>,
    dataset_root: &Path,
    param: SweepParam,
    values: &[String],
    out_root: &Path,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut base = base.clone();
    if base.seed.is_none() {
        base.seed = Some(generated_seed());
    }
    // validate every value before running anything
    let configs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, v)?;
            Ok((v.clone(), cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(configs.len());
    for (value, cfg) in configs {
        let results = out_root.join(format!("{param}={value}"));
        run_dataset(&cfg, config_path, dataset_root, &results)?;
        let report = evaluate_dataset(&results, dataset_root, MASK_PATTERN)?;
        rows.push(sweep_row(value, &report));
    }
    Ok(rows)
}

pub fn sweep_row(value: String, report: &DatasetReport) -> SweepRow {
    SweepRow {
        value,
        overall_fm: report.summary.overall.report.fm,
        category_fm: report
            .summary
            .categories
            .iter()
            .map(|(k, m)| (k.clone(), m.report.fm))
            .collect(),
    }
}

/// CSV with columns `param_value,overall_fm,fm_<category>...`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut cats: Vec<&String> = rows.iter().flat_map(|r| r.category_fm.keys()).collect();
    cats.sort();
    cats.dedup();
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut out = String::from("param_value,overall_fm");
    for c in &cats {
        out.push_str(&format!(",fm_{c}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{}", r.value, fmt(r.overall_fm)));
        for c in &cats {
            out.push(',');
            out.push_str(&fmt(r.category_fm.get(*c).copied().flatten()));
        }
        out.push('\n');
    }
    out
}
