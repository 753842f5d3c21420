use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtss_core::config::{RunConfig, RunOverrides};
use rtss_core::eval::{check_semantic_maps, evaluate_dataset};
use rtss_core::frame_io::discover_videos;
use rtss_core::runner::{self, RunSummary, SweepParam, MASK_PATTERN};
use rtss_core::{Error, SegmenterKind};

#[derive(Parser)]
#[command(name = "rtss", version, about = "Semantic background subtraction: run, evaluate, sweep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunFlags {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    segmenter: Option<SegmenterKind>,
    /// Input frame directory (overrides `input_dir`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory of semantic maps; selects the map source if none is set.
    #[arg(long)]
    semantic_dir: Option<PathBuf>,
    /// Semantic period: a new map every N frames.
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    tau_bg: Option<i16>,
    #[arg(long, allow_hyphen_values = true)]
    tau_fg: Option<i16>,
    #[arg(long)]
    phi: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (results root with --dataset).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::load(&self.config)?;
        RunOverrides {
            segmenter: self.segmenter,
            input_dir: self.input.clone(),
            semantic_dir: self.semantic_dir.clone(),
            semantic_period: self.n,
            tau_bg: self.tau_bg,
            tau_fg: self.tau_fg,
            phi: self.phi,
            seed: self.seed,
            output_dir: self.out.clone(),
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment one sequence, or every video of a dataset with --dataset.
    Run {
        #[command(flatten)]
        flags: RunFlags,
        /// CDnet-layout dataset root, category or video directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score result masks against CDnet ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Validate semantic maps under this root instead of scoring.
        #[arg(long)]
        check_sem: Option<PathBuf>,
        #[arg(long, default_value = "sem%06d.png")]
        sem_pattern: String,
        #[arg(long, default_value = "in%06d.jpg")]
        input_pattern: String,
    },
    /// Run and score a dataset once per parameter value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// One of tau_bg, tau_fg, phi, n.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<String>,
        /// Root for per-value result trees.
        #[arg(long)]
        out: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Exit status for a failed run: 2 when it was rejected before processing.
fn config_exit(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) => 2,
        _ => 1,
    }
}

fn fail(e: &Error, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn report_run(s: &RunSummary) {
    let t = &s.timing;
    let total = t.mean_bgs_ms.max(t.mean_sem_ms) + t.mean_fuse_ms;
    eprintln!(
        "{} frames, seed {}: bgs {:.2} ms, semantic {:.2} ms, fusion {:.2} ms per frame ({:.1} fps)",
        t.frames,
        s.manifest.seed,
        t.mean_bgs_ms,
        t.mean_sem_ms,
        t.mean_fuse_ms,
        if total > 0.0 { 1e3 / total } else { f64::INFINITY }
    );
}

fn cmd_run(flags: &RunFlags, dataset: Option<&Path>) -> ExitCode {
    let cfg = match flags.load() {
        Ok(c) => c,
        Err(e) => return fail(&e, 2),
    };
    match dataset {
        None => match runner::run_sequence(&cfg, Some(&flags.config)) {
            Ok(s) => {
                report_run(&s);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, config_exit(&e)),
        },
        Some(root) => {
            let Some(out) = cfg.output_dir.clone() else {
                return fail(&Error::Config("--dataset needs --out or output_dir".into()), 2);
            };
            match runner::run_dataset(&cfg, Some(&flags.config), root, &out) {
                Ok(runs) => {
                    for (video, s) in &runs {
                        eprint!("{}: ", video.id());
                        report_run(s);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, config_exit(&e)),
            }
        }
    }
}

fn cmd_eval(
    results: &Path,
    dataset: &Path,
    json: Option<&Path>,
    check_sem: Option<&Path>,
    sem_pattern: &str,
    input_pattern: &str,
) -> ExitCode {
    if let Some(sem_root) = check_sem {
        let videos = match discover_videos(dataset) {
            Ok(v) => v,
            Err(e) => return fail(&e, 1),
        };
        for v in &videos {
            match check_semantic_maps(&sem_root.join(&v.relative), sem_pattern, v, input_pattern) {
                Ok(n) => println!("{}: {n} maps ok", v.id()),
                Err(e) => return fail(&e, 1),
            }
        }
        return ExitCode::SUCCESS;
    }
    let report = match evaluate_dataset(results, dataset, MASK_PATTERN) {
        Ok(r) => r,
        Err(e) => return fail(&e, 1),
    };
    print!("{}", report.table());
    if let Some(path) = json {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config: &Path,
    dataset: &Path,
    param: &str,
    values: &[String],
    out: &Path,
    csv: Option<&Path>,
    seed: Option<u64>,
) -> ExitCode {
    let setup = (|| {
        let param: SweepParam = param.parse()?;
        let mut cfg = RunConfig::load(config)?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok::<_, Error>((param, cfg))
    })();
    let (param, cfg) = match setup {
        Ok(v) => v,
        Err(e) => return fail(&e, 2),
    };
    let rows = match runner::sweep(&cfg, Some(config), dataset, param, values, out) {
        Ok(r) => r,
        Err(e) => return fail(&e, config_exit(&e)),
    };
    let text = runner::sweep_csv(&rows);
    match csv {
        None => print!("{text}"),
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { flags, dataset } => cmd_run(flags, dataset.as_deref()),
        Command::Eval {
            results,
            dataset,
            json,
            check_sem,
            sem_pattern,
            input_pattern,
        } => cmd_eval(
            results,
            dataset,
            json.as_deref(),
            check_sem.as_deref(),
            sem_pattern,
            input_pattern,
        ),
        Command::Sweep {
            config,
            dataset,
            param,
            values,
            out,
            csv,
            seed,
        } => cmd_sweep(config, dataset, param, values, out, csv.as_deref(), *seed),
    }
}
