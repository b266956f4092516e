//! `sead`: command-line front end for the selection pipeline and the
//! synthetic benchmark.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use sead::active::{budget_report, run_active_loop, CorpusLearner, LoopConfig};
use sead::config::{load_loop_config, load_synth_config, parse_ratio};
use sead::corpus::{load_manifest, validate_corpus, CorpusIndex};
use sead::keyframe::{Fallback, KeyframeConfig};
use sead::partition::build_partition;
use sead::pipeline::{self, ShiftRecord};
use sead::shift::{Engine, ShiftConfig};
use sead::synth::{compare_policies, generate_corpus, EvalWeighting, Policy, SynthConfig};

#[derive(Parser)]
#[command(name = "sead", version, about = "Budgeted active data selection for driving clips")]
struct Cli {
    /// Seed for every random choice made by the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-clip work (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log filter, e.g. `info` or `sead=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and every file it references.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign every clip to its static and dynamic cell.
    Partition {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "1/3", value_parser = parse_ratio)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scene shift of each clip.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        shift: ShiftArgs,
        /// File of clip ids, one per line; all clips when omitted.
        #[arg(long)]
        clips: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Longest key-frame run of each clip.
    Keyframes {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        keyframe: KeyframeArgs,
        #[arg(long)]
        clips: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick clips: the top of a scores file, or a stratified first round.
    Select {
        /// Scores written by `sead score`.
        #[arg(long, conflicts_with_all = ["manifest", "lambda"], required_unless_present = "manifest")]
        scores: Option<PathBuf>,
        /// Draw a stratified first round from this manifest instead.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_parser = parse_ratio)]
        lambda: Option<f64>,
        /// Number of clips to pick.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole selection loop against a manifest.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        /// Loop settings file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        budget_clips: Option<usize>,
        #[arg(long)]
        per_iter: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_parser = parse_ratio)]
        lambda: Option<f64>,
        #[arg(long)]
        engine: Option<Engine>,
        #[arg(long)]
        reduce_dim: Option<usize>,
        #[arg(long)]
        theta_tau: Option<f64>,
        #[arg(long)]
        theta_d: Option<f64>,
        #[arg(long)]
        fallback: Option<Fallback>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write a synthetic corpus to a new directory.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the hidden per-clip difficulty here (kept out of the corpus).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare selection policies over many synthetic corpora.
    Compare {
        #[arg(long)]
        synth: Option<PathBuf>,
        #[arg(long = "loop")]
        loop_config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, value_delimiter = ',', default_value = "sead,random")]
        policies: Vec<Policy>,
        #[arg(long, default_value = "difficulty-balanced")]
        weighting: EvalWeighting,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clip and frame share of a corpus that a selection log labels.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ShiftArgs {
    #[arg(long, default_value = "centroid")]
    engine: Engine,
    /// Project features to this many dimensions first.
    #[arg(long)]
    reduce_dim: Option<usize>,
    #[arg(long)]
    sinkhorn_epsilon: Option<f64>,
    #[arg(long)]
    sinkhorn_max_iter: Option<usize>,
    #[arg(long)]
    sinkhorn_tol: Option<f64>,
}

impl ShiftArgs {
    fn config(&self, seed: Option<u64>) -> ShiftConfig {
        let d = ShiftConfig::default();
        ShiftConfig {
            engine: self.engine,
            reduce_dim: self.reduce_dim,
            projection_seed: seed.unwrap_or(d.projection_seed),
            sinkhorn_epsilon: self.sinkhorn_epsilon.unwrap_or(d.sinkhorn_epsilon),
            sinkhorn_max_iter: self.sinkhorn_max_iter.unwrap_or(d.sinkhorn_max_iter),
            sinkhorn_tol: self.sinkhorn_tol.unwrap_or(d.sinkhorn_tol),
            ..d
        }
    }
}

#[derive(Args)]
struct KeyframeArgs {
    #[arg(long, default_value_t = 0.5)]
    theta_tau: f64,
    #[arg(long, default_value_t = 5.0)]
    theta_d: f64,
    #[arg(long, default_value = "full-clip")]
    fallback: Fallback,
}

impl KeyframeArgs {
    fn config(&self) -> KeyframeConfig {
        KeyframeConfig {
            confidence_threshold: self.theta_tau,
            distance_threshold: self.theta_d,
            fallback: self.fallback,
        }
    }
}

/// How a subcommand finished when it did not hit an error.
enum Outcome {
    Ok,
    Invalid,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("cannot size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Invalid) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match cli.command {
        Command::Validate { manifest, out } => {
            let index = open(&manifest)?;
            let report = validate_corpus(&index);
            emit(out.as_deref(), &pipeline::to_jsonl(&report.entries))?;
            if report.is_empty() {
                Ok(Outcome::Ok)
            } else {
                eprintln!("{} problems found", report.len());
                Ok(Outcome::Invalid)
            }
        }
        Command::Partition { manifest, lambda, out } => {
            let table = build_partition(&open(&manifest)?, lambda)?;
            let entries: Vec<_> = table.entries().collect();
            emit(out.as_deref(), &pipeline::to_jsonl(&entries))?;
            Ok(Outcome::Ok)
        }
        Command::Score { manifest, shift, clips, out } => {
            let index = open(&manifest)?;
            let ids = clips.as_deref().map(read_ids).transpose()?;
            let shifts = pipeline::score_corpus(&index, ids.as_deref(), &shift.config(seed))?;
            info!("scored {} clips", shifts.len());
            let records: Vec<ShiftRecord> = shifts.iter().map(ShiftRecord::from).collect();
            emit(out.as_deref(), &pipeline::to_jsonl(&records))?;
            Ok(Outcome::Ok)
        }
        Command::Keyframes { manifest, keyframe, clips, out } => {
            let index = open(&manifest)?;
            let ids = clips.as_deref().map(read_ids).transpose()?;
            let ranges = pipeline::keyframe_corpus(&index, ids.as_deref(), &keyframe.config())?;
            emit(out.as_deref(), &pipeline::to_jsonl(&ranges))?;
            Ok(Outcome::Ok)
        }
        Command::Select { scores, manifest, lambda, n, out } => {
            let ids = match (scores, manifest) {
                (Some(scores), _) => {
                    let records: Vec<ShiftRecord> = pipeline::from_jsonl(&read(&scores)?).with_context(|| scores.display().to_string())?;
                    pipeline::select_ranked(&records, n)?
                }
                (None, Some(manifest)) => {
                    let lambda = lambda.unwrap_or(LoopConfig::default().lambda);
                    pipeline::select_initial(&open(&manifest)?, lambda, n, seed.unwrap_or(0))?
                }
                (None, None) => bail!("either --scores or --manifest is required"),
            };
            emit(out.as_deref(), &ids.iter().map(|id| format!("{id}\n")).collect::<String>())?;
            Ok(Outcome::Ok)
        }
        Command::Simulate {
            manifest,
            config,
            budget_clips,
            per_iter,
            iters,
            lambda,
            engine,
            reduce_dim,
            theta_tau,
            theta_d,
            fallback,
            log,
        } => {
            let mut cfg = match &config {
                Some(path) => load_loop_config(path)?,
                None => LoopConfig::default(),
            };
            set(&mut cfg.total_budget_clips, budget_clips);
            set(&mut cfg.per_iter_clips, per_iter);
            set(&mut cfg.iterations, iters);
            set(&mut cfg.lambda, lambda);
            set(&mut cfg.shift.engine, engine);
            cfg.shift.reduce_dim = reduce_dim.or(cfg.shift.reduce_dim);
            set(&mut cfg.keyframe.confidence_threshold, theta_tau);
            set(&mut cfg.keyframe.distance_threshold, theta_d);
            set(&mut cfg.keyframe.fallback, fallback);
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.shift.projection_seed = s;
            }
            let index = open(&manifest)?;
            let outcome = run_active_loop(&index, &CorpusLearner { corpus: &index }, &cfg)?;
            emit(log.as_deref(), &outcome.log.to_jsonl())?;
            match &outcome.log.invalid {
                None => Ok(Outcome::Ok),
                Some(reason) => {
                    eprintln!("run aborted: {reason}");
                    Ok(Outcome::Invalid)
                }
            }
        }
        Command::Synth { config, out, truth } => {
            let mut cfg = match &config {
                Some(path) => load_synth_config(path)?,
                None => SynthConfig::default(),
            };
            set(&mut cfg.seed, seed);
            let corpus = write_dir(&out, |dir| Ok(generate_corpus(&cfg, dir)?.1))?;
            info!("wrote {} clips to {}", corpus.index.len(), out.display());
            if let Some(path) = truth {
                emit(Some(&path), &(serde_json::to_string_pretty(corpus.truth())? + "\n"))?;
            }
            Ok(Outcome::Ok)
        }
        Command::Compare {
            synth,
            loop_config,
            seeds,
            policies,
            weighting,
            out,
        } => {
            let mut synth_cfg = match &synth {
                Some(path) => load_synth_config(path)?,
                None => SynthConfig::default(),
            };
            let mut loop_cfg = match &loop_config {
                Some(path) => load_loop_config(path)?,
                None => LoopConfig::default(),
            };
            if let Some(s) = seed {
                synth_cfg.seed = s;
                loop_cfg.seed = s;
            }
            let report = compare_policies(&synth_cfg, &loop_cfg, &policies, seeds, weighting)?;
            emit(out.as_deref(), &report.to_jsonl())?;
            Ok(Outcome::Ok)
        }
        Command::Report { manifest, log, out } => {
            let index = open(&manifest)?;
            let log = pipeline::parse_log(&read(&log)?)?;
            let report = budget_report(&log, &index);
            emit(out.as_deref(), &pipeline::to_jsonl(&[report]))?;
            Ok(Outcome::Ok)
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn open(manifest: &Path) -> Result<CorpusIndex> {
    Ok(load_manifest(manifest)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    Ok(pipeline::parse_id_list(&read(path)?))
}

fn parent_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes `text` to `path` through a temporary sibling, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let Some(path) = path else {
        std::io::stdout().lock().write_all(text.as_bytes())?;
        return Ok(());
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent_of(path)).with_context(|| format!("cannot write next to {}", path.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Fills a temporary sibling directory, then renames it to `dir`.
/// An existing `dir` must be empty.
fn write_dir<T>(dir: &Path, fill: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        bail!("{} exists and is not empty", dir.display());
    }
    let tmp = tempfile::Builder::new().prefix(".sead-").tempdir_in(parent_of(dir))?;
    let value = fill(tmp.path())?;
    fs::rename(tmp.path(), dir).with_context(|| format!("cannot create {}", dir.display()))?;
    // the directory now lives at `dir`; nothing left for the guard to remove
    let _ = tmp.keep();
    Ok(value)
}
