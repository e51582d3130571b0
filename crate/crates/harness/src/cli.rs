use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::{info, warn};
use marqoe_oracle::report::OracleReport;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiments::{self, AllocationRow, REALIZED, TWIN};
use crate::import::{import_dataset, ImportOptions};
use crate::manifest::RunManifest;
use crate::studies;
use crate::svg::{line_chart, Series};

#[derive(Debug, Parser)]
#[command(name = "marqoe", version, about = "Twin-driven spectrum allocation experiments")]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Also write SVG charts where a command has one.
    #[arg(long, global = true)]
    pub svg: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a per-participant pose dataset into canonical trace files.
    Import {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 40)]
        participants: u32,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 30.0)]
        frame_rate: f64,
    },
    /// Train one digital twin per user.
    TrainDt,
    /// Mean VCHR against upload frequency, realized and twin-predicted.
    Sweep,
    /// Per-user QoE models against one model pooled over all users.
    CompareBaseline,
    /// Minimum spectrum per user.
    Allocate {
        /// Replay the pipeline at each allocation.
        #[arg(long)]
        validate: bool,
    },
    /// Normal approximation against the exact tail on random instances.
    ValidateClt {
        #[arg(long, default_value_t = 1000)]
        vectors: usize,
    },
    /// Mean-wait formula against queue simulation.
    ValidateQueue {
        #[arg(long, default_value_t = 100_000)]
        arrivals: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Import { .. } => "import",
            Command::TrainDt => "train-dt",
            Command::Sweep => "sweep",
            Command::CompareBaseline => "compare-baseline",
            Command::Allocate { .. } => "allocate",
            Command::ValidateClt { .. } => "validate-clt",
            Command::ValidateQueue { .. } => "validate-queue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Infeasible,
    ValidationFailed,
    PartialImport,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Infeasible => 2,
            Outcome::ValidationFailed => 3,
            Outcome::PartialImport => 5,
        }
    }
}

pub const EXIT_CONFIG: u8 = 4;

struct Run {
    cfg: ExperimentConfig,
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> anyhow::Result<()> {
        let path = self.file(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| path.display().to_string())?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.manifest.record(&self.out, &path)?;
        Ok(())
    }

    fn reports(&mut self, name: &str, reports: &[OracleReport]) -> anyhow::Result<()> {
        let mut text = format!("{}\n", OracleReport::CSV_HEADER);
        for r in reports {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        self.text(name, &text)
    }

    fn text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        let path = self.file(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text).with_context(|| path.display().to_string())?;
        self.manifest.record(&self.out, &path)?;
        Ok(())
    }
}

fn prepare(cli: &Cli) -> anyhow::Result<Run> {
    let (mut cfg, bytes) = match &cli.config {
        Some(path) => {
            let (cfg, bytes) = ExperimentConfig::load(path)?;
            (cfg, Some(bytes))
        }
        None => (ExperimentConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&cli.out).with_context(|| cli.out.display().to_string())?;
    let mut manifest = RunManifest::start(cli.command.name(), bytes.as_deref(), cfg.seed);
    if let Some(bytes) = &bytes {
        let copy = cli.out.join("config.toml");
        fs::write(&copy, bytes)?;
        manifest.record(&cli.out, &copy)?;
    }
    Ok(Run {
        cfg,
        out: cli.out.clone(),
        manifest,
    })
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    if let Command::Import {
        dataset,
        participants,
        frames,
        frame_rate,
    } = &cli.command
    {
        return import(
            cli,
            dataset,
            ImportOptions {
                participants: *participants,
                frames: *frames,
                frame_rate: *frame_rate,
            },
        );
    }
    let mut run = prepare(cli)?;
    let outcome = match &cli.command {
        Command::Import { .. } => unreachable!(),
        Command::TrainDt => train(&mut run)?,
        Command::Sweep => sweep(&mut run, cli.svg)?,
        Command::CompareBaseline => compare_baseline(&mut run)?,
        Command::Allocate { validate } => allocate(&mut run, *validate)?,
        Command::ValidateClt { vectors } => validate_clt(&mut run, *vectors)?,
        Command::ValidateQueue { arrivals } => validate_queue(&mut run, *arrivals)?,
    };
    let path = run.manifest.finish(&run.out)?;
    info!("wrote {}", path.display());
    Ok(outcome)
}

fn import(cli: &Cli, dataset: &Path, opts: ImportOptions) -> anyhow::Result<Outcome> {
    let mut manifest = RunManifest::start("import", None, cli.seed.unwrap_or(0));
    let summary = import_dataset(dataset, &cli.out, &opts)?;
    for path in &summary.written {
        manifest.record(&cli.out, path)?;
    }
    manifest.finish(&cli.out)?;
    info!(
        "imported {} participants, {} missing, {} skipped",
        summary.written.len(),
        summary.missing.len(),
        summary.skipped.len()
    );
    Ok(if summary.is_partial() {
        Outcome::PartialImport
    } else {
        Outcome::Success
    })
}

#[derive(Serialize)]
struct TwinRow<'a> {
    user_id: &'a str,
    frames_used: usize,
    clone_pairs: usize,
    clone_loss: f64,
    final_train_loss: f64,
    best_epoch: usize,
}

fn train(run: &mut Run) -> anyhow::Result<Outcome> {
    let scene = run.cfg.geometry.scene()?;
    let users = run.cfg.load_users()?;
    let twins = experiments::train_twins(&users, &scene, &run.cfg.twin_config())?;
    let mut rows = Vec::new();
    for twin in &twins {
        run.text(&format!("twins/{}.json", twin.user_id), &(twin.to_json()? + "\n"))?;
        rows.push(TwinRow {
            user_id: &twin.user_id,
            frames_used: twin.metadata.frames_used,
            clone_pairs: twin.metadata.clone_pairs,
            clone_loss: twin.metadata.clone_loss,
            final_train_loss: twin.metadata.final_train_loss,
            best_epoch: twin.metadata.best_epoch,
        });
    }
    run.csv("twins.csv", &rows)?;
    Ok(Outcome::Success)
}

fn sweep(run: &mut Run, svg: bool) -> anyhow::Result<Outcome> {
    let scene = run.cfg.geometry.scene()?;
    let users = run.cfg.load_users()?;
    let twins = experiments::train_twins(&users, &scene, &run.cfg.twin_config())?;
    let lambdas = run.cfg.sweep_lambdas();
    let mut points = Vec::new();
    let mut distribution = Vec::new();
    let mut series = Vec::new();
    for (trace, twin) in users.iter().zip(&twins) {
        let s = experiments::sweep_user(trace, twin, &scene, &lambdas)?;
        for (source, dashed) in [(REALIZED, false), (TWIN, true)] {
            series.push(Series {
                name: format!("{} {source}", trace.user_id()),
                points: s.curve(source),
                dashed,
            });
        }
        points.extend(s.points);
        distribution.extend(s.distribution);
    }
    run.csv("sweep.csv", &points)?;
    run.csv("sweep_distribution.csv", &distribution)?;
    if svg {
        let chart = line_chart(
            "Mean VCHR by upload frequency",
            "upload frequency (Hz)",
            "mean VCHR",
            &series,
        );
        run.text("sweep.svg", &chart)?;
    }
    Ok(Outcome::Success)
}

fn compare_baseline(run: &mut Run) -> anyhow::Result<Outcome> {
    let scene = run.cfg.geometry.scene()?;
    let users = run.cfg.load_users()?;
    let rows = experiments::compare_baseline(&users, &scene, &run.cfg.twin_config(), run.cfg.seed)?;
    run.csv("baseline.csv", &rows)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct AllocationDetail<'a> {
    total_spectrum_hz: f64,
    results: &'a [marqoe_core::AllocationResult],
    failures: &'a [(String, String)],
}

fn allocate(run: &mut Run, validate: bool) -> anyhow::Result<Outcome> {
    let scene = run.cfg.geometry.scene()?;
    let channel = run.cfg.channel.model()?;
    let users = run.cfg.load_users()?;
    let twins = experiments::train_twins(&users, &scene, &run.cfg.twin_config())?;
    let summary = experiments::allocate(&users, &twins, &run.cfg, &channel);
    run.csv("allocation.csv", &AllocationRow::rows(&summary))?;
    let detail = AllocationDetail {
        total_spectrum_hz: summary.total_spectrum,
        results: &summary.results,
        failures: &summary.failures,
    };
    run.text(
        "allocation_detail.json",
        &(serde_json::to_string_pretty(&detail)? + "\n"),
    )?;
    info!("total spectrum {} Hz", summary.total_spectrum);
    for (user, err) in &summary.failures {
        warn!("user {user}: {err}");
    }
    if !summary.failures.is_empty() {
        anyhow::bail!("allocation failed for {} user(s)", summary.failures.len());
    }
    if validate {
        let rows = experiments::validate_allocations(&users, &summary, &run.cfg, &scene, &channel, run.cfg.seed)?;
        let ok = rows.iter().all(|r| r.pass);
        run.csv("validation.csv", &rows)?;
        if !ok {
            return Ok(Outcome::ValidationFailed);
        }
    }
    Ok(if summary.all_feasible() {
        Outcome::Success
    } else {
        Outcome::Infeasible
    })
}

#[derive(Serialize)]
struct DecisionRow {
    case: usize,
    exact_tail: f64,
    exact_accepts: bool,
    clt_accepts: bool,
    in_band: bool,
    consistent: bool,
}

fn validate_clt(run: &mut Run, vectors: usize) -> anyhow::Result<Outcome> {
    let study = studies::clt_study(vectors, run.cfg.seed)?;
    run.reports("clt.csv", &study.reports)?;
    let rows: Vec<DecisionRow> = study
        .decisions
        .iter()
        .enumerate()
        .map(|(case, d)| DecisionRow {
            case,
            exact_tail: d.exact_tail,
            exact_accepts: d.exact_accepts,
            clt_accepts: d.clt_accepts,
            in_band: d.in_band,
            consistent: d.consistent(),
        })
        .collect();
    run.csv("clt_decisions.csv", &rows)?;
    info!(
        "max tail gap {:.4}, {} decision disagreements",
        study.max_gap(),
        study.disagreements()
    );
    Ok(if study.pass() {
        Outcome::Success
    } else {
        Outcome::ValidationFailed
    })
}

fn validate_queue(run: &mut Run, arrivals: usize) -> anyhow::Result<Outcome> {
    let channel = run.cfg.channel.model()?;
    let study = studies::queue_study(&channel, arrivals, run.cfg.seed)?;
    let all: Vec<OracleReport> = study.dg1.iter().chain(&study.mg1).cloned().collect();
    run.reports("queue.csv", &all)?;
    Ok(if study.pass() {
        Outcome::Success
    } else {
        Outcome::ValidationFailed
    })
}
