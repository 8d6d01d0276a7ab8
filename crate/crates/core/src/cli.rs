//! Command-line front end. Exit codes: 0 success, 1 validation error or bad
//! usage, 2 runtime failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::composite::{compute_bounds, BoundsRegistry};
use crate::error::{Error, Result};
use crate::harness::backend::Backends;
use crate::harness::config::Config;
use crate::harness::evaluate::{collect_reports, load_aggregate, write_aggregate, RunReport};
use crate::harness::plan::{load_datasets, plan_sweep, RunSpec};
use crate::harness::protocol::write_json_atomic;
use crate::harness::run::ingest_directory;
use crate::harness::sweep::{eval_sweep, run_sweep};
use crate::key::Steps;
use crate::relaionet::build::{load_candidates, CANDIDATES_FILE};
use crate::relaionet::download::{download_and_finalize, load_exclusions, DownloadOptions};
use crate::relaionet::embed::ExternalEmbedder;
use crate::relaionet::{build_candidates, load_synsets, write_build_outputs, BuildOptions, Similarity};
use crate::report::{build_heatmaps, read_metrics_csv, render_table, score_table, write_heatmaps, GridAxes, MetricRow, GRID_FILE};
use crate::toyflow::adapter::run_job;
use crate::toyflow::reference::write_reference;
use crate::toyflow::ToyModel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "genbench", version, about = "Sweep, score and report class-conditional image generators")]
pub struct Cli {
    /// Root directory for every output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sweep configuration (genbench.json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More logging (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand the config into run specs and write plan.json.
    Plan,
    /// Execute every planned run through its adapter.
    Run(RunArgs),
    /// Adopt a directory of pre-generated images as one planned run.
    Ingest(IngestArgs),
    /// Compute metrics for every completed run.
    Eval(RunArgs),
    /// Print the MMHM of every metrics row.
    Score(ScoreArgs),
    /// Derive a bounds registry from metric rows.
    Bounds(BoundsArgs),
    /// Render the benchmark table (CSV and text).
    Report(ReportArgs),
    /// Render CFG × steps heatmaps for one model.
    Heatmap(HeatmapArgs),
    /// Out-of-distribution dataset construction.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Toy 2D flow generator: adapter mode (--job) or reference mode (--reference).
    Toygen(ToygenArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Only runs whose key contains this substring.
    #[arg(long)]
    pub only: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of images named `<sample id>.<ext>`.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub cfg: f64,
    #[arg(long)]
    pub steps: Steps,
    #[arg(long)]
    pub dataset: String,
}

#[derive(Debug, Args)]
pub struct MetricsInput {
    /// Metrics CSV (model, steps, cfg, dataset, fid, is_mean, [is_std], clip, pick).
    #[arg(long, conflicts_with = "reports")]
    pub metrics: Option<PathBuf>,
    /// Aggregated reports.json; defaults to the reports under --out.
    #[arg(long)]
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: MetricsInput,
    /// Bounds registry; defaults to the config's, then the ImageNet reference.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: MetricsInput,
    /// Dataset whose rows define the bounds.
    #[arg(long)]
    pub dataset: String,
    /// Leave out adaptive-step runs.
    #[arg(long)]
    pub exclude_dynamic: bool,
    /// Leave out rows of these models.
    #[arg(long = "exclude-model")]
    pub exclude_models: Vec<String>,
    /// Output path; defaults to <out>/bounds.json.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: MetricsInput,
    #[arg(long)]
    pub bounds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Grid directory (metrics.csv, reports.json or runs/, plus optional
    /// grid.json) or a metrics CSV file.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Stream metadata shards into ranked per-class candidates.
    Build(BuildArgs),
    /// Download candidates, apply exclusions, write the dataset manifest.
    Download(DownloadArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub synsets: PathBuf,
    /// Parquet or CSV shards.
    #[arg(long, num_args = 1.., required = true)]
    pub shards: Vec<PathBuf>,
    #[arg(long, default_value_t = crate::relaionet::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = crate::relaionet::DEFAULT_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 1000)]
    pub top_n: usize,
    #[arg(long, default_value_t = crate::relaionet::embed::EMBED_BATCH)]
    pub batch_size: usize,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Program that embeds texts; without it the shards' similarity column is used.
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long = "embedder-arg", allow_hyphen_values = true)]
    pub embedder_args: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DownloadArgs {
    #[arg(long)]
    pub synsets: PathBuf,
    /// Defaults to <out>/relaionet/candidates.json.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// CSV with image_id, reason_code.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    #[arg(long, default_value = "relaionet")]
    pub dataset_id: String,
    #[arg(long, default_value_t = 16)]
    pub workers: usize,
    #[arg(long, default_value_t = 3)]
    pub attempts: u32,
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 100)]
    pub host_interval_ms: u64,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct ToygenArgs {
    /// Class definitions (JSON list); defaults to the built-in four classes.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Adapter job file.
    #[arg(long, conflicts_with = "reference")]
    pub job: Option<PathBuf>,
    /// Write a reference dataset into this directory.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 100, requires = "reference")]
    pub per_class: usize,
    #[arg(long, default_value_t = crate::harness::config::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "toy")]
    pub dataset_id: String,
    /// Job file given positionally, as adapters are invoked.
    #[arg(conflicts_with_all = ["job", "reference"])]
    pub job_path: Option<PathBuf>,
}

/// Parses `argv` and runs it; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("GENBENCH_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

struct Ctx {
    out: PathBuf,
    config: Option<Config>,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let config = cli.config.as_ref().map(Config::load).transpose()?;
        let out = cli
            .out
            .clone()
            .or_else(|| config.as_ref().and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { out, config })
    }

    fn config(&self) -> Result<&Config> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::config("--config", "this command needs a config file"))
    }

    fn bounds(&self, explicit: Option<&Path>) -> Result<BoundsRegistry> {
        match explicit.or_else(|| self.config.as_ref().and_then(|c| c.bounds.as_deref())) {
            Some(p) => BoundsRegistry::load(p),
            None => Ok(BoundsRegistry::imagenet_reference()),
        }
    }

    fn plan(&self, only: Option<&str>) -> Result<(Config, Vec<crate::harness::dataset::Dataset>, Vec<RunSpec>)> {
        let config = self.config()?.clone();
        let datasets = load_datasets(&config)?;
        let mut specs = plan_sweep(&config, &datasets, &self.out)?;
        if let Some(f) = only {
            specs.retain(|s| s.key.to_string().contains(f));
        }
        Ok((config, datasets, specs))
    }

    fn rows(&self, input: &MetricsInput) -> Result<Vec<MetricRow>> {
        if let Some(p) = &input.metrics {
            return read_metrics_csv(p);
        }
        let reports: Vec<RunReport> = match &input.reports {
            Some(p) => load_aggregate(p)?,
            None => collect_reports(&self.out)?,
        };
        if reports.is_empty() {
            return Err(Error::Validation(format!(
                "no reports found under {}; pass --metrics or --reports",
                self.out.display()
            )));
        }
        Ok(reports.iter().map(MetricRow::from_run_report).collect())
    }
}

#[derive(Serialize)]
struct PlanEntry<'a> {
    key: String,
    family: &'a str,
    model: &'a str,
    cfg: f64,
    job_cfg: Option<f64>,
    steps: Steps,
    dataset: &'a str,
    seed: u64,
    samples: usize,
    run_dir: &'a Path,
}

fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::Plan => cmd_plan(&ctx),
        Command::Run(a) => cmd_run(&ctx, a),
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Bounds(a) => cmd_bounds(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
        Command::Heatmap(a) => cmd_heatmap(&ctx, a),
        Command::Dataset(DatasetCommand::Build(a)) => cmd_build(&ctx, a),
        Command::Dataset(DatasetCommand::Download(a)) => cmd_download(&ctx, a),
        Command::Toygen(a) => cmd_toygen(a),
    }
}

fn cmd_plan(ctx: &Ctx) -> Result<()> {
    let (_, _, specs) = ctx.plan(None)?;
    let entries: Vec<PlanEntry<'_>> = specs
        .iter()
        .map(|s| PlanEntry {
            key: s.key.to_string(),
            family: &s.family,
            model: &s.key.model,
            cfg: s.key.cfg,
            job_cfg: s.job_cfg,
            steps: s.key.steps,
            dataset: &s.key.dataset,
            seed: s.key.seed,
            samples: s.samples.len(),
            run_dir: &s.output_dir,
        })
        .collect();
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    let path = ctx.out.join("plan.json");
    write_json_atomic(&path, &entries)?;
    let mut stdout = std::io::stdout().lock();
    for e in &entries {
        let _ = writeln!(stdout, "{}\t{}", e.key, e.samples);
    }
    let _ = writeln!(stdout, "{} runs planned -> {}", entries.len(), path.display());
    Ok(())
}

/// First error wins, but runtime failures outrank validation ones.
fn worst(errors: Vec<Error>) -> Option<Error> {
    let mut errors = errors.into_iter();
    let first = errors.next()?;
    if !first.is_validation() {
        return Some(first);
    }
    Some(errors.find(|e| !e.is_validation()).unwrap_or(first))
}

fn cmd_run(ctx: &Ctx, a: &RunArgs) -> Result<()> {
    let (config, _, specs) = ctx.plan(a.only.as_deref())?;
    let results = run_sweep(&specs, config.worker_budget()?)?;
    let mut errors = Vec::new();
    let (mut ran, mut skipped) = (0, 0);
    for (s, r) in specs.iter().zip(results) {
        match r {
            Ok(o) if o.invoked => ran += 1,
            Ok(_) => skipped += 1,
            Err(e) => {
                eprintln!("{}: {e}", s.key);
                errors.push(e);
            }
        }
    }
    println!("{ran} runs executed, {skipped} already complete, {} failed", errors.len());
    worst(errors).map_or(Ok(()), Err)
}

fn cmd_ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let (_, _, specs) = ctx.plan(None)?;
    let key = crate::key::RunKey::new(&a.model, a.cfg, a.steps, &a.dataset, ctx.config()?.seed);
    let spec = specs
        .iter()
        .find(|s| s.key == key)
        .ok_or_else(|| Error::Validation(format!("run `{key}` is not in the plan")))?;
    let m = ingest_directory(&a.from, spec)?;
    println!("{}: {} images ingested -> {}", m.key, m.images.len(), spec.output_dir.display());
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: &RunArgs) -> Result<()> {
    let (config, datasets, specs) = ctx.plan(a.only.as_deref())?;
    let backends = Backends::from_config(&config.backends)?;
    let results = eval_sweep(
        &specs,
        &datasets,
        &backends,
        config.pick_logit_scale,
        &ctx.out,
        config.worker_budget()?,
    )?;
    let mut errors = Vec::new();
    for (s, r) in specs.iter().zip(results) {
        match r {
            Ok(rep) => println!(
                "{}\tfid={}\tis={}\tclip={}\tpick={}",
                s.key, rep.metrics.fid, rep.metrics.is_mean, rep.metrics.clip_score, rep.metrics.pick_score
            ),
            Err(e) => {
                eprintln!("{}: {e}", s.key);
                errors.push(e);
            }
        }
    }
    let all = collect_reports(&ctx.out)?;
    let path = write_aggregate(&ctx.out, &all)?;
    println!("{} reports -> {}", all.len(), path.display());
    worst(errors).map_or(Ok(()), Err)
}

fn cmd_score(ctx: &Ctx, a: &ScoreArgs) -> Result<()> {
    let rows = ctx.rows(&a.input)?;
    let bounds = ctx.bounds(a.bounds.as_deref())?;
    let table = score_table(&rows, &bounds)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["model", "steps", "cfg", "dataset", "mmhm"])?;
    for r in &table.rows {
        let m = &r.metrics;
        w.write_record([
            m.model.clone(),
            m.steps.to_string(),
            m.cfg.to_string(),
            m.dataset.clone(),
            r.mmhm.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))
}

fn cmd_bounds(ctx: &Ctx, a: &BoundsArgs) -> Result<()> {
    let rows = ctx.rows(&a.input)?;
    let rows: Vec<&MetricRow> = rows.iter().filter(|r| r.dataset == a.dataset).collect();
    let reports: Vec<_> = rows.iter().map(|r| (r.key(), r.report())).collect();
    let excluded: Vec<_> = rows
        .iter()
        .filter(|r| (a.exclude_dynamic && r.steps == Steps::Dynamic) || a.exclude_models.contains(&r.model))
        .map(|r| r.key())
        .collect();
    let reg = compute_bounds(&a.dataset, &reports, &excluded)?;
    let path = a.output.clone().unwrap_or_else(|| ctx.out.join("bounds.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    reg.save(&path)?;
    println!("bounds over {} rows -> {}", reg.provenance.len(), path.display());
    Ok(())
}

fn cmd_report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let rows = ctx.rows(&a.input)?;
    let bounds = ctx.bounds(a.bounds.as_deref())?;
    let dir = ctx.out.join("report");
    let table = render_table(&rows, &bounds, &dir)?;
    print!("{}", table.to_text());
    println!("-> {}", dir.display());
    Ok(())
}

fn cmd_heatmap(ctx: &Ctx, a: &HeatmapArgs) -> Result<()> {
    let (mut rows, axes) = if a.grid.is_file() {
        (read_metrics_csv(&a.grid)?, GridAxes::default())
    } else if a.grid.is_dir() {
        let axes_path = a.grid.join(GRID_FILE);
        let axes = if axes_path.is_file() {
            GridAxes::load(&axes_path)?
        } else if let Some(c) = &ctx.config {
            GridAxes {
                cfg_values: c.cfg_values.clone(),
                step_values: c.step_values.clone(),
            }
        } else {
            GridAxes::default()
        };
        let csv = a.grid.join("metrics.csv");
        let agg = a.grid.join(crate::harness::evaluate::AGGREGATE_FILE);
        let rows = if csv.is_file() {
            read_metrics_csv(&csv)?
        } else if agg.is_file() {
            load_aggregate(&agg)?.iter().map(MetricRow::from_run_report).collect()
        } else {
            collect_reports(&a.grid)?.iter().map(MetricRow::from_run_report).collect()
        };
        (rows, axes)
    } else {
        return Err(Error::Validation(format!("grid {} does not exist", a.grid.display())));
    };
    rows.retain(|r| {
        a.model.as_ref().is_none_or(|m| &r.model == m) && a.dataset.as_ref().is_none_or(|d| &r.dataset == d)
    });
    let bounds = ctx.bounds(a.bounds.as_deref())?;
    let grids = build_heatmaps(&rows, &bounds, &axes)?;
    let dir = ctx.out.join("heatmaps");
    for p in write_heatmaps(&grids, &dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_build(ctx: &Ctx, a: &BuildArgs) -> Result<()> {
    let synsets = load_synsets(&a.synsets)?;
    let dir = ctx.out.join("relaionet");
    let opts = BuildOptions {
        tau: a.tau,
        cap: a.cap,
        top_n: a.top_n,
        batch_size: a.batch_size,
        workers: a.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    let embedder = a
        .embedder
        .as_ref()
        .map(|p| ExternalEmbedder::new(p, a.embedder_args.clone(), dir.join("embed")));
    let sim = match &embedder {
        Some(e) => Similarity::Embedder(e),
        None => Similarity::Metadata,
    };
    let (classes, report) = build_candidates(&a.shards, &synsets, &opts, sim)?;
    write_build_outputs(&dir, &classes, &report)?;
    let failed = report.shards.iter().filter(|s| s.error.is_some()).count();
    println!(
        "{} rows, {} malformed, {} kept; {} classes, {} candidates; {failed} shard(s) failed -> {}",
        report.rows,
        report.malformed,
        report.kept,
        report.classes,
        report.candidates,
        dir.display()
    );
    Ok(())
}

fn cmd_download(ctx: &Ctx, a: &DownloadArgs) -> Result<()> {
    let synsets = load_synsets(&a.synsets)?;
    let dir = ctx.out.join("relaionet");
    let candidates = a.candidates.clone().unwrap_or_else(|| dir.join(CANDIDATES_FILE));
    let classes = load_candidates(&candidates)?;
    let exclusions = a.exclusions.as_deref().map(load_exclusions).transpose()?.unwrap_or_default();
    let opts = DownloadOptions {
        workers: a.workers,
        attempts: a.attempts,
        backoff: Duration::from_millis(a.backoff_ms),
        per_host_interval: Duration::from_millis(a.host_interval_ms),
        timeout: Duration::from_secs(a.timeout_secs),
        ..Default::default()
    };
    let (m, r) = download_and_finalize(&classes, &synsets, &exclusions, &dir, &a.dataset_id, &opts)?;
    println!(
        "{} images in {} classes ({} fetched, {} cached, {} dead); digest {}",
        m.total,
        m.classes.len(),
        r.fetched,
        r.cached,
        r.dead.len(),
        m.digest
    );
    Ok(())
}

fn cmd_toygen(a: &ToygenArgs) -> Result<()> {
    let model = match &a.classes {
        Some(p) => ToyModel::load(p)?,
        None => ToyModel::default_four(),
    };
    if let Some(dir) = &a.reference {
        let ds = write_reference(dir, &a.dataset_id, &model, a.per_class, a.seed)?;
        println!("{} reference examples -> {}", ds.examples().len(), dir.display());
        return Ok(());
    }
    let job = a
        .job
        .as_ref()
        .or(a.job_path.as_ref())
        .ok_or_else(|| Error::InvalidInput("toygen needs --job or --reference".into()))?;
    let r = run_job(job, &model)?;
    println!("{} images", r.images.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(main_with_args(["genbench", "frobnicate"]), EXIT_VALIDATION);
        assert_eq!(main_with_args(["genbench"]), EXIT_VALIDATION);
        assert_eq!(main_with_args(["genbench", "--help"]), EXIT_OK);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
