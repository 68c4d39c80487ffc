//! Command-line entry point. Exit status 0 on success, 1 on data errors, 2
//! on usage errors.

use std::fs::{self, File};
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use litknow_core::embed::embed_graph;
use litknow_core::eval;
use litknow_core::extractor::SpeciesLexicon;
use litknow_core::lexicon::{load_lexicon, Lexicon, Stoplist};
use litknow_core::pipeline::{
    current_snapshot, eval_auroc, eval_holdout, AurocParams, Pipeline, PipelineConfig, SystemClock,
};
use litknow_core::store::persist::{read_manifest, DataDir};
use litknow_core::store::ConceptCatalog;

use crate::api::{router, AppState};
use crate::state::{SnapshotCell, Updater};

#[derive(Debug, Parser)]
#[command(name = "litknow", version, about = "Literature knowledge engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Concept lexicon, JSON Lines.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Synonyms to ignore, one per line.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    /// Species lexicon, JSON Lines; the bundled list when omitted.
    #[arg(long)]
    pub species: Option<PathBuf>,
    /// Walk, training and schedule settings, JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest pending update files.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        updates: PathBuf,
    },
    /// Train embeddings on the current store and publish a snapshot.
    Rebuild {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluation reports.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Enables admin and scheduled updates from this directory.
        #[arg(long)]
        updates: Option<PathBuf>,
        /// Only admin-triggered updates; no schedule.
        #[arg(long)]
        no_schedule: bool,
    },
    /// Run scheduled updates until interrupted.
    UpdateLoop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        updates: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Link-prediction AUROC of the embedding.
    Auroc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        negative_ratio: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Withhold this fraction of edges from training and score them.
        #[arg(long)]
        holdout_edges: Option<f64>,
    },
    /// Temporal holdout rank histogram.
    Holdout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Last publication date used for training, YYYY-MM-DD.
        #[arg(long)]
        cutoff: NaiveDate,
        #[arg(long, default_value_t = 40)]
        k: usize,
    },
    /// AUROC on a generated planted-partition graph (4 x 25 nodes).
    Synthetic {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// Deliberately not `std::error::Error`, so that every library error
/// converts into it through `?`.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.to_string())
    }
}

struct Loaded {
    lexicon: Lexicon,
    species: SpeciesLexicon,
    config: PipelineConfig,
}

fn load_common(c: &Common) -> Result<Loaded, CliError> {
    let stoplist = match &c.stoplist {
        Some(p) => Stoplist::read(BufReader::new(File::open(p)?))?,
        None => Stoplist::default(),
    };
    let lexicon = load_lexicon(BufReader::new(File::open(&c.lexicon)?), &stoplist)?;
    for col in &lexicon.report().collisions {
        tracing::warn!(surface = %col.surface, winner = %col.winner, "synonym claimed by several concepts");
    }
    let species = match &c.species {
        Some(p) => SpeciesLexicon::read(BufReader::new(File::open(p)?))?,
        None => SpeciesLexicon::bundled(),
    };
    Ok(Loaded {
        lexicon,
        species,
        config: load_config(c.config.as_deref())?,
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => Ok(PipelineConfig::read(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn open_pipeline(c: &Common, l: Loaded) -> Result<Pipeline, CliError> {
    Ok(Pipeline::open(&c.data_dir, &l.lexicon, l.species, l.config, Arc::new(SystemClock))?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn reader_snapshot(c: &Common, l: &Loaded) -> Result<litknow_core::store::Snapshot, CliError> {
    let catalog = Arc::new(ConceptCatalog::from_lexicon(&l.lexicon));
    let snap = current_snapshot(&c.data_dir, catalog)?;
    if snap.id == 0 {
        return Err(CliError::Data(format!("{} has no published snapshot", c.data_dir.display())));
    }
    Ok(snap)
}

fn update_dir(flag: Option<PathBuf>, config: &PipelineConfig) -> Option<PathBuf> {
    flag.or_else(|| config.update_dir.clone())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { common, updates } => {
            let l = load_common(&common)?;
            let mut p = open_pipeline(&common, l)?;
            let report = p.ingest(&updates)?;
            print_json(&report)?;
            if !report.failed.is_empty() {
                return Err(CliError::Data(format!("{} update file(s) failed", report.failed.len())));
            }
        }
        Command::Rebuild { common } => {
            let l = load_common(&common)?;
            let mut p = open_pipeline(&common, l)?;
            let snap = p.rebuild()?;
            print_json(&serde_json::json!({
                "snapshot_id": snap.id,
                "relations": snap.relation_count(),
                "concepts": snap.concept_count(),
            }))?;
        }
        Command::Eval { which } => run_eval(which)?,
        Command::Serve {
            common,
            listen,
            updates,
            no_schedule,
        } => serve(common, listen, updates, no_schedule)?,
        Command::UpdateLoop { common, updates } => {
            let l = load_common(&common)?;
            let dir = update_dir(updates, &l.config)
                .ok_or_else(|| CliError::Usage("no update directory: pass --updates or set update_dir".into()))?;
            let p = open_pipeline(&common, l)?;
            let cell = Arc::new(SnapshotCell::new(current_snapshot(&common.data_dir, p.catalog().clone())?));
            let updater = Updater::new(p, cell, dir);
            let stop = stop_on_ctrl_c()?;
            updater.run_scheduled(&stop, None);
        }
    }
    Ok(())
}

fn run_eval(which: EvalCommand) -> Result<(), CliError> {
    match which {
        EvalCommand::Auroc {
            common,
            out,
            negative_ratio,
            seed,
            holdout_edges,
        } => {
            let l = load_common(&common)?;
            let snap = reader_snapshot(&common, &l)?;
            let params = AurocParams {
                negative_ratio,
                seed,
                holdout_edges,
            };
            print_json(&eval_auroc(&snap, &l.config, &params, &out)?)?;
        }
        EvalCommand::Holdout { common, out, cutoff, k } => {
            let l = load_common(&common)?;
            let snap = reader_snapshot(&common, &l)?;
            print_json(&eval_holdout(&snap, &l.config, cutoff, k, &out)?)?;
        }
        EvalCommand::Synthetic { config, out, seed } => {
            let cfg = load_config(config.as_deref())?;
            let graph = eval::planted_partition(4, 25, 0.3, 0.02, seed);
            let model = embed_graph(&graph, &cfg.walk, &cfg.sgns)?;
            let report = eval::auroc_link_prediction(&graph, &model, 1.0, seed)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("auroc.json"), serde_json::to_vec_pretty(&report)?)?;
            report.write_roc_csv(File::create(out.join("roc.csv"))?)?;
            print_json(&report)?;
        }
    }
    Ok(())
}

fn stop_on_ctrl_c() -> Result<Arc<AtomicBool>, CliError> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    std::thread::spawn(move || {
        rt.block_on(async {
            let _ = tokio::signal::ctrl_c().await;
        });
        flag.store(true, Ordering::Release);
    });
    Ok(stop)
}

fn serve(common: Common, listen: SocketAddr, updates: Option<PathBuf>, no_schedule: bool) -> Result<(), CliError> {
    let l = load_common(&common)?;
    let catalog = Arc::new(ConceptCatalog::from_lexicon(&l.lexicon));
    let cell = Arc::new(SnapshotCell::new(current_snapshot(&common.data_dir, catalog.clone())?));
    let updates = update_dir(updates, &l.config);
    let updater = match updates {
        Some(dir) => {
            let p = open_pipeline(&common, l)?;
            Some(Arc::new(Updater::new(p, cell.clone(), dir)))
        }
        None => None,
    };
    let stop = Arc::new(AtomicBool::new(false));
    if let Some(u) = &updater {
        if !no_schedule {
            let (u, stop) = (u.clone(), stop.clone());
            std::thread::spawn(move || u.run_scheduled(&stop, None));
        }
    } else {
        // Read-only: follow generations published by another writer.
        let (cell, stop, dir) = (cell.clone(), stop.clone(), common.data_dir.clone());
        std::thread::spawn(move || follow_manifest(&dir, catalog, &cell, &stop));
    }

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(AppState { cell, updater }))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    stop.store(true, Ordering::Release);
    Ok(())
}

fn follow_manifest(dir: &Path, catalog: Arc<ConceptCatalog>, cell: &SnapshotCell, stop: &AtomicBool) {
    let Ok(data_dir) = DataDir::open(dir) else { return };
    while !stop.load(Ordering::Acquire) {
        std::thread::sleep(Duration::from_secs(2));
        let Ok(Some(m)) = read_manifest(&data_dir) else { continue };
        if m.snapshot_id == cell.load().id {
            continue;
        }
        match current_snapshot(dir, catalog.clone()) {
            Ok(s) => {
                tracing::info!(snapshot_id = s.id, "loaded newer snapshot");
                cell.swap(Arc::new(s));
            }
            Err(e) => tracing::error!(error = %e, "reloading snapshot failed"),
        }
    }
}

pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            tracing::error!(error = %m, "usage error");
            ExitCode::from(2)
        }
        Err(CliError::Data(m)) => {
            tracing::error!(error = %m, "failed");
            ExitCode::from(1)
        }
    }
}
