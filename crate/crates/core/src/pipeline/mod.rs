//! Lifecycle orchestration: ingest update files, rebuild and publish a
//! snapshot, run evaluations, and drive scheduled updates.

mod schedule;

pub use schedule::{
    run_schedule, BusyFlag, BusyToken, Clock, FakeClock, ScheduleError, SystemClock, TickOutcome, TickRecord,
    UpdateSchedule,
};

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_article_path, pending_update_files, ProcessedLedger};
use crate::embed::{embed_graph, EmbedError, SgnsConfig, WalkConfig};
use crate::eval::{self, EvalError};
use crate::extractor::{extract_relations, SpeciesLexicon};
use crate::lexicon::{compile_surface_index, Lexicon, LexiconError, SurfaceIndex};
use crate::store::persist::{
    load_snapshot, recover_store, write_generation, DataDir, LogEntry, PersistError, TripleLog, WriterLock,
};
use crate::store::{ConceptCatalog, Snapshot, Store, StoreError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub walk: WalkConfig,
    pub sgns: SgnsConfig,
    /// Five-field cron expression.
    pub schedule: String,
    pub utc_offset_minutes: i32,
    /// Directory scanned for update files by scheduled and admin updates.
    pub update_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            walk: WalkConfig::default(),
            sgns: SgnsConfig::default(),
            schedule: "30 0 * * *".into(),
            utc_offset_minutes: 8 * 60,
            update_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.walk.validate()?;
        self.sgns.validate()?;
        self.update_schedule()?;
        Ok(())
    }

    pub fn update_schedule(&self) -> Result<UpdateSchedule, ScheduleError> {
        UpdateSchedule::parse(&self.schedule, self.utc_offset_minutes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileReport {
    pub file: String,
    pub articles: usize,
    pub skipped_records: usize,
    pub triples_inserted: u64,
    pub deduplicated: u64,
    pub articles_replaced: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileFailure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub processed: Vec<FileReport>,
    pub failed: Vec<FileFailure>,
}

/// Writer-side handle on a data directory. Holding one excludes every
/// other writer until it is dropped.
pub struct Pipeline {
    dir: DataDir,
    _lock: WriterLock,
    store: Store,
    log: TripleLog,
    ledger: ProcessedLedger,
    index: SurfaceIndex,
    species: SpeciesLexicon,
    catalog: Arc<ConceptCatalog>,
    config: PipelineConfig,
    schedule: UpdateSchedule,
    clock: Arc<dyn Clock>,
}

impl Pipeline {
    pub fn open(
        data_dir: impl Into<PathBuf>,
        lexicon: &Lexicon,
        species: SpeciesLexicon,
        config: PipelineConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let dir = DataDir::open(data_dir)?;
        let lock = dir.lock()?;
        let catalog = Arc::new(ConceptCatalog::from_lexicon(lexicon));
        let (store, log) = recover_store(&dir, catalog.clone())?;
        let ledger = ProcessedLedger::open(dir.ledger_path())?;
        Ok(Pipeline {
            index: compile_surface_index(lexicon)?,
            schedule: config.update_schedule()?,
            dir,
            _lock: lock,
            store,
            log,
            ledger,
            species,
            catalog,
            config,
            clock,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn catalog(&self) -> &Arc<ConceptCatalog> {
        &self.catalog
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn data_dir(&self) -> &DataDir {
        &self.dir
    }

    pub fn schedule(&self) -> &UpdateSchedule {
        &self.schedule
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn processed_files(&self) -> impl Iterator<Item = &str> {
        self.ledger.names().iter().map(String::as_str)
    }

    fn today(&self) -> NaiveDate {
        self.schedule.local_date(self.clock.now())
    }

    /// Processes every update file in `update_dir` not yet in the ledger, in
    /// name order. A file is recorded in the ledger only after its triples
    /// are durably logged; a file that fails to parse is reported and left
    /// pending.
    pub fn ingest(&mut self, update_dir: &Path) -> Result<IngestReport, PipelineError> {
        let mut report = IngestReport::default();
        let today = self.today();
        for name in pending_update_files(update_dir, self.ledger.names())? {
            let batch = match parse_article_path(&update_dir.join(&name), today) {
                Ok(b) => b.latest_revisions(),
                Err(e) => {
                    tracing::error!(file = %name, error = %e, "update file skipped");
                    report.failed.push(FileFailure {
                        file: name,
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            let entries: Vec<LogEntry> = batch
                .records
                .iter()
                .map(|a| LogEntry {
                    article_id: a.article_id.clone(),
                    triples: extract_relations(a, &self.index, &self.species, today),
                })
                .collect();
            self.log.append(&entries)?;
            let articles = entries.len();
            let r = self
                .store
                .insert_articles(entries.into_iter().map(|e| (e.article_id, e.triples)))?;
            self.ledger.append(&name)?;
            tracing::info!(file = %name, articles, inserted = r.inserted, "update file ingested");
            report.processed.push(FileReport {
                file: name,
                articles,
                skipped_records: batch.skipped,
                triples_inserted: r.inserted,
                deduplicated: r.deduplicated,
                articles_replaced: r.articles_replaced,
            });
        }
        Ok(report)
    }

    /// Trains embeddings on the current relation graph, publishes a snapshot
    /// and writes it as a new generation.
    pub fn rebuild(&mut self) -> Result<Snapshot, PipelineError> {
        let graph = self.store.graph();
        if graph.edge_count() == 0 {
            return Err(PipelineError::InsufficientData("store holds no relations".into()));
        }
        let model = embed_graph(&graph, &self.config.walk, &self.config.sgns)?;
        let snapshot = self.store.publish_snapshot_at(Some(model), self.clock.now());
        let manifest = write_generation(&self.dir, &snapshot, self.log.len())?;
        tracing::info!(generation = manifest.generation, relations = snapshot.relation_count(), "snapshot published");
        Ok(snapshot)
    }

    /// Ingest followed by rebuild; the rebuild is skipped when nothing new
    /// arrived and a snapshot already exists.
    pub fn update(&mut self, update_dir: &Path) -> Result<(IngestReport, Option<Snapshot>), PipelineError> {
        let report = self.ingest(update_dir)?;
        let fresh = report.processed.iter().any(|f| f.articles > 0);
        if !fresh && self.store.last_snapshot_id() > 0 {
            return Ok((report, None));
        }
        let snapshot = self.rebuild()?;
        Ok((report, Some(snapshot)))
    }
}

/// Current published snapshot of a data directory, for readers that do not
/// hold the writer lock.
pub fn current_snapshot(data_dir: &Path, catalog: Arc<ConceptCatalog>) -> Result<Snapshot, PipelineError> {
    let dir = DataDir::open(data_dir)?;
    Ok(load_snapshot(&dir, catalog.clone())?.unwrap_or_else(|| Snapshot::empty(catalog)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AurocParams {
    pub negative_ratio: f64,
    pub seed: u64,
    /// Withhold this fraction of edges from training; `None` scores the
    /// snapshot's own embedding against its full graph.
    pub holdout_edges: Option<f64>,
}

impl Default for AurocParams {
    fn default() -> Self {
        AurocParams {
            negative_ratio: 1.0,
            seed: 42,
            holdout_edges: None,
        }
    }
}

/// Link-prediction AUROC over a snapshot; writes `auroc.json` and
/// `roc.csv` into `out_dir`.
pub fn eval_auroc(
    snapshot: &Snapshot,
    config: &PipelineConfig,
    params: &AurocParams,
    out_dir: &Path,
) -> Result<eval::AurocReport, PipelineError> {
    let report = match params.holdout_edges {
        Some(f) => eval::auroc_heldout_edges(&snapshot.graph, f, &config.walk, &config.sgns, params.negative_ratio, params.seed)?,
        None => {
            let model = snapshot
                .embedding
                .as_ref()
                .ok_or_else(|| PipelineError::InsufficientData("snapshot has no embedding".into()))?;
            eval::auroc_link_prediction(&snapshot.graph, model, params.negative_ratio, params.seed)?
        }
    };
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("auroc.json"), &report)?;
    report.write_roc_csv(BufWriter::new(File::create(out_dir.join("roc.csv"))?))?;
    Ok(report)
}

/// Temporal holdout over a snapshot's triples; writes `holdout.json` and
/// `histogram.csv` into `out_dir`.
pub fn eval_holdout(
    snapshot: &Snapshot,
    config: &PipelineConfig,
    cutoff: NaiveDate,
    k: usize,
    out_dir: &Path,
) -> Result<eval::HoldoutReport, PipelineError> {
    let report = eval::temporal_holdout(snapshot, cutoff, &config.walk, &config.sgns, k)?;
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("holdout.json"), &report)?;
    eval::write_histogram_csv(&report, BufWriter::new(File::create(out_dir.join("histogram.csv"))?))?;
    Ok(report)
}
