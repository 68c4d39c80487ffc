//! On-disk layout of a data directory:
//!
//! ```text
//! triples.log          append-only JSONL, one article revision per line
//! processed.txt        ledger of ingested update files
//! index/<generation>/  compacted snapshot: triples, articles, summaries,
//!                      stats, embeddings, meta
//! MANIFEST             names the current generation; replaced by rename
//! LOCK                 writer lock
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ConceptCatalog, Snapshot, Store, StoreData, StoreError};
use crate::embed::{EmbeddingModel, ModelFormatError};
use crate::extractor::RelationTriple;

const KEEP_GENERATIONS: usize = 3;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("corrupt data directory: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelFormatError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("data directory {0} is locked by another writer")]
    Locked(PathBuf),
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("index"))?;
        Ok(DataDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join("triples.log")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join("processed.txt")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("MANIFEST")
    }

    pub fn generation_dir(&self, generation: u64) -> PathBuf {
        self.root.join("index").join(format!("{generation:010}"))
    }

    /// Exclusive writer lock, released when the guard drops or the process
    /// exits.
    pub fn lock(&self) -> Result<WriterLock, PersistError> {
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.root.join("LOCK"))?;
        match file.try_lock() {
            Ok(()) => Ok(WriterLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(PersistError::Locked(self.root.clone())),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }
}

#[derive(Debug)]
pub struct WriterLock {
    _file: File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub generation: u64,
    pub snapshot_id: u64,
    /// Length of `triples.log` covered by the generation.
    pub log_offset: u64,
    pub created_at: DateTime<Utc>,
}

pub fn read_manifest(dir: &DataDir) -> Result<Option<Manifest>, PersistError> {
    match fs::read(dir.manifest_path()) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| PersistError::Corrupt(format!("MANIFEST: {e}"))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub article_id: String,
    pub triples: Vec<RelationTriple>,
}

/// Append-only log of article revisions.
#[derive(Debug)]
pub struct TripleLog {
    file: File,
    len: u64,
}

impl TripleLog {
    /// Opens for appending. A torn final line from an interrupted write is
    /// cut off.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let good = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1) as u64;
        if good != bytes.len() as u64 {
            file.set_len(good)?;
            file.sync_data()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(TripleLog { file, len: good })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, entries: &[LogEntry]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        self.len += buf.len() as u64;
        Ok(())
    }

    /// Complete entries from byte `offset` on.
    pub fn read_from(path: &Path, offset: u64) -> Result<Vec<LogEntry>, PersistError> {
        let mut file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        file.seek(SeekFrom::Start(offset))?;
        let mut out = Vec::new();
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 || !line.ends_with('\n') {
                break;
            }
            let entry = serde_json::from_str(&line).map_err(|e| PersistError::Corrupt(format!("triples.log: {e}")))?;
            out.push(entry);
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GenerationMeta {
    snapshot_id: u64,
    created_at: DateTime<Utc>,
    log_offset: u64,
    triples: u64,
    relations: usize,
    articles: usize,
    has_embedding: bool,
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    let f = w.into_inner().map_err(|e| e.into_error())?;
    f.sync_all()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PersistError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PersistError::Corrupt(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

fn sync_dir(path: &Path) -> io::Result<()> {
    File::open(path)?.sync_all()
}

/// Files of a generation that must be byte-identical for identical store
/// contents and seeds (`meta.json` carries timestamps and is excluded).
pub const GENERATION_ARTIFACTS: &[&str] = &[
    "triples.jsonl",
    "articles.jsonl",
    "summaries.jsonl",
    "stats.jsonl",
    "embeddings.txt",
];

/// Writes the snapshot as a new generation, then atomically points MANIFEST
/// at it. A crash at any point leaves MANIFEST naming a complete generation.
pub fn write_generation(dir: &DataDir, snapshot: &Snapshot, log_offset: u64) -> Result<Manifest, PersistError> {
    let generation = snapshot.id;
    let final_dir = dir.generation_dir(generation);
    let tmp = final_dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;

    write_jsonl(&tmp.join("triples.jsonl"), snapshot.triples())?;
    write_jsonl(&tmp.join("articles.jsonl"), snapshot.article_ids())?;
    write_jsonl(&tmp.join("summaries.jsonl"), snapshot.summaries())?;
    write_jsonl(&tmp.join("stats.jsonl"), snapshot.all_stats())?;
    if let Some(model) = &snapshot.embedding {
        let mut w = BufWriter::new(File::create(tmp.join("embeddings.txt"))?);
        model.write_text(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    let meta = GenerationMeta {
        snapshot_id: snapshot.id,
        created_at: snapshot.created_at,
        log_offset,
        triples: snapshot.triple_count(),
        relations: snapshot.relation_count(),
        articles: snapshot.article_count(),
        has_embedding: snapshot.embedding.is_some(),
    };
    fs::write(tmp.join("meta.json"), serde_json::to_vec_pretty(&meta).map_err(io::Error::other)?)?;
    sync_dir(&tmp)?;

    if final_dir.exists() {
        fs::remove_dir_all(&final_dir)?;
    }
    fs::rename(&tmp, &final_dir)?;
    sync_dir(&dir.root().join("index"))?;

    let manifest = Manifest {
        generation,
        snapshot_id: snapshot.id,
        log_offset,
        created_at: snapshot.created_at,
    };
    let manifest_tmp = dir.root().join("MANIFEST.tmp");
    {
        let mut f = File::create(&manifest_tmp)?;
        f.write_all(&serde_json::to_vec(&manifest).map_err(io::Error::other)?)?;
        f.sync_all()?;
    }
    fs::rename(&manifest_tmp, dir.manifest_path())?;
    sync_dir(dir.root())?;
    prune_generations(dir, generation)?;
    Ok(manifest)
}

fn prune_generations(dir: &DataDir, current: u64) -> io::Result<()> {
    let mut gens: Vec<u64> = Vec::new();
    for entry in fs::read_dir(dir.root().join("index"))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Ok(g) = name.parse::<u64>() {
            gens.push(g);
        } else if name.ends_with(".tmp") {
            fs::remove_dir_all(dir.root().join("index").join(&name))?;
        }
    }
    gens.sort_unstable();
    let keep_from = gens.len().saturating_sub(KEEP_GENERATIONS);
    for g in &gens[..keep_from] {
        if *g != current {
            fs::remove_dir_all(dir.generation_dir(*g))?;
        }
    }
    Ok(())
}

fn load_generation_data(dir: &DataDir, manifest: &Manifest, catalog: Arc<ConceptCatalog>) -> Result<(StoreData, Option<EmbeddingModel>), PersistError> {
    let gdir = dir.generation_dir(manifest.generation);
    if !gdir.is_dir() {
        return Err(PersistError::Corrupt(format!("MANIFEST names missing generation {}", manifest.generation)));
    }
    let articles: Vec<String> = read_jsonl(&gdir.join("articles.jsonl"))?;
    let triples: Vec<RelationTriple> = read_jsonl(&gdir.join("triples.jsonl"))?;
    let mut data = StoreData {
        catalog,
        ..StoreData::default()
    };
    let mut items: std::collections::BTreeMap<String, Vec<RelationTriple>> =
        articles.into_iter().map(|a| (a, Vec::new())).collect();
    for t in triples {
        items.entry(t.article_id.clone()).or_default().push(t);
    }
    data.insert_articles(items)?;
    let emb_path = gdir.join("embeddings.txt");
    let embedding = if emb_path.exists() {
        Some(EmbeddingModel::read_text(BufReader::new(File::open(emb_path)?))?)
    } else {
        None
    };
    Ok((data, embedding))
}

/// The published snapshot named by MANIFEST, if any.
pub fn load_snapshot(dir: &DataDir, catalog: Arc<ConceptCatalog>) -> Result<Option<Snapshot>, PersistError> {
    let Some(manifest) = read_manifest(dir)? else { return Ok(None) };
    let (data, embedding) = load_generation_data(dir, &manifest, catalog)?;
    Ok(Some(Snapshot::new(
        manifest.snapshot_id,
        manifest.created_at,
        Arc::new(data),
        embedding.map(Arc::new),
    )))
}

/// Writer-side recovery: the current generation plus every complete log
/// entry written after it.
pub fn recover_store(dir: &DataDir, catalog: Arc<ConceptCatalog>) -> Result<(Store, TripleLog), PersistError> {
    let log = TripleLog::open(&dir.log_path())?;
    let (mut data, offset, last_id) = match read_manifest(dir)? {
        Some(m) => {
            let (data, _) = load_generation_data(dir, &m, catalog)?;
            (data, m.log_offset, m.snapshot_id)
        }
        None => (
            StoreData {
                catalog,
                ..StoreData::default()
            },
            0,
            0,
        ),
    };
    let entries = TripleLog::read_from(&dir.log_path(), offset)?;
    data.insert_articles(entries.into_iter().map(|e| (e.article_id, e.triples)))?;
    Ok((Store::from_parts(data, last_id), log))
}
