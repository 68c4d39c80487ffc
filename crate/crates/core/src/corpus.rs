//! Article update files: parsing into records and tracking which files
//! have already been ingested.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{file}: no well-formed article records ({skipped} skipped)")]
    NoRecords { file: String, skipped: usize },
    #[error("{file}: malformed XML: {message}")]
    Xml { file: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub pub_date: NaiveDate,
    pub citation: String,
    pub source_file: String,
    pub fetch_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateBatch {
    pub file_name: String,
    pub records: Vec<ArticleRecord>,
    pub skipped: usize,
}

impl UpdateBatch {
    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Keeps only the last record for every article id, preserving the order
    /// of those survivors.
    pub fn latest_revisions(mut self) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut kept: Vec<ArticleRecord> = Vec::with_capacity(self.records.len());
        for rec in self.records.into_iter().rev() {
            if seen.insert(rec.article_id.clone()) {
                kept.push(rec);
            }
        }
        kept.reverse();
        self.records = kept;
        self
    }
}

/// Wire form of one article in the canonical JSONL format.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct WireArticle {
    id: String,
    title: String,
    #[serde(rename = "abstract", default)]
    abstract_text: String,
    pub_date: String,
    #[serde(default)]
    citation: String,
}

/// Parses `YYYY-MM-DD`, `YYYY-MM` or `YYYY`; a missing month or day becomes 1.
pub fn parse_partial_date(s: &str) -> Option<NaiveDate> {
    let mut parts = s.trim().splitn(3, '-');
    let year: i32 = parts.next()?.parse().ok()?;
    let month: u32 = parts.next().map_or(Some(1), |m| m.parse().ok())?;
    let day: u32 = parts.next().map_or(Some(1), |d| d.parse().ok())?;
    NaiveDate::from_ymd_opt(year, month, day)
}

impl WireArticle {
    fn into_record(self, file_name: &str, today: NaiveDate) -> Option<ArticleRecord> {
        let article_id = self.id.trim().to_string();
        let title = self.title.trim().to_string();
        if article_id.is_empty() || title.is_empty() {
            return None;
        }
        Some(ArticleRecord {
            article_id,
            title,
            abstract_text: self.abstract_text.trim().to_string(),
            pub_date: parse_partial_date(&self.pub_date)?,
            citation: self.citation.trim().to_string(),
            source_file: file_name.to_string(),
            fetch_date: today,
        })
    }
}

/// Parses an update file. The format is chosen by the first non-whitespace
/// byte: `<` selects the XML subset, anything else JSON Lines. Malformed
/// records are skipped and counted.
pub fn parse_article_file<R: Read>(mut stream: R, file_name: &str, today: NaiveDate) -> Result<UpdateBatch, CorpusError> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes)?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace()).copied();
    let (wires, malformed) = match first {
        None => (Vec::new(), 0),
        Some(b'<') => parse_xml(&bytes, file_name)?,
        Some(_) => parse_jsonl(&bytes),
    };

    let mut records = Vec::with_capacity(wires.len());
    let mut skipped = malformed;
    for w in wires {
        match w.into_record(file_name, today) {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    if records.is_empty() && first.is_some() {
        return Err(CorpusError::NoRecords {
            file: file_name.to_string(),
            skipped,
        });
    }
    Ok(UpdateBatch {
        file_name: file_name.to_string(),
        records,
        skipped,
    })
}

pub fn parse_article_path(path: &Path, today: NaiveDate) -> Result<UpdateBatch, CorpusError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_article_file(File::open(path)?, &name, today)
}

fn parse_jsonl(bytes: &[u8]) -> (Vec<WireArticle>, usize) {
    let mut out = Vec::new();
    let mut bad = 0;
    for line in bytes.split(|&b| b == b'\n') {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice::<WireArticle>(line) {
            Ok(w) => out.push(w),
            Err(_) => bad += 1,
        }
    }
    (out, bad)
}

fn parse_xml(bytes: &[u8], file_name: &str) -> Result<(Vec<WireArticle>, usize), CorpusError> {
    let xml_err = |message: String| CorpusError::Xml {
        file: file_name.to_string(),
        message,
    };
    let mut reader = Reader::from_reader(bytes);
    let mut buf = Vec::new();
    let mut out = Vec::new();
    let mut bad = 0;
    let mut current: Option<(WireArticle, bool)> = None;
    let mut field: Option<String> = None;
    let mut text = String::new();

    loop {
        match reader.read_event_into(&mut buf) {
            Err(e) => return Err(xml_err(e.to_string())),
            Ok(Event::Eof) => break,
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                match (name.as_str(), &current) {
                    ("article", None) => current = Some((WireArticle::default(), true)),
                    ("article", Some(_)) => return Err(xml_err("nested <article>".into())),
                    (_, Some(_)) => {
                        field = Some(name);
                        text.clear();
                    }
                    _ => {}
                }
            }
            Ok(Event::Empty(e)) => {
                if e.name().as_ref() == b"article" {
                    bad += 1;
                }
            }
            Ok(Event::Text(t)) => {
                if field.is_some() {
                    match t.unescape() {
                        Ok(s) => text.push_str(&s),
                        Err(_) => {
                            if let Some((_, ok)) = current.as_mut() {
                                *ok = false;
                            }
                        }
                    }
                }
            }
            Ok(Event::CData(t)) => {
                if field.is_some() {
                    text.push_str(&String::from_utf8_lossy(&t.into_inner()));
                }
            }
            Ok(Event::End(e)) => {
                let name = e.name();
                if name.as_ref() == b"article" {
                    if let Some((article, ok)) = current.take() {
                        if ok {
                            out.push(article);
                        } else {
                            bad += 1;
                        }
                    }
                } else if let (Some(f), Some((article, _))) = (field.take(), current.as_mut()) {
                    let value = std::mem::take(&mut text);
                    match f.as_str() {
                        "id" => article.id = value,
                        "title" => article.title = value,
                        "abstract" => article.abstract_text = value,
                        "pub_date" => article.pub_date = value,
                        "citation" => article.citation = value,
                        _ => {}
                    }
                }
            }
            Ok(_) => {}
        }
        buf.clear();
    }
    Ok((out, bad))
}

/// Writes records in the canonical JSONL format.
pub fn write_jsonl<W: Write>(records: &[ArticleRecord], mut out: W) -> io::Result<()> {
    for r in records {
        let wire = WireArticle {
            id: r.article_id.clone(),
            title: r.title.clone(),
            abstract_text: r.abstract_text.clone(),
            pub_date: r.pub_date.format("%Y-%m-%d").to_string(),
            citation: r.citation.clone(),
        };
        serde_json::to_writer(&mut out, &wire)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Update files in `directory` that are not yet in the ledger, sorted by name.
/// Hidden files (leading `.`) are ignored.
pub fn pending_update_files(directory: &Path, processed: &BTreeSet<String>) -> io::Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(directory)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || processed.contains(&name) {
            continue;
        }
        names.push(name);
    }
    names.sort();
    Ok(names)
}

/// Append-only list of processed update file names, one per line.
#[derive(Debug)]
pub struct ProcessedLedger {
    path: PathBuf,
    names: BTreeSet<String>,
}

impl ProcessedLedger {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let mut names = BTreeSet::new();
        match File::open(&path) {
            Ok(f) => {
                for line in BufReader::new(f).lines() {
                    let line = line?;
                    let line = line.trim();
                    if !line.is_empty() {
                        names.insert(line.to_string());
                    }
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(ProcessedLedger { path, names })
    }

    pub fn names(&self) -> &BTreeSet<String> {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn append(&mut self, name: &str) -> io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{name}")?;
        f.sync_data()?;
        self.names.insert(name.to_string());
        Ok(())
    }
}
