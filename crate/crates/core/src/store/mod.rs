//! Relation triple store with pair counts, per-concept totals, conditional
//! probabilities and immutable snapshots.

pub mod persist;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{build_graph, EmbeddingModel, RelationGraph};
use crate::extractor::RelationTriple;
use crate::lexicon::{ConceptCategory, ConceptId, Lexicon};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("no relation between {0} and {1}")]
    UnknownRelation(ConceptId, ConceptId),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
}

/// Canonically ordered concept pair, `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationKey {
    pub a: ConceptId,
    pub b: ConceptId,
}

impl RelationKey {
    /// Orders the pair; `None` for a self pair.
    pub fn new(x: ConceptId, y: ConceptId) -> Option<Self> {
        match x.cmp(&y) {
            Ordering::Less => Some(RelationKey { a: x, b: y }),
            Ordering::Greater => Some(RelationKey { a: y, b: x }),
            Ordering::Equal => None,
        }
    }

    pub fn of(t: &RelationTriple) -> Self {
        RelationKey {
            a: t.concept_a.clone(),
            b: t.concept_b.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSummary {
    pub a: ConceptId,
    pub b: ConceptId,
    pub count: u64,
    pub first_pub_date: NaiveDate,
    pub last_pub_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptStats {
    pub concept: ConceptId,
    pub total_relations: u64,
    pub partner_count: u64,
}

/// Exact non-negative ratio; zero denominators read as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        Ratio {
            numerator,
            denominator,
        }
    }

    pub fn value(self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }

    pub fn cmp_exact(self, other: Ratio) -> Ordering {
        let lhs = self.numerator as u128 * other.denominator.max(1) as u128;
        let rhs = other.numerator as u128 * self.denominator.max(1) as u128;
        let lhs = if self.denominator == 0 { 0 } else { lhs };
        let rhs = if other.denominator == 0 { 0 } else { rhs };
        lhs.cmp(&rhs)
    }

    /// Decimal string with three significant digits, trailing zeros removed
    /// (74/631 → "0.117").
    pub fn display(self) -> String {
        format_significant(self.value(), 3)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

pub fn format_significant(v: f64, digits: i32) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    // Rounding may carry into a new leading digit (0.9996 → "1.000").
    let reparsed: f64 = s.parse().unwrap_or(v);
    let new_mag = reparsed.abs().log10().floor() as i32;
    if reparsed != 0.0 && new_mag > magnitude {
        let decimals = (digits - 1 - new_mag).max(0) as usize;
        s = format!("{v:.decimals$}");
    }
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairProbability {
    pub count: u64,
    pub total_a: u64,
    pub total_b: u64,
}

impl PairProbability {
    pub fn p_a_given_b(&self) -> Ratio {
        Ratio::new(self.count, self.total_b)
    }

    pub fn p_b_given_a(&self) -> Ratio {
        Ratio::new(self.count, self.total_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelatedSort {
    #[default]
    Count,
    PAGivenB,
    PBGivenA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceOrder {
    #[default]
    PubDateAsc,
    PubDateDesc,
}

/// One row of a concept's relation table. `a` is the queried concept and
/// `concept` the partner: `p_b_given_a = count / total(a)`,
/// `p_a_given_b = count / total(partner)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelatedRow {
    pub concept: ConceptId,
    pub count: u64,
    pub p_a_given_b: Ratio,
    pub p_b_given_a: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: ConceptId,
    pub name: String,
    pub category: ConceptCategory,
    pub synonyms: Vec<String>,
}

/// Names and categories of known concepts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptCatalog {
    entries: BTreeMap<ConceptId, CatalogEntry>,
}

impl ConceptCatalog {
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        ConceptCatalog::from_entries(lexicon.entries().iter().map(|e| CatalogEntry {
            id: e.id.clone(),
            name: e.name.clone(),
            category: e.category,
            synonyms: e.synonyms.clone(),
        }))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CatalogEntry>) -> Self {
        ConceptCatalog {
            entries: entries.into_iter().map(|e| (e.id.clone(), e)).collect(),
        }
    }

    pub fn get(&self, id: &ConceptId) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct InsertReport {
    pub inserted: u64,
    pub deduplicated: u64,
    pub articles_replaced: u64,
}

type EvidenceKey = (String, u32);

/// Triple store contents. Cheap to share behind `Arc`; cloned on write.
#[derive(Debug, Clone, Default)]
pub struct StoreData {
    catalog: Arc<ConceptCatalog>,
    relations: BTreeMap<RelationKey, BTreeMap<EvidenceKey, RelationTriple>>,
    articles: BTreeMap<String, BTreeSet<RelationKey>>,
    partners: BTreeMap<ConceptId, BTreeMap<ConceptId, u64>>,
    totals: BTreeMap<ConceptId, u64>,
    triple_count: u64,
}

impl StoreData {
    pub fn catalog(&self) -> &Arc<ConceptCatalog> {
        &self.catalog
    }

    pub fn triple_count(&self) -> u64 {
        self.triple_count
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn article_count(&self) -> usize {
        self.articles.len()
    }

    /// Concepts with at least one relation.
    pub fn concept_count(&self) -> usize {
        self.totals.len()
    }

    pub fn contains_article(&self, id: &str) -> bool {
        self.articles.contains_key(id)
    }

    pub fn article_ids(&self) -> impl Iterator<Item = &str> {
        self.articles.keys().map(String::as_str)
    }

    pub fn knows(&self, c: &ConceptId) -> bool {
        self.totals.contains_key(c) || self.catalog.get(c).is_some()
    }

    pub fn total_relations(&self, c: &ConceptId) -> u64 {
        self.totals.get(c).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: &ConceptId, b: &ConceptId) -> u64 {
        self.partners
            .get(a)
            .and_then(|p| p.get(b))
            .copied()
            .unwrap_or(0)
    }

    /// All stored triples in canonical (key, article, sentence) order.
    pub fn triples(&self) -> impl Iterator<Item = &RelationTriple> {
        self.relations.values().flat_map(|m| m.values())
    }

    pub fn keys(&self) -> impl Iterator<Item = (&RelationKey, u64)> {
        self.relations.iter().map(|(k, m)| (k, m.len() as u64))
    }

    pub fn summary(&self, key: &RelationKey) -> Option<RelationSummary> {
        let triples = self.relations.get(key)?;
        let mut dates = triples.values().map(|t| t.pub_date);
        let first = dates.next()?;
        let (lo, hi) = dates.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Some(RelationSummary {
            a: key.a.clone(),
            b: key.b.clone(),
            count: triples.len() as u64,
            first_pub_date: lo,
            last_pub_date: hi,
        })
    }

    pub fn summaries(&self) -> impl Iterator<Item = RelationSummary> + '_ {
        self.relations.keys().filter_map(|k| self.summary(k))
    }

    pub fn stats(&self, c: &ConceptId) -> ConceptStats {
        ConceptStats {
            concept: c.clone(),
            total_relations: self.total_relations(c),
            partner_count: self.partners.get(c).map_or(0, |p| p.len() as u64),
        }
    }

    pub fn all_stats(&self) -> impl Iterator<Item = ConceptStats> + '_ {
        self.totals.keys().map(|c| self.stats(c))
    }

    fn require(&self, c: &ConceptId) -> Result<(), StoreError> {
        if self.knows(c) {
            Ok(())
        } else {
            Err(StoreError::UnknownConcept(c.clone()))
        }
    }

    /// `P(B|A) = count(A,B) / total(A)` and `P(A|B) = count(A,B) / total(B)`,
    /// where totals count triple multiplicity over all partners.
    pub fn conditional_probability(&self, a: &ConceptId, b: &ConceptId) -> Result<PairProbability, StoreError> {
        self.require(a)?;
        self.require(b)?;
        Ok(PairProbability {
            count: self.pair_count(a, b),
            total_a: self.total_relations(a),
            total_b: self.total_relations(b),
        })
    }

    pub fn related_concepts(
        &self,
        a: &ConceptId,
        category: Option<ConceptCategory>,
        sort_by: RelatedSort,
        limit: usize,
        offset: usize,
    ) -> Result<Vec<RelatedRow>, StoreError> {
        self.require(a)?;
        let total_a = self.total_relations(a);
        let mut rows: Vec<RelatedRow> = self
            .partners
            .get(a)
            .into_iter()
            .flatten()
            .filter(|(b, _)| match category {
                Some(cat) => self.catalog.get(b).is_some_and(|e| e.category == cat),
                None => true,
            })
            .map(|(b, &count)| RelatedRow {
                concept: b.clone(),
                count,
                p_a_given_b: Ratio::new(count, self.total_relations(b)),
                p_b_given_a: Ratio::new(count, total_a),
            })
            .collect();
        rows.sort_by(|x, y| {
            let primary = match sort_by {
                RelatedSort::Count => y.count.cmp(&x.count),
                RelatedSort::PAGivenB => y.p_a_given_b.cmp_exact(x.p_a_given_b),
                RelatedSort::PBGivenA => y.p_b_given_a.cmp_exact(x.p_b_given_a),
            };
            primary.then_with(|| x.concept.cmp(&y.concept))
        });
        Ok(rows.into_iter().skip(offset).take(limit).collect())
    }

    pub fn evidence(
        &self,
        key: &RelationKey,
        order: EvidenceOrder,
        limit: usize,
        offset: usize,
    ) -> Result<Vec<RelationTriple>, StoreError> {
        let triples = self
            .relations
            .get(key)
            .ok_or_else(|| StoreError::UnknownRelation(key.a.clone(), key.b.clone()))?;
        let mut rows: Vec<&RelationTriple> = triples.values().collect();
        // Map order already sorts by (article_id, sentence_index).
        match order {
            EvidenceOrder::PubDateAsc => rows.sort_by_key(|t| t.pub_date),
            EvidenceOrder::PubDateDesc => rows.sort_by(|x, y| y.pub_date.cmp(&x.pub_date)),
        }
        Ok(rows.into_iter().skip(offset).take(limit).cloned().collect())
    }

    fn add_triple(&mut self, t: RelationTriple) -> bool {
        let key = RelationKey::of(&t);
        let ev = (t.article_id.clone(), t.sentence_index);
        let slot = self.relations.entry(key.clone()).or_default();
        if slot.contains_key(&ev) {
            return false;
        }
        self.articles.entry(t.article_id.clone()).or_default().insert(key.clone());
        slot.insert(ev, t);
        *self.partners.entry(key.a.clone()).or_default().entry(key.b.clone()).or_default() += 1;
        *self.partners.entry(key.b.clone()).or_default().entry(key.a.clone()).or_default() += 1;
        *self.totals.entry(key.a).or_default() += 1;
        *self.totals.entry(key.b).or_default() += 1;
        self.triple_count += 1;
        true
    }

    fn decrement(map: &mut BTreeMap<ConceptId, u64>, c: &ConceptId, by: u64) {
        if let Some(v) = map.get_mut(c) {
            *v -= by;
            if *v == 0 {
                map.remove(c);
            }
        }
    }

    fn remove_article(&mut self, article_id: &str) {
        let Some(keys) = self.articles.remove(article_id) else { return };
        for key in keys {
            let Some(slot) = self.relations.get_mut(&key) else { continue };
            let before = slot.len();
            slot.retain(|(art, _), _| art != article_id);
            let removed = (before - slot.len()) as u64;
            if slot.is_empty() {
                self.relations.remove(&key);
            }
            for (x, y) in [(&key.a, &key.b), (&key.b, &key.a)] {
                if let Some(p) = self.partners.get_mut(x) {
                    Self::decrement(p, y, removed);
                    if p.is_empty() {
                        self.partners.remove(x);
                    }
                }
                Self::decrement(&mut self.totals, x, removed);
            }
            self.triple_count -= removed;
        }
    }

    fn validate(t: &RelationTriple) -> Result<(), StoreError> {
        match t.concept_a.cmp(&t.concept_b) {
            Ordering::Less => Ok(()),
            Ordering::Equal => Err(StoreError::InvalidTriple(format!(
                "self relation {} in article {}",
                t.concept_a, t.article_id
            ))),
            Ordering::Greater => Err(StoreError::InvalidTriple(format!(
                "pair ({}, {}) is not canonically ordered",
                t.concept_a, t.concept_b
            ))),
        }
    }

    /// Replaces each listed article wholesale: previous triples of a known
    /// article are removed before its new triples are added. Articles with
    /// no triples are still recorded.
    pub fn insert_articles<I>(&mut self, items: I) -> Result<InsertReport, StoreError>
    where
        I: IntoIterator<Item = (String, Vec<RelationTriple>)>,
    {
        let items: Vec<_> = items.into_iter().collect();
        for (article, triples) in &items {
            for t in triples {
                Self::validate(t)?;
                if &t.article_id != article {
                    return Err(StoreError::InvalidTriple(format!(
                        "triple of article {} filed under {}",
                        t.article_id, article
                    )));
                }
            }
        }
        let mut report = InsertReport::default();
        for (article, triples) in items {
            if self.articles.contains_key(&article) {
                self.remove_article(&article);
                report.articles_replaced += 1;
            }
            self.articles.entry(article).or_default();
            for t in triples {
                if self.add_triple(t) {
                    report.inserted += 1;
                } else {
                    report.deduplicated += 1;
                }
            }
        }
        Ok(report)
    }

    /// Triples with `pub_date <= cutoff`, with all statistics recomputed.
    pub fn triples_before(&self, cutoff: NaiveDate) -> StoreData {
        let mut out = StoreData {
            catalog: self.catalog.clone(),
            ..StoreData::default()
        };
        for t in self.triples().filter(|t| t.pub_date <= cutoff) {
            out.articles.entry(t.article_id.clone()).or_default();
            out.add_triple(t.clone());
        }
        out
    }

    pub fn graph(&self) -> RelationGraph {
        build_graph(self.keys().map(|(k, w)| (&k.a, &k.b, w)))
    }

    /// Full recount from the stored triples; used to check the incremental
    /// bookkeeping.
    pub fn recount_consistent(&self) -> bool {
        let mut totals: BTreeMap<ConceptId, u64> = BTreeMap::new();
        let mut n = 0;
        for t in self.triples() {
            *totals.entry(t.concept_a.clone()).or_default() += 1;
            *totals.entry(t.concept_b.clone()).or_default() += 1;
            n += 1;
        }
        let partner_sum_ok = self.partners.iter().all(|(c, p)| {
            p.values().sum::<u64>() == self.total_relations(c)
                && p.iter().all(|(o, &w)| self.pair_count(o, c) == w)
        });
        totals == self.totals && n == self.triple_count && partner_sum_ok
    }
}

impl PartialEq for StoreData {
    fn eq(&self, other: &Self) -> bool {
        self.relations == other.relations
            && self.articles == other.articles
            && self.partners == other.partners
            && self.totals == other.totals
            && self.triple_count == other.triple_count
    }
}

/// Immutable published view of the store. Readers holding a snapshot never
/// observe later writes.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub id: u64,
    pub created_at: DateTime<Utc>,
    data: Arc<StoreData>,
    pub graph: Arc<RelationGraph>,
    pub embedding: Option<Arc<EmbeddingModel>>,
}

impl Snapshot {
    pub fn new(id: u64, created_at: DateTime<Utc>, data: Arc<StoreData>, embedding: Option<Arc<EmbeddingModel>>) -> Self {
        let graph = Arc::new(data.graph());
        Snapshot {
            id,
            created_at,
            data,
            graph,
            embedding,
        }
    }

    /// Snapshot id 0 over an empty store.
    pub fn empty(catalog: Arc<ConceptCatalog>) -> Self {
        Snapshot::new(0, Utc::now(), Arc::new(StoreData { catalog, ..StoreData::default() }), None)
    }

    pub fn data(&self) -> &Arc<StoreData> {
        &self.data
    }
}

impl Deref for Snapshot {
    type Target = StoreData;

    fn deref(&self) -> &StoreData {
        &self.data
    }
}

/// The single-writer store.
#[derive(Debug, Clone, Default)]
pub struct Store {
    data: Arc<StoreData>,
    last_snapshot_id: u64,
}

impl Deref for Store {
    type Target = StoreData;

    fn deref(&self) -> &StoreData {
        &self.data
    }
}

impl Store {
    pub fn new(catalog: Arc<ConceptCatalog>) -> Self {
        Store {
            data: Arc::new(StoreData {
                catalog,
                ..StoreData::default()
            }),
            last_snapshot_id: 0,
        }
    }

    pub(crate) fn from_parts(data: StoreData, last_snapshot_id: u64) -> Self {
        Store {
            data: Arc::new(data),
            last_snapshot_id,
        }
    }

    pub fn set_catalog(&mut self, catalog: Arc<ConceptCatalog>) {
        Arc::make_mut(&mut self.data).catalog = catalog;
    }

    pub fn last_snapshot_id(&self) -> u64 {
        self.last_snapshot_id
    }

    /// Groups triples by article and applies revision semantics: an article
    /// already in the store loses its previous triples first. Exact
    /// duplicates (same pair, article and sentence) are counted, not stored.
    pub fn insert_triples(&mut self, batch: Vec<RelationTriple>) -> Result<InsertReport, StoreError> {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: BTreeMap<String, Vec<RelationTriple>> = BTreeMap::new();
        for t in batch {
            if !grouped.contains_key(&t.article_id) {
                order.push(t.article_id.clone());
            }
            grouped.entry(t.article_id.clone()).or_default().push(t);
        }
        let items: Vec<_> = order
            .into_iter()
            .map(|a| {
                let ts = grouped.remove(&a).unwrap_or_default();
                (a, ts)
            })
            .collect();
        self.insert_articles(items)
    }

    pub fn insert_articles<I>(&mut self, items: I) -> Result<InsertReport, StoreError>
    where
        I: IntoIterator<Item = (String, Vec<RelationTriple>)>,
    {
        let items: Vec<_> = items.into_iter().collect();
        for (_, ts) in &items {
            for t in ts {
                StoreData::validate(t)?;
            }
        }
        Arc::make_mut(&mut self.data).insert_articles(items)
    }

    pub fn triples_before(&self, cutoff: NaiveDate) -> Store {
        Store::from_parts(self.data.triples_before(cutoff), 0)
    }

    pub fn data(&self) -> &Arc<StoreData> {
        &self.data
    }

    /// Publishes the current contents. Later inserts copy the data before
    /// mutating, so the snapshot is unaffected.
    pub fn publish_snapshot(&mut self, embedding: Option<EmbeddingModel>) -> Snapshot {
        self.publish_snapshot_at(embedding, Utc::now())
    }

    pub fn publish_snapshot_at(&mut self, embedding: Option<EmbeddingModel>, created_at: DateTime<Utc>) -> Snapshot {
        self.last_snapshot_id += 1;
        Snapshot::new(self.last_snapshot_id, created_at, self.data.clone(), embedding.map(Arc::new))
    }
}

#[cfg(test)]
mod tests;
