//! Concept mention detection and same-sentence relation extraction.

pub mod species;
pub mod tokenize;

use std::collections::BTreeSet;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::ArticleRecord;
use crate::lexicon::{ConceptId, SurfaceIndex};

pub use species::SpeciesLexicon;
pub use tokenize::{split_sentences, tokenize, Sentence, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    Title,
    Abstract,
}

/// A matched surface form: the concept and the token range it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub concept: ConceptId,
    pub tokens: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptMention {
    pub concept: ConceptId,
    pub sentence_index: usize,
    pub token_range: Range<usize>,
    pub field: TextField,
}

/// One piece of co-occurrence evidence. `concept_a < concept_b` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTriple {
    pub concept_a: ConceptId,
    pub concept_b: ConceptId,
    pub article_id: String,
    pub sentence_text: String,
    pub sentence_index: u32,
    pub pub_date: NaiveDate,
    pub extraction_date: NaiveDate,
    #[serde(default)]
    pub species: Vec<String>,
    #[serde(default)]
    pub citation: String,
}

/// Counters from one matcher run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub tokens: u64,
    pub probes: u64,
}

/// Leftmost-longest, non-overlapping dictionary scan.
pub fn match_concepts<T: AsRef<str>>(tokens: &[T], index: &SurfaceIndex) -> Vec<Mention> {
    match_concepts_counted(tokens, index, &mut ScanStats::default())
}

/// As [`match_concepts`], also counting token probes. Each start position
/// probes at most `max_phrase_len` tokens.
pub fn match_concepts_counted<T: AsRef<str>>(tokens: &[T], index: &SurfaceIndex, stats: &mut ScanStats) -> Vec<Mention> {
    stats.tokens += tokens.len() as u64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match index.longest_at(tokens, i, &mut stats.probes) {
            Some((concept, len)) => {
                out.push(Mention {
                    concept: concept.clone(),
                    tokens: i..i + len,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// All sentences of an article: title sentences first, then the abstract,
/// numbered consecutively.
pub fn article_sentences(article: &ArticleRecord) -> Vec<(TextField, Sentence)> {
    let title = split_sentences(&article.title).into_iter().map(|s| (TextField::Title, s));
    let abs = split_sentences(&article.abstract_text)
        .into_iter()
        .map(|s| (TextField::Abstract, s));
    title.chain(abs).collect()
}

pub fn article_mentions(article: &ArticleRecord, index: &SurfaceIndex) -> Vec<ConceptMention> {
    article_sentences(article)
        .into_iter()
        .enumerate()
        .flat_map(|(si, (field, sentence))| {
            match_concepts(&sentence.tokens, index)
                .into_iter()
                .map(move |m| ConceptMention {
                    concept: m.concept,
                    sentence_index: si,
                    token_range: m.tokens,
                    field,
                })
        })
        .collect()
}

/// Every unordered pair of distinct concepts sharing a sentence yields one
/// triple per sentence. Species are inferred once per article and attached
/// to all of its triples.
pub fn extract_relations(
    article: &ArticleRecord,
    index: &SurfaceIndex,
    species: &SpeciesLexicon,
    extraction_date: NaiveDate,
) -> Vec<RelationTriple> {
    let inferred = species.infer(&article.title, &article.abstract_text);
    let mut triples = Vec::new();
    for (si, (_, sentence)) in article_sentences(article).into_iter().enumerate() {
        let concepts: BTreeSet<ConceptId> = match_concepts(&sentence.tokens, index)
            .into_iter()
            .map(|m| m.concept)
            .collect();
        let concepts: Vec<ConceptId> = concepts.into_iter().collect();
        for (i, a) in concepts.iter().enumerate() {
            for b in &concepts[i + 1..] {
                triples.push(RelationTriple {
                    concept_a: a.clone(),
                    concept_b: b.clone(),
                    article_id: article.article_id.clone(),
                    sentence_text: sentence.text.clone(),
                    sentence_index: si as u32,
                    pub_date: article.pub_date,
                    extraction_date,
                    species: inferred.clone(),
                    citation: article.citation.clone(),
                });
            }
        }
    }
    triples
}
