//! Concept inventory: loading, validation, and compilation into the
//! token-level surface index consumed by the matcher.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extractor::tokenize::{fold, fold_tokens};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate concept id {0:?}")]
    DuplicateId(ConceptId),
    #[error("cannot compile an index from a lexicon with no enabled surface forms")]
    EmptyIndex,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opaque concept identifier. Ordering is byte-wise on the id string and is
/// the canonical ordering used for relation keys and every tie-break.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub String);

impl ConceptId {
    pub fn new(id: impl Into<String>) -> Self {
        ConceptId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConceptId {
    fn from(s: &str) -> Self {
        ConceptId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptCategory {
    BrainDisease,
    CognitiveFunction,
    Medicine,
    BrainRegion,
    Neuron,
    GeneProtein,
    Pathway,
    Neurotransmitter,
}

impl ConceptCategory {
    pub const ALL: [ConceptCategory; 8] = [
        ConceptCategory::BrainDisease,
        ConceptCategory::CognitiveFunction,
        ConceptCategory::Medicine,
        ConceptCategory::BrainRegion,
        ConceptCategory::Neuron,
        ConceptCategory::GeneProtein,
        ConceptCategory::Pathway,
        ConceptCategory::Neurotransmitter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConceptCategory::BrainDisease => "brain_disease",
            ConceptCategory::CognitiveFunction => "cognitive_function",
            ConceptCategory::Medicine => "medicine",
            ConceptCategory::BrainRegion => "brain_region",
            ConceptCategory::Neuron => "neuron",
            ConceptCategory::GeneProtein => "gene_protein",
            ConceptCategory::Pathway => "pathway",
            ConceptCategory::Neurotransmitter => "neurotransmitter",
        }
    }
}

impl fmt::Display for ConceptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConceptCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConceptCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown concept category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub id: ConceptId,
    pub name: String,
    pub category: ConceptCategory,
    /// Surface forms as written in the lexicon file; always contains `name`.
    pub synonyms: Vec<String>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl ConceptEntry {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        category: ConceptCategory,
        synonyms: &[&str],
    ) -> Self {
        let name = name.into();
        let mut syns: Vec<String> = synonyms.iter().map(|s| s.to_string()).collect();
        if !syns.contains(&name) {
            syns.insert(0, name.clone());
        }
        ConceptEntry {
            id: ConceptId(id.into()),
            name,
            category,
            synonyms: syns,
            enabled: true,
        }
    }
}

/// Banned surface forms, compared after tokenization and folding.
#[derive(Debug, Clone, Default)]
pub struct Stoplist {
    forms: HashSet<Vec<String>>,
}

impl Stoplist {
    pub fn new<I, S>(forms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let forms = forms
            .into_iter()
            .map(|s| fold_tokens(s.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        Stoplist { forms }
    }

    /// One surface form per line; blank lines and `#` comments are ignored.
    pub fn read<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut lines = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            lines.push(line.to_string());
        }
        Ok(Stoplist::new(lines))
    }

    pub fn contains(&self, folded: &[String]) -> bool {
        self.forms.contains(folded)
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynonymCollision {
    /// Folded surface form, tokens joined by single spaces.
    pub surface: String,
    pub winner: ConceptId,
    pub losers: Vec<ConceptId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub collisions: Vec<SynonymCollision>,
    /// (concept, synonym) pairs removed because the stoplist bans them.
    pub stopped: Vec<(ConceptId, String)>,
    /// Concepts left without any usable surface form.
    pub disabled: Vec<ConceptId>,
}

/// Validated concept inventory.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<ConceptEntry>,
    by_id: HashMap<ConceptId, usize>,
    /// Retained surface forms: folded tokens → owning entry.
    forms: BTreeMap<Vec<String>, usize>,
    report: LoadReport,
}

#[derive(Deserialize)]
struct LexiconLine {
    id: String,
    name: String,
    category: String,
    #[serde(default)]
    synonyms: Vec<String>,
}

/// Reads the JSON Lines lexicon format, one concept per line.
pub fn load_lexicon<R: BufRead>(source: R, stoplist: &Stoplist) -> Result<Lexicon, LexiconError> {
    let mut entries = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| LexiconError::Parse {
            line: lineno,
            message,
        };
        let raw: LexiconLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let category: ConceptCategory = raw.category.parse().map_err(parse_err)?;
        if raw.id.is_empty() || raw.id.chars().any(char::is_whitespace) {
            return Err(parse_err(format!("invalid concept id {:?}", raw.id)));
        }
        if raw.name.trim().is_empty() {
            return Err(parse_err("empty concept name".into()));
        }
        let mut synonyms = raw.synonyms;
        if !synonyms.contains(&raw.name) {
            synonyms.insert(0, raw.name.clone());
        }
        if let Some(bad) = synonyms.iter().find(|s| fold_tokens(s).is_empty()) {
            return Err(parse_err(format!("synonym {bad:?} contains no tokens")));
        }
        entries.push(ConceptEntry {
            id: ConceptId(raw.id),
            name: raw.name,
            category,
            synonyms,
            enabled: true,
        });
    }
    Lexicon::from_entries(entries, stoplist)
}

impl Lexicon {
    /// Validates entries: ids must be unique, stoplisted synonyms are dropped,
    /// and a surface form claimed by several concepts stays with the concept
    /// whose id sorts first. Concepts left with no surface form are disabled.
    pub fn from_entries(mut entries: Vec<ConceptEntry>, stoplist: &Stoplist) -> Result<Self, LexiconError> {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(LexiconError::DuplicateId(e.id.clone()));
            }
        }

        let mut report = LoadReport::default();
        let mut claims: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if !e.enabled {
                continue;
            }
            for syn in &e.synonyms {
                let folded = fold_tokens(syn);
                if folded.is_empty() {
                    continue;
                }
                if stoplist.contains(&folded) {
                    report.stopped.push((e.id.clone(), syn.clone()));
                    continue;
                }
                let owners = claims.entry(folded).or_default();
                if !owners.contains(&i) {
                    owners.push(i);
                }
            }
        }

        let mut forms = BTreeMap::new();
        for (folded, mut owners) in claims {
            owners.sort_by(|&a, &b| entries[a].id.cmp(&entries[b].id));
            if owners.len() > 1 {
                report.collisions.push(SynonymCollision {
                    surface: folded.join(" "),
                    winner: entries[owners[0]].id.clone(),
                    losers: owners[1..].iter().map(|&i| entries[i].id.clone()).collect(),
                });
            }
            forms.insert(folded, owners[0]);
        }

        let mut has_form = vec![false; entries.len()];
        for &i in forms.values() {
            has_form[i] = true;
        }
        for (i, e) in entries.iter_mut().enumerate() {
            if e.enabled && !has_form[i] {
                e.enabled = false;
                report.disabled.push(e.id.clone());
            }
        }

        Ok(Lexicon {
            entries,
            by_id,
            forms,
            report,
        })
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn get(&self, id: &ConceptId) -> Option<&ConceptEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Retained surface forms with their owning concept, in folded-token order.
    pub fn surface_forms(&self) -> impl Iterator<Item = (&[String], &ConceptId)> {
        self.forms
            .iter()
            .map(|(k, &i)| (k.as_slice(), &self.entries[i].id))
    }
}

const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Head {
    single: Option<u32>,
    node: u32,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<String, u32>,
    accept: Option<u32>,
}

/// Token-level dictionary: a hashtable keyed by the first token and a token
/// trie for the remaining tokens of multi-word forms. Both halves are reached
/// with a single hash probe on the first token, so one start position costs
/// at most `max_phrase_len` token probes.
#[derive(Debug, Clone)]
pub struct PhraseTable {
    heads: HashMap<String, Head>,
    nodes: Vec<TrieNode>,
    labels: Vec<String>,
    max_phrase_len: usize,
    single_count: usize,
    phrase_count: usize,
}

impl PhraseTable {
    pub fn build<'a, I>(forms: I) -> Self
    where
        I: IntoIterator<Item = (&'a [String], &'a str)>,
    {
        let mut table = PhraseTable {
            heads: HashMap::new(),
            nodes: Vec::new(),
            labels: Vec::new(),
            max_phrase_len: 0,
            single_count: 0,
            phrase_count: 0,
        };
        let mut label_ids: HashMap<&str, u32> = HashMap::new();
        for (tokens, label) in forms {
            if tokens.is_empty() {
                continue;
            }
            let label_id = *label_ids.entry(label).or_insert_with(|| {
                table.labels.push(label.to_string());
                (table.labels.len() - 1) as u32
            });
            table.insert(tokens, label_id);
        }
        table
    }

    fn insert(&mut self, tokens: &[String], label: u32) {
        self.max_phrase_len = self.max_phrase_len.max(tokens.len());
        let head = self.heads.entry(tokens[0].clone()).or_insert(Head {
            single: None,
            node: NO_NODE,
        });
        if tokens.len() == 1 {
            if head.single.is_none() {
                self.single_count += 1;
            }
            head.single.get_or_insert(label);
            return;
        }
        if head.node == NO_NODE {
            head.node = self.nodes.len() as u32;
            self.nodes.push(TrieNode::default());
        }
        let mut node = head.node;
        for tok in &tokens[1..] {
            let next = match self.nodes[node as usize].children.get(tok) {
                Some(&n) => n,
                None => {
                    let n = self.nodes.len() as u32;
                    self.nodes.push(TrieNode::default());
                    self.nodes[node as usize].children.insert(tok.clone(), n);
                    n
                }
            };
            node = next;
        }
        let slot = &mut self.nodes[node as usize].accept;
        if slot.is_none() {
            self.phrase_count += 1;
        }
        slot.get_or_insert(label);
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    /// Number of one-token forms held in the hashtable.
    pub fn single_token_count(&self) -> usize {
        self.single_count
    }

    /// Number of multi-token forms held in the trie.
    pub fn phrase_count(&self) -> usize {
        self.phrase_count
    }

    pub fn is_empty(&self) -> bool {
        self.single_count + self.phrase_count == 0
    }

    /// Longest registered form starting at `start`. Returns the label and the
    /// length in tokens. `probes` is incremented once per token examined.
    pub fn longest_at<T: AsRef<str>>(&self, tokens: &[T], start: usize, probes: &mut u64) -> Option<(u32, usize)> {
        let first = tokens.get(start)?;
        *probes += 1;
        let head = self.heads.get(fold(first.as_ref()).as_ref())?;
        let mut best = head.single.map(|l| (l, 1));
        let mut node = head.node;
        let mut len = 1;
        while node != NO_NODE && len < self.max_phrase_len {
            let Some(tok) = tokens.get(start + len) else { break };
            *probes += 1;
            match self.nodes[node as usize].children.get(fold(tok.as_ref()).as_ref()) {
                Some(&next) => {
                    node = next;
                    len += 1;
                    if let Some(l) = self.nodes[node as usize].accept {
                        best = Some((l, len));
                    }
                }
                None => break,
            }
        }
        best
    }

    /// Exact lookup of a whole token sequence.
    pub fn get<T: AsRef<str>>(&self, tokens: &[T]) -> Option<u32> {
        let (first, rest) = tokens.split_first()?;
        let head = self.heads.get(fold(first.as_ref()).as_ref())?;
        if rest.is_empty() {
            return head.single;
        }
        let mut node = head.node;
        for tok in rest {
            if node == NO_NODE {
                return None;
            }
            node = *self.nodes[node as usize].children.get(fold(tok.as_ref()).as_ref())?;
        }
        self.nodes[node as usize].accept
    }
}

/// Compiled surface forms of every enabled concept.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    table: PhraseTable,
    concepts: Vec<ConceptId>,
}

pub fn compile_surface_index(lexicon: &Lexicon) -> Result<SurfaceIndex, LexiconError> {
    let forms: Vec<(&[String], &str)> = lexicon
        .surface_forms()
        .map(|(tokens, id)| (tokens, id.as_str()))
        .collect();
    let table = PhraseTable::build(forms);
    if table.is_empty() {
        return Err(LexiconError::EmptyIndex);
    }
    let concepts = table.labels.iter().map(|l| ConceptId(l.clone())).collect();
    Ok(SurfaceIndex { table, concepts })
}

impl SurfaceIndex {
    pub fn max_phrase_len(&self) -> usize {
        self.table.max_phrase_len()
    }

    pub fn single_token_count(&self) -> usize {
        self.table.single_token_count()
    }

    pub fn phrase_count(&self) -> usize {
        self.table.phrase_count()
    }

    /// The concept registered for exactly this token sequence, if any.
    /// Tokens are folded before comparison.
    pub fn resolve<T: AsRef<str>>(&self, tokens: &[T]) -> Option<&ConceptId> {
        self.table.get(tokens).map(|l| &self.concepts[l as usize])
    }

    pub(crate) fn longest_at<T: AsRef<str>>(
        &self,
        tokens: &[T],
        start: usize,
        probes: &mut u64,
    ) -> Option<(&ConceptId, usize)> {
        self.table
            .longest_at(tokens, start, probes)
            .map(|(l, len)| (&self.concepts[l as usize], len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lexicon_from(lines: &str, stop: &Stoplist) -> Result<Lexicon, LexiconError> {
        load_lexicon(lines.as_bytes(), stop)
    }

    const MINI: &str = r#"{"id":"prefrontal_cortex","name":"prefrontal cortex","category":"brain_region","synonyms":["PFC"]}
{"id":"set_shifting","name":"set-shifting","category":"cognitive_function","synonyms":[]}
{"id":"shank3","name":"shank3","category":"gene_protein"}
"#;

    #[test]
    fn loads_three_entries() {
        let lex = lexicon_from(MINI, &Stoplist::default()).unwrap();
        assert_eq!(lex.len(), 3);
        assert!(lex.entries().iter().all(|e| e.enabled));
        let pfc = lex.get(&"prefrontal_cortex".into()).unwrap();
        assert_eq!(pfc.category, ConceptCategory::BrainRegion);
        assert_eq!(pfc.synonyms, ["prefrontal cortex", "PFC"]);
        assert!(lex.report().collisions.is_empty());
    }

    #[test]
    fn stoplist_removes_ambiguous_abbreviation() {
        let src = r#"{"id":"dys_insula","name":"dorsal dysgranular insula","category":"brain_region","synonyms":["dId"]}"#;
        let stop = Stoplist::read("# auxiliary verbs\ndid\n".as_bytes()).unwrap();
        let lex = lexicon_from(src, &stop).unwrap();
        let idx = compile_surface_index(&lex).unwrap();
        assert!(lex.entries()[0].enabled);
        assert_eq!(lex.report().stopped, [(ConceptId::from("dys_insula"), "dId".to_string())]);
        assert_eq!(idx.resolve(&["did"]), None);
        assert_eq!(
            idx.resolve(&["dorsal", "dysgranular", "insula"]),
            Some(&ConceptId::from("dys_insula"))
        );
    }

    #[test]
    fn colliding_synonym_goes_to_smallest_id() {
        let src = r#"{"id":"prefrontal_cortex","name":"prefrontal cortex","category":"brain_region","synonyms":["pfc"]}
{"id":"pfc_protein","name":"PFC","category":"gene_protein","synonyms":[]}
{"id":"b_other","name":"other thing","category":"medicine","synonyms":["PFC"]}
"#;
        let lex = lexicon_from(src, &Stoplist::default()).unwrap();
        let report = lex.report();
        assert_eq!(
            report.collisions,
            [SynonymCollision {
                surface: "pfc".into(),
                winner: "b_other".into(),
                losers: vec!["pfc_protein".into(), "prefrontal_cortex".into()],
            }]
        );
        // pfc_protein had only the colliding form.
        assert_eq!(report.disabled, [ConceptId::from("pfc_protein")]);
        assert!(!lex.get(&"pfc_protein".into()).unwrap().enabled);
        let idx = compile_surface_index(&lex).unwrap();
        assert_eq!(idx.resolve(&["PFC"]), Some(&ConceptId::from("b_other")));
        assert_eq!(
            idx.resolve(&["prefrontal", "cortex"]),
            Some(&ConceptId::from("prefrontal_cortex"))
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let src = "{\"id\":\"a\",\"name\":\"a\",\"category\":\"medicine\"}\n\n{not json}\n";
        match lexicon_from(src, &Stoplist::default()) {
            Err(LexiconError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let src = r#"{"id":"a","name":"a","category":"brain_part"}"#;
        assert!(matches!(
            lexicon_from(src, &Stoplist::default()),
            Err(LexiconError::Parse { line: 1, .. })
        ));
        let src = r#"{"id":"a","name":"a","category":"medicine","synonyms":["--"]}"#;
        assert!(matches!(
            lexicon_from(src, &Stoplist::default()),
            Err(LexiconError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let src = "{\"id\":\"a\",\"name\":\"x\",\"category\":\"medicine\"}\n{\"id\":\"a\",\"name\":\"y\",\"category\":\"medicine\"}\n";
        assert!(matches!(
            lexicon_from(src, &Stoplist::default()),
            Err(LexiconError::DuplicateId(_))
        ));
    }

    #[test]
    fn index_shapes() {
        let stop = Stoplist::default();
        let one = |entries| compile_surface_index(&Lexicon::from_entries(entries, &stop).unwrap()).unwrap();

        let idx = one(vec![ConceptEntry::new("dopamine", "dopamine", ConceptCategory::Neurotransmitter, &[])]);
        assert_eq!((idx.single_token_count(), idx.phrase_count(), idx.max_phrase_len()), (1, 0, 1));

        let idx = one(vec![ConceptEntry::new("pfc", "prefrontal cortex", ConceptCategory::BrainRegion, &[])]);
        assert_eq!((idx.single_token_count(), idx.phrase_count(), idx.max_phrase_len()), (0, 1, 2));
        assert_eq!(idx.resolve(&["prefrontal", "cortex"]), Some(&ConceptId::from("pfc")));
        assert_eq!(idx.resolve(&["prefrontal"]), None);
        assert_eq!(idx.resolve(&["Prefrontal", "Cortex"]), Some(&ConceptId::from("pfc")));

        let idx = one(vec![
            ConceptEntry::new("wm", "working memory", ConceptCategory::CognitiveFunction, &[]),
            ConceptEntry::new("wmc", "working memory capacity", ConceptCategory::CognitiveFunction, &[]),
        ]);
        assert_eq!(idx.max_phrase_len(), 3);
        assert_eq!(idx.resolve(&["working", "memory"]), Some(&ConceptId::from("wm")));
        assert_eq!(idx.resolve(&["working", "memory", "capacity"]), Some(&ConceptId::from("wmc")));
        assert_eq!(idx.resolve(&["working"]), None);
    }

    #[test]
    fn empty_lexicon_cannot_compile() {
        let lex = Lexicon::from_entries(vec![], &Stoplist::default()).unwrap();
        assert!(matches!(compile_surface_index(&lex), Err(LexiconError::EmptyIndex)));
    }

    fn linear_resolve<'a>(lex: &'a Lexicon, tokens: &[String]) -> Option<&'a ConceptId> {
        // Straight scan over every retained synonym of every enabled concept.
        let mut hits: Vec<&ConceptId> = Vec::new();
        for e in lex.entries().iter().filter(|e| e.enabled) {
            for s in &e.synonyms {
                if fold_tokens(s) == tokens && !hits.contains(&&e.id) {
                    hits.push(&e.id);
                }
            }
        }
        hits.sort();
        hits.into_iter().next()
    }

    fn arb_lexicon() -> impl Strategy<Value = Vec<ConceptEntry>> {
        let word = prop::sample::select(vec!["alpha", "beta", "gamma", "delta", "Eps", "zeta"]);
        let phrase = prop::collection::vec(word, 1..4).prop_map(|w| w.join(" "));
        prop::collection::vec(prop::collection::vec(phrase, 1..4), 1..8).prop_map(|concepts| {
            concepts
                .into_iter()
                .enumerate()
                .map(|(i, syns)| {
                    let refs: Vec<&str> = syns.iter().map(String::as_str).collect();
                    ConceptEntry::new(format!("c{i:02}"), syns[0].clone(), ConceptCategory::Medicine, &refs)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn resolve_agrees_with_linear_scan(
            entries in arb_lexicon(),
            probe in prop::collection::vec(prop::sample::select(vec!["alpha", "beta", "gamma", "delta", "eps", "zeta"]), 1..4),
        ) {
            let lex = Lexicon::from_entries(entries, &Stoplist::default()).unwrap();
            let idx = compile_surface_index(&lex).unwrap();
            let probe: Vec<String> = probe.into_iter().map(String::from).collect();
            prop_assert_eq!(idx.resolve(&probe), linear_resolve(&lex, &probe));
        }

        #[test]
        fn every_retained_form_resolves_to_its_owner(entries in arb_lexicon()) {
            let lex = Lexicon::from_entries(entries, &Stoplist::default()).unwrap();
            let idx = compile_surface_index(&lex).unwrap();
            for (tokens, id) in lex.surface_forms() {
                prop_assert_eq!(idx.resolve(tokens), Some(id));
            }
            for e in lex.entries().iter().filter(|e| !e.enabled) {
                for s in &e.synonyms {
                    prop_assert_ne!(idx.resolve(&fold_tokens(s)), Some(&e.id));
                }
            }
        }
    }
}
