use std::sync::Arc;

use chrono::NaiveDate;
use proptest::prelude::*;

use super::persist::*;
use super::*;

fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn triple(a: &str, b: &str, article: &str, sentence: u32, date: NaiveDate) -> RelationTriple {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    RelationTriple {
        concept_a: a.into(),
        concept_b: b.into(),
        article_id: article.into(),
        sentence_text: format!("{a} with {b}."),
        sentence_index: sentence,
        pub_date: date,
        extraction_date: day(2024, 1, 1),
        species: vec![],
        citation: String::new(),
    }
}

fn catalog() -> Arc<ConceptCatalog> {
    let entry = |id: &str, cat| CatalogEntry {
        id: id.into(),
        name: id.replace('_', " "),
        category: cat,
        synonyms: vec![],
    };
    Arc::new(ConceptCatalog::from_entries([
        entry("set_shifting", ConceptCategory::CognitiveFunction),
        entry("prefrontal_cortex", ConceptCategory::BrainRegion),
        entry("hippocampus", ConceptCategory::BrainRegion),
        entry("dopamine", ConceptCategory::Neurotransmitter),
        entry("lonely", ConceptCategory::Medicine),
    ]))
}

#[test]
fn insert_counts() {
    let mut s = Store::new(catalog());
    let d = day(2020, 1, 1);
    let r = s
        .insert_triples(vec![triple("a", "b", "1", 0, d), triple("a", "c", "1", 0, d), triple("b", "c", "2", 1, d)])
        .unwrap();
    assert_eq!(r, InsertReport { inserted: 3, deduplicated: 0, articles_replaced: 0 });

    let mut s = Store::new(catalog());
    let r = s.insert_triples(vec![triple("a", "b", "1", 0, d), triple("a", "b", "1", 0, d)]).unwrap();
    assert_eq!(r, InsertReport { inserted: 1, deduplicated: 1, articles_replaced: 0 });
}

#[test]
fn bad_triples_are_rejected_without_side_effects() {
    let mut s = Store::new(catalog());
    let d = day(2020, 1, 1);
    let mut selfie = triple("a", "b", "1", 0, d);
    selfie.concept_b = "a".into();
    assert!(matches!(s.insert_triples(vec![triple("a", "c", "1", 0, d), selfie]), Err(StoreError::InvalidTriple(_))));
    let mut swapped = triple("a", "b", "1", 0, d);
    std::mem::swap(&mut swapped.concept_a, &mut swapped.concept_b);
    assert!(s.insert_triples(vec![swapped]).is_err());
    assert_eq!(s.triple_count(), 0);
}

#[test]
fn revision_matches_from_scratch() {
    let d = day(2020, 1, 1);
    let mut revised = Store::new(catalog());
    revised
        .insert_triples(vec![triple("a", "b", "A1", 0, d), triple("a", "c", "A1", 1, d), triple("b", "c", "A2", 0, d)])
        .unwrap();
    let r = revised.insert_triples(vec![triple("c", "d", "A1", 0, d)]).unwrap();
    assert_eq!(r.articles_replaced, 1);

    let mut scratch = Store::new(catalog());
    scratch.insert_triples(vec![triple("b", "c", "A2", 0, d), triple("c", "d", "A1", 0, d)]).unwrap();
    assert_eq!(**revised.data(), **scratch.data());
    assert!(revised.recount_consistent());
    assert_eq!(revised.pair_count(&"a".into(), &"b".into()), 0);
}

#[test]
fn conditional_probability_matches_reported_example() {
    let mut s = Store::new(catalog());
    let d = day(2015, 6, 1);
    let mut batch = Vec::new();
    for i in 0..74 {
        batch.push(triple("set_shifting", "prefrontal_cortex", &format!("p{i}"), 0, d));
    }
    for i in 0..(631 - 74) {
        batch.push(triple("set_shifting", "hippocampus", &format!("h{i}"), 0, d));
    }
    s.insert_triples(batch).unwrap();
    let pp = s.conditional_probability(&"set_shifting".into(), &"prefrontal_cortex".into()).unwrap();
    assert_eq!(pp.p_b_given_a(), Ratio::new(74, 631));
    assert_eq!(pp.p_b_given_a().display(), "0.117");
    assert_eq!(pp.p_a_given_b(), Ratio::new(74, 74));
}

#[test]
fn conditional_probability_edge_cases() {
    let mut s = Store::new(catalog());
    s.insert_triples(vec![triple("dopamine", "hippocampus", "1", 0, day(2020, 1, 1))]).unwrap();
    let pp = s.conditional_probability(&"dopamine".into(), &"hippocampus".into()).unwrap();
    assert_eq!((pp.p_a_given_b().value(), pp.p_b_given_a().value()), (1.0, 1.0));
    let pp = s.conditional_probability(&"dopamine".into(), &"lonely".into()).unwrap();
    assert_eq!((pp.p_a_given_b().value(), pp.p_b_given_a().value()), (0.0, 0.0));
    assert_eq!(
        s.conditional_probability(&"dopamine".into(), &"nope".into()),
        Err(StoreError::UnknownConcept("nope".into()))
    );
}

#[test]
fn significant_digit_display() {
    assert_eq!(format_significant(74.0 / 631.0, 3), "0.117");
    assert_eq!(format_significant(0.0021, 3), "0.0021");
    assert_eq!(format_significant(1.0, 3), "1");
    assert_eq!(format_significant(0.99996, 3), "1");
    assert_eq!(format_significant(0.5, 3), "0.5");
    assert_eq!(format_significant(0.0, 3), "0");
    assert_eq!(Ratio::new(0, 0).display(), "0");
}

fn related_fixture() -> Store {
    let mut s = Store::new(catalog());
    let d = day(2020, 1, 1);
    let mut batch = Vec::new();
    for i in 0..5 {
        batch.push(triple("set_shifting", "prefrontal_cortex", &format!("x{i}"), 0, d));
    }
    for i in 0..2 {
        batch.push(triple("set_shifting", "dopamine", &format!("y{i}"), 0, d));
    }
    batch.push(triple("set_shifting", "hippocampus", "z0", 0, d));
    batch.push(triple("set_shifting", "hippocampus", "z0", 1, d));
    for i in 0..10 {
        batch.push(triple("prefrontal_cortex", "dopamine", &format!("w{i}"), 0, d));
    }
    s.insert_triples(batch).unwrap();
    s
}

#[test]
fn related_sorting_filtering_paging() {
    let s = related_fixture();
    let a: ConceptId = "set_shifting".into();
    let names = |rows: Vec<RelatedRow>| rows.into_iter().map(|r| r.concept.0).collect::<Vec<_>>();
    assert_eq!(
        names(s.related_concepts(&a, None, RelatedSort::Count, 10, 0).unwrap()),
        ["prefrontal_cortex", "dopamine", "hippocampus"]
    );
    assert_eq!(
        names(s.related_concepts(&a, Some(ConceptCategory::BrainRegion), RelatedSort::Count, 10, 0).unwrap()),
        ["prefrontal_cortex", "hippocampus"]
    );
    assert_eq!(names(s.related_concepts(&a, None, RelatedSort::Count, 1, 1).unwrap()), ["dopamine"]);
    assert!(s.related_concepts(&a, None, RelatedSort::Count, 5, 9).unwrap().is_empty());
    // P(A|B): hippocampus 2/2, prefrontal 5/15, dopamine 2/12
    assert_eq!(
        names(s.related_concepts(&a, None, RelatedSort::PAGivenB, 10, 0).unwrap()),
        ["hippocampus", "prefrontal_cortex", "dopamine"]
    );
    // dopamine and hippocampus tie on P(B|A) = 2/9; id order breaks it
    assert_eq!(
        names(s.related_concepts(&a, None, RelatedSort::PBGivenA, 10, 0).unwrap()),
        ["prefrontal_cortex", "dopamine", "hippocampus"]
    );
    let row = &s.related_concepts(&a, None, RelatedSort::Count, 1, 0).unwrap()[0];
    assert_eq!((row.p_a_given_b, row.p_b_given_a), (Ratio::new(5, 15), Ratio::new(5, 9)));
    assert!(s.related_concepts(&"ghost".into(), None, RelatedSort::Count, 1, 0).is_err());
}

#[test]
fn evidence_ordering() {
    let mut s = Store::new(catalog());
    s.insert_triples(vec![
        triple("a", "b", "late", 0, day(2021, 3, 1)),
        triple("a", "b", "early", 2, day(2019, 3, 1)),
        triple("a", "b", "early2", 0, day(2019, 3, 1)),
    ])
    .unwrap();
    let key = RelationKey::new("b".into(), "a".into()).unwrap();
    let arts = |o, l| s.evidence(&key, o, l, 0).unwrap().into_iter().map(|t| t.article_id).collect::<Vec<_>>();
    assert_eq!(arts(EvidenceOrder::PubDateAsc, 10), ["early", "early2", "late"]);
    assert_eq!(arts(EvidenceOrder::PubDateDesc, 10), ["late", "early", "early2"]);
    assert_eq!(arts(EvidenceOrder::PubDateAsc, 1), ["early"]);
    let missing = RelationKey::new("a".into(), "z".into()).unwrap();
    assert!(matches!(s.evidence(&missing, EvidenceOrder::PubDateAsc, 1, 0), Err(StoreError::UnknownRelation(..))));
    let summary = s.summary(&key).unwrap();
    assert_eq!((summary.count, summary.first_pub_date, summary.last_pub_date), (3, day(2019, 3, 1), day(2021, 3, 1)));
}

#[test]
fn triples_before_cutoff() {
    let mut s = Store::new(catalog());
    let old = vec![triple("a", "b", "1", 0, day(2018, 1, 1)), triple("b", "c", "2", 0, day(2019, 12, 31))];
    let new = vec![triple("a", "c", "3", 0, day(2021, 1, 1)), triple("a", "b", "4", 0, day(2022, 1, 1))];
    s.insert_triples(old.iter().chain(&new).cloned().collect()).unwrap();
    let mut oracle = Store::new(catalog());
    oracle.insert_triples(old).unwrap();
    assert_eq!(**s.triples_before(day(2020, 1, 1)).data(), **oracle.data());
    assert_eq!(s.triples_before(day(2030, 1, 1)).triple_count(), 4);
    assert_eq!(s.triples_before(day(2000, 1, 1)).triple_count(), 0);
}

#[test]
fn snapshots_are_isolated_and_numbered() {
    let mut s = Store::new(catalog());
    s.insert_triples(vec![triple("a", "b", "1", 0, day(2020, 1, 1))]).unwrap();
    let first = s.publish_snapshot(None);
    s.insert_triples(vec![triple("a", "b", "2", 0, day(2020, 1, 1)), triple("a", "c", "2", 0, day(2020, 1, 1))]).unwrap();
    assert_eq!(first.triple_count(), 1);
    assert_eq!(first.pair_count(&"a".into(), &"b".into()), 1);
    assert_eq!(first.graph.edge_count(), 1);
    let second = s.publish_snapshot(None);
    assert_eq!((first.id, second.id), (1, 2));
    assert_eq!(second.triple_count(), 3);
}

fn arb_batches() -> impl Strategy<Value = Vec<Vec<RelationTriple>>> {
    let concept = prop::sample::select(vec!["a", "b", "c", "d", "e"]);
    let t = (concept.clone(), concept, 0u8..6, 0u32..3, 2015i32..2023).prop_filter_map("self pair", |(a, b, art, s, y)| {
        (a != b).then(|| triple(a, b, &format!("art{art}"), s, day(y, 1, 1)))
    });
    prop::collection::vec(prop::collection::vec(t, 0..12), 1..6)
}

proptest! {
    #[test]
    fn bookkeeping_stays_consistent(batches in arb_batches()) {
        let mut s = Store::new(catalog());
        for b in batches {
            s.insert_triples(b).unwrap();
            prop_assert!(s.recount_consistent());
            let pair_sum: u64 = s.keys().map(|(_, c)| c).sum();
            let total_sum: u64 = s.all_stats().map(|st| st.total_relations).sum();
            prop_assert_eq!(2 * pair_sum, total_sum);
            for st in s.all_stats() {
                prop_assert!(st.total_relations >= st.partner_count);
            }
            for (k, c) in s.keys() {
                let pp = s.conditional_probability(&k.a, &k.b).unwrap();
                let r = pp.p_b_given_a();
                prop_assert!(r.value() >= 0.0 && r.value() <= 1.0);
                prop_assert_eq!(c, r.numerator);
                prop_assert_eq!(r.denominator, s.total_relations(&k.a));
            }
        }
    }

    #[test]
    fn incremental_equals_batch_of_latest_revisions(batches in arb_batches()) {
        // Each batch delivers whole articles; later deliveries revise earlier ones.
        let per_batch: Vec<Vec<(String, Vec<RelationTriple>)>> = batches
            .iter()
            .map(|b| {
                let mut m: std::collections::BTreeMap<String, Vec<RelationTriple>> = Default::default();
                for t in b {
                    m.entry(t.article_id.clone()).or_default().push(t.clone());
                }
                m.into_iter().collect()
            })
            .collect();
        let mut incremental = Store::new(catalog());
        for items in &per_batch {
            incremental.insert_articles(items.clone()).unwrap();
        }
        let mut latest: std::collections::BTreeMap<String, Vec<RelationTriple>> = Default::default();
        for items in &per_batch {
            for (a, ts) in items {
                latest.insert(a.clone(), ts.clone());
            }
        }
        let mut batch = Store::new(catalog());
        batch.insert_articles(latest).unwrap();
        prop_assert_eq!(&**incremental.data(), &**batch.data());
    }
}

#[test]
fn generation_round_trip_and_recovery() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = DataDir::open(tmp.path()).unwrap();
    let (mut store, mut log) = recover_store(&dir, catalog()).unwrap();
    assert_eq!(store.triple_count(), 0);

    let entries = vec![
        LogEntry { article_id: "1".into(), triples: vec![triple("a", "b", "1", 0, day(2020, 1, 1))] },
        LogEntry { article_id: "2".into(), triples: vec![] },
    ];
    store.insert_articles(entries.iter().map(|e| (e.article_id.clone(), e.triples.clone()))).unwrap();
    log.append(&entries).unwrap();
    let snap = store.publish_snapshot(None);
    let manifest = write_generation(&dir, &snap, log.len()).unwrap();
    assert_eq!(manifest.generation, 1);

    let late = LogEntry { article_id: "3".into(), triples: vec![triple("b", "c", "3", 0, day(2021, 1, 1))] };
    store.insert_articles([(late.article_id.clone(), late.triples.clone())]).unwrap();
    log.append(std::slice::from_ref(&late)).unwrap();
    drop(log);
    // Simulate a torn append.
    std::fs::OpenOptions::new()
        .append(true)
        .open(dir.log_path())
        .unwrap()
        .write_all(b"{\"article_id\":\"4\",\"tri")
        .unwrap();

    let loaded = load_snapshot(&dir, catalog()).unwrap().unwrap();
    assert_eq!(loaded.id, 1);
    assert_eq!(**loaded.data(), **snap.data());
    assert_eq!(loaded.article_count(), 2);

    let (recovered, log) = recover_store(&dir, catalog()).unwrap();
    assert_eq!(**recovered.data(), **store.data());
    assert_eq!(recovered.last_snapshot_id(), 1);
    assert_eq!(log.len(), std::fs::metadata(dir.log_path()).unwrap().len());
}

#[test]
fn writer_lock_is_exclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = DataDir::open(tmp.path()).unwrap();
    let guard = dir.lock().unwrap();
    assert!(matches!(dir.lock(), Err(PersistError::Locked(_))));
    drop(guard);
    assert!(dir.lock().is_ok());
}

use std::io::Write;
