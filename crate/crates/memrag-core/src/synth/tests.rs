use super::*;
use crate::generation::{Generator, MockOracle};
use crate::metrics::rouge_l;

fn small(seed: u64) -> CorpusSpec {
    CorpusSpec { n_users: 4, memories_per_user: 60, seed, ..CorpusSpec::default() }
}

fn connected(triples: &[&Triple]) -> bool {
    // union of entity names, ignoring the user node
    let mut groups: Vec<BTreeSet<String>> = Vec::new();
    for t in triples {
        let mut g: BTreeSet<String> = BTreeSet::new();
        for e in [&t.head, &t.tail] {
            if !is_self(e) {
                g.insert(e.clone());
            }
        }
        let (touching, rest): (Vec<_>, Vec<_>) = groups.into_iter().partition(|x| !x.is_disjoint(&g));
        for x in touching {
            g.extend(x);
        }
        groups = rest;
        groups.push(g);
    }
    groups.len() <= 1
}

#[test]
fn generation_is_deterministic() {
    let a = gen_corpus(&small(5)).unwrap();
    let b = gen_corpus(&small(5)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, gen_corpus(&small(6)).unwrap());
    // a user does not depend on how many others are generated
    assert_eq!(gen_users(&small(5), 2..3).unwrap()[0], a[2]);
}

#[test]
fn sizes_and_ids() {
    let spec = CorpusSpec { n_users: 3, seed: 1, ..CorpusSpec::default() };
    let corpus = gen_corpus(&spec).unwrap();
    assert_eq!(corpus.len(), 3);
    for (i, s) in corpus.iter().enumerate() {
        assert_eq!(s.user_id, format!("user-{i:03}"));
        assert_eq!(s.memories.len(), 100);
        s.validate().unwrap();
        assert!(s.memories.iter().all(|m| m.id.starts_with(&s.user_id)));
        assert!(s.memories.iter().all(|m| m.created_at >= CORPUS_EPOCH && m.created_at < CORPUS_EPOCH.plus_days(90)));
        assert!(s.memories.iter().all(|m| m.subclass_hint.as_deref().is_some_and(taxonomy::is_subclass)));
    }
}

#[test]
fn referential_integrity_and_uniqueness() {
    for seed in 0..5 {
        for s in gen_corpus(&small(seed)).unwrap() {
            let texts: BTreeSet<&str> = s.memories.iter().map(|m| m.text.as_str()).collect();
            assert_eq!(texts.len(), s.memories.len(), "memory texts unique");
            let questions: BTreeSet<&str> = s.qa_pairs.iter().map(|q| q.question.as_str()).collect();
            assert_eq!(questions.len(), s.qa_pairs.len(), "questions unique");
            let mut required_pairs = BTreeSet::new();
            for qa in &s.qa_pairs {
                let t = qa.template.as_ref().unwrap();
                assert_eq!(t.render(), qa.answer);
                let mut ids = t.memory_ids();
                ids.sort();
                ids.dedup();
                let mut req = qa.required_memory_ids.clone();
                req.sort();
                assert_eq!(ids, req);
                for id in &req {
                    let m = s.memory(id).expect("required memory exists");
                    required_pairs.insert((m.triple.head.clone(), m.triple.relation.clone(), id.clone()));
                }
                assert!(qa.q_entity.is_some() && qa.q_relation.is_some());
            }
            // one required memory per (head, relation)
            let mut seen = BTreeSet::new();
            for (h, r, _) in &required_pairs {
                assert!(seen.insert((h.clone(), r.clone())), "duplicate chain edge {h} {r}");
            }
        }
    }
}

#[test]
fn chains_are_connected_and_hop_counts_match() {
    let corpus = gen_corpus(&CorpusSpec { n_users: 10, seed: 3, ..CorpusSpec::default() }).unwrap();
    let mut hops = [0usize; 3];
    for s in &corpus {
        for qa in &s.qa_pairs {
            let triples: Vec<&Triple> =
                qa.required_memory_ids.iter().map(|id| &s.memory(id).unwrap().triple).collect();
            assert!((1..=3).contains(&triples.len()));
            hops[triples.len() - 1] += 1;
            assert!(connected(&triples), "{}: {:?}", qa.question, triples);
        }
    }
    let total: usize = hops.iter().sum();
    let share = |h: usize| hops[h] as f64 / total as f64;
    // question shares track the requested hop mix loosely (chains of different
    // length use different memory budgets)
    assert!(share(0) > share(1) && share(1) > share(2) && share(2) > 0.05, "{hops:?}");
}

#[test]
fn three_hop_travel_chain_has_the_flight_shape() {
    let corpus = gen_corpus(&CorpusSpec { n_users: 10, seed: 11, ..CorpusSpec::default() }).unwrap();
    let mut found = 0;
    for s in &corpus {
        for qa in s.qa_pairs.iter().filter(|q| q.q_relation.as_deref() == Some("departs at")) {
            let rels: Vec<&str> =
                qa.required_memory_ids.iter().map(|id| s.memory(id).unwrap().triple.relation.as_str()).collect();
            let mut sorted = rels.clone();
            sorted.sort();
            assert_eq!(sorted, ["departs at", "flies on", "traveling to"]);
            assert!(qa.answer.contains(" departs at "));
            found += 1;
        }
    }
    assert!(found > 0);
}

#[test]
fn full_required_set_solves_every_question() {
    for s in gen_corpus(&small(9)).unwrap() {
        let oracle = MockOracle::from_session(&s);
        assert_eq!(oracle.len(), s.qa_pairs.len());
        for qa in &s.qa_pairs {
            let texts: Vec<&str> =
                qa.required_memory_ids.iter().map(|id| s.memory(id).unwrap().text.as_str()).collect();
            let got = oracle.generate(&qa.question, &texts).unwrap();
            assert_eq!(rouge_l(&got, &qa.answer), 100.0);
        }
    }
}

#[test]
fn distractor_share_follows_the_spec() {
    for ratio in [0.2, 0.4, 0.6] {
        let spec = CorpusSpec { n_users: 6, distractor_ratio: ratio, seed: 2, ..CorpusSpec::default() };
        let (mut free, mut all) = (0, 0);
        for s in gen_corpus(&spec).unwrap() {
            let required: BTreeSet<&str> =
                s.qa_pairs.iter().flat_map(|q| q.required_memory_ids.iter().map(String::as_str)).collect();
            free += s.memories.iter().filter(|m| !required.contains(m.id.as_str())).count();
            all += s.memories.len();
        }
        let got = free as f64 / all as f64;
        assert!((got - ratio).abs() < 0.06, "ratio {ratio}: {got}");
    }
}

#[test]
fn subclass_mix_restricts_chains() {
    let mut mix = BTreeMap::new();
    mix.insert(ARRANGEMENT.to_string(), 1.0);
    let spec = CorpusSpec { n_users: 2, memories_per_user: 40, subclass_mix: mix, seed: 4, ..CorpusSpec::default() };
    for s in gen_corpus(&spec).unwrap() {
        assert!(!s.qa_pairs.is_empty());
        for qa in &s.qa_pairs {
            let rel = qa.q_relation.as_deref().unwrap();
            assert!(
                ["departs at", "reservation is for", "scheduled at", "takes place at", "located at"].contains(&rel),
                "{rel}"
            );
        }
    }
}

#[test]
fn spec_validation() {
    assert!(CorpusSpec::default().validate().is_ok());
    let bad_hops = CorpusSpec { hop_distribution: [0.5, 0.5, 0.5], ..CorpusSpec::default() };
    assert!(bad_hops.validate().is_err());
    let bad_ratio = CorpusSpec { distractor_ratio: 1.0, ..CorpusSpec::default() };
    assert!(bad_ratio.validate().is_err());
    let mut mix = BTreeMap::new();
    mix.insert("Hobbies".to_string(), 1.0);
    assert!(CorpusSpec { subclass_mix: mix, ..CorpusSpec::default() }.validate().is_err());
    assert!(EditStreamSpec { kind_mix: [0.0, 1.0, 1.0], ..EditStreamSpec::default() }.validate().is_err());
}

#[test]
fn edit_stream_counts_and_consistency() {
    let corpus = gen_corpus(&CorpusSpec { n_users: 8, seed: 21, ..CorpusSpec::default() }).unwrap();
    let spec = EditStreamSpec { weekly_counts: vec![5, 12, 3, 8], ..EditStreamSpec::default() };
    let stream = gen_edit_stream(&spec, &corpus).unwrap();
    assert_eq!(stream, gen_edit_stream(&spec, &corpus).unwrap());
    assert_eq!(stream.weeks.len(), 4);
    for (w, n) in spec.weekly_counts.iter().enumerate() {
        let week: Vec<&UserEdit> = stream.edits_in_week(w + 1).collect();
        assert_eq!(week.len(), *n);
        let start = EDIT_EPOCH.plus_days(7 * w as i64);
        assert!(week.iter().all(|e| e.command.effective_at >= start && e.command.effective_at <= stream.weeks[w].end));
        assert!(week.iter().all(|e| e.command.validate().is_ok()));
    }
    let times: Vec<Timestamp> = stream.edits.iter().map(|e| e.command.effective_at).collect();
    assert!(times.windows(2).all(|p| p[0] <= p[1]));

    // replay per user and check the refreshed questions only use live memories
    let last = stream.weeks.last().unwrap();
    for s in &corpus {
        let mut records: BTreeMap<String, MemoryRecord> = s.memories.iter().map(|m| (m.id.clone(), m.clone())).collect();
        let mut retired = BTreeSet::new();
        for e in stream.edits.iter().filter(|e| e.user_id == s.user_id) {
            let p = &e.command.payload;
            if e.command.kind == EditKind::Replacement {
                let old: Vec<String> = records
                    .values()
                    .filter(|m| {
                        !retired.contains(&m.id) && m.triple.head == p.triple.head && m.triple.relation == p.triple.relation
                    })
                    .map(|m| m.id.clone())
                    .collect();
                assert_eq!(old.len(), 1, "replacement targets one live edge");
                retired.extend(old);
            }
            if e.command.kind == EditKind::Deletion {
                assert!(p.valid_until.is_some());
            }
            records.insert(p.id.clone(), p.clone());
        }
        for qa in &last.qa_pairs[&s.user_id] {
            for id in &qa.required_memory_ids {
                assert!(records.contains_key(id) && !retired.contains(id), "{id}");
            }
            assert_eq!(qa.template.as_ref().unwrap().render(), qa.answer);
        }
    }
    for sup in &last.superseded {
        let qa = last.qa_pairs[&sup.user_id].iter().find(|q| q.question == sup.question).unwrap();
        assert!(!qa.answer.contains(&sup.value), "{} still says {}", qa.question, sup.value);
    }
    let kinds: BTreeSet<EditKind> = stream.edits.iter().map(|e| e.command.kind).collect();
    assert_eq!(kinds.len(), 3);
}

#[test]
fn edit_stream_defaults_and_empty_corpus() {
    assert_eq!(EditStreamSpec::default().counts(), [25, 96, 21, 63]);
    let spec = EditStreamSpec { weekly_counts: vec![], weeks: 2, edits_per_week: 3, ..EditStreamSpec::default() };
    assert_eq!(spec.counts(), [3, 3]);
    let empty = gen_edit_stream(&spec, &[]).unwrap();
    assert!(empty.edits.is_empty());
    assert_eq!(empty.weeks.len(), 2);
}

#[test]
fn entity_queries_read_gold_from_memories() {
    let corpus = gen_corpus(&CorpusSpec { n_users: 10, seed: 13, ..CorpusSpec::default() }).unwrap();
    let queries = gen_af_us_queries(&corpus);
    assert!(!queries.is_empty());
    let kinds: BTreeSet<QueryKind> = queries.iter().map(|q| q.kind).collect();
    assert!(kinds.contains(&QueryKind::UsReminder) && kinds.contains(&QueryKind::UsTravel));
    for q in &queries {
        let s = corpus.iter().find(|s| s.user_id == q.user_id).unwrap();
        let oracle = {
            let mut o = MockOracle::new();
            assert!(o.register(&q.qa, |id| s.memory(id).map(|m| m.text.as_str())));
            o
        };
        let texts: Vec<&str> = q.qa.required_memory_ids.iter().map(|id| s.memory(id).unwrap().text.as_str()).collect();
        assert_eq!(oracle.generate(&q.qa.question, &texts).unwrap(), q.qa.answer);
        match q.kind {
            QueryKind::AfName => {
                assert_eq!(s.memory(&q.qa.required_memory_ids[0]).unwrap().triple.tail, q.qa.answer)
            }
            QueryKind::UsReminder => assert!(q.qa.answer.contains(" at ")),
            _ => {}
        }
        assert_eq!(q.kind.application() == "US", matches!(q.kind, QueryKind::UsReminder | QueryKind::UsTravel));
    }
}

#[test]
fn sentences_read_naturally() {
    assert_eq!(sentence("I", "favorite food is", "spicy food"), "My favorite food is spicy food.");
    assert_eq!(sentence("mom", "birthday is", "1961-04-02"), "My mom's birthday is on 1961-04-02.");
    assert_eq!(sentence("EK349 flight", "departs at", "01:40 on 2024-05-12"), "The EK349 flight departs at 01:40 on 2024-05-12.");
    assert_eq!(sentence("user", "walks", "daily"), "I walks daily.");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn any_seed_gives_a_valid_corpus(seed in any::<u64>(), n in 10usize..80, ratio in 0.0f64..0.8) {
            let spec = CorpusSpec { n_users: 2, memories_per_user: n, distractor_ratio: ratio, seed, ..CorpusSpec::default() };
            for s in gen_corpus(&spec).unwrap() {
                prop_assert!(s.memories.len() <= n);
                prop_assert!(s.validate().is_ok());
                for qa in &s.qa_pairs {
                    prop_assert!(qa.required_memory_ids.iter().all(|id| s.memory(id).is_some()));
                }
            }
        }
    }
}
