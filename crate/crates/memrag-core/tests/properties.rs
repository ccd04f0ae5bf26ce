use memrag_core::embedding::{cosine, embed_text, TEXT_DIM};
use memrag_core::graph::Emg;
use memrag_core::memory::{EditCommand, EditKind, MemoryRecord, Triple};
use memrag_core::metrics::{bleu, rouge_l, rouge_n, QaScores};
use memrag_core::pipeline::UserModel;
use memrag_core::policy::PolicyNet;
use memrag_core::synth::{gen_corpus, gen_edit_stream, CorpusSpec, EditStreamSpec, CORPUS_EPOCH};
use memrag_core::{Action, EnvState, TransEConfig};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["the", "flight", "Paris", "at", "9", "boss", "hotel", "on", "Monday", "my"]).prop_map(String::from)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 0..12).prop_map(|w| w.join(" "))
}

fn small_user(seed: u64) -> UserModel {
    let spec = CorpusSpec { n_users: 1, memories_per_user: 30, seed, ..CorpusSpec::default() };
    let session = gen_corpus(&spec).unwrap().remove(0);
    UserModel::build(&session, &TransEConfig { epochs: 15, seed, ..TransEConfig::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_are_bounded_and_rouge_is_symmetric(a in sentence(), b in sentence()) {
        let s = QaScores::compute(&a, &b);
        for x in [s.rouge1, s.rouge2, s.rouge_l, s.bleu] {
            prop_assert!((0.0..=100.0 + 1e-9).contains(&x));
        }
        prop_assert!((rouge_l(&a, &b) - rouge_l(&b, &a)).abs() < 1e-9);
        prop_assert!((rouge_n(&a, &b, 1) - rouge_n(&b, &a, 1)).abs() < 1e-9);
    }

    #[test]
    fn identical_nonempty_texts_score_full(a in prop::collection::vec(word(), 1..12).prop_map(|w| w.join(" "))) {
        prop_assert!((rouge_l(&a, &a) - 100.0).abs() < 1e-9);
        prop_assert!((rouge_n(&a, &a, 1) - 100.0).abs() < 1e-9);
        prop_assert!((bleu(&a, &a) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn text_embeddings_are_deterministic_and_normalized(a in sentence()) {
        let e = embed_text(&a, TEXT_DIM);
        prop_assert_eq!(&e, &embed_text(&a, TEXT_DIM));
        let n = e.norm();
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        if n > 0.0 {
            prop_assert!((cosine(&e, &e).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn policy_outputs_a_distribution(seed in any::<u64>(), s in prop::array::uniform3(-1.0f64..1.0)) {
        let net = PolicyNet::new(seed);
        let state = EnvState::from_array(s);
        let (p_include, p_stop) = net.forward(&state).unwrap();
        prop_assert!((p_include + p_stop - 1.0).abs() < 1e-12);
        prop_assert!((net.prob(&state, Action::Include).unwrap() - p_include).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_edits_keep_graph_invariants(
        seed in 0u64..1000,
        ops in prop::collection::vec((0u8..4, 0usize..64, 0u32..30, 0i64..90), 1..40),
    ) {
        let mut user = small_user(seed);
        let names: Vec<String> = user.emg.entities().map(|e| e.name.clone()).collect();
        for (i, (kind, pick, tail, day)) in ops.into_iter().enumerate() {
            let head = names[pick % names.len()].clone();
            let at = CORPUS_EPOCH.plus_days(day);
            if kind == 3 {
                let before = user.emg.active_count();
                let swept = user.emg.sweep_expired(at);
                prop_assert_eq!(user.emg.active_count(), before - swept);
                prop_assert_eq!(user.emg.sweep_expired(at), 0);
            } else {
                let rec = MemoryRecord::new(format!("p{i}"), format!("{head} likes item {tail}."), Triple::new(head, "likes", format!("item {tail}")), at);
                let (kind, rec) = match kind {
                    0 => (EditKind::Insertion, rec),
                    1 => (EditKind::Deletion, rec.with_expiry(at.plus_days(2))),
                    _ => (EditKind::Replacement, rec),
                };
                let cmd = EditCommand::new(kind, rec, at).unwrap();
                let before = user.emg.clone();
                match user.emg.apply_edit(&cmd, &user.transe) {
                    Ok(out) => {
                        prop_assert!(user.emg.is_active(&cmd.payload.id));
                        for id in &out.memories_retired {
                            prop_assert!(!user.emg.is_active(id));
                        }
                    }
                    Err(_) => prop_assert_eq!(&user.emg, &before),
                }
            }
            prop_assert_eq!(user.emg.check_invariants(), Ok(()));
        }
    }
}

#[test]
fn generated_edit_streams_apply_cleanly() {
    let spec = CorpusSpec { n_users: 3, memories_per_user: 60, seed: 5, ..CorpusSpec::default() };
    let sessions = gen_corpus(&spec).unwrap();
    let stream = gen_edit_stream(&EditStreamSpec { seed: 5, ..EditStreamSpec::default() }, &sessions).unwrap();
    let mut users: Vec<UserModel> =
        sessions.iter().map(|s| UserModel::build(s, &TransEConfig { epochs: 20, ..TransEConfig::default() }).unwrap()).collect();
    for e in &stream.edits {
        let u = users.iter_mut().find(|u| u.user_id == e.user_id).unwrap();
        u.emg.apply_edit(&e.command, &u.transe).unwrap();
        u.emg.check_invariants().unwrap();
    }
}

#[test]
fn empty_graph_accepts_first_memory() {
    let mut g = Emg::empty("me", TEXT_DIM);
    let transe = memrag_core::TransEModel::from_tables(Default::default(), Default::default(), 8);
    let rec = MemoryRecord::new("m1", "My sister is Ada.", Triple::new("I", "sister is", "Ada"), CORPUS_EPOCH);
    g.apply_edit(&EditCommand::new(EditKind::Insertion, rec, CORPUS_EPOCH).unwrap(), &transe).unwrap();
    assert_eq!(g.active_count(), 1);
    assert_eq!(g.check_invariants(), Ok(()));
}
