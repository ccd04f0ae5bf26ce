use memrag::io::{read_cache, read_corpus, read_jsonl, write_cache, write_corpus, write_jsonl};
use memrag::snapshot::{load_checkpoint, load_user, save_checkpoint, save_user, Checkpoint, GraphSnapshot};
use memrag_core::generation::{AnswerCache, CacheKey, CachedAnswer};
use memrag_core::pipeline::UserModel;
use memrag_core::policy::PolicyNet;
use memrag_core::synth::{gen_corpus, CorpusSpec};
use memrag_core::TransEConfig;
use proptest::prelude::*;
use serde_json::Value;

fn spec(seed: u64, users: usize) -> CorpusSpec {
    CorpusSpec { n_users: users, memories_per_user: 25, seed, ..CorpusSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn corpus_round_trips(seed in any::<u64>(), users in 1usize..4) {
        let sessions = gen_corpus(&spec(seed, users)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&path, &sessions).unwrap();
        prop_assert_eq!(read_corpus(&path).unwrap(), sessions);
    }

    #[test]
    fn cache_round_trips(entries in prop::collection::vec(("[a-z]{1,8}", prop::collection::vec("m[0-9]{1,3}", 0..4), "[a-z ]{0,20}", 0.0f64..100.0), 0..20)) {
        let cache = AnswerCache::from_iter(entries.iter().map(|(q, ids, a, s)| {
            let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            (CacheKey::new(q.as_str(), &ids), CachedAnswer { answer: a.clone(), score: *s })
        }));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        write_cache(&path, &cache).unwrap();
        let back = read_cache(&path).unwrap();
        prop_assert_eq!(back.len(), cache.len());
        for ((k1, v1), (k2, v2)) in cache.iter().zip(back.iter()) {
            prop_assert_eq!(k1, k2);
            prop_assert_eq!(&v1.answer, &v2.answer);
            prop_assert_eq!(v1.score.to_bits(), v2.score.to_bits());
        }
    }
}

#[test]
fn corpus_lines_are_tagged() {
    let sessions = gen_corpus(&spec(3, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&path, &sessions).unwrap();
    let lines: Vec<Value> = read_jsonl(&path).unwrap();
    let mem = lines.iter().filter(|l| l["type"] == "memory").count();
    let qa = lines.iter().filter(|l| l["type"] == "qa").count();
    assert_eq!((mem, qa), (sessions[0].memories.len(), sessions[0].qa_pairs.len()));
    assert!(lines.iter().all(|l| l["user_id"] == sessions[0].user_id.as_str()));
}

#[test]
fn malformed_lines_report_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\"a\": 1}\n\nnot json\n").unwrap();
    let err = read_jsonl::<Value>(&path).unwrap_err();
    assert!(format!("{err:#}").contains("bad.jsonl:3"), "{err:#}");
    write_jsonl(&path, [1, 2, 3]).unwrap();
    assert_eq!(read_jsonl::<u32>(&path).unwrap(), vec![1, 2, 3]);
}

#[test]
fn graph_snapshot_is_bit_exact() {
    let session = gen_corpus(&spec(11, 1)).unwrap().remove(0);
    let user = UserModel::build(&session, &TransEConfig { epochs: 30, ..TransEConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    save_user(&path, &user).unwrap();
    let back = load_user(&path).unwrap();
    assert_eq!(back.emg, user.emg);
    assert_eq!(back.transe, user.transe);
    assert_eq!(back.qa_pairs, user.qa_pairs);
    let bits = |u: &UserModel| -> Vec<u64> {
        u.transe.entities.values().flat_map(|v| v.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
    };
    assert_eq!(bits(&back), bits(&user));
    // saving the restored graph reproduces the file byte for byte
    let again = dir.path().join("g2.json");
    save_user(&again, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn snapshots_with_a_foreign_header_are_rejected() {
    let session = gen_corpus(&spec(12, 1)).unwrap().remove(0);
    let user = UserModel::build(&session, &TransEConfig { epochs: 5, ..TransEConfig::default() }).unwrap();
    let mut snap = GraphSnapshot::of(&user);
    snap.version = 99;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    std::fs::write(&path, serde_json::to_string(&snap).unwrap()).unwrap();
    assert!(load_user(&path).is_err());
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn checkpoint_round_trips_with_optimizer_state() {
    let mut net = PolicyNet::new(5);
    net.apply_gradient(&vec![0.1; net.params.len()], 0.01).unwrap();
    let ckpt = Checkpoint::new("abc", net, true, 30);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.net.adam.t, 1);
}
