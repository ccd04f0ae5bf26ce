use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use memrag::commands::{self, Layout, TrainArgs};
use memrag::io::read_json;
use memrag::report::TrainCurves;
use memrag::snapshot::load_checkpoint;
use memrag::RunConfig;

const SMALL: &str = r#"
seed = 3
test_users = 2
timing_repeats = 1
k_values = [1, 3]

[corpus]
n_users = 6
memories_per_user = 30

[edits]
weekly_counts = [3, 4, 3, 4]

[train]
ws_episodes = 40
pg_episodes = 25

[transe]
epochs = 20
"#;

fn config(dir: &Path) -> RunConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, SMALL).unwrap();
    let mut cfg = RunConfig::load(&path).unwrap();
    cfg.out_dir = dir.join("out");
    cfg
}

fn prepared(dir: &Path) -> RunConfig {
    let cfg = config(dir);
    commands::gen_data(&cfg).unwrap();
    commands::build(&cfg).unwrap();
    cfg
}

#[test]
fn generation_is_deterministic_across_directories() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = commands::gen_data(&config(a.path())).unwrap();
    let mb = commands::gen_data(&config(b.path())).unwrap();
    assert_eq!(ma.config_hash, mb.config_hash);
    for (name, hash) in &ma.files {
        if name != "config.toml" {
            assert_eq!(Some(hash), mb.files.get(name), "{name}");
        }
    }
    assert_eq!((ma.users, ma.test_users), (6, 2));
    assert!(ma.edits > 0 && ma.entity_queries > 0);
}

#[test]
fn interrupted_training_resumes_to_the_same_policy() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (prepared(a.path()), prepared(b.path()));
    let full = commands::train(&ca, TrainArgs::default()).unwrap();

    let part = commands::train(&cb, TrainArgs { resume: false, max_episodes: Some(7) }).unwrap();
    assert_eq!(part.pg_episodes, 7);
    let rest = commands::train(&cb, TrainArgs { resume: true, max_episodes: None }).unwrap();
    assert_eq!(rest.pg_episodes, 25);

    let pa = load_checkpoint(&Layout::new(&ca.out_dir).checkpoint()).unwrap();
    let pb = load_checkpoint(&Layout::new(&cb.out_dir).checkpoint()).unwrap();
    assert_eq!(pa, pb);
    let curves_a: TrainCurves = read_json(&Layout::new(&ca.out_dir).curves()).unwrap();
    let curves_b: TrainCurves = read_json(&Layout::new(&cb.out_dir).curves()).unwrap();
    assert_eq!(curves_a, curves_b);
    assert_eq!(full.pg_first10_return, rest.pg_first10_return);
    assert_eq!(full.pg_last10_return, rest.pg_last10_return);
}

#[test]
fn experiments_write_reports_and_refuse_foreign_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared(dir.path());
    commands::train(&cfg, TrainArgs::default()).unwrap();
    let layout = Layout::new(&cfg.out_dir);

    let eval = commands::eval(&cfg).unwrap();
    assert_eq!(eval.methods.len(), 2);
    assert_eq!(eval.provenance.config_hash, cfg.hash());
    assert!(eval.methods.iter().all(|m| m.qa.questions > 0));
    assert!(std::fs::read_to_string(layout.outcomes()).unwrap().contains("\"trajectory\""));

    let edits = commands::edits_exp(&cfg).unwrap();
    assert_eq!(edits.methods[0].1.len(), 5);
    let k = commands::param_k(&cfg).unwrap();
    assert_eq!(k.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 3]);
    for name in ["eval", "edits", "param_k"] {
        let (json, txt) = layout.report(name);
        assert!(json.exists() && txt.exists(), "{name}");
    }

    let other = RunConfig { k: 2, ..cfg.clone() };
    let err = commands::eval(&other).unwrap_err();
    assert!(format!("{err:#}").contains("config"), "{err:#}");
    let resumed = commands::train(&other, TrainArgs { resume: true, max_episodes: None });
    assert!(resumed.is_err());
}

#[test]
fn ablation_covers_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared(dir.path());
    let report = commands::ablation(&cfg).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert!(report.to_table().contains("naive top-k"));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_memrag"))
}

#[test]
fn binary_generates_data_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let out = dir.path().join("out");

    let shown = bin().args(["--config"]).arg(&cfg_path).arg("show-config").output().unwrap();
    assert!(shown.status.success());
    let text = String::from_utf8(shown.stdout).unwrap();
    let parsed: RunConfig = toml::from_str(&text).unwrap();
    assert_eq!(parsed.corpus.n_users, 6);

    let gen = bin().arg("--config").arg(&cfg_path).arg("--out-dir").arg(&out).arg("gen-data").output().unwrap();
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(out.join("manifest.json").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "k = 0\n").unwrap();
    let failed = bin().arg("--config").arg(&bad).arg("show-config").output().unwrap();
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("k must be at least 1"));
}

#[test]
fn binary_repl_runs_a_script() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .arg("--out-dir")
        .arg(dir.path())
        .arg("repl")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let script = concat!(
        r#"insert {"id":"m1","text":"My boss is traveling to Amsterdam next month.","triple":{"head":"boss","relation":"traveling to","tail":"Amsterdam"},"created_at":"2024-05-01T09:00:00Z"}"#,
        "\n",
        "show amster\n",
        "ask Where is my boss traveling?\n",
        "quit\n",
        "show never-reached\n",
    );
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Insertion m1"), "{text}");
    assert!(text.contains("Amsterdam ["), "{text}");
    assert!(text.contains("traversal:"), "{text}");
    assert!(!text.contains("never-reached"), "{text}");
}
