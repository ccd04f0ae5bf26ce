//! The experiment commands. Each reads the artifacts of the previous stage
//! from the run directory and writes its own.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use memrag_core::env::EnvConfig;
use memrag_core::generation::{AnswerCache, Generator, Scorer};
use memrag_core::memory::Session;
use memrag_core::metrics::Metric;
use memrag_core::pipeline::{
    ablate, answer_query, collect_ws_samples, eval_entities, eval_qa, entity_queries, run_edit_experiment, train_pg,
    QaReport, QueryOutcome, Selector, UserModel, Variant,
};
use memrag_core::policy::{warm_start, PolicyNet};
use memrag_core::synth::{gen_af_us_queries, gen_corpus, gen_edit_stream, EditStream, EntityQuery, UserEdit, WeekState};
use serde::{Deserialize, Serialize};

use crate::config::{GeneratorConfig, RunConfig};
use crate::io::{read_cache, read_corpus, read_json, read_jsonl, sha256_file, write_cache, write_corpus, write_json, write_jsonl};
use crate::remote::RemoteGenerator;
use crate::report::{
    AblationReport, EditsReport, EvalReport, KRow, MethodEval, ParamKReport, Provenance, TrainCurves, TrainSummary,
    CODE_VERSION,
};
use crate::snapshot::{graph_path, load_checkpoint, load_user, save_checkpoint, save_user, Checkpoint};

/// PG episodes between checkpoint writes.
pub const CHECKPOINT_EVERY: usize = 10;

pub const METHOD_EMG: &str = "EMG-RAG";
pub const METHOD_NAIVE: &str = "Naive Top-K";

/// File names inside a run directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }
    pub fn edits(&self) -> PathBuf {
        self.root.join("edits.jsonl")
    }
    pub fn weeks(&self) -> PathBuf {
        self.root.join("edit_weeks.json")
    }
    pub fn queries(&self) -> PathBuf {
        self.root.join("entity_queries.jsonl")
    }
    pub fn graphs(&self) -> PathBuf {
        self.root.join("graphs")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("policy.json")
    }
    pub fn curves(&self) -> PathBuf {
        self.root.join("train_curves.json")
    }
    pub fn train_summary(&self) -> PathBuf {
        self.root.join("train_summary.json")
    }
    pub fn outcomes(&self) -> PathBuf {
        self.root.join("eval_outcomes.jsonl")
    }
    pub fn cache(&self) -> PathBuf {
        self.root.join("answer_cache.jsonl")
    }
    /// `<name>.json` and `<name>.txt`.
    pub fn report(&self, name: &str) -> (PathBuf, PathBuf) {
        (self.root.join(format!("{name}.json")), self.root.join(format!("{name}.txt")))
    }
}

/// Applies `f` to every item on a scoped thread pool, keeping order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if items.is_empty() {
        return Vec::new();
    }
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len());
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub users: usize,
    pub test_users: usize,
    pub memories: usize,
    pub qa_pairs: usize,
    pub edits: usize,
    pub entity_queries: usize,
    /// SHA-256 of every generated file, by file name.
    pub files: BTreeMap<String, String>,
}

/// Generates the corpus, the edit stream over the held-out users and their
/// entity queries.
pub fn gen_data(cfg: &RunConfig) -> Result<Manifest> {
    let layout = Layout::new(&cfg.out_dir);
    let sessions = gen_corpus(&cfg.corpus)?;
    let test = &sessions[cfg.split()..];
    let stream = gen_edit_stream(&cfg.edits, test)?;
    let queries = gen_af_us_queries(test);

    std::fs::create_dir_all(&layout.root).with_context(|| format!("creating {}", layout.root.display()))?;
    std::fs::write(layout.config(), cfg.to_toml()?)?;
    write_corpus(&layout.corpus(), &sessions)?;
    write_jsonl(&layout.edits(), &stream.edits)?;
    write_json(&layout.weeks(), &stream.weeks)?;
    write_jsonl(&layout.queries(), &queries)?;

    let mut files = BTreeMap::new();
    for p in [layout.config(), layout.corpus(), layout.edits(), layout.weeks(), layout.queries()] {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.insert(name, sha256_file(&p)?);
    }
    let manifest = Manifest {
        config_hash: cfg.hash(),
        code_version: CODE_VERSION.into(),
        seed: cfg.seed,
        users: sessions.len(),
        test_users: test.len(),
        memories: sessions.iter().map(|s| s.memories.len()).sum(),
        qa_pairs: sessions.iter().map(|s| s.qa_pairs.len()).sum(),
        edits: stream.edits.len(),
        entity_queries: queries.len(),
        files,
    };
    write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}

pub fn read_stream(layout: &Layout) -> Result<EditStream> {
    let edits: Vec<UserEdit> = read_jsonl(&layout.edits())?;
    let weeks: Vec<WeekState> = read_json(&layout.weeks())?;
    Ok(EditStream { edits, weeks })
}

fn read_sessions(cfg: &RunConfig) -> Result<Vec<Session>> {
    let sessions = read_corpus(&Layout::new(&cfg.out_dir).corpus()).context("run gen-data first")?;
    if sessions.len() != cfg.corpus.n_users {
        bail!("corpus holds {} users but the config asks for {}", sessions.len(), cfg.corpus.n_users);
    }
    Ok(sessions)
}

/// Trains TransE and builds the graph of every user, in parallel.
pub fn build(cfg: &RunConfig) -> Result<usize> {
    let layout = Layout::new(&cfg.out_dir);
    let sessions = read_sessions(cfg)?;
    let dir = layout.graphs();
    std::fs::create_dir_all(&dir)?;
    let results = par_map(&sessions, |s| -> Result<()> {
        let user = UserModel::build(s, &cfg.transe).with_context(|| format!("building {}", s.user_id))?;
        save_user(&graph_path(&dir, &s.user_id), &user)
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(sessions.len())
}

/// Loads the graphs of the users at positions `range` of the corpus.
pub fn load_users(cfg: &RunConfig, range: Range<usize>) -> Result<Vec<UserModel>> {
    let dir = Layout::new(&cfg.out_dir).graphs();
    let sessions = read_sessions(cfg)?;
    let ids: Vec<&str> = sessions[range].iter().map(|s| s.user_id.as_str()).collect();
    let loaded = par_map(&ids, |id| load_user(&graph_path(&dir, id)).context("run build first"));
    loaded.into_iter().collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainArgs {
    /// Continue from the checkpoint in the run directory.
    pub resume: bool,
    /// Stop after this many PG episodes in this invocation.
    pub max_episodes: Option<usize>,
}

/// Warm start then policy gradient on the training users, checkpointing
/// every [`CHECKPOINT_EVERY`] episodes.
pub fn train(cfg: &RunConfig, args: TrainArgs) -> Result<TrainSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let users = load_users(cfg, 0..cfg.split())?;
    let opts = cfg.train_options();
    opts.train.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let hash = cfg.hash();

    let (mut ckpt, mut curves) = if args.resume && layout.checkpoint().exists() {
        let ckpt = load_checkpoint(&layout.checkpoint())?;
        if ckpt.config_hash != hash {
            bail!("checkpoint was written under config {} but the current config is {hash}", ckpt.config_hash);
        }
        let curves: TrainCurves = if layout.curves().exists() { read_json(&layout.curves())? } else { TrainCurves::default() };
        (ckpt, curves)
    } else {
        (Checkpoint::new(hash, PolicyNet::new(opts.train.seed), false, 0), TrainCurves::default())
    };
    if curves.pg.len() != ckpt.pg_done {
        curves.pg.truncate(ckpt.pg_done);
    }

    if !ckpt.ws_done {
        if opts.train.ws_episodes > 0 {
            let samples = collect_ws_samples(&users, &opts.env, opts.ws_sampling)?;
            if samples.is_empty() {
                bail!("warm start visited no states");
            }
            let ws = warm_start(&mut ckpt.net, &samples, &opts.train).map_err(|e| anyhow::anyhow!("{e}"))?;
            curves.ws_samples = samples.len();
            curves.ws_accuracy = Some(ws.accuracy);
            curves.ws_losses = ws.losses;
        }
        ckpt.ws_done = true;
        save_checkpoint(&layout.checkpoint(), &ckpt)?;
        write_json(&layout.curves(), &curves)?;
    }

    let total = opts.train.pg_episodes;
    let end = args.max_episodes.map_or(total, |m| total.min(ckpt.pg_done + m));
    while ckpt.pg_done < end {
        let n = CHECKPOINT_EVERY.min(end - ckpt.pg_done);
        let steps = train_pg(&mut ckpt.net, &users, &opts, ckpt.pg_done, n)?;
        curves.pg.extend(steps);
        ckpt.pg_done += n;
        save_checkpoint(&layout.checkpoint(), &ckpt)?;
        write_json(&layout.curves(), &curves)?;
    }

    let returns: Vec<f64> = curves.pg.iter().map(|s| s.return_0).collect();
    let summary = TrainSummary {
        provenance: Provenance::of(cfg),
        train_users: users.len(),
        ws_samples: curves.ws_samples,
        ws_final_loss: curves.ws_losses.last().copied(),
        ws_accuracy: curves.ws_accuracy,
        pg_episodes: ckpt.pg_done,
        pg_first10_return: mean(returns.iter().take(10).copied()),
        pg_last10_return: mean(returns.iter().rev().take(10).copied()),
    };
    write_json(&layout.train_summary(), &summary)?;
    Ok(summary)
}

/// Loads the trained policy, refusing one written under another config.
pub fn load_policy(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = Layout::new(&cfg.out_dir).checkpoint();
    let ckpt = load_checkpoint(&path).context("run train first")?;
    if ckpt.config_hash != cfg.hash() {
        bail!(
            "{} was trained under config {} but the current config is {}",
            path.display(),
            ckpt.config_hash,
            cfg.hash()
        );
    }
    Ok(ckpt)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OutcomeLine {
    method: String,
    #[serde(flatten)]
    outcome: QueryOutcome,
}

fn timed(f: impl FnOnce() -> Result<QueryOutcome>) -> Result<QueryOutcome> {
    let t0 = Instant::now();
    let mut o = f()?;
    o.seconds = Some(t0.elapsed().as_secs_f64());
    Ok(o)
}

/// Each user's QA set answered by both methods with the mock generator.
fn mock_qa(users: &[UserModel], net: &PolicyNet, env: &EnvConfig, k: usize) -> Result<(Vec<QueryOutcome>, Vec<QueryOutcome>)> {
    let per_user = par_map(users, |user| -> Result<(Vec<QueryOutcome>, Vec<QueryOutcome>)> {
        let oracle = user.oracle();
        let mut scorer = Scorer::new(&oracle, Metric::RougeL);
        let mut emg = Vec::new();
        let mut naive = Vec::new();
        for qa in &user.qa_pairs {
            emg.push(timed(|| Ok(answer_query(user, qa, &mut scorer, Selector::Policy(net), env)?))?);
            naive.push(timed(|| Ok(answer_query(user, qa, &mut scorer, Selector::TopK(k), env)?))?);
        }
        Ok((emg, naive))
    });
    let mut emg = Vec::new();
    let mut naive = Vec::new();
    for r in per_user {
        let (e, n) = r?;
        emg.extend(e);
        naive.extend(n);
    }
    Ok((emg, naive))
}

/// Both methods through a remote generator, memoized in the run's cache file.
fn remote_qa(
    layout: &Layout,
    users: &[UserModel],
    net: &PolicyNet,
    env: &EnvConfig,
    k: usize,
    generator: &dyn Generator,
    metric: Metric,
) -> Result<(Vec<QueryOutcome>, Vec<QueryOutcome>)> {
    let cache = if layout.cache().exists() { read_cache(&layout.cache())? } else { AnswerCache::new() };
    let mut scorer = Scorer::with_cache(generator, metric, cache);
    let mut emg = Vec::new();
    let mut naive = Vec::new();
    let mut failure = None;
    'users: for user in users {
        for qa in &user.qa_pairs {
            let a = timed(|| Ok(answer_query(user, qa, &mut scorer, Selector::Policy(net), env)?));
            let b = a.and_then(|a| {
                emg.push(a);
                timed(|| Ok(answer_query(user, qa, &mut scorer, Selector::TopK(k), env)?))
            });
            match b {
                Ok(b) => naive.push(b),
                Err(e) => {
                    failure = Some(e);
                    break 'users;
                }
            }
        }
    }
    if let Some(cache) = scorer.into_cache() {
        write_cache(&layout.cache(), &cache)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok((emg, naive)),
    }
}

/// Greedy policy against the Top-K baseline on the held-out users.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let layout = Layout::new(&cfg.out_dir);
    let ckpt = load_policy(cfg)?;
    let users = load_users(cfg, cfg.split()..cfg.corpus.n_users)?;
    let env = cfg.env();
    let (emg_out, naive_out) = match &cfg.generator {
        GeneratorConfig::Mock => mock_qa(&users, &ckpt.net, &env, cfg.k)?,
        GeneratorConfig::Remote { model, timeout_secs, max_in_flight, retries } => {
            let generator = RemoteGenerator::from_env(model, Duration::from_secs(*timeout_secs), *retries, *max_in_flight)?;
            remote_qa(&layout, &users, &ckpt.net, &env, cfg.k, &generator, cfg.metric)?
        }
    };
    let queries: Vec<EntityQuery> =
        if layout.queries().exists() { read_jsonl(&layout.queries())? } else { entity_queries(&users) };
    let (emg_ent, _) = eval_entities(&users, &queries, Selector::Policy(&ckpt.net), &env)?;
    let (naive_ent, _) = eval_entities(&users, &queries, Selector::TopK(cfg.k), &env)?;

    let secs = |os: &[QueryOutcome]| median(os.iter().filter_map(|o| o.seconds).collect());
    let report = EvalReport {
        provenance: Provenance::of(cfg),
        test_users: users.len(),
        methods: vec![
            MethodEval {
                method: METHOD_EMG.into(),
                qa: QaReport::from_outcomes(&emg_out),
                entities: emg_ent,
                median_seconds: secs(&emg_out),
            },
            MethodEval {
                method: METHOD_NAIVE.into(),
                qa: QaReport::from_outcomes(&naive_out),
                entities: naive_ent,
                median_seconds: secs(&naive_out),
            },
        ],
    };
    let lines = emg_out
        .into_iter()
        .map(|o| OutcomeLine { method: METHOD_EMG.into(), outcome: o })
        .chain(naive_out.into_iter().map(|o| OutcomeLine { method: METHOD_NAIVE.into(), outcome: o }));
    write_jsonl(&layout.outcomes(), lines)?;
    write_report(&layout, "eval", &report, &report.to_table())?;
    Ok(report)
}

fn write_report<T: Serialize>(layout: &Layout, name: &str, report: &T, table: &str) -> Result<()> {
    let (json, txt) = layout.report(name);
    write_json(&json, report)?;
    std::fs::write(&txt, table).with_context(|| format!("writing {}", txt.display()))
}

/// Replays the edit stream week by week for both methods.
pub fn edits_exp(cfg: &RunConfig) -> Result<EditsReport> {
    let layout = Layout::new(&cfg.out_dir);
    let ckpt = load_policy(cfg)?;
    let stream = read_stream(&layout)?;
    let users = load_users(cfg, cfg.split()..cfg.corpus.n_users)?;
    let env = cfg.env();
    let mut a = users.clone();
    let emg = run_edit_experiment(&mut a, &stream, Selector::Policy(&ckpt.net), &env)?;
    let mut b = users;
    let naive = run_edit_experiment(&mut b, &stream, Selector::TopK(cfg.k), &env)?;
    let report = EditsReport {
        provenance: Provenance::of(cfg),
        methods: vec![(METHOD_EMG.into(), emg), (METHOD_NAIVE.into(), naive)],
    };
    write_report(&layout, "edits", &report, &report.to_table())?;
    Ok(report)
}

/// Retrains every variant from the same seeds and scores it on the held-out users.
pub fn ablation(cfg: &RunConfig) -> Result<AblationReport> {
    let layout = Layout::new(&cfg.out_dir);
    let train_users = load_users(cfg, 0..cfg.split())?;
    let test_users = load_users(cfg, cfg.split()..cfg.corpus.n_users)?;
    let rows = ablate(&train_users, &test_users, &cfg.train_options(), &Variant::ALL)?;
    let (naive, _) = eval_qa(&test_users, Selector::TopK(cfg.k), &cfg.env(), None)?;
    let report = AblationReport { provenance: Provenance::of(cfg), naive, rows };
    write_report(&layout, "ablation", &report, &report.to_table())?;
    Ok(report)
}

/// Sweeps the number of activated nodes. Every query is timed for each K
/// in turn, `repeats` times; the fastest repeat counts and the median over
/// queries is reported.
pub fn param_k_sweep(users: &[UserModel], net: &PolicyNet, base: &EnvConfig, ks: &[usize], repeats: usize) -> Result<Vec<KRow>> {
    let envs: Vec<EnvConfig> = ks.iter().map(|&k| EnvConfig { k, ..*base }).collect();
    let mut outcomes: Vec<Vec<QueryOutcome>> = vec![Vec::new(); ks.len()];
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    for user in users {
        let oracle = user.oracle();
        let mut scorer = Scorer::new(&oracle, Metric::RougeL);
        for qa in &user.qa_pairs {
            let mut fastest = vec![f64::INFINITY; ks.len()];
            for r in 0..repeats.max(1) {
                for (i, env) in envs.iter().enumerate() {
                    let t0 = Instant::now();
                    let o = answer_query(user, qa, &mut scorer, Selector::Policy(net), env)?;
                    fastest[i] = fastest[i].min(t0.elapsed().as_secs_f64());
                    if r == 0 {
                        outcomes[i].push(o);
                    }
                }
            }
            for (i, t) in fastest.into_iter().enumerate() {
                best[i].push(t);
            }
        }
    }
    Ok(ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let qa = QaReport::from_outcomes(&outcomes[i]);
            KRow {
                k,
                recall: qa.recall,
                rouge_l: qa.scores.rouge_l,
                mean_decisions: mean(outcomes[i].iter().map(|o| o.decisions as f64)).unwrap_or(0.0),
                median_seconds: median(best[i].clone()),
            }
        })
        .collect())
}

pub fn param_k(cfg: &RunConfig) -> Result<ParamKReport> {
    let layout = Layout::new(&cfg.out_dir);
    let ckpt = load_policy(cfg)?;
    let users = load_users(cfg, cfg.split()..cfg.corpus.n_users)?;
    let rows = param_k_sweep(&users, &ckpt.net, &cfg.env(), &cfg.k_values, cfg.timing_repeats)?;
    let report = ParamKReport { provenance: Provenance::of(cfg), rows };
    write_report(&layout, "param_k", &report, &report.to_table())?;
    Ok(report)
}

/// Path of a user's graph in the run directory.
pub fn user_graph(cfg: &RunConfig, user_id: &str) -> PathBuf {
    graph_path(&Layout::new(&cfg.out_dir).graphs(), user_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<u32> = (0..103).collect();
        assert_eq!(par_map(&xs, |x| x * 2), xs.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(par_map(&Vec::<u32>::new(), |x| *x).is_empty());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(Vec::new()), 0.0);
    }
}
