//! End-to-end runs over a corpus: per-user graphs, two-stage policy
//! training, evaluation against a Top-K baseline, ablations and the weekly
//! edit experiment.
//!
//! Wall-clock measurement is the caller's business; evaluation accepts an
//! optional clock returning seconds.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::embed_text;
use crate::env::{run_episode, top_k_memories, Action, EnvConfig, EnvError, EpisodeContext, StartMode, Transition};
use crate::generation::{AnswerScorer, GenerateError, MockOracle, NoScore, Scorer, SelectedMemory};
use crate::graph::{build_emg, Emg, GraphError};
use crate::memory::{MemoryId, QaPair, Session};
use crate::metrics::{exact_match, Metric, QaScores};
use crate::policy::{pg_update, warm_start, LabeledState, NetPolicy, PgStep, PolicyError, PolicyNet, TrainConfig, WarmStartReport};
use crate::synth::{gen_af_us_queries, EditStream, EntityQuery, QueryKind};
use crate::transe::{train_transe, training_triples, TransEConfig, TransEError, TransEModel};

/// Separator between user id and question text in cache keys.
pub const QID_SEPARATOR: char = '\u{1f}';

pub fn question_id(user_id: &str, question: &str) -> String {
    format!("{user_id}{QID_SEPARATOR}{question}")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    TransE(#[from] TransEError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("no user {0:?}")]
    UnknownUser(String),
    #[error("nothing to train on: {0}")]
    NoTrainingData(&'static str),
}

/// One user's trained embeddings, graph and current question set.
#[derive(Clone, Debug)]
pub struct UserModel {
    pub user_id: String,
    pub transe: TransEModel,
    pub emg: Emg,
    pub qa_pairs: Vec<QaPair>,
}

impl UserModel {
    pub fn build(session: &Session, config: &TransEConfig) -> Result<Self, PipelineError> {
        let transe = train_transe(&training_triples(&session.memories), config)?;
        let emg = build_emg(session, &transe)?;
        Ok(UserModel { user_id: session.user_id.clone(), transe, emg, qa_pairs: session.qa_pairs.clone() })
    }

    /// Oracle knowing `qas`, with slot sources resolved through the graph.
    pub fn oracle_for(&self, qas: &[QaPair]) -> MockOracle {
        let mut oracle = MockOracle::new();
        for qa in qas {
            oracle.register(qa, |id| self.emg.memory(id).map(|m| m.record.text.as_str()));
        }
        oracle
    }

    pub fn oracle(&self) -> MockOracle {
        self.oracle_for(&self.qa_pairs)
    }
}

pub fn build_users(sessions: &[Session], config: &TransEConfig) -> Result<Vec<UserModel>, PipelineError> {
    sessions.iter().map(|s| UserModel::build(s, config)).collect()
}

/// How memories are picked for a question.
#[derive(Clone, Copy, Debug)]
pub enum Selector<'a> {
    /// Greedy traversal with a policy network.
    Policy(&'a PolicyNet),
    /// The `k` memories closest to the question, no traversal.
    TopK(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub user_id: String,
    pub question: String,
    pub selected: Vec<MemoryId>,
    pub answer: String,
    pub reference: String,
    /// Percent of required memories selected.
    pub recall: f64,
    /// Percent of selected memories that are required (0 for an empty selection).
    pub precision: f64,
    pub decisions: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Transition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

pub fn retrieval_stats(selected: &[MemoryId], required: &[MemoryId]) -> (f64, f64) {
    let sel: BTreeSet<&str> = selected.iter().map(String::as_str).collect();
    let req: BTreeSet<&str> = required.iter().map(String::as_str).collect();
    let hit = sel.intersection(&req).count() as f64;
    let recall = if req.is_empty() { 100.0 } else { 100.0 * hit / req.len() as f64 };
    let precision = if sel.is_empty() { 0.0 } else { 100.0 * hit / sel.len() as f64 };
    (recall, precision)
}

/// Selects memories for `qa` and generates an answer through `scorer`.
pub fn answer_query(
    user: &UserModel,
    qa: &QaPair,
    scorer: &mut dyn AnswerScorer,
    selector: Selector<'_>,
    env: &EnvConfig,
) -> Result<QueryOutcome, PipelineError> {
    let qid = question_id(&user.user_id, &qa.question);
    let (selected, answer, trajectory) = match selector {
        Selector::Policy(net) => {
            let mut policy = NetPolicy::greedy(net);
            let ep = run_episode(&user.emg, qa, &qid, &mut policy, scorer, env)?;
            (ep.selected, ep.final_answer, ep.trajectory)
        }
        Selector::TopK(k) => {
            let query = embed_text(&qa.question, user.emg.dim());
            let ids: Vec<MemoryId> = top_k_memories(&user.emg, &query, k).into_iter().map(|(id, _)| id).collect();
            let picked: Vec<SelectedMemory<'_>> = ids
                .iter()
                .filter_map(|id| user.emg.memory(id).map(|m| SelectedMemory { id, text: &m.record.text }))
                .collect();
            let (answer, _) = scorer.score(&qid, qa, &picked)?;
            (ids, answer, Vec::new())
        }
    };
    let (recall, precision) = retrieval_stats(&selected, &qa.required_memory_ids);
    Ok(QueryOutcome {
        user_id: user.user_id.clone(),
        question: qa.question.clone(),
        selected,
        answer,
        reference: qa.answer.clone(),
        recall,
        precision,
        decisions: trajectory.len(),
        trajectory,
        seconds: None,
    })
}

/// Mean QA scores and retrieval quality over a question set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub questions: usize,
    pub scores: QaScores,
    pub recall: f64,
    pub precision: f64,
    pub mean_selected: f64,
}

impl QaReport {
    pub fn from_outcomes(outcomes: &[QueryOutcome]) -> Self {
        let n = outcomes.len();
        if n == 0 {
            return QaReport::default();
        }
        let mut r = QaReport { questions: n, ..QaReport::default() };
        for o in outcomes {
            let s = QaScores::compute(&o.answer, &o.reference);
            r.scores.rouge1 += s.rouge1;
            r.scores.rouge2 += s.rouge2;
            r.scores.rouge_l += s.rouge_l;
            r.scores.bleu += s.bleu;
            r.recall += o.recall;
            r.precision += o.precision;
            r.mean_selected += o.selected.len() as f64;
        }
        let nf = n as f64;
        r.scores.rouge1 /= nf;
        r.scores.rouge2 /= nf;
        r.scores.rouge_l /= nf;
        r.scores.bleu /= nf;
        r.recall /= nf;
        r.precision /= nf;
        r.mean_selected /= nf;
        r
    }
}

/// Clock returning seconds; used to time each query when supplied.
pub type Clock<'a> = &'a dyn Fn() -> f64;

/// Answers every user's current question set.
pub fn eval_qa(
    users: &[UserModel],
    selector: Selector<'_>,
    env: &EnvConfig,
    clock: Option<Clock<'_>>,
) -> Result<(QaReport, Vec<QueryOutcome>), PipelineError> {
    let mut outcomes = Vec::new();
    for user in users {
        let oracle = user.oracle();
        let mut scorer = Scorer::new(&oracle, Metric::RougeL);
        for qa in &user.qa_pairs {
            let t0 = clock.map(|c| c());
            let mut o = answer_query(user, qa, &mut scorer, selector, env)?;
            if let (Some(c), Some(t0)) = (clock, t0) {
                o.seconds = Some(c() - t0);
            }
            outcomes.push(o);
        }
    }
    Ok((QaReport::from_outcomes(&outcomes), outcomes))
}

/// Exact-match accuracy (percent) per application; `None` when no query of
/// that kind exists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityReport {
    pub af: Option<f64>,
    pub us_reminder: Option<f64>,
    pub us_travel: Option<f64>,
    /// Unweighted mean of the two service scores that are present.
    pub us_mean: Option<f64>,
    pub counts: BTreeMap<QueryKind, usize>,
    pub recall: f64,
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Form-filling and service queries answered from each user's graph.
pub fn eval_entities(
    users: &[UserModel],
    queries: &[EntityQuery],
    selector: Selector<'_>,
    env: &EnvConfig,
) -> Result<(EntityReport, Vec<QueryOutcome>), PipelineError> {
    let by_id: BTreeMap<&str, &UserModel> = users.iter().map(|u| (u.user_id.as_str(), u)).collect();
    let mut grouped: BTreeMap<&str, Vec<&EntityQuery>> = BTreeMap::new();
    for q in queries {
        grouped.entry(q.user_id.as_str()).or_default().push(q);
    }
    let mut em: BTreeMap<QueryKind, Vec<f64>> = BTreeMap::new();
    let mut outcomes = Vec::new();
    for (uid, qs) in grouped {
        let user = by_id.get(uid).ok_or_else(|| PipelineError::UnknownUser(uid.to_string()))?;
        let qas: Vec<QaPair> = qs.iter().map(|q| q.qa.clone()).collect();
        let oracle = user.oracle_for(&qas);
        let mut scorer = Scorer::new(&oracle, Metric::RougeL);
        for q in qs {
            let o = answer_query(user, &q.qa, &mut scorer, selector, env)?;
            em.entry(q.kind).or_default().push(100.0 * f64::from(exact_match(&o.answer, &q.qa.answer)));
            outcomes.push(o);
        }
    }
    let af: Vec<f64> = em
        .iter()
        .filter(|(k, _)| k.application() == "AF")
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    let reminder = em.get(&QueryKind::UsReminder).and_then(|v| mean(v));
    let travel = em.get(&QueryKind::UsTravel).and_then(|v| mean(v));
    let present: Vec<f64> = [reminder, travel].into_iter().flatten().collect();
    let recall = mean(&outcomes.iter().map(|o| o.recall).collect::<Vec<_>>()).unwrap_or(0.0);
    Ok((
        EntityReport {
            af: mean(&af),
            us_reminder: reminder,
            us_travel: travel,
            us_mean: mean(&present),
            counts: em.iter().map(|(k, v)| (*k, v.len())).collect(),
            recall,
        },
        outcomes,
    ))
}

/// Entity queries built from each user's live memories.
pub fn entity_queries(users: &[UserModel]) -> Vec<EntityQuery> {
    let live: Vec<Session> = users.iter().map(|u| u.emg.active_session()).collect();
    gen_af_us_queries(&live)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub metric: Metric,
    #[serde(default)]
    pub ws_sampling: WsSampling,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            train: TrainConfig::default(),
            env: EnvConfig::default(),
            metric: Metric::RougeL,
            ws_sampling: WsSampling::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub ws_samples: usize,
    pub warm_start: Option<WarmStartReport>,
    pub pg: Vec<PgStep>,
}

impl TrainReport {
    pub fn pg_returns(&self) -> Vec<f64> {
        self.pg.iter().map(|s| s.return_0).collect()
    }
}

/// Which traversal supplies the warm-start states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WsSampling {
    /// Include every memory met.
    IncludeAll,
    /// Include exactly the required memories (the labels' own policy).
    #[default]
    Expert,
}

/// Labeled states from one traversal of every question.
pub fn collect_ws_samples(
    users: &[UserModel],
    env: &EnvConfig,
    sampling: WsSampling,
) -> Result<Vec<LabeledState>, PipelineError> {
    let mut samples = Vec::new();
    for user in users {
        for qa in &user.qa_pairs {
            let qid = question_id(&user.user_id, &qa.question);
            let mut ctx = EpisodeContext::new(&user.emg, qa, &qid, env, &mut NoScore)?;
            while let (Some(state), Some(id)) = (ctx.current_state(), ctx.current_memory()) {
                let required = qa.requires(id);
                samples.push(LabeledState { state, label: u8::from(required) });
                let action = match sampling {
                    WsSampling::IncludeAll => Action::Include,
                    WsSampling::Expert if required => Action::Include,
                    WsSampling::Expert => Action::Stop,
                };
                if ctx.step(action, &mut NoScore)?.done {
                    break;
                }
            }
        }
    }
    Ok(samples)
}

fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed ^ (episode as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Policy-gradient episodes `first..first + count`. Each episode samples a
/// question and actions from a generator seeded by (seed, episode), so a
/// run resumed at any episode continues exactly as an uninterrupted one.
pub fn train_pg(
    net: &mut PolicyNet,
    users: &[UserModel],
    opts: &TrainOptions,
    first: usize,
    count: usize,
) -> Result<Vec<PgStep>, PipelineError> {
    let pool: Vec<(usize, usize)> =
        users.iter().enumerate().flat_map(|(u, m)| (0..m.qa_pairs.len()).map(move |q| (u, q))).collect();
    if pool.is_empty() {
        return if count == 0 { Ok(Vec::new()) } else { Err(PipelineError::NoTrainingData("no questions")) };
    }
    let oracles: Vec<MockOracle> = users.iter().map(UserModel::oracle).collect();
    let mut scorers: Vec<Scorer<'_>> = oracles.iter().map(|o| Scorer::cached(o, opts.metric)).collect();
    let mut steps = Vec::with_capacity(count);
    for e in first..first + count {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(opts.train.seed, e));
        let (u, q) = pool[rng.gen_range(0..pool.len())];
        let user = &users[u];
        let qa = &user.qa_pairs[q];
        let qid = question_id(&user.user_id, &qa.question);
        let mut policy = NetPolicy::sampling(net, rng.gen());
        let ep = run_episode(&user.emg, qa, &qid, &mut policy, &mut scorers[u], &opts.env)?;
        if ep.trajectory.is_empty() {
            steps.push(PgStep { return_0: 0.0, loss: 0.0, updated: false });
            continue;
        }
        steps.push(pg_update(net, &ep.trajectory, &opts.train)?);
    }
    Ok(steps)
}

/// Warm start (when `ws_episodes > 0`) then policy gradient, from the
/// seeded initialisation.
pub fn train_policy(users: &[UserModel], opts: &TrainOptions) -> Result<(PolicyNet, TrainReport), PipelineError> {
    opts.train.validate()?;
    let mut net = PolicyNet::new(opts.train.seed);
    let mut report = TrainReport::default();
    if opts.train.ws_episodes > 0 {
        let samples = collect_ws_samples(users, &opts.env, opts.ws_sampling)?;
        if samples.is_empty() {
            return Err(PipelineError::NoTrainingData("no states visited"));
        }
        report.ws_samples = samples.len();
        report.warm_start = Some(warm_start(&mut net, &samples, &opts.train)?);
    }
    report.pg = train_pg(&mut net, users, opts, 0, opts.train.pg_episodes)?;
    Ok((net, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoActivation,
    PgOnly,
    WsOnly,
    Untrained,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::NoActivation, Variant::PgOnly, Variant::WsOnly, Variant::Untrained];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoActivation => "w/o activated nodes",
            Variant::PgOnly => "w/o WS",
            Variant::WsOnly => "w/o PG",
            Variant::Untrained => "untrained",
        }
    }

    /// Training options for this variant, derived from the full setting.
    pub fn options(self, full: &TrainOptions) -> TrainOptions {
        let mut o = full.clone();
        match self {
            Variant::Full => {}
            Variant::NoActivation => o.env.start = StartMode::Root,
            Variant::PgOnly => o.train.ws_episodes = 0,
            Variant::WsOnly => o.train.pg_episodes = 0,
            Variant::Untrained => {
                o.train.ws_episodes = 0;
                o.train.pg_episodes = 0;
            }
        }
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    pub report: QaReport,
    pub train: TrainReport,
}

/// Trains every variant with the same seeds and evaluates it on `test`.
pub fn ablate(
    train: &[UserModel],
    test: &[UserModel],
    full: &TrainOptions,
    variants: &[Variant],
) -> Result<Vec<AblationRow>, PipelineError> {
    let mut rows = Vec::new();
    for &v in variants {
        let opts = v.options(full);
        let (net, train_report) = train_policy(train, &opts)?;
        let (report, _) = eval_qa(test, Selector::Policy(&net), &opts.env, None)?;
        rows.push(AblationRow { variant: v, label: v.label().to_string(), report, train: train_report });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeekReport {
    pub week: usize,
    pub applied: usize,
    pub rejected: Vec<String>,
    pub swept: usize,
    pub qa: QaReport,
    pub entities: EntityReport,
    /// Generated answers that still contain a superseded value.
    pub superseded_hits: usize,
    /// `superseded_hits` as a percent of the answers checked.
    pub superseded_share: f64,
}

/// Applies one week of the stream to the users' graphs (edits, then the
/// end-of-week expiry sweep) and installs the week's question sets.
pub fn apply_week(users: &mut [UserModel], stream: &EditStream, week: usize) -> Result<(usize, Vec<String>, usize), PipelineError> {
    let state = stream.weeks.iter().find(|w| w.week == week);
    let mut applied = 0;
    let mut rejected = Vec::new();
    for e in stream.edits_in_week(week) {
        let user = users
            .iter_mut()
            .find(|u| u.user_id == e.user_id)
            .ok_or_else(|| PipelineError::UnknownUser(e.user_id.clone()))?;
        match user.emg.apply_edit(&e.command, &user.transe) {
            Ok(_) => applied += 1,
            Err(err) => rejected.push(format!("{} {}: {err}", e.user_id, e.command.payload.id)),
        }
    }
    let mut swept = 0;
    if let Some(state) = state {
        for user in users.iter_mut() {
            swept += user.emg.sweep_expired(state.end);
            if let Some(qas) = state.qa_pairs.get(&user.user_id) {
                user.qa_pairs = qas.clone();
            }
        }
    }
    Ok((applied, rejected, swept))
}

/// Scores the users in their current state; `week` 0 is the unedited start.
pub fn evaluate_week(
    users: &[UserModel],
    stream: &EditStream,
    week: usize,
    selector: Selector<'_>,
    env: &EnvConfig,
) -> Result<WeekReport, PipelineError> {
    let (qa, outcomes) = eval_qa(users, selector, env, None)?;
    let (entities, _) = eval_entities(users, &entity_queries(users), selector, env)?;
    let mut superseded: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
    if let Some(state) = stream.weeks.iter().find(|w| w.week == week) {
        for s in &state.superseded {
            superseded.entry((s.user_id.as_str(), s.question.as_str())).or_default().push(s.value.as_str());
        }
    }
    let hits = outcomes
        .iter()
        .filter(|o| {
            superseded
                .get(&(o.user_id.as_str(), o.question.as_str()))
                .is_some_and(|vals| vals.iter().any(|v| o.answer.contains(v)))
        })
        .count();
    let share = if outcomes.is_empty() { 0.0 } else { 100.0 * hits as f64 / outcomes.len() as f64 };
    Ok(WeekReport { week, qa, entities, superseded_hits: hits, superseded_share: share, ..WeekReport::default() })
}

/// Week 0 (no edits) followed by every week of the stream.
pub fn run_edit_experiment(
    users: &mut [UserModel],
    stream: &EditStream,
    selector: Selector<'_>,
    env: &EnvConfig,
) -> Result<Vec<WeekReport>, PipelineError> {
    let mut out = alloc::vec![evaluate_week(users, stream, 0, selector, env)?];
    for w in stream.weeks.iter().map(|w| w.week) {
        let (applied, rejected, swept) = apply_week(users, stream, w)?;
        let mut r = evaluate_week(users, stream, w, selector, env)?;
        r.applied = applied;
        r.rejected = rejected;
        r.swept = swept;
        out.push(r);
    }
    Ok(out)
}
