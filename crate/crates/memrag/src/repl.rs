//! Line-oriented session over one user's graph.
//!
//! ```text
//! insert  {"id": ..., "text": ..., "triple": {...}, "created_at": ...}
//! delete  {... "valid_until": ...}
//! replace {...}
//! ask <question>
//! sweep [ISO-8601 time]
//! show <entity>
//! save <path>
//! help | quit
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use memrag_core::env::EnvConfig;
use memrag_core::generation::{Scorer, INSUFFICIENT_MEMORY};
use memrag_core::graph::Emg;
use memrag_core::memory::{EditCommand, EditKind, MemoryRecord, QaPair, Timestamp};
use memrag_core::metrics::Metric;
use memrag_core::pipeline::{answer_query, Selector, UserModel};
use memrag_core::policy::PolicyNet;
use memrag_core::{TransEConfig, TransEModel, TEXT_DIM};

use crate::snapshot::save_user;

pub const HELP: &str = "\
commands:
  insert <memory json>    add a memory
  delete <memory json>    add a memory that expires at its valid_until
  replace <memory json>   supersede the (head, relation) the memory asserts
  ask <question>          answer from the graph and show the traversal
  sweep [time]            retire memories expired at time (default: now)
  show <entity>           entities whose name contains the text
  save <path>             write the graph snapshot
  help                    this text
  quit                    leave";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reply {
    Continue(String),
    Quit,
}

#[derive(Debug)]
pub struct Repl {
    pub user: UserModel,
    pub net: PolicyNet,
    pub env: EnvConfig,
}

impl Repl {
    pub fn new(user: UserModel, net: PolicyNet, env: EnvConfig) -> Self {
        Repl { user, net, env }
    }

    /// A graph with no memories and an empty embedding table.
    pub fn empty(user_id: &str, net: PolicyNet, env: EnvConfig) -> Self {
        let dim = TransEConfig::default().dim;
        let user = UserModel {
            user_id: user_id.to_string(),
            transe: TransEModel::from_tables(BTreeMap::new(), BTreeMap::new(), dim),
            emg: Emg::empty(user_id, TEXT_DIM),
            qa_pairs: Vec::new(),
        };
        Repl::new(user, net, env)
    }

    pub fn handle(&mut self, line: &str) -> Reply {
        let line = line.trim();
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let out = match cmd.to_ascii_lowercase().as_str() {
            "" => String::new(),
            "quit" | "exit" => return Reply::Quit,
            "help" => HELP.to_string(),
            "insert" => self.edit(EditKind::Insertion, rest),
            "delete" => self.edit(EditKind::Deletion, rest),
            "replace" => self.edit(EditKind::Replacement, rest),
            "ask" => self.ask(rest),
            "sweep" => self.sweep(rest),
            "show" => self.show(rest),
            "save" => self.save(rest),
            other => format!("error: unknown command {other:?} (try help)"),
        };
        Reply::Continue(out)
    }

    fn edit(&mut self, kind: EditKind, json: &str) -> String {
        let record: MemoryRecord = match serde_json::from_str(json) {
            Ok(r) => r,
            Err(e) => return format!("error: bad memory record: {e}"),
        };
        let at = record.created_at;
        let cmd = match EditCommand::new(kind, record, at) {
            Ok(c) => c,
            Err(e) => return format!("error: {e}"),
        };
        let outcome = match self.user.emg.apply_edit(&cmd, &self.user.transe) {
            Ok(o) => o,
            Err(e) => return format!("error: {e}"),
        };
        let retired: Vec<MemoryRecord> = outcome
            .memories_retired
            .iter()
            .filter_map(|id| self.user.emg.memory(id).map(|m| m.record.clone()))
            .collect();
        let mut retargeted = 0;
        for old in &retired {
            for qa in &mut self.user.qa_pairs {
                let Some(t) = qa.template.as_mut() else { continue };
                if !t.memory_ids().contains(&old.id) {
                    continue;
                }
                t.retarget(&old.id, &cmd.payload.id, &old.triple.tail, &cmd.payload.triple.tail);
                qa.answer = t.render();
                for r in &mut qa.required_memory_ids {
                    if *r == old.id {
                        *r = cmd.payload.id.clone();
                    }
                }
                retargeted += 1;
            }
        }
        let mut s = format!("{} {}", outcome.kind_applied, cmd.payload.id);
        let list = |v: &[String]| if v.is_empty() { "-".to_string() } else { v.join(", ") };
        let _ = write!(
            s,
            "\n  matched: {}\n  created: {}\n  updated: {}\n  retired: {}",
            outcome.matched_memory_id.as_deref().unwrap_or("-"),
            list(&outcome.nodes_created),
            list(&outcome.nodes_updated),
            list(&outcome.memories_retired),
        );
        if retargeted > 0 {
            let _ = write!(s, "\n  questions updated: {retargeted}");
        }
        s
    }

    fn ask(&mut self, question: &str) -> String {
        if question.is_empty() {
            return "error: ask needs a question".into();
        }
        let qa = self
            .user
            .qa_pairs
            .iter()
            .find(|q| q.question.eq_ignore_ascii_case(question))
            .cloned()
            .unwrap_or_else(|| QaPair::new(question, "", Vec::new()));
        let oracle = self.user.oracle_for(std::slice::from_ref(&qa));
        let mut scorer = Scorer::new(&oracle, Metric::RougeL);
        let o = match answer_query(&self.user, &qa, &mut scorer, Selector::Policy(&self.net), &self.env) {
            Ok(o) => o,
            Err(e) => return format!("error: {e}"),
        };
        let mut s = String::from("traversal:");
        if o.trajectory.is_empty() {
            s.push_str(" no memories visited");
        }
        for (i, t) in o.trajectory.iter().enumerate() {
            let _ = write!(
                s,
                "\n  {:>2}. {:<12} entity {:+.3}  relation {:+.3}  memory {:+.3}  -> {:?}  reward {:+.2}",
                i + 1,
                t.memory_id,
                t.state.sim_entity,
                t.state.sim_relation,
                t.state.sim_memory,
                t.action,
                t.reward
            );
        }
        s.push_str("\nselected:");
        if o.selected.is_empty() {
            s.push_str(" none");
        }
        for id in &o.selected {
            let text = self.user.emg.memory(id).map(|m| m.record.text.as_str()).unwrap_or("?");
            let _ = write!(s, "\n  {id}: {text}");
        }
        let answer = if qa.template.is_none() && o.answer == INSUFFICIENT_MEMORY && !o.selected.is_empty() {
            format!("{INSUFFICIENT_MEMORY} (no reference template for this question)")
        } else {
            o.answer.clone()
        };
        let _ = write!(s, "\nanswer: {answer}");
        s
    }

    fn sweep(&mut self, arg: &str) -> String {
        let now = if arg.is_empty() {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0);
            Timestamp::from_secs(secs)
        } else {
            match Timestamp::parse_iso(arg) {
                Ok(t) => t,
                Err(e) => return format!("error: {e}"),
            }
        };
        let n = self.user.emg.sweep_expired(now);
        format!("retired {n} expired memories as of {}", now.to_iso())
    }

    fn show(&self, needle: &str) -> String {
        if needle.is_empty() {
            return "error: show needs an entity name".into();
        }
        let needle = needle.to_lowercase();
        let mut s = String::new();
        for node in self.user.emg.entities().filter(|e| e.name.to_lowercase().contains(&needle)) {
            let _ = write!(s, "{} [{}]", node.name, node.subclass);
            for (rel, other) in self.user.emg.neighbors(&node.name) {
                let _ = write!(s, "\n  {rel} {other}");
            }
            for m in self.user.emg.attachment_ids(&node.name).iter().filter_map(|id| self.user.emg.memory(id)) {
                let state = if m.retired { " (retired)" } else { "" };
                let _ = write!(s, "\n  memory {}{state}: {}", m.record.id, m.record.text);
            }
            s.push('\n');
        }
        if s.is_empty() {
            format!("no entity matches {needle:?}")
        } else {
            s.trim_end().to_string()
        }
    }

    fn save(&self, path: &str) -> String {
        if path.is_empty() {
            return "error: save needs a path".into();
        }
        match save_user(Path::new(path), &self.user) {
            Ok(()) => format!("saved {path}"),
            Err(e) => format!("error: {e:#}"),
        }
    }
}
