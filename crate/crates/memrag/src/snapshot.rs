//! Versioned JSON snapshots of user graphs and policy checkpoints.
//!
//! Floats are written with round-trip precision, so a restore reproduces
//! every parameter bit for bit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use memrag_core::graph::Emg;
use memrag_core::memory::QaPair;
use memrag_core::pipeline::UserModel;
use memrag_core::policy::PolicyNet;
use memrag_core::TransEModel;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_json};

pub const GRAPH_FORMAT: &str = "memrag-graph";
pub const POLICY_FORMAT: &str = "memrag-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub format: String,
    pub version: u32,
    pub user_id: String,
    pub transe: TransEModel,
    pub emg: Emg,
    pub qa_pairs: Vec<QaPair>,
}

impl GraphSnapshot {
    pub fn of(user: &UserModel) -> Self {
        GraphSnapshot {
            format: GRAPH_FORMAT.into(),
            version: FORMAT_VERSION,
            user_id: user.user_id.clone(),
            transe: user.transe.clone(),
            emg: user.emg.clone(),
            qa_pairs: user.qa_pairs.clone(),
        }
    }

    pub fn into_user(self) -> UserModel {
        UserModel { user_id: self.user_id, transe: self.transe, emg: self.emg, qa_pairs: self.qa_pairs }
    }
}

fn check_header(format: &str, version: u32, want: &str, path: &Path) -> Result<()> {
    if format != want || version != FORMAT_VERSION {
        bail!("{}: expected {want} v{FORMAT_VERSION}, found {format} v{version}", path.display());
    }
    Ok(())
}

pub fn save_user(path: &Path, user: &UserModel) -> Result<()> {
    write_json(path, &GraphSnapshot::of(user))
}

pub fn load_user(path: &Path) -> Result<UserModel> {
    let snap: GraphSnapshot = read_json(path)?;
    check_header(&snap.format, snap.version, GRAPH_FORMAT, path)?;
    if let Err(e) = snap.emg.check_invariants() {
        bail!("{}: graph invariant violated: {e}", path.display());
    }
    Ok(snap.into_user())
}

pub fn graph_path(dir: &Path, user_id: &str) -> PathBuf {
    dir.join(format!("{user_id}.json"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Hash of the run configuration that produced the checkpoint.
    pub config_hash: String,
    pub ws_done: bool,
    /// Policy-gradient episodes already applied.
    pub pg_done: usize,
    pub net: PolicyNet,
}

impl Checkpoint {
    pub fn new(config_hash: impl Into<String>, net: PolicyNet, ws_done: bool, pg_done: usize) -> Self {
        Checkpoint {
            format: POLICY_FORMAT.into(),
            version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            ws_done,
            pg_done,
            net,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_json(path, ckpt)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    check_header(&ckpt.format, ckpt.version, POLICY_FORMAT, path)?;
    if ckpt.net.params.len() != memrag_core::policy::PARAM_COUNT || !ckpt.net.is_finite() {
        bail!("{}: malformed policy parameters", path.display());
    }
    Ok(ckpt)
}
